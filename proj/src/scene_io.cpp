#include "uags/dataio.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace uags {

using nlohmann::json;

std::vector<const Frame*> SceneBundle::split(Split s) const {
  std::vector<const Frame*> out;
  for (const auto& f : frames) {
    if (f.split == s) out.push_back(&f);
  }
  return out;
}

std::vector<Camera> SceneBundle::cameras(Split s) const {
  std::vector<Camera> out;
  for (const auto& f : frames) {
    if (f.split == s) out.push_back(f.camera);
  }
  return out;
}

int next_train_frame(const SceneBundle& scene, std::size_t frame_index) {
  for (std::size_t j = frame_index + 1; j < scene.frames.size(); ++j) {
    if (scene.frames[j].split == Split::Train) return static_cast<int>(j);
  }
  return -1;
}

namespace {

// Either throws on the first problem or collects all of them.
class Reporter {
 public:
  explicit Reporter(std::vector<std::string>* sink) : sink_(sink) {}
  void fail(const fs::path& path, const std::string& what) {
    if (!sink_) throw LoadError(path.string(), what);
    sink_->push_back(path.string() + ": " + what);
  }
  bool collecting() const { return sink_ != nullptr; }

 private:
  std::vector<std::string>* sink_;
};

template <class Fn>
auto guarded(Reporter& rep, const fs::path& path, Fn&& fn) -> std::optional<decltype(fn())> {
  try {
    return fn();
  } catch (const LoadError& e) {
    if (!rep.collecting()) throw;
    rep.fail(e.path().empty() ? path : fs::path(e.path()), e.what());
  } catch (const Error& e) {
    rep.fail(path, e.what());
  }
  return std::nullopt;
}

Camera parse_camera(const json& j) {
  Camera cam;
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.intrinsics = {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                    j.at("cy").get<double>()};
  const auto& m = j.at("world_to_camera");
  if (!m.is_array() || m.size() != 16) {
    throw Error("camera.world_to_camera must hold 16 numbers (row-major 4x4)");
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m.at(4 * r + c).get<double>();
  }
  return cam;
}

json camera_json(const Camera& cam) {
  json m = json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_camera(r, c));
  }
  return {{"width", cam.width},
          {"height", cam.height},
          {"fx", cam.intrinsics.fx},
          {"fy", cam.intrinsics.fy},
          {"cx", cam.intrinsics.cx},
          {"cy", cam.intrinsics.cy},
          {"world_to_camera", m}};
}

SceneBundle load_impl(const fs::path& dir, std::vector<std::string>* issues) {
  Reporter rep(issues);
  SceneBundle scene;
  const fs::path manifest = dir / "scene.json";
  json doc;
  {
    std::ifstream in(manifest);
    if (!in) {
      rep.fail(manifest, fs::exists(manifest) ? "cannot open manifest" : "manifest not found");
      return scene;
    }
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      rep.fail(manifest, std::string("malformed JSON: ") + e.what());
      return scene;
    }
  }
  if (!doc.is_object()) {
    rep.fail(manifest, "manifest must be a JSON object");
    return scene;
  }
  if (!doc.contains("schema_version") || doc["schema_version"] != kSceneSchemaVersion) {
    rep.fail(manifest, "unsupported or missing schema_version (expected " +
                           std::to_string(kSceneSchemaVersion) + ")");
  }
  if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty()) {
    rep.fail(manifest, "'frames' must be a non-empty array");
    return scene;
  }

  std::set<std::string> ids;
  double last_t = -1;
  for (std::size_t i = 0; i < doc["frames"].size(); ++i) {
    const json& jf = doc["frames"][i];
    const std::string where = "frames[" + std::to_string(i) + "]";
    Frame frame;
    try {
      frame.id = jf.at("id").get<std::string>();
      const std::string split = jf.at("split").get<std::string>();
      if (split != "train" && split != "val") throw Error("split must be 'train' or 'val'");
      frame.split = split == "train" ? Split::Train : Split::Val;
      frame.camera = parse_camera(jf.at("camera"));
      frame.camera.timestamp = jf.at("timestamp").get<double>();
      frame.camera.validate();
    } catch (const std::exception& e) {
      rep.fail(manifest, where + ": " + e.what());
      continue;
    }
    if (!ids.insert(frame.id).second) rep.fail(manifest, where + ": duplicate frame id " + frame.id);
    const double t = frame.camera.timestamp;
    if (!(t >= 0 && t <= 1)) rep.fail(manifest, where + ": timestamp outside [0, 1]");
    if (!(t > last_t)) rep.fail(manifest, where + ": timestamps must be strictly increasing");
    last_t = t;
    const int w = frame.camera.width, h = frame.camera.height;

    auto file = [&](const char* key) -> std::optional<fs::path> {
      if (!jf.contains(key) || jf[key].is_null()) return std::nullopt;
      if (!jf[key].is_string()) {
        rep.fail(manifest, where + ": '" + key + "' must be a path string");
        return std::nullopt;
      }
      return dir / jf[key].get<std::string>();
    };
    auto check_dims = [&](const fs::path& p, int iw, int ih, int ic, int want_c) {
      if (iw != w || ih != h) {
        rep.fail(p, "size " + std::to_string(iw) + "x" + std::to_string(ih) +
                        " does not match camera " + std::to_string(w) + "x" + std::to_string(h));
        return false;
      }
      if (want_c > 0 && ic != want_c) {
        rep.fail(p, "expected " + std::to_string(want_c) + " channel(s)");
        return false;
      }
      return true;
    };

    if (auto p = file("image")) {
      if (auto img = guarded(rep, *p, [&] { return read_png_rgb(*p); })) {
        if (check_dims(*p, img->width, img->height, 3, 3)) frame.image = std::move(*img);
      }
    } else {
      rep.fail(manifest, where + ": missing 'image'");
    }
    if (auto p = file("depth")) {
      if (auto img = guarded(rep, *p, [&] { return read_pfm(*p); })) {
        if (check_dims(*p, img->width, img->height, img->channels, 1)) frame.depth = std::move(*img);
      }
    }
    if (auto p = file("flow")) {
      if (auto img = guarded(rep, *p, [&] { return read_flo(*p); })) {
        if (check_dims(*p, img->width, img->height, 2, 2)) frame.flow = std::move(*img);
      }
    }
    if (auto p = file("dynamic_mask")) {
      if (auto m = guarded(rep, *p, [&] { return read_png_mask(*p); })) {
        if (check_dims(*p, m->width, m->height, 1, 1)) frame.dynamic_mask = std::move(*m);
      }
    }
    if (auto p = file("covisibility")) {
      if (auto m = guarded(rep, *p, [&] { return read_png_mask(*p); })) {
        if (check_dims(*p, m->width, m->height, 1, 1)) frame.covisibility = std::move(*m);
      }
    }
    scene.frames.push_back(std::move(frame));
  }
  if (scene.split(Split::Train).empty()) rep.fail(manifest, "no training frames");

  if (doc.contains("points") && !doc["points"].is_null()) {
    if (!doc["points"].is_string()) {
      rep.fail(manifest, "'points' must be a path string");
    } else {
      const fs::path p = dir / doc["points"].get<std::string>();
      scene.points = guarded(rep, p, [&] { return read_ply(p); });
    }
  }
  if (doc.contains("ground_truth")) scene.ground_truth = doc["ground_truth"].dump();
  return scene;
}

}  // namespace

SceneBundle load_scene(const fs::path& dir) { return load_impl(dir, nullptr); }

std::vector<std::string> lint_scene(const fs::path& dir) {
  std::vector<std::string> issues;
  load_impl(dir, &issues);
  return issues;
}

void save_scene(const SceneBundle& scene, const fs::path& dir) {
  fs::create_directories(dir / "images");
  json frames = json::array();
  for (const auto& f : scene.frames) {
    json jf = {{"id", f.id},
               {"split", f.split == Split::Train ? "train" : "val"},
               {"timestamp", f.camera.timestamp},
               {"camera", camera_json(f.camera)},
               {"image", "images/" + f.id + ".png"}};
    write_png_rgb(dir / "images" / (f.id + ".png"), f.image);
    if (f.depth) {
      fs::create_directories(dir / "depth");
      jf["depth"] = "depth/" + f.id + ".pfm";
      write_pfm(dir / "depth" / (f.id + ".pfm"), *f.depth);
    }
    if (f.flow) {
      fs::create_directories(dir / "flow");
      jf["flow"] = "flow/" + f.id + ".flo";
      write_flo(dir / "flow" / (f.id + ".flo"), *f.flow);
    }
    if (f.dynamic_mask) {
      fs::create_directories(dir / "masks");
      jf["dynamic_mask"] = "masks/" + f.id + "_dynamic.png";
      write_png_mask(dir / "masks" / (f.id + "_dynamic.png"), *f.dynamic_mask);
    }
    if (f.covisibility) {
      fs::create_directories(dir / "masks");
      jf["covisibility"] = "masks/" + f.id + "_covis.png";
      write_png_mask(dir / "masks" / (f.id + "_covis.png"), *f.covisibility);
    }
    frames.push_back(jf);
  }
  json doc = {{"schema_version", kSceneSchemaVersion}, {"frames", frames}};
  if (scene.points) {
    doc["points"] = "points.ply";
    write_ply(dir / "points.ply", *scene.points);
  }
  if (!scene.ground_truth.empty()) doc["ground_truth"] = json::parse(scene.ground_truth);
  std::ofstream out(dir / "scene.json", std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw Error((dir / "scene.json").string() + ": write failed");
}

}  // namespace uags
