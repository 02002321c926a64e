#include "uags/checkpoint.hpp"
#include "uags/config.hpp"
#include "uags/dataio.hpp"
#include "uags/densify.hpp"
#include "uags/evalsuite.hpp"
#include "uags/synth.hpp"
#include "uags/trainer.hpp"
#include "uags/uncertainty.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace uags;
using nlohmann::json;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  int threads = 1;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

std::uint64_t seed_or(const Globals& g, std::uint64_t fallback) { return g.seed.value_or(fallback); }

json run_synth(const Globals& g, const std::string& preset, const fs::path& out,
               std::optional<int> frames, std::optional<int> width, std::optional<int> height) {
  const std::uint64_t seed = seed_or(g, 0);
  SynthSpec spec = synth_preset(preset, seed);
  if (frames) spec.frames = *frames;
  if (width) spec.width = *width;
  if (height) spec.height = *height;
  const SceneBundle scene = synth_scene(spec, seed);
  save_scene(scene, out);
  return {{"frames", scene.frames.size()}, {"scene", out.string()}};
}

json run_init_dynamic(const Globals& g, const fs::path& scene_dir, fs::path out,
                      std::size_t budget, double threshold) {
  const SceneBundle scene = load_scene(scene_dir);
  std::vector<DensifyFrame> frames;
  for (const Frame* f : scene.split(Split::Train)) {
    if (!f->depth || (!f->flow && !f->dynamic_mask)) continue;
    frames.push_back({f->camera, &f->image, &*f->depth, f->flow ? &*f->flow : nullptr,
                      f->dynamic_mask ? &*f->dynamic_mask : nullptr});
  }
  if (frames.empty()) {
    throw LoadError(scene_dir.string(), "no training frame has both depth and flow or a dynamic mask");
  }
  DensifyOptions opt;
  opt.budget = budget;
  opt.flow_threshold = threshold;
  opt.seed = seed_or(g, 0);
  const DensifyResult r = densify_dynamic(frames, opt);
  PointCloud cloud;
  for (std::size_t k = 0; k < r.primitives.size(); ++k) {
    const auto p = r.primitives.primitive(k);
    cloud.points.push_back(p.position);
    std::array<std::uint8_t, 3> rgb{};
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(p.sh[c] * kShC0 + 0.5, 0.0, 1.0);
      rgb[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    cloud.colors.push_back(rgb);
  }
  if (out.empty()) out = scene_dir / "dynamic_points.ply";
  write_ply(out, cloud);
  json j = {{"points", cloud.points.size()}, {"output", out.string()}};
  if (!r.warning.empty()) j["warning"] = r.warning;
  return j;
}

json run_train(const Globals& g, const fs::path& scene_dir, const fs::path& config_path,
               const fs::path& out, const std::string& refiner, bool f64_check,
               std::optional<int> iterations) {
  TrainConfig config = load_config(config_path);
  if (g.seed) config.seed = *g.seed;
  if (iterations) {
    config.iterations = *iterations;
    config.ua_start = std::min(config.ua_start, config.iterations);
  }
  if (f64_check) config.precision = Precision::Float64;
  config.validate();
  const SceneBundle scene = load_scene(scene_dir);
  TrainerOptions opt;
  opt.out_dir = out;
  opt.refiner = RefinerOptions::from_spec(refiner);
  GaussianModel init = initial_model(scene, config, scene_dir);
  const TrainResult r = train(scene, std::move(init), config, opt);
  return {{"iterations", config.iterations},
          {"primitives", r.checkpoint.model.size()},
          {"final_loss", r.last.total},
          {"checkpoint", (out / "checkpoint.uags").string()},
          {"refiner_failures", r.refiner_failures}};
}

std::vector<const Frame*> select_frames(const SceneBundle& scene, const std::string& frame_id,
                                        const std::string& split) {
  std::vector<const Frame*> out;
  if (!frame_id.empty()) {
    for (const auto& f : scene.frames) {
      if (f.id == frame_id) out.push_back(&f);
    }
    if (out.empty()) throw InvalidParameter("no frame with id '" + frame_id + "'");
    return out;
  }
  if (split == "all") {
    for (const auto& f : scene.frames) out.push_back(&f);
    return out;
  }
  return scene.split(split == "train" ? Split::Train : Split::Val);
}

json run_render(const fs::path& ckpt_path, const fs::path& scene_dir, const std::string& frame_id,
                const std::string& split, const std::string& channel, const fs::path& out) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const SceneBundle scene = load_scene(scene_dir);
  const DeformationField* field = ck.field ? &*ck.field : nullptr;
  RenderSettings settings;
  settings.background = ck.background;
  const auto train_cams = scene.cameras(Split::Train);
  if (channel == "uncertainty") {
    refresh_uncertainty(ck.model, field, train_cams,
                        UncertaintyParams::for_view_count(train_cams.size()), settings);
  }
  fs::create_directories(out);
  std::vector<std::string> written;
  for (const Frame* f : select_frames(scene, frame_id, split)) {
    RenderRequest req;
    req.channels = {channel == "color", channel == "depth", channel == "uncertainty",
                    channel == "flow"};
    if (channel == "flow") {
      const int next = next_train_frame(scene, static_cast<std::size_t>(f - scene.frames.data()));
      if (next < 0) continue;
      req.flow_target = scene.frames[static_cast<std::size_t>(next)].camera;
    }
    const RenderOutput r = render(ck.model, field, f->camera, req, settings);
    fs::path file;
    if (channel == "color") {
      file = out / (f->id + "_color.png");
      write_png_rgb(file, r.color);
    } else if (channel == "depth") {
      file = out / (f->id + "_depth.pfm");
      write_pfm(file, r.depth);
    } else if (channel == "uncertainty") {
      file = out / (f->id + "_uncertainty.png");
      write_png_gray16(file, r.uncertainty, 65535.0);
    } else if (channel == "flow") {
      file = out / (f->id + "_flow.flo");
      write_flo(file, r.flow);
    } else {
      file = out / (f->id + "_alpha.png");
      write_png_gray16(file, r.alpha, 65535.0);
    }
    written.push_back(file.string());
  }
  return {{"files", written}};
}

json run_eval(const fs::path& ckpt_path, const fs::path& scene_dir, const std::string& split,
              const fs::path& out) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const SceneBundle scene = load_scene(scene_dir);
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  const fs::path image_dir = parent / (out.stem().string() + "_images");
  const EvalSummary s =
      evaluate(ck, scene, split == "train" ? Split::Train : Split::Val, image_dir);
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream csv(out, std::ios::binary);
  if (!csv) throw LoadError(out.string(), "cannot write metrics");
  csv << metrics_csv(s.frames);
  json j = {{"frames", s.frames.size()}, {"psnr", s.mean_psnr}, {"ssim", s.mean_ssim},
            {"csv", out.string()}, {"images", image_dir.string()}};
  j["mpsnr"] = s.mean_mpsnr ? json(*s.mean_mpsnr) : json(nullptr);
  j["mssim"] = s.mean_mssim ? json(*s.mean_mssim) : json(nullptr);
  return j;
}

void emit_status(const Globals& g, const std::string& command, int code, const std::string& error,
                 const std::string& kind, const json& details) {
  if (!g.json) {
    if (code != kOk) std::cerr << "error: " << error << '\n';
    return;
  }
  json status = {{"command", command}, {"status", code == kOk ? "ok" : "error"},
                 {"exit_code", code}};
  if (code != kOk) {
    status["error"] = error;
    status["error_kind"] = kind;
  }
  if (!details.is_null()) status["result"] = details;
  std::cerr << status.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("uags");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Uncertainty-aware 4D Gaussian splatting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (1 = strictly deterministic)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_flag("--json", g.json, "Print a JSON status line on stderr");

  std::string preset = "default";
  fs::path synth_out;
  std::optional<int> synth_frames, synth_w, synth_h;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dynamic scene");
  synth->add_option("--preset", preset, "ellipsoid | moving-quad | two-cluster | default");
  synth->add_option("--out", synth_out, "Scene directory")->required();
  synth->add_option("--frames", synth_frames)->check(CLI::Range(2, 100000));
  synth->add_option("--width", synth_w)->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_h)->check(CLI::PositiveNumber);

  fs::path dyn_scene, dyn_out;
  std::size_t dyn_budget = 10000;
  double dyn_threshold = kDynamicFlowThreshold;
  auto* dyn = app.add_subcommand("init-dynamic", "Lift dynamic pixels to a PLY point cloud");
  dyn->add_option("--scene", dyn_scene)->required();
  dyn->add_option("--out", dyn_out, "Default: <scene>/dynamic_points.ply");
  dyn->add_option("--budget", dyn_budget)->check(CLI::PositiveNumber);
  dyn->add_option("--flow-threshold", dyn_threshold)->check(CLI::NonNegativeNumber);

  fs::path tr_scene, tr_config, tr_out;
  std::string tr_refiner = "identity";
  bool tr_f64 = false;
  std::optional<int> tr_iters;
  auto* tr = app.add_subcommand("train", "Train a model on a scene directory");
  tr->add_option("--scene", tr_scene)->required();
  tr->add_option("--config", tr_config, "JSON config (defaults when omitted)");
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--refiner", tr_refiner, "identity | blur | external command");
  tr->add_flag("--f64-check", tr_f64, "Train in float64 precision");
  tr->add_option("--iterations", tr_iters)->check(CLI::NonNegativeNumber);

  fs::path rd_ckpt, rd_scene, rd_out;
  std::string rd_frame, rd_split = "val", rd_channel = "color";
  auto* rd = app.add_subcommand("render", "Render a channel for scene frames");
  rd->add_option("--checkpoint", rd_ckpt)->required();
  rd->add_option("--scene", rd_scene)->required();
  rd->add_option("--frame", rd_frame, "Single frame id");
  rd->add_option("--split", rd_split)->check(CLI::IsMember({"train", "val", "all"}));
  rd->add_option("--channel", rd_channel)
      ->check(CLI::IsMember({"color", "depth", "uncertainty", "flow", "alpha"}));
  rd->add_option("--out", rd_out)->required();

  fs::path ev_ckpt, ev_scene, ev_out;
  std::string ev_split = "val";
  auto* ev = app.add_subcommand("eval", "Score held-out frames");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--scene", ev_scene)->required();
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val"}));
  ev->add_option("--out", ev_out, "Metrics CSV path")->required();

  fs::path lint_dir;
  auto* scene_cmd = app.add_subcommand("scene", "Scene directory tools");
  scene_cmd->require_subcommand(1);
  auto* lint = scene_cmd->add_subcommand("lint", "Validate a scene directory");
  lint->add_option("dir", lint_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return kOk;
    emit_status(g, "", kUsage, e.what(), "usage", nullptr);
    return kUsage;
  }

  set_num_threads(g.threads);
  std::string command = app.get_subcommands().front()->get_name();
  json details;
  try {
    if (synth->parsed()) {
      details = run_synth(g, preset, synth_out, synth_frames, synth_w, synth_h);
    } else if (dyn->parsed()) {
      details = run_init_dynamic(g, dyn_scene, dyn_out, dyn_budget, dyn_threshold);
    } else if (tr->parsed()) {
      details = run_train(g, tr_scene, tr_config, tr_out, tr_refiner, tr_f64, tr_iters);
    } else if (rd->parsed()) {
      details = run_render(rd_ckpt, rd_scene, rd_frame, rd_split, rd_channel, rd_out);
    } else if (ev->parsed()) {
      details = run_eval(ev_ckpt, ev_scene, ev_split, ev_out);
    } else if (lint->parsed()) {
      command = "scene lint";
      const auto issues = lint_scene(lint_dir);
      for (const auto& i : issues) std::cout << i << '\n';
      details = {{"issues", issues}};
      if (!issues.empty()) {
        emit_status(g, command, kData, std::to_string(issues.size()) + " problem(s) found",
                    "validation", details);
        return kData;
      }
      std::cout << "ok\n";
    }
  } catch (const NumericalError& e) {
    emit_status(g, command, kNumerical, e.what(), "numerical:" + e.term(), nullptr);
    return kNumerical;
  } catch (const std::exception& e) {
    emit_status(g, command, kData, e.what(), "data", nullptr);
    return kData;
  }
  emit_status(g, command, kOk, "", "", details);
  return kOk;
}
