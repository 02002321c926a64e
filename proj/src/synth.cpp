#include "uags/synth.hpp"

#include <json.hpp>

#include <random>

namespace uags {

Mat4 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = Vec3(0, 1, 0).cross(z);
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0).cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  Mat4 w = Mat4::Identity();
  w.topLeftCorner<3, 3>() = r;
  w.topRightCorner<3, 1>() = -r * eye;
  return w;
}

Camera synth_camera(const SynthSpec& spec, int frame) {
  const int n = spec.frames;
  const double s = n > 1 ? static_cast<double>(frame) / (n - 1) : 0.0;
  const double theta = (spec.arc_degrees * (s - 0.5)) * EIGEN_PI / 180.0;
  const Vec3 eye = spec.target + Vec3(spec.arc_radius * std::sin(theta), spec.camera_height,
                                      -spec.arc_radius * std::cos(theta));
  Camera cam;
  cam.world_to_camera = look_at(eye, spec.target);
  cam.intrinsics = {spec.focal, spec.focal, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0};
  cam.width = spec.width;
  cam.height = spec.height;
  cam.timestamp = s;
  return cam;
}

namespace {

Vec3 checker(double a, double b, double k, const Vec3& ca, const Vec3& cb) {
  const auto ia = static_cast<long>(std::floor(a * k));
  const auto ib = static_cast<long>(std::floor(b * k));
  return ((ia + ib) & 1) ? cb : ca;
}

}  // namespace

RayHit cast_ray(const SynthSpec& spec, const Camera& cam, double x, double y) {
  const auto& k = cam.intrinsics;
  const Mat3 rt = cam.rotation().transpose();
  const Vec3 origin = cam.center();
  // Parameterized so the ray parameter equals camera-space depth.
  const Vec3 dir = rt * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
  RayHit best;
  double best_s = std::numeric_limits<double>::infinity();
  const double t = cam.timestamp;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const SynthObject& o = spec.objects[i];
    const Mat3 r = quaternion_to_rotation(o.rotation);
    const Vec3 c = o.center + o.velocity * t;
    double s = -1;
    Vec3 local;
    if (o.kind == ShapeKind::Ellipsoid) {
      const Vec3 lo = (r.transpose() * (origin - c)).cwiseQuotient(o.radii);
      const Vec3 ld = (r.transpose() * dir).cwiseQuotient(o.radii);
      const double a = ld.squaredNorm(), b = 2 * lo.dot(ld), cc = lo.squaredNorm() - 1;
      const double disc = b * b - 4 * a * cc;
      if (disc < 0) continue;
      const double sq = std::sqrt(disc);
      const double s0 = (-b - sq) / (2 * a), s1 = (-b + sq) / (2 * a);
      s = s0 > kNearPlane ? s0 : s1;
      if (!(s > kNearPlane)) continue;
      local = lo + s * ld;
    } else {
      const Vec3 n = r.col(2);
      const double denom = dir.dot(n);
      if (std::abs(denom) < 1e-12) continue;
      s = (c - origin).dot(n) / denom;
      if (!(s > kNearPlane)) continue;
      local = r.transpose() * (origin + s * dir - c);
      if (std::abs(local.x()) > o.radii.x() || std::abs(local.y()) > o.radii.y()) continue;
    }
    if (s < best_s) {
      best_s = s;
      best.object = static_cast<int>(i);
      best.depth = s;
      best.point = origin + s * dir;
      if (o.kind == ShapeKind::Ellipsoid) {
        const double lon = std::atan2(local.y(), local.x()) / EIGEN_PI;
        const double lat = std::acos(std::clamp(local.z(), -1.0, 1.0)) / EIGEN_PI;
        best.color = checker(lon, lat, o.checker, o.color_a, o.color_b);
      } else {
        best.color = checker(local.x(), local.y(), o.checker, o.color_a, o.color_b);
      }
    }
  }
  if (spec.background && dir.z() > 1e-12) {
    const double s = (spec.background_z - origin.z()) / dir.z();
    if (s > kNearPlane && s < best_s) {
      best.object = -1;
      best.depth = s;
      best.point = origin + s * dir;
      best.color = checker(best.point.x(), best.point.y(), spec.background_checker,
                           spec.background_a, spec.background_b);
    }
  }
  return best;
}

namespace {

Vec3 velocity_of(const SynthSpec& spec, int object) {
  return object >= 0 ? spec.objects[static_cast<std::size_t>(object)].velocity : Vec3::Zero();
}

std::optional<Vec2> project_point(const Camera& cam, const Vec3& p) {
  const Vec3 q = cam.to_camera(p);
  if (!(q.z() > kNearPlane)) return std::nullopt;
  const auto& k = cam.intrinsics;
  return Vec2(k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy);
}

nlohmann::json ground_truth_json(const SynthSpec& spec, std::uint64_t seed) {
  using nlohmann::json;
  auto vec = [](const auto& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  json objs = json::array();
  for (const auto& o : spec.objects) {
    objs.push_back({{"kind", o.kind == ShapeKind::Ellipsoid ? "ellipsoid" : "quad"},
                    {"center", vec(o.center)},
                    {"radii", vec(o.radii)},
                    {"rotation", vec(o.rotation)},
                    {"velocity", vec(o.velocity)},
                    {"color_a", vec(o.color_a)},
                    {"color_b", vec(o.color_b)},
                    {"checker", o.checker}});
  }
  return {{"generator", "uags-synth"},
          {"seed", seed},
          {"background_z", spec.background ? json(spec.background_z) : json(nullptr)},
          {"objects", objs}};
}

}  // namespace

SceneBundle synth_scene(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.frames < 2) throw InvalidParameter("synth: need at least two frames");
  if (spec.width < 2 || spec.height < 2 || !(spec.focal > 0)) {
    throw InvalidParameter("synth: invalid image size or focal length");
  }
  SceneBundle scene;
  const int n = spec.frames;
  for (int i = 0; i < n; ++i) {
    Frame f;
    char id[16];
    std::snprintf(id, sizeof id, "%04d", i);
    f.id = id;
    f.split = spec.val_stride > 0 && i % spec.val_stride == spec.val_stride - 1 ? Split::Val
                                                                                 : Split::Train;
    f.camera = synth_camera(spec, i);
    scene.frames.push_back(std::move(f));
  }

  std::vector<std::vector<RayHit>> hits(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Frame& f = scene.frames[i];
    const int w = spec.width, h = spec.height;
    hits[i].resize(static_cast<std::size_t>(w) * h);
    f.image = Image(w, h, 3);
    Image depth(w, h, 1);
    Mask dyn(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const RayHit hit = cast_ray(spec, f.camera, x, y);
        hits[i][static_cast<std::size_t>(y) * w + x] = hit;
        for (int c = 0; c < 3; ++c) f.image.at(y, x, c) = hit.color[c];
        depth.at(y, x) = hit.object == -2 ? 0.0 : hit.depth;
        dyn.set(y, x, hit.object >= 0 && velocity_of(spec, hit.object).norm() > 0);
      }
    }
    f.depth = std::move(depth);
    f.dynamic_mask = std::move(dyn);
  });

  // Flow to the next training frame.
  for (int i = 0; i < n; ++i) {
    Frame& f = scene.frames[static_cast<std::size_t>(i)];
    if (f.split != Split::Train) continue;
    const int j = next_train_frame(scene, static_cast<std::size_t>(i));
    if (j < 0) continue;
    const Camera& cj = scene.frames[static_cast<std::size_t>(j)].camera;
    const double dt = cj.timestamp - f.camera.timestamp;
    Image flow(spec.width, spec.height, 2);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const RayHit& hit = hits[static_cast<std::size_t>(i)][static_cast<std::size_t>(y) * spec.width + x];
        if (hit.object == -2) continue;
        const auto p = project_point(cj, hit.point + velocity_of(spec, hit.object) * dt);
        if (!p) continue;
        flow.at(y, x, 0) = p->x() - x;
        flow.at(y, x, 1) = p->y() - y;
      }
    }
    f.flow = std::move(flow);
  }

  // Covisibility of held-out pixels: the surface point is the first hit from
  // at least one training camera.
  for (int i = 0; i < n; ++i) {
    Frame& f = scene.frames[static_cast<std::size_t>(i)];
    if (f.split != Split::Val) continue;
    Mask covis(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const RayHit& hit = hits[static_cast<std::size_t>(i)][static_cast<std::size_t>(y) * spec.width + x];
        if (hit.object == -2) continue;
        bool seen = false;
        for (const Frame& tf : scene.frames) {
          if (seen || tf.split != Split::Train) continue;
          const Vec3 p = hit.point + velocity_of(spec, hit.object) * (tf.camera.timestamp - f.camera.timestamp);
          const auto px = project_point(tf.camera, p);
          if (!px || px->x() < -0.5 || px->y() < -0.5 || px->x() >= spec.width - 0.5 ||
              px->y() >= spec.height - 0.5) {
            continue;
          }
          const RayHit back = cast_ray(spec, tf.camera, px->x(), px->y());
          seen = back.object == hit.object && (back.point - p).norm() < 1e-6 * (1 + back.depth);
        }
        covis.set(y, x, seen);
      }
    }
    f.covisibility = std::move(covis);
  }

  // Static-surface points from training pixels.
  PointCloud cloud;
  std::mt19937_64 rng(seed ^ 0x5f3759dfULL);
  const auto train = scene.split(Split::Train);
  if (spec.sfm_points > 0 && !train.empty()) {
    std::uniform_int_distribution<int> px(0, spec.width - 1), py(0, spec.height - 1);
    const int per_frame = (spec.sfm_points + static_cast<int>(train.size()) - 1) /
                          static_cast<int>(train.size());
    for (std::size_t ti = 0; ti < train.size() && static_cast<int>(cloud.points.size()) < spec.sfm_points; ++ti) {
      const std::size_t fi = static_cast<std::size_t>(train[ti] - scene.frames.data());
      for (int s = 0; s < per_frame && static_cast<int>(cloud.points.size()) < spec.sfm_points; ++s) {
        const int x = px(rng), y = py(rng);
        const RayHit& hit = hits[fi][static_cast<std::size_t>(y) * spec.width + x];
        if (hit.object == -2 || velocity_of(spec, hit.object).norm() > 0) continue;
        cloud.points.push_back(hit.point);
        std::array<std::uint8_t, 3> col{};
        for (int c = 0; c < 3; ++c) {
          col[c] = static_cast<std::uint8_t>(std::lround(std::clamp(hit.color[c], 0.0, 1.0) * 255));
        }
        cloud.colors.push_back(col);
      }
    }
  }
  scene.points = std::move(cloud);
  scene.ground_truth = ground_truth_json(spec, seed).dump();

  // Channels as they will be stored on disk, so that save -> load is exact.
  for (auto& f : scene.frames) {
    for (auto& v : f.image.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    for (auto& v : f.depth->data) v = static_cast<float>(v);
    if (f.flow) {
      for (auto& v : f.flow->data) v = static_cast<float>(v);
    }
  }
  return scene;
}

SynthSpec synth_preset(const std::string& name, std::uint64_t seed) {
  SynthSpec spec;
  if (name == "ellipsoid") {
    SynthObject o;
    o.center = Vec3(-0.3, 0, 0);
    o.radii = Vec3(0.6, 0.45, 0.4);
    o.velocity = Vec3(0.6, 0, 0);
    spec.objects.push_back(o);
    spec.val_stride = 4;
    return spec;
  }
  if (name == "moving-quad") {
    SynthObject q;
    q.kind = ShapeKind::Quad;
    q.center = Vec3(-0.5, 0, 0.5);
    q.radii = Vec3(0.9, 0.9, 0);
    q.velocity = Vec3(1.0, 0, 0);
    q.checker = 1.5;
    spec.objects.push_back(q);
    spec.background_checker = 0.25;
    spec.val_stride = 4;
    return spec;
  }
  if (name == "two-cluster") {
    SynthObject a;
    a.center = Vec3(-0.8, 0, 0);
    a.radii = Vec3::Constant(0.35);
    SynthObject b = a;
    b.center = Vec3(0.8, 0, 0);
    b.color_a = Vec3(0.2, 0.8, 0.3);
    spec.objects = {a, b};
    spec.val_stride = 3;
    return spec;
  }
  if (name != "default") throw InvalidParameter("unknown synth preset '" + name + "'");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  for (int k = 0; k < 3; ++k) {
    SynthObject o;
    o.center = Vec3(uni(-1.0, 1.0), uni(-0.5, 0.5), uni(-0.5, 0.8));
    o.radii = Vec3(uni(0.2, 0.45), uni(0.2, 0.45), uni(0.2, 0.45));
    o.rotation = Vec4(uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1)).normalized();
    o.velocity = k == 0 ? Vec3::Zero() : Vec3(uni(-0.5, 0.5), uni(-0.3, 0.3), 0);
    o.color_a = Vec3(uni(0.1, 0.9), uni(0.1, 0.9), uni(0.1, 0.9));
    o.color_b = Vec3(uni(0.1, 0.9), uni(0.1, 0.9), uni(0.1, 0.9));
    spec.objects.push_back(o);
  }
  spec.val_stride = 4;
  return spec;
}

}  // namespace uags
