#pragma once

// Random scenes and an independent float64 reference renderer for tests.

#include "uags/deformation.hpp"
#include "uags/rasterizer.hpp"

#include <Eigen/Geometry>

#include <random>

namespace uags::testing {

inline Camera look_at_camera(const Vec3& eye, const Vec3& target, int w, int h, double f,
                             double t = 0.0) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = Vec3(0, 1, 0).cross(z);
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  Camera cam;
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = r;
  cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  cam.intrinsics = {f, f, (w - 1) / 2.0, (h - 1) / 2.0};
  cam.width = w;
  cam.height = h;
  cam.timestamp = t;
  return cam;
}

struct RandomSceneOptions {
  int max_primitives = 100;
  int width = 32;
  int height = 32;
  int sh_degree = 1;
  bool with_field = true;
};

struct RandomScene {
  GaussianModel model{1};
  std::optional<DeformationField> field;
  Camera cam;
  Camera flow_cam;
  Vec3 background = Vec3::Zero();
};

inline RandomScene random_scene(std::uint64_t seed, const RandomSceneOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  RandomScene s;
  s.model = GaussianModel(opt.sh_degree);
  const double t0 = uni(0.05, 0.95);
  s.cam = look_at_camera(Vec3(uni(-0.3, 0.3), uni(-0.3, 0.3), -4.0), Vec3(0, 0, 0), opt.width,
                         opt.height, uni(28, 40), t0);
  s.flow_cam = look_at_camera(Vec3(uni(-0.5, 0.5), uni(-0.3, 0.3), -4.2), Vec3(0, 0, 0.1),
                              opt.width, opt.height, uni(28, 40), uni(0.05, 0.95));
  s.background = Vec3(uni(0, 1), uni(0, 1), uni(0, 1));
  const int n = 1 + static_cast<int>(u(rng) * opt.max_primitives) % opt.max_primitives;
  for (int k = 0; k < n; ++k) {
    GaussianPrimitive p;
    p.position = Vec3(uni(-1.5, 1.5), uni(-1.5, 1.5), uni(-1.5, 1.5));
    p.rotation = Vec4(uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1)).normalized();
    p.log_scale = Vec3(uni(-3.0, -1.0), uni(-3.0, -1.0), uni(-3.0, -1.0));
    p.opacity_logit = uni(-2.0, 4.0);
    for (int i = 0; i < 3 * sh_coeff_count(opt.sh_degree); ++i) p.sh[i] = uni(-0.8, 0.8);
    p.uncertainty = u(rng);
    s.model.push_back(p);
  }
  if (opt.with_field) {
    DeformationConfig cfg{4, 5, 4, 8};
    Aabb box{Vec3(-2, -2, -2), Vec3(2, 2, 2)};
    s.field.emplace(cfg, box, seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (int i = 0; i < kDeformationOutputs * cfg.hidden_dim; ++i) {
      s.field->params[s.field->w2_offset() + i] = nd(rng);
    }
    for (int p = 3; p < kPlaneCount; ++p) {
      const auto plane = static_cast<Plane>(p);
      for (std::size_t i = 0; i < s.field->plane_size(plane); ++i) {
        s.field->params[s.field->plane_offset(plane) + i] = uni(0.7, 1.3);
      }
    }
  }
  return s;
}

// Straight per-pixel evaluation of the splatting model, written from the
// formulas with Eigen only: no tiles, no culling beyond the near plane, no
// thresholds. Primitives are deformed through the public field query.
struct ReferenceImage {
  Image color, depth, uncertainty, flow, alpha, transmittance;
};

namespace ref {

inline Eigen::Vector2d project(const Camera& cam, const Vec3& world) {
  const Vec3 p = cam.rotation() * world + cam.translation();
  const auto& k = cam.intrinsics;
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

struct Splat {
  double depth;
  int index;
  Vec2 mean;
  Mat2 inv;
  double opacity;
  Vec3 color;
  Vec2 flow;
  double unc;
};

inline std::vector<Splat> splats(const GaussianModel& model, const DeformationField* field,
                                 const Camera& cam, const Camera* flow_cam) {
  std::vector<Splat> out;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const GaussianPrimitive prim = model.primitive(k);
    Vec3 mu = prim.position;
    Vec4 q = prim.rotation;
    Vec3 s = prim.log_scale;
    if (field) {
      const DeformationOutput d = query_deformation(*field, mu, cam.timestamp);
      mu += d.d_position;
      q += d.d_rotation;
      s += d.d_log_scale;
    }
    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    const Mat3 r = quat.normalized().toRotationMatrix();
    const Mat3 sigma = r * (2.0 * s).array().exp().matrix().asDiagonal() * r.transpose();
    const Vec3 p = cam.rotation() * mu + cam.translation();
    if (p.z() <= 0.01) continue;
    const auto& in = cam.intrinsics;
    Eigen::Matrix<double, 2, 3> j;
    j << in.fx / p.z(), 0, -in.fx * p.x() / (p.z() * p.z()), 0, in.fy / p.z(),
        -in.fy * p.y() / (p.z() * p.z());
    Mat2 cov = j * cam.rotation() * sigma * cam.rotation().transpose() * j.transpose();
    cov += 0.3 * Mat2::Identity();
    if (cov.determinant() <= 0) continue;
    Splat sp;
    sp.depth = p.z();
    sp.index = static_cast<int>(k);
    sp.mean = project(cam, mu);
    sp.inv = cov.inverse();
    sp.opacity = 1.0 / (1.0 + std::exp(-prim.opacity_logit));
    const Vec3 dir = (mu - cam.center()).normalized();
    const double c0 = 0.28209479177387814, c1 = 0.4886025119029199;
    for (int c = 0; c < 3; ++c) {
      double v = c0 * prim.sh[c];
      if (model.sh_degree() >= 1) {
        v += -c1 * dir.y() * prim.sh[3 + c] + c1 * dir.z() * prim.sh[6 + c] -
             c1 * dir.x() * prim.sh[9 + c];
      }
      sp.color[c] = std::max(0.0, v + 0.5);
    }
    sp.flow = Vec2::Zero();
    if (flow_cam) {
      Vec3 mu2 = prim.position;
      if (field) mu2 += query_deformation(*field, prim.position, flow_cam->timestamp).d_position;
      if ((flow_cam->rotation() * mu2 + flow_cam->translation()).z() > 0.01) {
        sp.flow = project(*flow_cam, mu2) - sp.mean;
      }
    }
    sp.unc = prim.uncertainty;
    out.push_back(sp);
  }
  std::sort(out.begin(), out.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return out;
}

}  // namespace ref

inline ReferenceImage reference_render(const GaussianModel& model, const DeformationField* field,
                                       const Camera& cam, const Camera* flow_cam,
                                       const Vec3& background) {
  const auto list = ref::splats(model, field, cam, flow_cam);
  ReferenceImage out;
  const int w = cam.width, h = cam.height;
  out.color = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  out.uncertainty = Image(w, h, 1);
  out.flow = Image(w, h, 2);
  out.alpha = Image(w, h, 1);
  out.transmittance = Image(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double trans = 1.0;
      for (const auto& s : list) {
        const Vec2 d = Vec2(x, y) - s.mean;
        const double power = 0.5 * d.dot(s.inv * d);
        if (power > 4.5) continue;
        const double a = s.opacity * std::exp(-power);
        const double wgt = a * trans;
        for (int c = 0; c < 3; ++c) out.color.at(y, x, c) += wgt * s.color[c];
        out.depth.at(y, x) += wgt * s.depth;
        out.uncertainty.at(y, x) += wgt * s.unc;
        out.flow.at(y, x, 0) += wgt * s.flow.x();
        out.flow.at(y, x, 1) += wgt * s.flow.y();
        out.alpha.at(y, x) += wgt;
        trans *= 1.0 - a;
      }
      for (int c = 0; c < 3; ++c) out.color.at(y, x, c) += trans * background[c];
      out.transmittance.at(y, x) = trans;
    }
  }
  return out;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace uags::testing
