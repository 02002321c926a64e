#pragma once

// Finite-difference gradient checks on small smooth scenes.

#include "scenes.hpp"

#include "uags/detail/deformation_kernel.hpp"

#include <functional>
#include <string>

namespace uags::testing {

struct MicroScene {
  RandomScene scene;
  RenderGradients upstream;
};

inline MicroScene micro_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  MicroScene m;
  RandomScene& s = m.scene;
  const int w = 16, h = 16;
  s.model = GaussianModel(1);
  s.cam = look_at_camera(Vec3(uni(-0.2, 0.2), uni(-0.2, 0.2), -4.0), Vec3(0, 0, 0), w, h,
                         uni(18, 24), uni(0.2, 0.8));
  s.flow_cam = look_at_camera(Vec3(uni(-0.3, 0.3), uni(-0.2, 0.2), -4.1), Vec3(0, 0, 0), w, h,
                              uni(18, 24), uni(0.2, 0.8));
  s.background = Vec3(uni(0, 1), uni(0, 1), uni(0, 1));
  const int n = 2 + static_cast<int>(u(rng) * 4);
  for (int k = 0; k < n; ++k) {
    GaussianPrimitive p;
    p.position = Vec3(uni(-0.8, 0.8), uni(-0.8, 0.8), uni(-0.8, 0.8));
    p.rotation = Vec4(uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1)).normalized();
    p.log_scale = Vec3(uni(-1.8, -0.9), uni(-1.8, -0.9), uni(-1.8, -0.9));
    p.opacity_logit = uni(-1.0, 2.0);
    for (int i = 0; i < 12; ++i) p.sh[i] = uni(-0.5, 0.5);
    p.uncertainty = u(rng);
    s.model.push_back(p);
  }
  DeformationConfig cfg{2, 4, 4, 4};
  s.field.emplace(cfg, Aabb{Vec3(-2, -2, -2), Vec3(2, 2, 2)}, seed + 3);
  DeformationField& f = *s.field;
  for (std::size_t i = 0; i < f.grid_param_count(); ++i) f.params[i] = uni(0.7, 1.3);
  for (int i = 0; i < cfg.hidden_dim; ++i) f.params[f.b1_offset() + i] = uni(0.1, 0.4);
  for (int i = 0; i < kDeformationOutputs * cfg.hidden_dim; ++i) {
    f.params[f.w2_offset() + i] = uni(-0.1, 0.1);
  }
  for (int i = 0; i < kDeformationOutputs; ++i) f.params[f.b2_offset() + i] = uni(-0.05, 0.05);

  auto noise = [&](int c) {
    Image img(w, h, c);
    for (auto& v : img.data) v = uni(-1, 1);
    return img;
  };
  m.upstream.color = noise(3);
  m.upstream.depth = noise(1);
  m.upstream.uncertainty = noise(1);
  m.upstream.flow = noise(2);
  m.upstream.alpha = noise(1);
  return m;
}

inline RenderOutput micro_render(const RandomScene& s) {
  RenderRequest req;
  req.channels = ChannelSet::all();
  req.flow_target = s.flow_cam;
  RenderSettings st;
  st.background = s.background;
  st.thresholds = false;
  st.precision = Precision::Float64;
  return render(s.model, &*s.field, s.cam, req, st);
}

inline double inner(const Image& a, const Image& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

inline double micro_loss(const RandomScene& s, const RenderGradients& up) {
  const RenderOutput out = micro_render(s);
  return inner(out.color, up.color) + inner(out.depth, up.depth) +
         inner(out.uncertainty, up.uncertainty) + inner(out.flow, up.flow) +
         inner(out.alpha, up.alpha);
}

// True when every non-smooth point of the forward map (kernel cutoff, ReLU
// kinks, SH clamp, grid cell edges, box clamp) is at least `margin` away and
// every primitive has at least one active decoder unit.
inline bool smooth_margins(const RandomScene& s, double margin = 1e-3) {
  const DeformationField& field = *s.field;
  for (const Camera* cam : {&s.cam, &s.flow_cam}) {
    for (std::size_t k = 0; k < s.model.size(); ++k) {
      const GaussianPrimitive p = s.model.primitive(k);
      detail::QueryTrace<double> tr;
      detail::query_forward<double>(field, p.position, cam->timestamp, tr);
      bool any_active = false;
      for (int h = 0; h < field.config().hidden_dim; ++h) {
        if (std::abs(tr.pre[h]) < margin) return false;
        any_active = any_active || tr.pre[h] > 0;
      }
      if (!any_active) return false;
      for (int a = 0; a < 4; ++a) {
        if (tr.coord[a] < margin || tr.coord[a] > 1 - margin) return false;
      }
      for (int pl = 0; pl < kPlaneCount; ++pl) {
        for (double fr : {tr.frow[pl], tr.fcol[pl]}) {
          if (fr < margin || fr > 1 - margin) return false;
        }
      }
    }
  }
  RenderRequest req;
  req.channels = ChannelSet::all();
  req.flow_target = s.flow_cam;
  const SortedSplatList list = build_splat_list(s.model, &field, s.cam, req, Precision::Float64);
  if (list.size() != s.model.size()) return false;
  for (const auto& sp : list) {
    const GaussianPrimitive p = s.model.primitive(static_cast<std::size_t>(sp.index));
    const Vec3 mu = p.position + query_deformation(field, p.position, s.cam.timestamp).d_position;
    const Vec3 dir = (mu - s.cam.center()).normalized();
    for (int c = 0; c < 3; ++c) {
      if (std::abs(detail::sh_channel<double>(p.sh, 1, c, dir) + 0.5) < margin) return false;
    }
    for (int y = 0; y < s.cam.height; ++y) {
      for (int x = 0; x < s.cam.width; ++x) {
        const double dx = x - sp.mean.x(), dy = y - sp.mean.y();
        const double power = 0.5 * (sp.conic_a * dx * dx + sp.conic_c * dy * dy) +
                             sp.conic_b * dx * dy;
        if (std::abs(power - detail::kKernelPowerCutoff) < margin) return false;
      }
    }
  }
  return true;
}

struct ClassError {
  std::string name;
  double rel_error = 0;
  double fd_norm = 0;
  std::size_t count = 0;
};

// Compares render_backward against central differences for every parameter
// class. Relative error is ||analytic - fd|| / ||fd|| over the class.
inline std::vector<ClassError> gradient_check(MicroScene& m, double h = 1e-6) {
  RandomScene& s = m.scene;
  const RenderOutput out = micro_render(s);
  ModelGradients g(s.model, &*s.field);
  render_backward(s.model, &*s.field, out, m.upstream, g);

  std::vector<ClassError> result;
  auto check = [&](const std::string& name, std::vector<double>& params,
                   const std::vector<double>& analytic, std::size_t begin, std::size_t end) {
    double diff2 = 0, fd2 = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double lp = micro_loss(s, m.upstream);
      params[i] = keep - h;
      const double lm = micro_loss(s, m.upstream);
      params[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      diff2 += (analytic[i] - fd) * (analytic[i] - fd);
      fd2 += fd * fd;
    }
    ClassError e;
    e.name = name;
    e.fd_norm = std::sqrt(fd2);
    e.rel_error = std::sqrt(diff2) / std::max(e.fd_norm, 1e-300);
    e.count = end - begin;
    result.push_back(e);
  };
  check("position", s.model.positions, g.positions, 0, s.model.positions.size());
  check("rotation", s.model.rotations, g.rotations, 0, s.model.rotations.size());
  check("log_scale", s.model.log_scales, g.log_scales, 0, s.model.log_scales.size());
  check("opacity", s.model.opacity_logits, g.opacity_logits, 0, s.model.size());
  check("features", s.model.features, g.features, 0, s.model.features.size());
  DeformationField& f = *s.field;
  check("grid", f.params, g.field, 0, f.grid_param_count());
  check("decoder", f.params, g.field, f.w1_offset(), f.param_count());
  return result;
}

}  // namespace uags::testing
