#include "scenes.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace uags;
using namespace uags::testing;

namespace {

RenderOutput render_all(const RandomScene& s, Precision precision, bool thresholds) {
  RenderRequest req;
  req.channels = ChannelSet::all();
  req.flow_target = s.flow_cam;
  RenderSettings st;
  st.background = s.background;
  st.thresholds = thresholds;
  st.precision = precision;
  return render(s.model, s.field ? &*s.field : nullptr, s.cam, req, st);
}

double worst_channel(const RenderOutput& out, const ReferenceImage& ref) {
  double m = 0;
  m = std::max(m, max_abs_diff(out.color, ref.color));
  m = std::max(m, max_abs_diff(out.depth, ref.depth));
  m = std::max(m, max_abs_diff(out.uncertainty, ref.uncertainty));
  m = std::max(m, max_abs_diff(out.flow, ref.flow));
  m = std::max(m, max_abs_diff(out.alpha, ref.alpha));
  m = std::max(m, max_abs_diff(out.transmittance, ref.transmittance));
  return m;
}

}  // namespace

TEST(Rasterizer, MatchesReferenceFloat64) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const RandomScene s = random_scene(seed);
    const auto ref = reference_render(s.model, s.field ? &*s.field : nullptr, s.cam, &s.flow_cam,
                                      s.background);
    const auto out = render_all(s, Precision::Float64, false);
    EXPECT_LT(worst_channel(out, ref), 1e-10) << "seed " << seed;
  }
}

TEST(Rasterizer, MatchesReferenceFloat32) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const RandomScene s = random_scene(seed);
    const auto ref = reference_render(s.model, s.field ? &*s.field : nullptr, s.cam, &s.flow_cam,
                                      s.background);
    const auto out = render_all(s, Precision::Float32, false);
    EXPECT_LT(worst_channel(out, ref), 1e-5) << "seed " << seed;
  }
}

namespace {

ProjectedSplat disc(double opacity, int index) {
  ProjectedSplat s;
  s.index = index;
  s.conic_a = s.conic_c = 1.0;
  s.opacity = opacity;
  s.depth = 1.0 + index;
  s.x_min = s.y_min = -5;
  s.x_max = s.y_max = 5;
  return s;
}

Camera front_camera(int w = 32, int h = 32) {
  return look_at_camera(Vec3(0, 0, -4), Vec3(0, 0, 0), w, h, 30.0, 0.5);
}

// One large, nearly opaque primitive centered in front of the camera.
GaussianModel opaque_blob(double uncertainty) {
  GaussianModel m(0);
  GaussianPrimitive p;
  p.position = Vec3(0, 0, -2);  // depth 2 from the camera at z = -4
  p.log_scale = Vec3::Constant(std::log(0.5));
  p.opacity_logit = 40.0;
  p.uncertainty = uncertainty;
  m.push_back(p);
  return m;
}

}  // namespace

TEST(BlendWeights, SingleOpaqueSplatAtCenter) {
  const auto w = blend_weights({disc(1.0, 0)}, Vec2(0, 0));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].index, 0);
  EXPECT_DOUBLE_EQ(w[0].weight, 1.0);
}

TEST(BlendWeights, TwoHalfOpaqueSplats) {
  const auto w = blend_weights({disc(0.5, 0), disc(0.5, 1)}, Vec2(0, 0));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w[0].weight, 0.5);
  EXPECT_DOUBLE_EQ(w[1].weight, 0.25);
}

TEST(BlendWeights, MatchExhaustiveLoop) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    SortedSplatList list;
    for (int i = 0; i < 20; ++i) {
      ProjectedSplat s = disc(u(rng), i);
      s.mean = Vec2(4 * u(rng) - 2, 4 * u(rng) - 2);
      s.conic_a = 0.2 + u(rng);
      s.conic_c = 0.2 + u(rng);
      s.conic_b = 0.1 * (u(rng) - 0.5);
      list.push_back(s);
    }
    const Vec2 px(u(rng) - 0.5, u(rng) - 0.5);
    BlendOptions off;
    off.thresholds = false;
    const auto w = blend_weights(list, px, off);
    double trans = 1.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Vec2 d = px - list[i].mean;
      const double power = 0.5 * (list[i].conic_a * d.x() * d.x() + list[i].conic_c * d.y() * d.y()) +
                           list[i].conic_b * d.x() * d.y();
      if (power > 4.5) continue;
      const double a = list[i].opacity * std::exp(-power);
      if (a <= 0) continue;
      ASSERT_LT(j, w.size());
      EXPECT_EQ(w[j].index, static_cast<int>(i));
      EXPECT_NEAR(w[j].weight, a * trans, 1e-6);
      trans *= 1 - a;
      ++j;
    }
    EXPECT_EQ(j, w.size());
  }
}

TEST(Render, SingleOpaqueSplatPayloads) {
  const GaussianModel m = opaque_blob(0.3);
  RenderRequest req;
  req.channels = {true, true, true, false};
  RenderSettings st;
  st.precision = Precision::Float64;
  const auto out = render(m, nullptr, front_camera(), req, st);
  // The projected center lands at pixel (15.5, 15.5); the nearest pixel has
  // G close to 1 and the primitive is effectively opaque.
  const double g = std::exp(-0.5 * 0.5 / (0.25 * 15 * 15 + 0.3));
  EXPECT_NEAR(out.alpha.at(15, 15), g, 1e-9);
  EXPECT_NEAR(out.depth.at(15, 15), 2.0 * g, 1e-9);
  EXPECT_NEAR(out.uncertainty.at(15, 15), 0.3 * g, 1e-9);
  EXPECT_GT(out.alpha.at(15, 15), 0.99);
}

TEST(Render, EmptySceneIsBackground) {
  const GaussianModel m(1);
  RenderRequest req;
  req.channels = ChannelSet::all();
  req.flow_target = front_camera();
  RenderSettings st;
  st.background = Vec3(0.2, 0.4, 0.6);
  for (const auto& out : {render(m, nullptr, front_camera(), req, st),
                          render_oracle(m, nullptr, front_camera(), req, st.background)}) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.color.at(y, x, c), st.background[c], 1e-7);
        EXPECT_EQ(out.depth.at(y, x), 0.0);
        EXPECT_EQ(out.alpha.at(y, x), 0.0);
      }
    }
  }
}

TEST(Render, OracleSingleSplatClosedForm) {
  const GaussianModel m = opaque_blob(0.0);
  RenderRequest req;
  const auto out = render_oracle(m, nullptr, front_camera(), req);
  // Projected variance: (30 * 0.5 / 2)^2 + 0.3 per axis, mean at 15.5.
  const double var = 7.5 * 7.5 + 0.3;
  for (int y = 0; y < 32; y += 3) {
    for (int x = 0; x < 32; x += 3) {
      const double power = 0.5 * ((x - 15.5) * (x - 15.5) + (y - 15.5) * (y - 15.5)) / var;
      const double expect = power > 4.5 ? 0.0 : std::exp(-power) * sigmoid(40.0);
      EXPECT_NEAR(out.alpha.at(y, x), expect, 1e-12);
    }
  }
}

TEST(Render, ConservationAndUncertaintyBound) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const RandomScene s = random_scene(seed);
    const auto out = render_all(s, Precision::Float64, false);
    double max_u = 0;
    for (double u : s.model.uncertainties) max_u = std::max(max_u, u);
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
      EXPECT_NEAR(out.alpha.data[i] + out.transmittance.data[i], 1.0, 1e-12);
      EXPECT_GE(out.alpha.data[i], 0.0);
      EXPECT_LE(out.alpha.data[i], 1.0);
      EXPECT_GE(out.uncertainty.data[i], 0.0);
      EXPECT_LE(out.uncertainty.data[i], out.alpha.data[i] * max_u + 1e-12);
    }
    for (double c : out.contributions) EXPECT_GE(c, 0.0);
  }
}

TEST(Render, PermutationInvariant) {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    RandomScene s = random_scene(seed);
    const auto a = render_all(s, Precision::Float32, true);
    std::vector<int> perm(s.model.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    s.model = s.model.gather(perm);
    const auto b = render_all(s, Precision::Float32, true);
    // Equal-depth ties would reorder; random scenes have distinct depths.
    EXPECT_EQ(a.color.data, b.color.data);
    EXPECT_EQ(a.depth.data, b.depth.data);
    EXPECT_EQ(a.flow.data, b.flow.data);
    EXPECT_EQ(a.uncertainty.data, b.uncertainty.data);
  }
}

TEST(Render, ContributionsMatchOracle) {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    const RandomScene s = random_scene(seed);
    RenderRequest req;
    const DeformationField* f = s.field ? &*s.field : nullptr;
    RenderSettings st;
    st.thresholds = false;
    st.precision = Precision::Float64;
    const auto a = render(s.model, f, s.cam, req, st);
    st.precision = Precision::Float32;
    const auto a32 = render(s.model, f, s.cam, req, st);
    const auto b = render_oracle(s.model, f, s.cam, req);
    ASSERT_EQ(a.contributions.size(), b.contributions.size());
    for (std::size_t k = 0; k < a.contributions.size(); ++k) {
      EXPECT_NEAR(a.contributions[k], b.contributions[k], 1e-5);
      // Float32 sums accumulate per-pixel rounding over the footprint.
      EXPECT_NEAR(a32.contributions[k], b.contributions[k], 1e-5 * std::max(1.0, b.contributions[k]));
    }
  }
}

TEST(RenderFlow, StaticSceneSameCameraIsZero) {
  const RandomScene s = random_scene(7, {100, 32, 32, 1, false});
  const Camera cam = s.cam;
  Camera later = cam;
  later.timestamp = 0.9;
  const auto out = render_flow_pair(s.model, nullptr, cam, later);
  for (double v : out.flow.data) EXPECT_EQ(v, 0.0);
}

TEST(RenderFlow, ConstantOffsetGivesFivePixels) {
  GaussianModel m = opaque_blob(0.0);
  const Camera cam = front_camera();
  // +x world offset of dz * 5 / f pixels at depth 2 projects to +5 px.
  DeformationField f({2, 2, 2, 2}, Aabb{Vec3::Constant(-3), Vec3::Constant(3)}, 0);
  for (int p = 0; p < kPlaneCount; ++p) f.fill_plane(static_cast<Plane>(p), 0.0);
  Camera a = cam, b = cam;
  a.timestamp = 0.0;
  b.timestamp = 1.0;
  // Time plane XT: value 1 at t = 1, 0 at t = 0; other planes 1. Decoder: hidden = fused, out_x = v * hidden.
  for (int p = 0; p < 3; ++p) f.fill_plane(static_cast<Plane>(p), 1.0);
  f.fill_plane(Plane::YT, 1.0);
  f.fill_plane(Plane::ZT, 1.0);
  for (int r = 0; r < f.plane_rows(Plane::XT); ++r) {
    for (int k = 0; k < 2; ++k) f.params[f.plane_index(Plane::XT, r, 1, k)] = 1.0;
  }
  std::fill(f.params.begin() + f.w1_offset(), f.params.end(), 0.0);
  f.params[f.w1_offset()] = 1.0;  // hidden 0 = fused feature 0
  f.params[f.w2_offset()] = 5.0 * 2.0 / 30.0;  // dmu_x at t = 1
  const auto out = render_flow_pair(m, &f, a, b);
  RenderSettings st;
  const auto alpha = render(m, &f, a, RenderRequest{}, st).alpha;
  int covered = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (alpha.at(y, x) < 0.9) continue;
      ++covered;
      EXPECT_NEAR(out.flow.at(y, x, 0) / alpha.at(y, x), 5.0, 1e-4);
      EXPECT_NEAR(out.flow.at(y, x, 1), 0.0, 1e-6);
    }
  }
  EXPECT_GT(covered, 20);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
  const RandomScene s = random_scene(5);
  const DeformationField* f = s.field ? &*s.field : nullptr;
  RenderRequest req;
  req.channels = ChannelSet::all();
  req.flow_target = s.flow_cam;
  const auto out = render(s.model, f, s.cam, req);
  ModelGradients g(s.model, f);
  render_backward(s.model, f, out, RenderGradients{}, g);
  for (const auto* v : {&g.positions, &g.rotations, &g.log_scales, &g.opacity_logits, &g.features, &g.field}) {
    for (double x : *v) EXPECT_EQ(x, 0.0);
  }
}

TEST(RenderBackward, MismatchedStateIsContractError) {
  const RandomScene s = random_scene(6);
  const DeformationField* f = s.field ? &*s.field : nullptr;
  const auto out = render(s.model, f, s.cam, RenderRequest{});
  GaussianModel bigger = s.model;
  bigger.push_back(GaussianPrimitive{});
  ModelGradients g(bigger, f);
  EXPECT_THROW(render_backward(bigger, f, out, RenderGradients{}, g), ContractError);
  ModelGradients g2(s.model, f);
  RenderGradients up;
  up.depth = Image(32, 32, 1, 1.0);  // depth was not rendered
  EXPECT_THROW(render_backward(s.model, f, out, up, g2), ContractError);
  RenderGradients bad;
  bad.color = Image(16, 16, 3, 1.0);
  EXPECT_THROW(render_backward(s.model, f, out, bad, g2), ContractError);
}

TEST(RenderBackward, EveryParameterOfASingleSplatReceivesGradient) {
  GaussianModel m(1);
  GaussianPrimitive p;
  p.position = Vec3(0.1, -0.05, -2);
  p.rotation = Vec4(0.9, 0.2, -0.3, 0.1).normalized();
  p.log_scale = Vec3(std::log(0.3), std::log(0.2), std::log(0.25));
  p.opacity_logit = 0.3;
  for (int i = 0; i < 12; ++i) p.sh[i] = 0.1 * (i + 1) * (i % 2 ? -1 : 1);
  m.push_back(p);
  DeformationField f({2, 3, 3, 4}, Aabb{Vec3::Constant(-3), Vec3::Constant(3)}, 1);
  for (std::size_t i = f.w2_offset(); i < f.b2_offset(); ++i) f.params[i] = 0.01 * ((i % 5) + 1);
  for (std::size_t i = f.b1_offset(); i < f.w2_offset(); ++i) f.params[i] = 0.2;
  const Camera cam = front_camera();
  RenderRequest req;
  RenderSettings st;
  st.precision = Precision::Float64;
  const auto out = render(m, &f, cam, req, st);
  RenderGradients up;
  up.color = Image(32, 32, 3);
  up.color.at(14, 17, 0) = 1.0;
  up.color.at(14, 17, 1) = 0.5;
  up.color.at(14, 17, 2) = -0.7;
  ModelGradients g(m, &f);
  render_backward(m, &f, out, up, g);
  for (const auto* v : {&g.positions, &g.rotations, &g.log_scales, &g.opacity_logits, &g.features}) {
    for (double x : *v) EXPECT_NE(x, 0.0);
  }
  double decoder = 0;
  for (std::size_t i = f.w2_offset(); i < f.param_count(); ++i) decoder += std::abs(g.field[i]);
  EXPECT_GT(decoder, 0.0);
}

TEST(RenderBackward, OpacityGradientMatchesFiniteDifference) {
  GaussianModel m = opaque_blob(0.0);
  m.opacity_logits[0] = 0.4;
  m.features[0] = 0.6;
  const Camera cam = front_camera();
  RenderSettings st;
  st.precision = Precision::Float64;
  st.thresholds = false;
  auto loss = [&](const GaussianModel& mm) {
    return render(mm, nullptr, cam, RenderRequest{}, st).color.at(12, 18, 0);
  };
  const auto out = render(m, nullptr, cam, RenderRequest{}, st);
  RenderGradients up;
  up.color = Image(32, 32, 3);
  up.color.at(12, 18, 0) = 1.0;
  ModelGradients g(m, nullptr);
  render_backward(m, nullptr, out, up, g);
  const double h = 1e-6;
  GaussianModel a = m, b = m;
  a.opacity_logits[0] += h;
  b.opacity_logits[0] -= h;
  const double fd = (loss(a) - loss(b)) / (2 * h);
  EXPECT_LT(std::abs(g.opacity_logits[0] - fd) / std::abs(fd), 1e-4);
}
