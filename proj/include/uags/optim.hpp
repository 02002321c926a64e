#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace uags {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

struct AdamMoments {
  std::vector<double> m, v;

  void resize(std::size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
  }
};

// One bias-corrected Adam update; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamParams& hp = {});

// Parameter groups in checkpoint order.
enum class ParamGroup : int { Position = 0, Rotation, LogScale, Opacity, Features, Deformation };
inline constexpr int kParamGroupCount = 6;

struct OptimizerState {
  std::uint64_t step = 0;
  std::array<AdamMoments, kParamGroupCount> groups;

  AdamMoments& group(ParamGroup g) { return groups[static_cast<int>(g)]; }
  const AdamMoments& group(ParamGroup g) const { return groups[static_cast<int>(g)]; }
};

}  // namespace uags
