#pragma once

#include "uags/image.hpp"

#include <optional>

namespace uags {

// Every loss below returns its value and, when `grad` is given, adds
// weight * d loss / d input into it (an empty grad is allocated as zeros).

inline constexpr double kSsimLossWeight = 0.2;
inline constexpr double kNormalizerFloor = 1e-8;

double loss_l1(const Image& pred, const Image& target, Image* grad = nullptr,
               double weight = 1.0);

// 0.8 * mean|pred - target| + 0.2 * (1 - SSIM).
double loss_recon(const Image& pred, const Image& target, Image* grad = nullptr,
                  double weight = 1.0);

// Mean |pred - target| over the pixel-channels where `valid` is set. A
// default-constructed (empty) mask means every pixel is valid; a mask with
// no set pixel gives 0. Used for both depth and flow supervision.
double loss_masked_l1(const Image& pred, const Image& target, const Mask& valid,
                      Image* grad = nullptr, double weight = 1.0);

// ||U*(pred - ref)||_2 / ||U||_2 + ||U*(pred - ref)||_1 / ||U||_1 with U
// (H x W) broadcast over color channels and held constant.
double loss_ua_diff(const Image& pred, const Image& refined, const Image& uncertainty,
                    Image* grad = nullptr, double weight = 1.0);

// Uncertainty-weighted total variation of a depth map, row and column terms
// each normalized by their summed edge weights.
double loss_ua_tv(const Image& depth, const Image& uncertainty, Image* grad = nullptr,
                  double weight = 1.0);

struct LossWeights {
  double grid = 1e-4;
  double data = 0.5;
  double ua_diff = 0.2;
  double ua_tv = 0.01;
};

struct LossParts {
  double recon = 0;
  double grid = 0;
  double depth = 0;
  double flow = 0;
  std::optional<double> ua_diff;
  std::optional<double> ua_tv;
};

struct LossBreakdown {
  LossParts parts;
  LossWeights weights;
  double total = 0;
};

// recon + l_grid*grid + l_data*(depth + flow) + l_ua_diff*ua_diff +
// l_ua_tv*ua_tv; UA terms only count when ua_active is set.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, bool ua_active);

}  // namespace uags
