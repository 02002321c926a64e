#pragma once

#include "uags/image.hpp"

#include <optional>

namespace uags {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// 10 log10(1 / MSE), capped at kPsnrCap. With a mask the mean runs over
// masked pixels only; an all-false mask yields nullopt.
std::optional<double> psnr(const Image& a, const Image& b, const Mask* mask = nullptr);

// Per-window SSIM (valid windows only), one channel. Entry (y, x) belongs to
// the window whose top-left corner is (y, x).
Image ssim_map(const Image& a, const Image& b, int channel);

// Mean SSIM over valid windows and channels. With a mask only windows lying
// entirely inside the mask count; nullopt when there is none.
std::optional<double> ssim(const Image& a, const Image& b, const Mask* mask = nullptr);

// Unmasked SSIM plus d SSIM / d a accumulated into grad_a (scaled by weight).
double ssim_with_gradient(const Image& a, const Image& b, Image* grad_a, double weight = 1.0);

// |a - b| per pixel averaged over channels, for difference images.
Image abs_difference(const Image& a, const Image& b);

}  // namespace uags
