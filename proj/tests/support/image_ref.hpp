#pragma once

// Direct sliding-window SSIM and other image helpers for tests.

#include "uags/image.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace uags::testing {

inline Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0,
                          double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

inline std::vector<double> gaussian_window() {
  std::vector<double> g(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// SSIM of the 11x11 window with top-left corner (y, x) in one channel.
inline double window_ssim(const Image& a, const Image& b, int y, int x, int c) {
  const auto g = gaussian_window();
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      const double w = g[i] * g[j];
      const double va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
      ma += w * va;
      mb += w * vb;
      saa += w * va * va;
      sbb += w * vb * vb;
      sab += w * va * vb;
    }
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

// Mean over valid windows per channel, then over channels. With a mask only
// windows whose 11x11 support lies inside the mask count.
inline double reference_ssim(const Image& a, const Image& b, const Mask* mask = nullptr) {
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    double sum = 0;
    int n = 0;
    for (int y = 0; y + 11 <= a.height; ++y) {
      for (int x = 0; x + 11 <= a.width; ++x) {
        if (mask) {
          bool inside = true;
          for (int i = 0; i < 11 && inside; ++i) {
            for (int j = 0; j < 11 && inside; ++j) inside = mask->at(y + i, x + j);
          }
          if (!inside) continue;
        }
        sum += window_ssim(a, b, y, x, c);
        ++n;
      }
    }
    total += n ? sum / n : 0.0;
  }
  return total / a.channels;
}

}  // namespace uags::testing
