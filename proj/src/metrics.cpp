#include "uags/metrics.hpp"

#include "uags/common.hpp"

#include <array>
#include <cmath>

namespace uags {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.empty()) {
    throw ContractError(std::string(what) + ": images must be non-empty and equal in shape");
  }
}

void require_mask(const Image& a, const Mask* mask) {
  if (mask && !mask->empty() && (mask->width != a.width || mask->height != a.height)) {
    throw ContractError("mask size does not match image");
  }
}

const std::array<double, kSsimWindow>& gaussian_taps() {
  static const std::array<double, kSsimWindow> taps = [] {
    std::array<double, kSsimWindow> t{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      t[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
      sum += t[i];
    }
    for (auto& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Plane of doubles, row-major.
struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Valid-mode separable Gaussian filter.
Plane filter_valid(const Plane& in) {
  const auto& k = gaussian_taps();
  const int ow = in.w - kSsimWindow + 1, oh = in.h - kSsimWindow + 1;
  Plane tmp(ow, in.h), out(ow, oh);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * in.at(y, x + i);
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * tmp.at(y + i, x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

// Adjoint of filter_valid.
Plane filter_valid_adjoint(const Plane& in, int w, int h) {
  const auto& k = gaussian_taps();
  Plane tmp(in.w, h), out(w, h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int i = 0; i < kSsimWindow; ++i) tmp.at(y + i, x) += k[i] * in.at(y, x);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int i = 0; i < kSsimWindow; ++i) out.at(y, x + i) += k[i] * tmp.at(y, x);
    }
  }
  return out;
}

struct SsimMoments {
  Plane mx, my, exx, eyy, exy;
};

SsimMoments moments(const Image& a, const Image& b, int c) {
  Plane x(a.width, a.height), y(a.width, a.height), xx(a.width, a.height),
      yy(a.width, a.height), xy(a.width, a.height);
  for (int r = 0; r < a.height; ++r) {
    for (int q = 0; q < a.width; ++q) {
      const double va = a.at(r, q, c), vb = b.at(r, q, c);
      x.at(r, q) = va;
      y.at(r, q) = vb;
      xx.at(r, q) = va * va;
      yy.at(r, q) = vb * vb;
      xy.at(r, q) = va * vb;
    }
  }
  return {filter_valid(x), filter_valid(y), filter_valid(xx), filter_valid(yy), filter_valid(xy)};
}

void require_window(const Image& a) {
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw ContractError("SSIM needs images of at least 11x11 pixels");
  }
}

}  // namespace

std::optional<double> psnr(const Image& a, const Image& b, const Mask* mask) {
  require_same(a, b, "psnr");
  require_mask(a, mask);
  const bool masked = mask && !mask->empty();
  double sum = 0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (masked && !mask->at(y, x)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        sum += d * d;
      }
      count += static_cast<std::size_t>(a.channels);
    }
  }
  if (count == 0) return std::nullopt;
  const double mse = sum / static_cast<double>(count);
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Image ssim_map(const Image& a, const Image& b, int channel) {
  require_same(a, b, "ssim");
  require_window(a);
  const SsimMoments m = moments(a, b, channel);
  Image out(m.mx.w, m.mx.h, 1);
  for (std::size_t i = 0; i < m.mx.v.size(); ++i) {
    const double mx = m.mx.v[i], my = m.my.v[i];
    const double vx = m.exx.v[i] - mx * mx, vy = m.eyy.v[i] - my * my;
    const double cxy = m.exy.v[i] - mx * my;
    out.data[i] = ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
                  ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
  }
  return out;
}

std::optional<double> ssim(const Image& a, const Image& b, const Mask* mask) {
  require_same(a, b, "ssim");
  require_mask(a, mask);
  require_window(a);
  const bool masked = mask && !mask->empty();
  // Windows fully inside the mask, via a summed-area table of mask misses.
  const int ow = a.width - kSsimWindow + 1, oh = a.height - kSsimWindow + 1;
  std::vector<unsigned char> keep(static_cast<std::size_t>(ow) * oh, 1);
  if (masked) {
    std::vector<long> sat(static_cast<std::size_t>(a.width + 1) * (a.height + 1), 0);
    auto s = [&](int y, int x) -> long& { return sat[static_cast<std::size_t>(y) * (a.width + 1) + x]; };
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        s(y + 1, x + 1) = (mask->at(y, x) ? 0 : 1) + s(y, x + 1) + s(y + 1, x) - s(y, x);
      }
    }
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const int y1 = y + kSsimWindow, x1 = x + kSsimWindow;
        const long misses = s(y1, x1) - s(y, x1) - s(y1, x) + s(y, x);
        keep[static_cast<std::size_t>(y) * ow + x] = misses == 0;
      }
    }
  }
  std::size_t count = 0;
  for (auto k : keep) count += k;
  if (count == 0) return std::nullopt;
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    const Image map = ssim_map(a, b, c);
    double sum = 0;
    for (std::size_t i = 0; i < map.data.size(); ++i) {
      if (keep[i]) sum += map.data[i];
    }
    total += sum / static_cast<double>(count);
  }
  return total / a.channels;
}

double ssim_with_gradient(const Image& a, const Image& b, Image* grad_a, double weight) {
  require_same(a, b, "ssim");
  require_window(a);
  if (grad_a && grad_a->empty()) *grad_a = Image(a.width, a.height, a.channels);
  if (grad_a && !grad_a->same_shape(a)) throw ContractError("ssim gradient buffer shape mismatch");
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    const SsimMoments m = moments(a, b, c);
    const double n = static_cast<double>(m.mx.v.size());
    Plane g_mx(m.mx.w, m.mx.h), g_exx(m.mx.w, m.mx.h), g_exy(m.mx.w, m.mx.h);
    double sum = 0;
    for (std::size_t i = 0; i < m.mx.v.size(); ++i) {
      const double mx = m.mx.v[i], my = m.my.v[i];
      const double a1 = 2 * mx * my + kSsimC1;
      const double a2 = 2 * (m.exy.v[i] - mx * my) + kSsimC2;
      const double b1 = mx * mx + my * my + kSsimC1;
      const double b2 = m.exx.v[i] - mx * mx + m.eyy.v[i] - my * my + kSsimC2;
      const double s = a1 * a2 / (b1 * b2);
      sum += s;
      // Partials w.r.t. (mean x, E[x^2], E[xy]), scaled for the mean.
      const double k = weight / (n * a.channels);
      g_mx.v[i] = k * (2 * my * a2 / (b1 * b2) - 2 * my * a1 / (b1 * b2) -
                       s * 2 * mx / b1 + s * 2 * mx / b2);
      g_exx.v[i] = -k * s / b2;
      g_exy.v[i] = k * 2 * a1 / (b1 * b2);
    }
    total += sum / n;
    if (!grad_a) continue;
    const Plane d_mx = filter_valid_adjoint(g_mx, a.width, a.height);
    const Plane d_exx = filter_valid_adjoint(g_exx, a.width, a.height);
    const Plane d_exy = filter_valid_adjoint(g_exy, a.width, a.height);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        grad_a->at(y, x, c) +=
            d_mx.at(y, x) + 2 * a.at(y, x, c) * d_exx.at(y, x) + b.at(y, x, c) * d_exy.at(y, x);
      }
    }
  }
  return total / a.channels;
}

Image abs_difference(const Image& a, const Image& b) {
  require_same(a, b, "abs_difference");
  Image out(a.width, a.height, 1);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double s = 0;
      for (int c = 0; c < a.channels; ++c) s += std::abs(a.at(y, x, c) - b.at(y, x, c));
      out.at(y, x) = s / a.channels;
    }
  }
  return out;
}

}  // namespace uags
