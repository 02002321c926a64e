#include "uags/losses.hpp"

#include "uags/common.hpp"
#include "uags/metrics.hpp"

#include <cmath>

namespace uags {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw ContractError(std::string(what) + ": shape mismatch");
}

void prepare_grad(Image* grad, const Image& like) {
  if (!grad) return;
  if (grad->empty()) *grad = Image(like.width, like.height, like.channels);
  if (!grad->same_shape(like)) throw ContractError("loss gradient buffer shape mismatch");
}

double sign(double v) { return (v > 0) - (v < 0); }

void require_map(const Image& img, const Image& u, const char* what) {
  if (u.channels != 1 || u.width != img.width || u.height != img.height) {
    throw ContractError(std::string(what) + ": uncertainty map must be H x W x 1 matching input");
  }
}

}  // namespace

double loss_l1(const Image& pred, const Image& target, Image* grad, double weight) {
  require_same(pred, target, "loss_l1");
  prepare_grad(grad, pred);
  if (pred.data.empty()) return 0.0;
  const double n = static_cast<double>(pred.data.size());
  double sum = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    sum += std::abs(d);
    if (grad) grad->data[i] += weight * sign(d) / n;
  }
  return sum / n;
}

double loss_recon(const Image& pred, const Image& target, Image* grad, double weight) {
  require_same(pred, target, "loss_recon");
  prepare_grad(grad, pred);
  const double l1 = loss_l1(pred, target, grad, weight * (1.0 - kSsimLossWeight));
  const double s = ssim_with_gradient(pred, target, grad, -weight * kSsimLossWeight);
  return (1.0 - kSsimLossWeight) * l1 + kSsimLossWeight * (1.0 - s);
}

double loss_masked_l1(const Image& pred, const Image& target, const Mask& valid, Image* grad,
                      double weight) {
  require_same(pred, target, "loss_masked_l1");
  if (!valid.empty() && (valid.width != pred.width || valid.height != pred.height)) {
    throw ContractError("loss_masked_l1: mask size mismatch");
  }
  prepare_grad(grad, pred);
  const std::size_t pixels = pred.pixel_count();
  const int ch = pred.channels;
  std::size_t count = 0;
  for (std::size_t p = 0; p < pixels; ++p) count += valid.empty() || valid.data[p];
  if (count == 0) return 0.0;
  const double n = static_cast<double>(count * static_cast<std::size_t>(ch));
  double sum = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!valid.empty() && !valid.data[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      const double d = pred.data[i] - target.data[i];
      sum += std::abs(d);
      if (grad) grad->data[i] += weight * sign(d) / n;
    }
  }
  return sum / n;
}

double loss_ua_diff(const Image& pred, const Image& refined, const Image& uncertainty,
                    Image* grad, double weight) {
  require_same(pred, refined, "loss_ua_diff");
  require_map(pred, uncertainty, "loss_ua_diff");
  prepare_grad(grad, pred);
  double u1 = 0, u2 = 0;
  for (double u : uncertainty.data) {
    u1 += std::abs(u);
    u2 += u * u;
  }
  if (u1 < kNormalizerFloor) return 0.0;
  u2 = std::sqrt(u2);
  const int ch = pred.channels;
  double n1 = 0, n2 = 0;
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      const double e = uncertainty.data[p] * (pred.data[i] - refined.data[i]);
      n1 += std::abs(e);
      n2 += e * e;
    }
  }
  n2 = std::sqrt(n2);
  if (grad) {
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
      const double u = uncertainty.data[p];
      if (u == 0) continue;
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = p * ch + c;
        const double d = pred.data[i] - refined.data[i];
        double g = u * sign(u * d) / u1;
        if (n2 > 0) g += u * u * d / (n2 * u2);
        grad->data[i] += weight * g;
      }
    }
  }
  return n2 / u2 + n1 / u1;
}

double loss_ua_tv(const Image& depth, const Image& uncertainty, Image* grad, double weight) {
  require_map(depth, uncertainty, "loss_ua_tv");
  if (depth.channels != 1) throw ContractError("loss_ua_tv: depth map must have one channel");
  if (depth.width < 2 || depth.height < 2) throw ContractError("loss_ua_tv: map must be >= 2x2");
  prepare_grad(grad, depth);
  const int w = depth.width, h = depth.height;
  auto term = [&](int dy, int dx) {
    double norm = 0, sum = 0;
    for (int y = 0; y + dy < h; ++y) {
      for (int x = 0; x + dx < w; ++x) {
        const double e = 0.5 * (uncertainty.at(y, x) + uncertainty.at(y + dy, x + dx));
        norm += e;
        sum += e * std::abs(depth.at(y, x) - depth.at(y + dy, x + dx));
      }
    }
    if (norm < kNormalizerFloor) return 0.0;
    if (grad) {
      for (int y = 0; y + dy < h; ++y) {
        for (int x = 0; x + dx < w; ++x) {
          const double e = 0.5 * (uncertainty.at(y, x) + uncertainty.at(y + dy, x + dx));
          const double g = weight * e * sign(depth.at(y, x) - depth.at(y + dy, x + dx)) / norm;
          grad->at(y, x) += g;
          grad->at(y + dy, x + dx) -= g;
        }
      }
    }
    return sum / norm;
  };
  return term(1, 0) + term(0, 1);
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, bool ua_active) {
  for (double w : {weights.grid, weights.data, weights.ua_diff, weights.ua_tv}) {
    if (!(w >= 0)) throw InvalidParameter("loss weights must be non-negative");
  }
  LossBreakdown out;
  out.parts = parts;
  out.weights = weights;
  if (!ua_active) {
    out.parts.ua_diff.reset();
    out.parts.ua_tv.reset();
  }
  out.total = parts.recon + weights.grid * parts.grid + weights.data * (parts.depth + parts.flow);
  if (out.parts.ua_diff) out.total += weights.ua_diff * *out.parts.ua_diff;
  if (out.parts.ua_tv) out.total += weights.ua_tv * *out.parts.ua_tv;
  return out;
}

}  // namespace uags
