#pragma once

#include "uags/deformation.hpp"
#include "uags/detail/splat_math.hpp"

#include <array>
#include <cmath>

namespace uags::detail {

inline constexpr int kMaxFeatureDim = 64;
inline constexpr int kMaxHiddenDim = 128;

// (first axis, second axis) per plane; axis 3 is time.
inline constexpr std::array<std::array<int, 2>, kPlaneCount> kPlaneAxes{{
    {0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

// Everything the backward pass needs from one query.
template <class T>
struct QueryTrace {
  std::array<T, 4> coord{};          // normalized (x, y, z, t), clamped
  std::array<bool, 4> inside{};      // false where clamping was active
  std::array<int, kPlaneCount> row0{}, col0{};
  std::array<T, kPlaneCount> frow{}, fcol{};
  std::array<std::array<T, kMaxFeatureDim>, kPlaneCount> plane_feature{};
  std::array<T, kMaxFeatureDim> fused{};
  std::array<T, kMaxHiddenDim> pre{};
  std::array<T, kMaxHiddenDim> hidden{};
  std::array<T, kDeformationOutputs> out{};
};

template <class T>
void query_forward(const DeformationField& field, const V3<T>& mu, T t, QueryTrace<T>& tr) {
  const auto& cfg = field.config();
  const int nf = cfg.feature_dim;
  const int nh = cfg.hidden_dim;
  const auto& box = field.box();
  const double* prm = field.params.data();

  for (int a = 0; a < 3; ++a) {
    const T extent = T(box.max[a] - box.min[a]);
    const T u = (mu[a] - T(box.min[a])) / extent;
    tr.inside[a] = u > T(0) && u < T(1);
    tr.coord[a] = std::clamp(u, T(0), T(1));
  }
  tr.inside[3] = t > T(0) && t < T(1);
  tr.coord[3] = std::clamp(t, T(0), T(1));

  for (int f = 0; f < nf; ++f) tr.fused[f] = T(1);
  for (int p = 0; p < kPlaneCount; ++p) {
    const Plane plane = static_cast<Plane>(p);
    const int rows = field.plane_rows(plane);
    const int cols = field.plane_cols(plane);
    const T gr = tr.coord[kPlaneAxes[p][0]] * T(rows - 1);
    const T gc = tr.coord[kPlaneAxes[p][1]] * T(cols - 1);
    const int r0 = std::min(static_cast<int>(std::floor(gr)), rows - 2);
    const int c0 = std::min(static_cast<int>(std::floor(gc)), cols - 2);
    tr.row0[p] = r0;
    tr.col0[p] = c0;
    const T fr = gr - T(r0);
    const T fc = gc - T(c0);
    tr.frow[p] = fr;
    tr.fcol[p] = fc;
    const double* c00 = prm + field.plane_index(plane, r0, c0, 0);
    const double* c01 = prm + field.plane_index(plane, r0, c0 + 1, 0);
    const double* c10 = prm + field.plane_index(plane, r0 + 1, c0, 0);
    const double* c11 = prm + field.plane_index(plane, r0 + 1, c0 + 1, 0);
    const T w00 = (T(1) - fr) * (T(1) - fc), w01 = (T(1) - fr) * fc;
    const T w10 = fr * (T(1) - fc), w11 = fr * fc;
    for (int f = 0; f < nf; ++f) {
      const T v = w00 * T(c00[f]) + w01 * T(c01[f]) + w10 * T(c10[f]) + w11 * T(c11[f]);
      tr.plane_feature[p][f] = v;
      tr.fused[f] *= v;
    }
  }

  const double* w1 = prm + field.w1_offset();
  const double* b1 = prm + field.b1_offset();
  for (int h = 0; h < nh; ++h) {
    T acc = T(b1[h]);
    for (int f = 0; f < nf; ++f) acc += T(w1[h * nf + f]) * tr.fused[f];
    tr.pre[h] = acc;
    tr.hidden[h] = acc > T(0) ? acc : T(0);
  }
  const double* w2 = prm + field.w2_offset();
  const double* b2 = prm + field.b2_offset();
  for (int o = 0; o < kDeformationOutputs; ++o) {
    T acc = T(b2[o]);
    for (int h = 0; h < nh; ++h) acc += T(w2[o * nh + h]) * tr.hidden[h];
    tr.out[o] = acc;
  }
}

// Accumulates parameter gradients into field_grad and input gradients into
// d_mu / d_t.
template <class T>
void query_backward(const DeformationField& field, const QueryTrace<T>& tr,
                    const std::array<T, kDeformationOutputs>& d_out, double* field_grad,
                    V3<T>& d_mu, T& d_t) {
  const auto& cfg = field.config();
  const int nf = cfg.feature_dim;
  const int nh = cfg.hidden_dim;
  const double* prm = field.params.data();

  const double* w2 = prm + field.w2_offset();
  double* gw2 = field_grad + field.w2_offset();
  double* gb2 = field_grad + field.b2_offset();
  std::array<T, kMaxHiddenDim> d_hidden{};
  for (int o = 0; o < kDeformationOutputs; ++o) {
    const T g = d_out[o];
    if (g == T(0)) continue;
    gb2[o] += static_cast<double>(g);
    for (int h = 0; h < nh; ++h) {
      gw2[o * nh + h] += static_cast<double>(g * tr.hidden[h]);
      d_hidden[h] += g * T(w2[o * nh + h]);
    }
  }

  const double* w1 = prm + field.w1_offset();
  double* gw1 = field_grad + field.w1_offset();
  double* gb1 = field_grad + field.b1_offset();
  std::array<T, kMaxFeatureDim> d_fused{};
  for (int h = 0; h < nh; ++h) {
    if (!(tr.pre[h] > T(0))) continue;
    const T g = d_hidden[h];
    if (g == T(0)) continue;
    gb1[h] += static_cast<double>(g);
    for (int f = 0; f < nf; ++f) {
      gw1[h * nf + f] += static_cast<double>(g * tr.fused[f]);
      d_fused[f] += g * T(w1[h * nf + f]);
    }
  }

  std::array<T, 4> d_coord{};
  const auto& box = field.box();
  for (int p = 0; p < kPlaneCount; ++p) {
    const Plane plane = static_cast<Plane>(p);
    const int rows = field.plane_rows(plane);
    const int cols = field.plane_cols(plane);
    const int r0 = tr.row0[p], c0 = tr.col0[p];
    const T fr = tr.frow[p], fc = tr.fcol[p];
    const std::size_t i00 = field.plane_index(plane, r0, c0, 0);
    const std::size_t i01 = field.plane_index(plane, r0, c0 + 1, 0);
    const std::size_t i10 = field.plane_index(plane, r0 + 1, c0, 0);
    const std::size_t i11 = field.plane_index(plane, r0 + 1, c0 + 1, 0);
    const T w00 = (T(1) - fr) * (T(1) - fc), w01 = (T(1) - fr) * fc;
    const T w10 = fr * (T(1) - fc), w11 = fr * fc;
    T d_fr = T(0), d_fc = T(0);
    for (int f = 0; f < nf; ++f) {
      // Product of the other five plane features.
      T others = T(1);
      for (int q = 0; q < kPlaneCount; ++q) {
        if (q != p) others *= tr.plane_feature[q][f];
      }
      const T g = d_fused[f] * others;
      if (g == T(0)) continue;
      field_grad[i00 + f] += static_cast<double>(g * w00);
      field_grad[i01 + f] += static_cast<double>(g * w01);
      field_grad[i10 + f] += static_cast<double>(g * w10);
      field_grad[i11 + f] += static_cast<double>(g * w11);
      const T c00 = T(prm[i00 + f]), c01 = T(prm[i01 + f]);
      const T c10 = T(prm[i10 + f]), c11 = T(prm[i11 + f]);
      d_fr += g * ((T(1) - fc) * (c10 - c00) + fc * (c11 - c01));
      d_fc += g * ((T(1) - fr) * (c01 - c00) + fr * (c11 - c10));
    }
    d_coord[kPlaneAxes[p][0]] += d_fr * T(rows - 1);
    d_coord[kPlaneAxes[p][1]] += d_fc * T(cols - 1);
  }
  for (int a = 0; a < 3; ++a) {
    if (tr.inside[a]) d_mu[a] += d_coord[a] / T(box.max[a] - box.min[a]);
  }
  if (tr.inside[3]) d_t += d_coord[3];
}

}  // namespace uags::detail
