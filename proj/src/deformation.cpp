#include "uags/deformation.hpp"

#include "uags/detail/deformation_kernel.hpp"

#include <random>
#include <string>

namespace uags {

DeformationField::DeformationField(const DeformationConfig& config, const Aabb& box,
                                   std::uint64_t seed)
    : config_(config), box_(box) {
  if (config.spatial_res < 2 || config.temporal_res < 2) {
    throw InvalidParameter("deformation grid resolution must be >= 2 per axis");
  }
  if (config.feature_dim < 1 || config.feature_dim > detail::kMaxFeatureDim ||
      config.hidden_dim < 1 || config.hidden_dim > detail::kMaxHiddenDim) {
    throw InvalidParameter("deformation feature/hidden width out of range");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(box.max[a] > box.min[a])) throw InvalidParameter("degenerate normalization box");
  }
  layout();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> space(0.5, 1.0);
  for (int p = 0; p < 3; ++p) {
    const auto plane = static_cast<Plane>(p);
    for (std::size_t i = 0; i < plane_size(plane); ++i) params[plane_offset(plane) + i] = space(rng);
  }
  for (int p = 3; p < kPlaneCount; ++p) fill_plane(static_cast<Plane>(p), 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.feature_dim));
  std::uniform_real_distribution<double> w1(-bound, bound);
  for (int i = 0; i < config.hidden_dim * config.feature_dim; ++i) params[w1_ + i] = w1(rng);
}

void DeformationField::layout() {
  std::size_t offset = 0;
  for (int p = 0; p < kPlaneCount; ++p) {
    plane_offsets_[p] = offset;
    offset += plane_size(static_cast<Plane>(p));
  }
  w1_ = offset;
  offset += static_cast<std::size_t>(config_.hidden_dim) * config_.feature_dim;
  b1_ = offset;
  offset += config_.hidden_dim;
  w2_ = offset;
  offset += static_cast<std::size_t>(kDeformationOutputs) * config_.hidden_dim;
  b2_ = offset;
  offset += kDeformationOutputs;
  params.assign(offset, 0.0);
}

int DeformationField::plane_rows(Plane) const { return config_.spatial_res; }

int DeformationField::plane_cols(Plane p) const {
  return static_cast<int>(p) >= static_cast<int>(Plane::XT) ? config_.temporal_res
                                                            : config_.spatial_res;
}

std::size_t DeformationField::plane_size(Plane p) const {
  return static_cast<std::size_t>(plane_rows(p)) * plane_cols(p) * config_.feature_dim;
}

void DeformationField::fill_plane(Plane p, double value) {
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(plane_offset(p)), plane_size(p),
              value);
}

DeformationOutput query_deformation(const DeformationField& field, const Vec3& position,
                                    double t) {
  if (!position.allFinite() || !std::isfinite(t)) {
    throw InvalidParameter("query_deformation: non-finite input");
  }
  detail::QueryTrace<double> tr;
  detail::query_forward<double>(field, position, t, tr);
  DeformationOutput out;
  out.d_position = Vec3(tr.out[0], tr.out[1], tr.out[2]);
  out.d_rotation = Vec4(tr.out[3], tr.out[4], tr.out[5], tr.out[6]);
  out.d_log_scale = Vec3(tr.out[7], tr.out[8], tr.out[9]);
  return out;
}

DeformedState deform_primitive(const GaussianPrimitive& prim, const DeformationField& field,
                               double t) {
  const DeformationOutput d = query_deformation(field, prim.position, t);
  const Vec4 q = prim.rotation + d.d_rotation;
  const double n = q.norm();
  if (!(n >= 1e-8)) throw InvalidParameter("deform_primitive: degenerate rotation");
  return {prim.position + d.d_position, q / n, prim.log_scale + d.d_log_scale};
}

QueryGradient query_deformation_backward(const DeformationField& field, const Vec3& position,
                                         double t,
                                         const std::array<double, kDeformationOutputs>& d_out,
                                         std::span<double> field_grad) {
  if (field_grad.size() != field.param_count()) {
    throw ContractError("query_deformation_backward: gradient buffer size mismatch");
  }
  detail::QueryTrace<double> tr;
  detail::query_forward<double>(field, position, t, tr);
  QueryGradient g;
  detail::V3<double> d_mu = Vec3::Zero();
  detail::query_backward<double>(field, tr, d_out, field_grad.data(), d_mu, g.d_time);
  g.d_position = d_mu;
  return g;
}

namespace {

template <class Visit>
void for_each_neighbor_pair(const DeformationField& field, Visit&& visit) {
  const int nf = field.config().feature_dim;
  for (int p = 0; p < kPlaneCount; ++p) {
    const auto plane = static_cast<Plane>(p);
    const int rows = field.plane_rows(plane), cols = field.plane_cols(plane);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        for (int f = 0; f < nf; ++f) {
          const std::size_t i = field.plane_index(plane, r, c, f);
          if (r + 1 < rows) visit(i, field.plane_index(plane, r + 1, c, f));
          if (c + 1 < cols) visit(i, field.plane_index(plane, r, c + 1, f));
        }
      }
    }
  }
}

std::size_t neighbor_pair_count(const DeformationField& field) {
  std::size_t n = 0;
  const int nf = field.config().feature_dim;
  for (int p = 0; p < kPlaneCount; ++p) {
    const auto plane = static_cast<Plane>(p);
    const std::size_t rows = field.plane_rows(plane), cols = field.plane_cols(plane);
    n += ((rows - 1) * cols + rows * (cols - 1)) * nf;
  }
  return n;
}

}  // namespace

double grid_smoothness(const DeformationField& field) {
  const auto& prm = field.params;
  double sum = 0.0;
  for_each_neighbor_pair(field, [&](std::size_t a, std::size_t b) {
    const double d = prm[a] - prm[b];
    sum += d * d;
  });
  return sum / static_cast<double>(neighbor_pair_count(field));
}

void grid_smoothness_backward(const DeformationField& field, double scale,
                              std::span<double> field_grad) {
  if (field_grad.size() != field.param_count()) {
    throw ContractError("grid_smoothness_backward: gradient buffer size mismatch");
  }
  const auto& prm = field.params;
  const double k = 2.0 * scale / static_cast<double>(neighbor_pair_count(field));
  for_each_neighbor_pair(field, [&](std::size_t a, std::size_t b) {
    const double g = k * (prm[a] - prm[b]);
    field_grad[a] += g;
    field_grad[b] -= g;
  });
}

}  // namespace uags
