#pragma once

#include "uags/scene_core.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace uags {

// Six factored feature planes: three space-space, three space-time.
enum class Plane : int { XY = 0, XZ, YZ, XT, YT, ZT };
inline constexpr int kPlaneCount = 6;
inline constexpr int kDeformationOutputs = 10;  // dmu(3), drot(4), dlog_scale(3)

struct DeformationConfig {
  int feature_dim = 8;
  int spatial_res = 16;
  int temporal_res = 16;
  int hidden_dim = 32;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

// Hexplane-style deformation: each plane is bilinearly sampled, the six
// samples are fused by elementwise product, and a ReLU MLP decodes the fused
// feature into (dmu, drot, dlog_scale). All learnable values live in one flat
// `params` vector so optimizer and checkpoint code can treat it uniformly.
class DeformationField {
 public:
  DeformationField() = default;
  // Space planes ~ U(0.5, 1), time planes = 1, first decoder layer random,
  // final layer zero: the initial deformation is identically zero.
  DeformationField(const DeformationConfig& config, const Aabb& box, std::uint64_t seed);

  const DeformationConfig& config() const { return config_; }
  const Aabb& box() const { return box_; }
  void set_box(const Aabb& box) { box_ = box; }

  // Grid extents of a plane: (rows along first axis, cols along second axis).
  int plane_rows(Plane p) const;
  int plane_cols(Plane p) const;
  std::size_t plane_offset(Plane p) const { return plane_offsets_[static_cast<int>(p)]; }
  std::size_t plane_size(Plane p) const;
  std::size_t plane_index(Plane p, int row, int col, int f) const {
    return plane_offset(p) +
           (static_cast<std::size_t>(row) * plane_cols(p) + col) * config_.feature_dim + f;
  }

  std::size_t w1_offset() const { return w1_; }  // hidden x feature, row-major
  std::size_t b1_offset() const { return b1_; }
  std::size_t w2_offset() const { return w2_; }  // outputs x hidden, row-major
  std::size_t b2_offset() const { return b2_; }
  std::size_t grid_param_count() const { return w1_; }
  std::size_t param_count() const { return params.size(); }

  void fill_plane(Plane p, double value);

  std::vector<double> params;

 private:
  void layout();

  DeformationConfig config_;
  Aabb box_;
  std::array<std::size_t, kPlaneCount> plane_offsets_{};
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

struct DeformationOutput {
  Vec3 d_position = Vec3::Zero();
  Vec4 d_rotation = Vec4::Zero();
  Vec3 d_log_scale = Vec3::Zero();
};

struct DeformedState {
  Vec3 position;
  Vec4 rotation;
  Vec3 log_scale;
};

// Positions outside the normalization box are clamped to it.
DeformationOutput query_deformation(const DeformationField& field, const Vec3& position,
                                    double t);

// mu + dmu, normalize(q + dq), s + ds. Throws InvalidParameter when q + dq
// collapses (norm < 1e-8).
DeformedState deform_primitive(const GaussianPrimitive& prim, const DeformationField& field,
                               double t);

struct QueryGradient {
  Vec3 d_position = Vec3::Zero();
  double d_time = 0.0;
};

// Backward of query_deformation for an upstream gradient on its 10 outputs.
// Parameter gradients are accumulated into `field_grad` (size param_count()).
QueryGradient query_deformation_backward(const DeformationField& field, const Vec3& position,
                                         double t,
                                         const std::array<double, kDeformationOutputs>& d_out,
                                         std::span<double> field_grad);

// Mean squared difference of adjacent grid features over every plane, both
// axes and all feature channels.
double grid_smoothness(const DeformationField& field);

// Adds scale * d(grid_smoothness)/d(params) into `field_grad`.
void grid_smoothness_backward(const DeformationField& field, double scale,
                              std::span<double> field_grad);

}  // namespace uags
