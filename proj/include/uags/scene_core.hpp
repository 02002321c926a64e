#pragma once

#include "uags/common.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace uags {

inline constexpr double kNearPlane = 0.01;
// Added to the projected covariance diagonal (pixels^2).
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr int kMaxShDegree = 1;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// One learnable primitive. Rotation is a (w, x, y, z) quaternion; features are
// stored coefficient-major: sh[3 * i + channel].
struct GaussianPrimitive {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::array<double, 3 * kMaxShCoeffs> sh{};
  double contribution = 0.0;
  double uncertainty = 1.0;

  double opacity() const { return sigmoid(opacity_logit); }
};

// Structure-of-arrays container for the canonical scene. Parameter groups are
// contiguous so the optimizer and checkpoint code work on flat spans.
struct GaussianModel {
  explicit GaussianModel(int degree = 0);

  int sh_degree() const { return degree_; }
  int coeffs() const { return sh_coeff_count(degree_); }
  int feature_stride() const { return 3 * coeffs(); }
  std::size_t size() const { return opacity_logits.size(); }
  bool empty() const { return size() == 0; }

  GaussianPrimitive primitive(std::size_t k) const;
  void set_primitive(std::size_t k, const GaussianPrimitive& p);
  void push_back(const GaussianPrimitive& p);
  void append(const GaussianModel& other);

  // Rebuilds the model from `source` indices into the current arrays.
  GaussianModel gather(std::span<const int> source) const;

  void normalize_rotations();
  void validate() const;

  std::vector<double> positions;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  std::vector<double> opacity_logits;
  std::vector<double> features;
  std::vector<double> contributions;
  std::vector<double> uncertainties;

 private:
  int degree_;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct Camera {
  Intrinsics intrinsics;
  Mat4 world_to_camera = Mat4::Identity();
  int width = 0;
  int height = 0;
  double timestamp = 0.0;

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  Vec3 center() const { return -rotation().transpose() * translation(); }
  Vec3 to_camera(const Vec3& p) const { return rotation() * p + translation(); }

  // Throws InvalidParameter on non-rigid pose or non-positive focal lengths.
  void validate() const;
};

struct Covariance2D {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
};

struct Projection {
  Covariance2D footprint;
  double depth = 0.0;
};

Mat3 quaternion_to_rotation(const Vec4& q);

// R S S^T R^T with R = rotation(q), S = diag(exp(log_scale)).
Mat3 build_covariance(const Vec4& q, const Vec3& log_scale);

// Empty when the mean sits in front of the near plane.
std::optional<Projection> project_gaussian(const Vec3& mean, const Mat3& cov,
                                           const Camera& cam);

Vec3 eval_sh(std::span<const double> features, int degree, const Vec3& view_dir);

}  // namespace uags
