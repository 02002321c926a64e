#include "uags/scene_core.hpp"

#include "uags/detail/splat_math.hpp"

#include <string>

namespace uags {

namespace {

int g_threads = [] {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}();

bool all_finite(const auto& v) { return v.allFinite(); }

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

GaussianModel::GaussianModel(int degree) : degree_(degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidParameter("unsupported SH degree " + std::to_string(degree) +
                           " (supported: 0, 1)");
  }
}

GaussianPrimitive GaussianModel::primitive(std::size_t k) const {
  GaussianPrimitive p;
  for (int i = 0; i < 3; ++i) {
    p.position[i] = positions[3 * k + i];
    p.log_scale[i] = log_scales[3 * k + i];
  }
  for (int i = 0; i < 4; ++i) p.rotation[i] = rotations[4 * k + i];
  p.opacity_logit = opacity_logits[k];
  const int stride = feature_stride();
  for (int i = 0; i < stride; ++i) p.sh[i] = features[stride * k + i];
  p.contribution = contributions[k];
  p.uncertainty = uncertainties[k];
  return p;
}

void GaussianModel::set_primitive(std::size_t k, const GaussianPrimitive& p) {
  for (int i = 0; i < 3; ++i) {
    positions[3 * k + i] = p.position[i];
    log_scales[3 * k + i] = p.log_scale[i];
  }
  for (int i = 0; i < 4; ++i) rotations[4 * k + i] = p.rotation[i];
  opacity_logits[k] = p.opacity_logit;
  const int stride = feature_stride();
  for (int i = 0; i < stride; ++i) features[stride * k + i] = p.sh[i];
  contributions[k] = p.contribution;
  uncertainties[k] = p.uncertainty;
}

void GaussianModel::push_back(const GaussianPrimitive& p) {
  const std::size_t k = size();
  positions.resize(3 * (k + 1));
  log_scales.resize(3 * (k + 1));
  rotations.resize(4 * (k + 1));
  opacity_logits.resize(k + 1);
  features.resize(static_cast<std::size_t>(feature_stride()) * (k + 1));
  contributions.resize(k + 1);
  uncertainties.resize(k + 1);
  set_primitive(k, p);
}

void GaussianModel::append(const GaussianModel& other) {
  if (other.sh_degree() != degree_) {
    throw ContractError("cannot append models with different SH degrees");
  }
  auto cat = [](std::vector<double>& a, const std::vector<double>& b) {
    a.insert(a.end(), b.begin(), b.end());
  };
  cat(positions, other.positions);
  cat(rotations, other.rotations);
  cat(log_scales, other.log_scales);
  cat(opacity_logits, other.opacity_logits);
  cat(features, other.features);
  cat(contributions, other.contributions);
  cat(uncertainties, other.uncertainties);
}

GaussianModel GaussianModel::gather(std::span<const int> source) const {
  GaussianModel out(degree_);
  for (int k : source) out.push_back(primitive(static_cast<std::size_t>(k)));
  return out;
}

void GaussianModel::normalize_rotations() {
  for (std::size_t k = 0; k < size(); ++k) {
    double n2 = 0;
    for (int i = 0; i < 4; ++i) n2 += rotations[4 * k + i] * rotations[4 * k + i];
    const double n = std::sqrt(n2);
    if (n < 1e-12) {
      rotations[4 * k] = 1;
      rotations[4 * k + 1] = rotations[4 * k + 2] = rotations[4 * k + 3] = 0;
      continue;
    }
    for (int i = 0; i < 4; ++i) rotations[4 * k + i] /= n;
  }
}

void GaussianModel::validate() const {
  const std::size_t n = size();
  if (positions.size() != 3 * n || rotations.size() != 4 * n || log_scales.size() != 3 * n ||
      features.size() != static_cast<std::size_t>(feature_stride()) * n ||
      contributions.size() != n || uncertainties.size() != n) {
    throw ContractError("inconsistent GaussianModel array sizes");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(positions) || !finite(rotations) || !finite(log_scales) ||
      !finite(opacity_logits) || !finite(features)) {
    throw InvalidParameter("GaussianModel contains non-finite parameters");
  }
}

void Camera::validate() const {
  const auto& k = intrinsics;
  if (!(k.fx > 0) || !(k.fy > 0) || !std::isfinite(k.cx) || !std::isfinite(k.cy)) {
    throw InvalidParameter("camera focal lengths must be positive and finite");
  }
  if (!world_to_camera.allFinite()) throw InvalidParameter("camera pose is not finite");
  const Mat3 r = rotation();
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(r.determinant() - 1.0) > 1e-6) {
    throw InvalidParameter("camera pose rotation block is not a proper rotation");
  }
  const Eigen::RowVector4d last = world_to_camera.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw InvalidParameter("camera pose is not a rigid homogeneous transform");
  }
  if (width <= 0 || height <= 0) throw InvalidParameter("camera image size must be positive");
}

Mat3 quaternion_to_rotation(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 0) || !std::isfinite(n)) throw InvalidParameter("quaternion must be finite and nonzero");
  return detail::rotation_from_unit_quaternion<double>(q / n);
}

Mat3 build_covariance(const Vec4& q, const Vec3& log_scale) {
  if (!all_finite(q) || !all_finite(log_scale)) {
    throw InvalidParameter("build_covariance: non-finite input");
  }
  const Mat3 r = quaternion_to_rotation(q);
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  return 0.5 * (cov + cov.transpose());
}

std::optional<Projection> project_gaussian(const Vec3& mean, const Mat3& cov,
                                           const Camera& cam) {
  const Vec3 p = cam.to_camera(mean);
  if (!(p.z() > kNearPlane)) return std::nullopt;
  const auto& k = cam.intrinsics;
  const auto j = detail::projection_jacobian<double>(p, k.fx, k.fy);
  const Mat3 wr = cam.rotation();
  Projection out;
  out.footprint.mean = detail::perspective<double>(p, k.fx, k.fy, k.cx, k.cy);
  out.footprint.cov = j * wr * cov * wr.transpose() * j.transpose();
  out.footprint.cov(0, 0) += kCovarianceDilation;
  out.footprint.cov(1, 1) += kCovarianceDilation;
  out.depth = p.z();
  return out;
}

Vec3 eval_sh(std::span<const double> features, int degree, const Vec3& view_dir) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidParameter("unsupported SH degree " + std::to_string(degree));
  }
  if (features.size() < static_cast<std::size_t>(3 * sh_coeff_count(degree))) {
    throw ContractError("eval_sh: feature span too short for degree");
  }
  Vec3 rgb;
  for (int c = 0; c < 3; ++c) {
    rgb[c] = std::max(0.0, detail::sh_channel<double>(features, degree, c, view_dir) + 0.5);
  }
  return rgb;
}

}  // namespace uags
