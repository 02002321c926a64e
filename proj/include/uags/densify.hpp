#pragma once

#include "uags/dataio.hpp"
#include "uags/image.hpp"
#include "uags/scene_core.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace uags {

inline constexpr double kDynamicFlowThreshold = 1.0;  // pixels
inline constexpr double kDensifyInitialOpacity = 0.1;
inline constexpr double kSplitScaleFactor = 1.6;

// ||flow|| >= tau per pixel.
Mask dynamic_mask(const Image& flow, double tau = kDynamicFlowThreshold);

// Inverse of the pinhole projection at the given camera-space depth.
Vec3 backproject(const Vec2& pixel, double depth, const Camera& cam);

struct DensifyFrame {
  Camera cam;
  const Image* color = nullptr;  // H x W x 3
  const Image* depth = nullptr;  // H x W, camera z
  const Image* flow = nullptr;   // H x W x 2, used when no dynamic mask is given
  const Mask* dynamic = nullptr;
};

struct DensifyOptions {
  std::size_t budget = 10000;
  double flow_threshold = kDynamicFlowThreshold;
  std::uint64_t seed = 0;
  int sh_degree = 0;
};

struct DensifyResult {
  GaussianModel primitives{0};
  std::vector<int> source_frame;  // per new primitive
  std::vector<Vec2> source_pixel;
  std::string warning;  // non-empty when no dynamic pixel was found
};

// Samples up to `budget` dynamic pixels (stratified over all frames) and
// lifts each to a primitive: position from depth, band-0 color from the
// pixel, opacity 0.1, isotropic scale from the 3 nearest sampled neighbors.
DensifyResult densify_dynamic(std::span<const DensifyFrame> frames, const DensifyOptions& options);

// Mean distance from each point to its k nearest others (brute force).
std::vector<double> nearest_neighbor_distance(std::span<const Vec3> points, int k = 3);

// Initial primitives from a colored point cloud: band-0 color, opacity 0.1,
// isotropic scale from the 3 nearest neighbors.
GaussianModel model_from_points(const PointCloud& cloud, int sh_degree);

// Running per-primitive screen-space gradient statistics.
struct DensityStats {
  std::vector<double> grad_sum;
  std::vector<int> count;

  void reset(std::size_t n);
  // screen_grad[k] is only counted for primitives visible in that view.
  void add(std::span<const double> screen_grad, std::span<const double> contributions);
  double mean(std::size_t k) const { return count[k] ? grad_sum[k] / count[k] : 0.0; }
};

struct DensityOptions {
  double grad_threshold = 2e-4;
  double percent_dense = 0.01;
  double scene_extent = 1.0;
  double min_opacity = 0.005;
  std::size_t max_primitives = 500000;
  std::uint64_t seed = 0;
};

struct DensityResult {
  GaussianModel model{0};
  std::vector<int> source;  // source[i] = index of the old primitive new primitive i came from
  std::vector<unsigned char> original;  // 1 where primitive i is its unchanged source
  std::size_t cloned = 0, split = 0, pruned = 0;
  bool capped = false;  // growth skipped because it would exceed max_primitives
};

// Clone small high-gradient primitives, split large ones into two children
// with scale / 1.6, then prune opacity < min_opacity.
DensityResult adaptive_density_control(const GaussianModel& model, const DensityStats& stats,
                                       const DensityOptions& options);

}  // namespace uags
