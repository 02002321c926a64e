#pragma once

#include "uags/deformation.hpp"
#include "uags/image.hpp"
#include "uags/scene_core.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace uags {

enum class Precision { Float32, Float64 };

struct ChannelSet {
  bool color = true;
  bool depth = false;
  bool uncertainty = false;
  bool flow = false;

  static ChannelSet all() { return {true, true, true, true}; }
};

struct RenderSettings {
  Vec3 background = Vec3::Zero();
  // Early termination (transmittance < min_transmittance) and skipping of
  // alpha * G < min_alpha. Disabled for oracle comparisons and gradient checks.
  bool thresholds = true;
  double min_alpha = 1.0 / 255.0;
  double min_transmittance = 1e-4;
  Precision precision = Precision::Float32;
  int tile_size = 16;
};

struct RenderRequest {
  ChannelSet channels;
  // Second frame for the flow channel: its camera and camera.timestamp.
  std::optional<Camera> flow_target;
};

// One visible primitive after deformation, projection and payload decoding.
struct ProjectedSplat {
  int index = 0;
  Vec2 mean = Vec2::Zero();
  double conic_a = 0, conic_b = 0, conic_c = 0;  // inverse 2D covariance
  double depth = 0;
  double opacity = 0;
  Vec3 color = Vec3::Zero();
  Vec2 flow = Vec2::Zero();
  double uncertainty = 0;
  int x_min = 0, x_max = -1, y_min = 0, y_max = -1;  // inclusive pixel bounds
};

// Ascending depth, ties broken by primitive index.
using SortedSplatList = std::vector<ProjectedSplat>;

struct BlendOptions {
  bool thresholds = true;
  double min_alpha = 1.0 / 255.0;
  double min_transmittance = 1e-4;
};

struct BlendWeight {
  int index = 0;  // position in the sorted list
  double weight = 0;
};

// Kernel value of a splat at pixel (x, y); 0 outside the 3-sigma ellipse.
double splat_kernel(const ProjectedSplat& s, double x, double y);

// Per-pixel blending weights of a sorted splat list.
std::vector<BlendWeight> blend_weights(const SortedSplatList& splats, const Vec2& pixel,
                                       const BlendOptions& options = {});

// Deform, project, cull and sort every primitive for one view.
SortedSplatList build_splat_list(const GaussianModel& model, const DeformationField* field,
                                 const Camera& cam, const RenderRequest& request,
                                 Precision precision = Precision::Float64);

namespace detail {
struct RenderState;
}

struct RenderOutput {
  int width = 0;
  int height = 0;
  Image color;        // H x W x 3, composited over the background
  Image depth;        // H x W, raw weighted sum
  Image uncertainty;  // H x W, raw weighted sum
  Image flow;         // H x W x 2, raw weighted sum
  Image alpha;        // H x W, accumulated opacity
  Image transmittance;  // H x W, final transmittance
  std::vector<double> contributions;  // per primitive, summed over pixels
  std::shared_ptr<const detail::RenderState> state;
};

// Upstream per-pixel gradients. Empty images count as zero.
struct RenderGradients {
  Image color, depth, uncertainty, flow, alpha;
};

struct ModelGradients {
  ModelGradients() = default;
  ModelGradients(const GaussianModel& model, const DeformationField* field);

  void zero();
  void add(const ModelGradients& other);

  std::vector<double> positions;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  std::vector<double> opacity_logits;
  std::vector<double> features;
  std::vector<double> field;
};

// Tiled front-to-back rasterization of the requested channels.
RenderOutput render(const GaussianModel& model, const DeformationField* field,
                    const Camera& cam, const RenderRequest& request,
                    const RenderSettings& settings = {});

// Flow map from frame a to frame b (both carry their own timestamps),
// blended with frame-a weights.
RenderOutput render_flow_pair(const GaussianModel& model, const DeformationField* field,
                              const Camera& frame_a, const Camera& frame_b,
                              const RenderSettings& settings = {});

// Analytic gradients of <upstream, output> accumulated into `grads`. When
// `screen_grad` is given it receives |d loss / d mean2d| in normalized device
// units per primitive (the densification statistic).
void render_backward(const GaussianModel& model, const DeformationField* field,
                     const RenderOutput& forward, const RenderGradients& upstream,
                     ModelGradients& grads, std::vector<double>* screen_grad = nullptr);

// Unoptimized float64 per-pixel loop over every primitive: no tiling, no
// early termination, no contribution skipping.
RenderOutput render_oracle(const GaussianModel& model, const DeformationField* field,
                           const Camera& cam, const RenderRequest& request,
                           const Vec3& background = Vec3::Zero());

}  // namespace uags
