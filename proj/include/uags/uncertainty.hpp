#pragma once

#include "uags/rasterizer.hpp"

#include <span>

namespace uags {

// U = 1 - sigmoid(c1 * (C - c0)).
struct UncertaintyParams {
  double c0 = 0.25;
  double c1 = 1.0;

  // c0 = 0.25, c1 = 20 / L for L training images.
  static UncertaintyParams for_view_count(std::size_t views);
};

double contribution_to_uncertainty(double contribution, const UncertaintyParams& params);

// Sum of every primitive's blend weights over all pixels of all frames, each
// rendered at its own camera and timestamp.
std::vector<double> accumulate_contributions(const GaussianModel& model,
                                             const DeformationField* field,
                                             std::span<const Camera> frames,
                                             const RenderSettings& settings = {});

// Replaces the stored contributions and recomputes every uncertainty.
void refresh_uncertainty(GaussianModel& model, const DeformationField* field,
                         std::span<const Camera> frames, const UncertaintyParams& params,
                         const RenderSettings& settings = {});

}  // namespace uags
