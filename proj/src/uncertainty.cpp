#include "uags/uncertainty.hpp"

namespace uags {

UncertaintyParams UncertaintyParams::for_view_count(std::size_t views) {
  if (views == 0) throw InvalidParameter("uncertainty slope needs at least one view");
  return {0.25, 20.0 / static_cast<double>(views)};
}

double contribution_to_uncertainty(double contribution, const UncertaintyParams& params) {
  if (!(params.c1 > 0)) throw InvalidParameter("uncertainty slope c1 must be positive");
  return 1.0 - sigmoid(params.c1 * (contribution - params.c0));
}

std::vector<double> accumulate_contributions(const GaussianModel& model,
                                             const DeformationField* field,
                                             std::span<const Camera> frames,
                                             const RenderSettings& settings) {
  if (frames.empty()) throw InvalidParameter("accumulate_contributions needs a training frame");
  std::vector<double> total(model.size(), 0.0);
  RenderRequest request;
  request.channels = {false, false, false, false};
  for (const Camera& cam : frames) {
    const RenderOutput out = render(model, field, cam, request, settings);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += out.contributions[k];
  }
  return total;
}

void refresh_uncertainty(GaussianModel& model, const DeformationField* field,
                         std::span<const Camera> frames, const UncertaintyParams& params,
                         const RenderSettings& settings) {
  model.contributions = accumulate_contributions(model, field, frames, settings);
  for (std::size_t k = 0; k < model.size(); ++k) {
    model.uncertainties[k] = contribution_to_uncertainty(model.contributions[k], params);
  }
}

}  // namespace uags
