#include "uags/optim.hpp"

#include "uags/common.hpp"

namespace uags {

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamParams& hp) {
  if (grads.size() != params.size() || moments.m.size() != params.size() ||
      moments.v.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (step == 0) throw ContractError("adam_step: step counts from 1");
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.m[i] = hp.beta1 * moments.m[i] + (1.0 - hp.beta1) * g;
    moments.v[i] = hp.beta2 * moments.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

}  // namespace uags
