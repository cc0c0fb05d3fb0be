#include "hfshield/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hfshield {

DiffusionSchedule make_schedule(std::size_t T, double beta1, double betaT) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta1 <= betaT < 1");
  }
  DiffusionSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.posterior_var.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    s.beta[t] = beta1 + (betaT - beta1) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.posterior_var[t] = s.beta[t] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
  }
  return s;
}

Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T) {
    throw std::invalid_argument("forward_diffuse: t=" + std::to_string(t) + " outside 1.." +
                                std::to_string(sched.T));
  }
  if (eps.shape() != x0.shape()) throw std::invalid_argument("forward_diffuse: shape mismatch");
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

}  // namespace hfshield
