#pragma once

#include <cstddef>
#include <vector>

#include "hfshield/tensor.hpp"

namespace hfshield {

// Variance schedule for the denoising model. Arrays are 1-based (index 0 is
// the t=0 boundary: alpha_bar[0] = 1, used by the posterior at t=1).
struct DiffusionSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;  // beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
};

// linear beta from beta1 at t=1 to betaT at t=T
DiffusionSchedule make_schedule(std::size_t T, double beta1, double betaT);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const DiffusionSchedule& sched);

}  // namespace hfshield
