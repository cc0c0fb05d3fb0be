#include "hfshield/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace hfshield {

Tensor reverse_diffuse(const SurrogateModel& m, const DiffusionSchedule& sched, Tensor x_t,
                       std::size_t t_start, std::size_t token, Rng& rng) {
  if (t_start < 1 || t_start > sched.T) {
    throw std::invalid_argument("reverse_diffuse: t_start outside 1..T");
  }
  for (std::size_t t = t_start; t >= 1; --t) {
    const Tensor eps_hat = m.predict(x_t, t, token);
    const double coef = sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]);
    const double inv_sqrt_a = 1.0 / std::sqrt(sched.alpha[t]);
    if (t > 1) {
      const double sig = std::sqrt(sched.posterior_var[t]);
      for (std::size_t i = 0; i < x_t.size(); ++i) {
        x_t[i] = inv_sqrt_a * (x_t[i] - coef * eps_hat[i]) + sig * rng.normal();
      }
    } else {
      for (std::size_t i = 0; i < x_t.size(); ++i) {
        x_t[i] = inv_sqrt_a * (x_t[i] - coef * eps_hat[i]);
      }
    }
  }
  return x_t;
}

Tensor sample(const SurrogateModel& m, const DiffusionSchedule& sched, std::size_t token,
              std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(mix64(seed, 0x5a3d1e));
  Tensor x = Tensor::randn({m.config().in_channels, h, w}, rng);
  x = reverse_diffuse(m, sched, std::move(x), sched.T, token, rng);
  return clip(x, 0.0, 1.0);
}

std::vector<Tensor> sample_set(const SurrogateModel& m, const DiffusionSchedule& sched,
                               std::size_t token, std::uint64_t seed, std::size_t n,
                               std::size_t h, std::size_t w) {
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(m, sched, token, mix64(seed, i), h, w));
  return out;
}

}  // namespace hfshield
