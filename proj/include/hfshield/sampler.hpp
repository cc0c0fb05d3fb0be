#pragma once

#include <cstdint>
#include <vector>

#include "hfshield/model.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/schedule.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

// Ancestral denoising from x_{t_start} down to x_0. Posterior noise is drawn
// from rng for t > 1 only; the result is NOT clipped (callers clip).
Tensor reverse_diffuse(const SurrogateModel& m, const DiffusionSchedule& sched, Tensor x_t,
                       std::size_t t_start, std::size_t token, Rng& rng);

// Full generation from pure noise, clipped to [0,1]; pure function of seed.
Tensor sample(const SurrogateModel& m, const DiffusionSchedule& sched, std::size_t token,
              std::uint64_t seed, std::size_t h, std::size_t w);

// n samples with per-index child seeds, e.g. the cached class-prior set.
std::vector<Tensor> sample_set(const SurrogateModel& m, const DiffusionSchedule& sched,
                               std::size_t token, std::uint64_t seed, std::size_t n,
                               std::size_t h, std::size_t w);

}  // namespace hfshield
