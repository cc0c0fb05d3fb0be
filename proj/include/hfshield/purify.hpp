#pragma once

#include <cstdint>
#include <string>

#include "hfshield/image.hpp"
#include "hfshield/model.hpp"
#include "hfshield/schedule.hpp"

namespace hfshield {

enum class PurifierKind { identity, gaussian, bilateral, diffpure };

const char* purifier_name(PurifierKind k);
PurifierKind purifier_from_name(const std::string& name);

struct PurifierSpec {
  PurifierKind kind = PurifierKind::identity;
  double gaussian_sigma = 1.0;
  int gaussian_radius = 2;
  double bilateral_sigma_s = 2.0;
  double bilateral_sigma_r = 0.1;
  int bilateral_radius = 3;
  std::size_t diffpure_t = 10;  // forward-diffusion depth, 1..T
  std::uint64_t seed = 0;       // diffpure noise seed
};
void validate(const PurifierSpec& spec, std::size_t T_diff);

// Applies the purifier; output clipped to [0,1]. model/sched are required for
// the diffpure kind only (noise to t*, then denoise back with the class
// token).
Image purify(const Image& img, const PurifierSpec& spec, const SurrogateModel* model = nullptr,
             const DiffusionSchedule* sched = nullptr);

}  // namespace hfshield
