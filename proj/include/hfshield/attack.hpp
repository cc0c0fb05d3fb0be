#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hfshield/freq_mask.hpp"
#include "hfshield/image.hpp"
#include "hfshield/model.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/schedule.hpp"
#include "hfshield/train.hpp"

namespace hfshield {

// Budgets are fractions of the [0,1] dynamic range. eta caps unmasked pixels,
// eta_mask caps masked (edge) pixels, eta_unit is the per-iteration step.
// rho >= 1 selects the full-frame mask (the uniform-budget baseline).
struct AttackConfig {
  double eta = 0.01;
  double eta_mask = 0.5;
  double eta_unit = 0.002;
  double rho = 0.03;
  std::size_t iters = 50;
  bool nonneg = false;  // restrict delta to [0, budget] instead of [-budget, budget]
  LaplacianKind laplacian = LaplacianKind::four_neighbor;
  TrainConfig surrogate;
  std::uint64_t seed = 0;
};
void validate(const AttackConfig& cfg);

struct Perturbation {
  Tensor delta;  // [C,H,W], signed
  BinaryMask mask;
  double eta = 0.0;
  double eta_mask = 0.0;
};

struct ProtectedSet {
  std::vector<Tensor> originals;
  std::vector<Perturbation> perturbations;
  std::vector<Tensor> adversarial;            // originals + delta
  SurrogateModel surrogate;                   // final surrogate state
  std::vector<double> loss_adv, loss_clean;   // paired, one step ahead of the final surrogate
  std::vector<double> trace;                  // mean adversarial loss per iteration
};

// d loss_cond / d x_adv under the given model; draws (t, eps) from rng
Tensor input_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x_adv,
                  std::size_t token, Rng& rng);

// delta + eta_unit * sign(g), no clamping
Tensor pgd_step(const Tensor& delta, const Tensor& grad, double eta_unit);

// budget clip (eta off-mask, eta_mask on-mask, mask broadcast over channels),
// then range clip so x + delta stays in [0,1]
Tensor clamp_masked(const Tensor& delta, const BinaryMask& mask, double eta, double eta_mask,
                    const Tensor& x, bool nonneg = false);

// called after each iteration's clamp with the iteration index (1-based)
using IterObserver = std::function<void(std::size_t, const std::vector<Perturbation>&)>;

// Alternating loop: each iteration fine-tunes a one-step-ahead copy of the
// surrogate on the reference images, ascends every image's perturbation
// against that copy, clamps, then fine-tunes the surrogate itself on the
// adversarial images. Masks come from the clean originals and stay frozen.
ProtectedSet aspl(const std::vector<Image>& originals, const std::vector<Image>& refs,
                  const AttackConfig& cfg, const SurrogateModel& theta_pre,
                  const DiffusionSchedule& sched, const std::vector<Tensor>& priors,
                  const IterObserver& observer = {});

// largest mean |delta| a saturated masked attack can reach; used to budget-
// match the uniform baseline
double uniform_budget_equivalent(double eta, double eta_mask, double rho);

}  // namespace hfshield
