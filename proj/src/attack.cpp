#include "hfshield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hfshield {

void validate(const AttackConfig& cfg) {
  std::string errs;
  if (!(cfg.eta >= 0.0 && cfg.eta <= cfg.eta_mask && cfg.eta_mask <= 1.0)) {
    errs += "  budgets must satisfy 0 <= eta <= eta_mask <= 1\n";
  }
  if (!(cfg.eta_unit > 0.0)) errs += "  eta_unit must be > 0\n";
  // eta == 0 is the explicit null attack; the clamp zeroes every step then
  if (cfg.eta > 0.0 && cfg.eta_unit > cfg.eta) errs += "  eta_unit must be <= eta\n";
  if (!(cfg.rho > 0.0 && cfg.rho <= 1.0)) errs += "  rho must be in (0,1]\n";
  if (cfg.iters < 1) errs += "  iters must be >= 1\n";
  if (!errs.empty()) throw std::invalid_argument("invalid attack config:\n" + errs);
  validate(cfg.surrogate);
}

Tensor input_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x_adv,
                  std::size_t token, Rng& rng) {
  return loss_cond_grad(m, sched, x_adv, token, rng).input_grad;
}

Tensor pgd_step(const Tensor& delta, const Tensor& grad, double eta_unit) {
  if (grad.shape() != delta.shape()) throw std::invalid_argument("pgd_step: shape mismatch");
  Tensor out = delta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = grad[i];
    out[i] += g > 0.0 ? eta_unit : (g < 0.0 ? -eta_unit : 0.0);
  }
  return out;
}

Tensor clamp_masked(const Tensor& delta, const BinaryMask& mask, double eta, double eta_mask,
                    const Tensor& x, bool nonneg) {
  if (delta.rank() != 3 || x.shape() != delta.shape()) {
    throw std::invalid_argument("clamp_masked: delta and x must be matching [C,H,W]");
  }
  const std::size_t c = delta.shape()[0], h = delta.shape()[1], w = delta.shape()[2];
  if (mask.m.shape()[0] != h || mask.m.shape()[1] != w) {
    throw std::invalid_argument("clamp_masked: mask size mismatch");
  }
  Tensor out = delta;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double cap = mask.on(y, xx) ? eta_mask : eta;
        const double lo = nonneg ? 0.0 : -cap;
        double d = std::min(cap, std::max(lo, out.at(ch, y, xx)));
        // keep the perturbed image a valid image
        const double v = x.at(ch, y, xx);
        d = std::min(1.0 - v, std::max(-v, d));
        out.at(ch, y, xx) = d;
      }
    }
  }
  return out;
}

double uniform_budget_equivalent(double eta, double eta_mask, double rho) {
  return (1.0 - rho) * eta + rho * eta_mask;
}

ProtectedSet aspl(const std::vector<Image>& originals, const std::vector<Image>& refs,
                  const AttackConfig& cfg, const SurrogateModel& theta_pre,
                  const DiffusionSchedule& sched, const std::vector<Tensor>& priors,
                  const IterObserver& observer) {
  validate(cfg);
  if (originals.empty() || refs.empty()) {
    throw std::invalid_argument("aspl: originals and refs must be nonempty");
  }

  ProtectedSet set;
  const std::size_t n = originals.size();
  set.originals.reserve(n);
  set.perturbations.reserve(n);
  for (const auto& img : originals) {
    set.originals.push_back(img.tensor());
    Perturbation p;
    p.delta = Tensor(img.tensor().shape());
    p.mask = cfg.rho >= 1.0 ? BinaryMask::full(img.height(), img.width())
                            : build_mask(img, cfg.rho, cfg.laplacian);
    p.eta = cfg.eta;
    p.eta_mask = cfg.eta_mask;
    set.perturbations.push_back(std::move(p));
  }

  std::vector<const Tensor*> ref_batch;
  for (const auto& r : refs) ref_batch.push_back(&r.tensor());

  TrainConfig sur_cfg = cfg.surrogate;
  sur_cfg.seed = mix64(cfg.seed, 0x50b);
  Trainer surrogate(theta_pre, sched, sur_cfg);

  std::vector<Tensor> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = set.originals[i];

  set.trace.reserve(cfg.iters);
  for (std::size_t it = 1; it <= cfg.iters; ++it) {
    Trainer ahead = surrogate;  // one-step-ahead copy; surrogate itself is untouched
    ahead.finetune_step(ref_batch, kTokenInstance, priors);
    const SurrogateModel& theta_tmp = ahead.model();

    double iter_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // fresh per-(iteration, image) stream: draws do not depend on budgets
      Rng rng(mix64(cfg.seed, 0xa77ac, it, i));
      auto ev = loss_cond_grad(theta_tmp, sched, adv[i], kTokenInstance, rng);
      iter_loss += ev.value;
      auto& p = set.perturbations[i];
      p.delta = clamp_masked(pgd_step(p.delta, ev.input_grad, cfg.eta_unit), p.mask, cfg.eta,
                             cfg.eta_mask, set.originals[i], cfg.nonneg);
      adv[i] = add(set.originals[i], p.delta);
    }
    set.trace.push_back(iter_loss / static_cast<double>(n));

    std::vector<const Tensor*> adv_batch;
    for (const auto& a : adv) adv_batch.push_back(&a);
    surrogate.finetune_step(adv_batch, kTokenInstance, priors);

    if (observer) observer(it, set.perturbations);
  }

  // paired final losses under a one-step-ahead model, identical draws per pair
  Trainer final_ahead = surrogate;
  final_ahead.finetune_step(ref_batch, kTokenInstance, priors);
  for (std::size_t i = 0; i < n; ++i) {
    Rng ra(mix64(cfg.seed, 0xe7a1, i));
    Rng rc(mix64(cfg.seed, 0xe7a1, i));
    set.loss_adv.push_back(loss_cond(final_ahead.model(), sched, adv[i], kTokenInstance, ra));
    set.loss_clean.push_back(
        loss_cond(final_ahead.model(), sched, set.originals[i], kTokenInstance, rc));
  }

  set.adversarial = std::move(adv);
  set.surrogate = std::move(surrogate.model());
  return set;
}

}  // namespace hfshield
