#include "hfshield/train.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "hfshield/autograd.hpp"

namespace hfshield {

namespace {

// builds the graph for one conditional loss term and returns (loss var, x0
// leaf, param leaves); draw order from rng: t, then eps
struct CondGraph {
  Var loss;
  Var x0;
  std::vector<Var> params;
  double value;
};

CondGraph record_cond_loss(Tape& tape, const SurrogateModel& m, const DiffusionSchedule& sched,
                           const Tensor& x0, std::size_t token, Rng& rng, std::size_t t_max) {
  const std::size_t cap = (t_max == 0 || t_max > sched.T) ? sched.T : t_max;
  const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform_int(cap));
  Tensor eps = Tensor::randn(x0.shape(), rng);

  CondGraph g;
  g.x0 = tape.leaf(x0);
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  Tensor eps_scaled = eps;
  for (std::size_t i = 0; i < eps_scaled.size(); ++i) eps_scaled[i] *= b;
  auto x_t = tape.add(tape.scale(g.x0, a), tape.leaf(eps_scaled));

  auto pred = m.forward(tape, x_t, t, token, &g.params);
  auto diff = tape.sub(tape.leaf(eps), pred);
  g.loss = tape.mean(tape.mul(diff, diff));
  g.value = tape.value(g.loss)[0];
  return g;
}

void warn_empty_priors_once() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) {
    std::cerr << "warning: prior-preservation weight > 0 but the prior set is empty; "
                 "skipping the prior term\n";
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  std::string errs;
  if (cfg.lr < 0.0) errs += "  lr must be >= 0\n";
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0)) errs += "  adam_beta1 must be in [0,1)\n";
  if (!(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) errs += "  adam_beta2 must be in [0,1)\n";
  if (!(cfg.adam_eps > 0.0)) errs += "  adam_eps must be > 0\n";
  if (cfg.batch_size < 1) errs += "  batch_size must be >= 1\n";
  if (cfg.lambda_prior < 0.0) errs += "  lambda_prior must be >= 0\n";
  if (!errs.empty()) throw std::invalid_argument("invalid train config:\n" + errs);
}

double loss_cond(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x0,
                 std::size_t token, Rng& rng, std::size_t t_max) {
  Tape tape;
  return record_cond_loss(tape, m, sched, x0, token, rng, t_max).value;
}

LossEval loss_cond_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x0,
                        std::size_t token, Rng& rng, std::size_t t_max) {
  Tape tape;
  auto g = record_cond_loss(tape, m, sched, x0, token, rng, t_max);
  tape.backward(g.loss);
  LossEval out;
  out.value = g.value;
  out.input_grad = tape.grad(g.x0);
  out.param_grads.reserve(g.params.size());
  for (auto pv : g.params) out.param_grads.push_back(tape.grad(pv));
  return out;
}

double loss_db(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x,
               std::size_t token, const std::vector<Tensor>& priors, double lambda, Rng& rng,
               std::size_t t_max) {
  double v = loss_cond(m, sched, x, token, rng, t_max);
  if (lambda > 0.0) {
    if (priors.empty()) {
      warn_empty_priors_once();
      return v;
    }
    const auto& prior = priors[rng.uniform_int(priors.size())];
    v += lambda * loss_cond(m, sched, prior, kTokenClass, rng, t_max);
  }
  return v;
}

LossEval loss_db_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x,
                      std::size_t token, const std::vector<Tensor>& priors, double lambda,
                      Rng& rng, std::size_t t_max) {
  Tape tape;
  auto inst = record_cond_loss(tape, m, sched, x, token, rng, t_max);
  Var total = inst.loss;

  bool with_prior = false;
  CondGraph pr;
  if (lambda > 0.0) {
    if (priors.empty()) {
      warn_empty_priors_once();
    } else {
      const auto& prior = priors[rng.uniform_int(priors.size())];
      pr = record_cond_loss(tape, m, sched, prior, kTokenClass, rng, t_max);
      total = tape.add(total, tape.scale(pr.loss, lambda));
      with_prior = true;
    }
  }
  tape.backward(total);

  LossEval out;
  out.value = tape.value(total)[0];
  out.input_grad = tape.grad(inst.x0);
  out.param_grads.reserve(SurrogateModel::kNumParams);
  for (std::size_t i = 0; i < inst.params.size(); ++i) {
    // forward() plants one leaf set per call; fold both contributions
    Tensor g = tape.grad(inst.params[i]);
    if (with_prior) g = add(g, tape.grad(pr.params[i]));
    out.param_grads.push_back(std::move(g));
  }
  return out;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam::step: size mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  for (const auto& g : grads) {
    if (!g.all_finite()) throw std::runtime_error("Adam::step: non-finite gradient");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = b1_ * m[e] + (1.0 - b1_) * g[e];
      v[e] = b2_ * v[e] + (1.0 - b2_) * g[e] * g[e];
      const double mh = m[e] / c1;
      const double vh = v[e] / c2;
      p[e] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

Trainer::Trainer(SurrogateModel model, const DiffusionSchedule& sched, const TrainConfig& cfg)
    : model_(std::move(model)),
      sched_(sched),
      cfg_(cfg),
      opt_(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      rng_(mix64(cfg.seed, 0x10557)) {
  validate(cfg);
}

double Trainer::finetune_step(const std::vector<const Tensor*>& batch, std::size_t token,
                              const std::vector<Tensor>& priors) {
  if (batch.empty()) throw std::invalid_argument("finetune_step: empty batch");
  double total = 0.0;
  std::vector<Tensor> acc;
  for (const Tensor* x : batch) {
    auto ev = loss_db_grad(model_, sched_, *x, token, priors, cfg_.lambda_prior, rng_, cfg_.t_max);
    total += ev.value;
    if (acc.empty()) {
      acc = std::move(ev.param_grads);
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = add(acc[i], ev.param_grads[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : acc) g = scale(g, inv);
  opt_.step(model_.params(), acc);
  return total * inv;
}

SurrogateModel train_base(const std::vector<IdentityData>& data, const DiffusionSchedule& sched,
                          const TrainConfig& cfg, const ModelConfig& arch) {
  if (data.empty()) throw std::invalid_argument("train_base: empty dataset");
  std::vector<const Tensor*> pool;
  for (const auto& id : data) {
    for (const auto& img : id.originals) pool.push_back(&img.tensor());
    for (const auto& img : id.references) pool.push_back(&img.tensor());
  }
  Rng init_rng(mix64(cfg.seed, 0x1417));
  SurrogateModel model(arch, init_rng);

  TrainConfig tc = cfg;
  tc.lambda_prior = 0.0;  // generic pretraining has no prior term
  Trainer trainer(std::move(model), sched, tc);
  Rng batch_rng(mix64(cfg.seed, 0xba7c4));
  std::vector<const Tensor*> batch(tc.batch_size);
  for (std::size_t s = 0; s < tc.steps; ++s) {
    for (auto& slot : batch) slot = pool[batch_rng.uniform_int(pool.size())];
    trainer.finetune_step(batch, kTokenClass, {});
  }
  return std::move(trainer.model());
}

SurrogateModel personalize(const SurrogateModel& base, const std::vector<Tensor>& images,
                           const std::vector<Tensor>& priors, const DiffusionSchedule& sched,
                           const TrainConfig& cfg) {
  if (images.empty()) throw std::invalid_argument("personalize: no images");
  Trainer trainer(base, sched, cfg);
  std::vector<const Tensor*> batch;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    batch.clear();
    // round-robin over the instance images in fixed order
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      batch.push_back(&images[(s * cfg.batch_size + j) % images.size()]);
    }
    trainer.finetune_step(batch, kTokenInstance, priors);
  }
  return std::move(trainer.model());
}

}  // namespace hfshield
