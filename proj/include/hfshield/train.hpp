#pragma once

#include <cstdint>
#include <vector>

#include "hfshield/dataset.hpp"
#include "hfshield/model.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/schedule.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

struct TrainConfig {
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t steps = 300;
  double lambda_prior = 1.0;
  std::uint64_t seed = 0;
  // cap on the sampled timestep, 0 = full schedule; a denoiser that only ever
  // runs the tail of the reverse chain can spend its whole budget there
  std::size_t t_max = 0;
};
void validate(const TrainConfig& cfg);  // throws std::invalid_argument listing every violation

struct LossEval {
  double value = 0.0;
  Tensor input_grad;                // w.r.t. the instance image
  std::vector<Tensor> param_grads;  // model parameter order
};

// Single-sample denoising loss |eps - eps_hat|^2 / (C*H*W) with t uniform in
// 1..min(t_max, T) (t_max 0 means T) and eps standard normal, both drawn from
// rng (t first).
double loss_cond(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x0,
                 std::size_t token, Rng& rng, std::size_t t_max = 0);
LossEval loss_cond_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x0,
                        std::size_t token, Rng& rng, std::size_t t_max = 0);

// Personalization loss: instance term with `token` plus lambda * class-token
// term on one prior image drawn from `priors`. lambda == 0 skips the prior
// term (and its rng draws) entirely; a missing prior set downgrades to the
// instance term with a one-time warning.
double loss_db(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x,
               std::size_t token, const std::vector<Tensor>& priors, double lambda, Rng& rng,
               std::size_t t_max = 0);
LossEval loss_db_grad(const SurrogateModel& m, const DiffusionSchedule& sched, const Tensor& x,
                      std::size_t token, const std::vector<Tensor>& priors, double lambda,
                      Rng& rng, std::size_t t_max = 0);

class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps);
  // in-place update; lr 0 leaves params bit-identical
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Owns a model, optimizer state and the loss rng. Copyable so a caller can
// branch a one-step-ahead model without disturbing the original.
class Trainer {
 public:
  Trainer(SurrogateModel model, const DiffusionSchedule& sched, const TrainConfig& cfg);

  // one Adam step on the mean loss over the batch; returns that loss
  double finetune_step(const std::vector<const Tensor*>& batch, std::size_t token,
                       const std::vector<Tensor>& priors);

  SurrogateModel& model() { return model_; }
  const SurrogateModel& model() const { return model_; }
  Rng& rng() { return rng_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  SurrogateModel model_;
  DiffusionSchedule sched_;
  TrainConfig cfg_;
  Adam opt_;
  Rng rng_;
};

// Class-token pretraining over every image of every identity (no prior term).
SurrogateModel train_base(const std::vector<IdentityData>& data, const DiffusionSchedule& sched,
                          const TrainConfig& cfg, const ModelConfig& arch = ModelConfig{});

// DreamBooth-style fine-tune of a copy of `base` on the given images with the
// instance token and prior preservation.
SurrogateModel personalize(const SurrogateModel& base, const std::vector<Tensor>& images,
                           const std::vector<Tensor>& priors, const DiffusionSchedule& sched,
                           const TrainConfig& cfg);

}  // namespace hfshield
