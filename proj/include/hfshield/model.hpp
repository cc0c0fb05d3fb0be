#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfshield/autograd.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

// conditioning vocabulary: a class token and an instance token
inline constexpr std::size_t kTokenClass = 0;     // "person"
inline constexpr std::size_t kTokenInstance = 1;  // "sks"
std::size_t token_id(const std::string& name);
const char* token_name(std::size_t id);

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t hidden = 16;
  std::size_t emb_dim = 16;  // time/token embedding width; equals hidden
  std::size_t vocab = 2;
};

// Noise-prediction net: three 3x3 convs with tanh between, conditioned by a
// sinusoidal time embedding (projected to a hidden-channel bias) and a learned
// per-token embedding added as a hidden-channel bias on the first layer. The
// last conv starts near zero so an untrained net predicts ~0 noise.
class SurrogateModel {
 public:
  SurrogateModel() = default;
  SurrogateModel(const ModelConfig& cfg, Rng& rng);

  static constexpr std::size_t kNumParams = 8;
  static const std::array<const char*, kNumParams>& param_names();

  const ModelConfig& config() const { return cfg_; }
  Tensor& param(std::size_t i) { return params_[i]; }
  const Tensor& param(std::size_t i) const { return params_[i]; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  bool all_finite() const;

  // record the conditioned forward pass on the tape; if param_vars is given
  // it receives the leaf handle of every parameter (in param order) so the
  // caller can read parameter gradients after backward
  Var forward(Tape& tape, Var x_t, std::size_t t, std::size_t token,
              std::vector<Var>* param_vars = nullptr) const;

  // plain evaluation (records on a scratch tape so both paths share one
  // arithmetic order)
  Tensor predict(const Tensor& x_t, std::size_t t, std::size_t token) const;

  // sin/cos features of the step index, emb_dim wide
  static Tensor time_embedding(std::size_t t, std::size_t emb_dim);

 private:
  ModelConfig cfg_;
  std::vector<Tensor> params_;
};

// Checkpoint: magic + JSON header (architecture, parameter names, extra
// metadata) followed by one tensor record per parameter.
void save_model(const SurrogateModel& m, const std::filesystem::path& path,
                const std::string& extra_json = "{}");
SurrogateModel load_model(const std::filesystem::path& path, std::string* extra_json = nullptr);

}  // namespace hfshield
