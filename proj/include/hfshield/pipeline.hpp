#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfshield/attack.hpp"
#include "hfshield/dataset.hpp"
#include "hfshield/manifest.hpp"
#include "hfshield/model.hpp"
#include "hfshield/purify.hpp"
#include "hfshield/train.hpp"

namespace hfshield {

// exit code 3
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// exit code 2
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// one attack condition; "none" leaves the images untouched
struct ArmSpec {
  std::string name;  // none | uniform | hf
  AttackConfig attack;
};

struct PipelineConfig {
  std::filesystem::path out_dir = "runs/default";
  std::uint64_t seed = 0;

  std::size_t n_identities = 5;
  std::size_t image_size = 32;
  std::uint64_t data_seed = 1;

  std::size_t diffusion_T = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  ModelConfig arch;                    // base model, surrogates, personalization
  TrainConfig base_train;              // class-token pretraining
  ModelConfig purifier_arch;           // diffpure's own denoiser (wider)
  TrainConfig purifier_train;
  TrainConfig pers_train;              // per-identity fine-tune

  std::vector<ArmSpec> arms;
  std::vector<PurifierSpec> purifiers;

  std::size_t n_priors = 8;
  std::size_t n_gen = 20;
};

// the experiment shipped out of the box: 5 identities at 32x32, arms
// {none, uniform eta=0.02, hf eta=0.01/eta_mask=0.5/rho=0.03}, purifiers
// {identity, bilateral, diffpure}
PipelineConfig default_config();

// JSON text -> config; unknown keys and invalid values are all reported in
// one ConfigError
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_json(const PipelineConfig& cfg);  // canonical echo

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  void gen_data();
  void train_base();
  void attack();
  void purify();
  void personalize();
  void generate();
  void evaluate();
  void report();
  void run_all();

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return cfg_.out_dir; }

  // restrict attack/purify/personalize/generate to one arm or purifier;
  // evaluate and report always want the full grid
  void set_arm_filter(std::string name) { arm_filter_ = std::move(name); }
  void set_purifier_filter(std::string name) { purifier_filter_ = std::move(name); }

 private:
  bool stage_done(const std::string& stage, const std::vector<std::string>& outputs);
  void require_inputs(const std::string& needed_stage, const std::vector<std::string>& inputs);
  void commit(const std::string& stage, const std::vector<std::string>& outputs);

  std::vector<IdentityData> load_data() const;
  std::vector<Tensor> load_priors() const;

  std::filesystem::path abs(const std::string& rel) const { return cfg_.out_dir / rel; }

  PipelineConfig cfg_;
  DiffusionSchedule sched_;
  std::string fingerprint_;
  Manifest manifest_;
  std::string arm_filter_;
  std::string purifier_filter_;
};

}  // namespace hfshield
