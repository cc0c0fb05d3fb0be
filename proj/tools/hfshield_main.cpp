#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "hfshield/pipeline.hpp"

using hfshield::ConfigError;
using hfshield::MissingInput;
using hfshield::Pipeline;
using hfshield::PipelineConfig;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::string arm;
  std::string purifier;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config_path, "JSON config file (omit for the built-in default)");
  sub->add_option("--out", opt.out_dir, "output directory, overrides the config's out_dir");
  sub->add_option("--seed", opt.seed, "experiment seed, overrides the config's seed");
  sub->add_option("--arm", opt.arm, "restrict to one arm (attack/purify/personalize/generate)");
  sub->add_option("--purifier", opt.purifier,
                  "restrict to one purifier (purify/personalize/generate)");
}

Pipeline make_pipeline(const Options& opt) {
  PipelineConfig cfg =
      opt.config_path.empty() ? hfshield::default_config() : hfshield::load_config(opt.config_path);
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (!opt.seed.empty()) {
    try {
      std::size_t pos = 0;
      cfg.seed = std::stoull(opt.seed, &pos);
      if (pos != opt.seed.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("invalid config:\n  --seed: not an unsigned integer: " + opt.seed);
    }
  }
  Pipeline p(std::move(cfg));
  if (!opt.arm.empty()) {
    bool known = false;
    for (const auto& a : p.config().arms) known |= a.name == opt.arm;
    if (!known) throw ConfigError("invalid config:\n  --arm: no arm named '" + opt.arm + "'");
    p.set_arm_filter(opt.arm);
  }
  if (!opt.purifier.empty()) {
    bool known = false;
    for (const auto& s : p.config().purifiers) {
      known |= hfshield::purifier_name(s.kind) == opt.purifier;
    }
    if (!known) {
      throw ConfigError("invalid config:\n  --purifier: no purifier named '" + opt.purifier + "'");
    }
    p.set_purifier_filter(opt.purifier);
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hfshield: edge-concentrated adversarial protection against "
               "diffusion personalization"};
  app.require_subcommand(1);

  struct Stage {
    const char* name;
    const char* help;
    void (Pipeline::*run)();
  };
  const Stage stages[] = {
      {"gen-data", "render the synthetic identity dataset", &Pipeline::gen_data},
      {"train-base", "pretrain the base and purifier models, sample class priors",
       &Pipeline::train_base},
      {"attack", "compute per-arm adversarial perturbations", &Pipeline::attack},
      {"purify", "run every purifier over every arm's images", &Pipeline::purify},
      {"personalize", "fine-tune the base model on each purified set", &Pipeline::personalize},
      {"generate", "sample instance-token images from each personalized model",
       &Pipeline::generate},
      {"evaluate", "compute per-identity metrics", &Pipeline::evaluate},
      {"report", "aggregate metrics into report.csv/report.txt and contact sheets",
       &Pipeline::report},
      {"run-all", "run every stage in order", &Pipeline::run_all},
  };

  Options opt;
  for (const auto& s : stages) add_common(app.add_subcommand(s.name, s.help), opt);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& s : stages) {
      if (app.get_subcommand(s.name)->parsed()) {
        Pipeline p = make_pipeline(opt);
        (p.*(s.run))();
        break;
      }
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
