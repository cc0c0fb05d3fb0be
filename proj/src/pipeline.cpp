#include "hfshield/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hfshield/dataset.hpp"
#include "hfshield/metrics.hpp"
#include "hfshield/report.hpp"
#include "hfshield/sampler.hpp"
#include "hfshield/schedule.hpp"

namespace hfshield {

using nlohmann::json;

namespace {

// stable low-precision-free formatting for intermediate CSVs
std::string fmt17(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where,
                std::vector<std::string>& errs) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) errs.push_back(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out, const std::string& where,
            std::vector<std::string>& errs) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    errs.push_back(where + "." + key + ": wrong type");
  }
}

void parse_train(const json& j, TrainConfig& cfg, const std::string& where,
                 std::vector<std::string>& errs) {
  check_keys(j, {"lr", "batch_size", "steps", "lambda_prior"}, where, errs);
  get_to(j, "lr", cfg.lr, where, errs);
  get_to(j, "batch_size", cfg.batch_size, where, errs);
  get_to(j, "steps", cfg.steps, where, errs);
  get_to(j, "lambda_prior", cfg.lambda_prior, where, errs);
}

AttackConfig arm_template(const std::string& name) {
  AttackConfig a;
  a.iters = 50;
  a.surrogate.steps = 1;
  if (name == "uniform") {
    a.eta = 0.02;
    a.eta_mask = 0.02;
    a.eta_unit = 0.004;
    a.rho = 1.0;
  } else {  // hf budgets: small everywhere, large on the masked edge set
    a.eta = 0.01;
    a.eta_mask = 0.5;
    a.eta_unit = 0.002;
    a.rho = 0.03;
  }
  return a;
}

ArmSpec parse_arm(const json& j, std::vector<std::string>& errs) {
  ArmSpec arm;
  std::string where = "arms[]";
  if (!j.contains("name")) {
    errs.push_back("arms[]: missing 'name'");
    return arm;
  }
  get_to(j, "name", arm.name, where, errs);
  where = "arms[" + arm.name + "]";
  check_keys(j, {"name", "eta", "eta_mask", "eta_unit", "rho", "iters"}, where, errs);
  if (arm.name != "none" && arm.name != "uniform" && arm.name != "hf") {
    errs.push_back(where + ": name must be one of none|uniform|hf");
    return arm;
  }
  if (arm.name == "none") {
    check_keys(j, {"name"}, where, errs);
    return arm;
  }
  arm.attack = arm_template(arm.name);
  bool had_eta = j.contains("eta"), had_unit = j.contains("eta_unit");
  get_to(j, "eta", arm.attack.eta, where, errs);
  get_to(j, "eta_mask", arm.attack.eta_mask, where, errs);
  get_to(j, "eta_unit", arm.attack.eta_unit, where, errs);
  get_to(j, "rho", arm.attack.rho, where, errs);
  get_to(j, "iters", arm.attack.iters, where, errs);
  if (arm.name == "uniform" && had_eta && !j.contains("eta_mask")) {
    arm.attack.eta_mask = arm.attack.eta;  // uniform ties the two budgets
  }
  if (had_eta && !had_unit && arm.attack.eta > 0.0) arm.attack.eta_unit = arm.attack.eta / 5.0;
  return arm;
}

PurifierSpec parse_purifier(const json& j, std::vector<std::string>& errs) {
  PurifierSpec spec;
  std::string where = "purifiers[]";
  if (!j.contains("name")) {
    errs.push_back("purifiers[]: missing 'name'");
    return spec;
  }
  std::string name;
  get_to(j, "name", name, where, errs);
  where = "purifiers[" + name + "]";
  try {
    spec.kind = purifier_from_name(name);
  } catch (const std::invalid_argument& e) {
    errs.push_back(where + ": " + e.what());
    return spec;
  }
  check_keys(j, {"name", "sigma", "radius", "sigma_s", "sigma_r", "t"}, where, errs);
  get_to(j, "sigma", spec.gaussian_sigma, where, errs);
  get_to(j, "sigma_s", spec.bilateral_sigma_s, where, errs);
  get_to(j, "sigma_r", spec.bilateral_sigma_r, where, errs);
  get_to(j, "t", spec.diffpure_t, where, errs);
  if (j.contains("radius")) {
    int r = 0;
    get_to(j, "radius", r, where, errs);
    spec.gaussian_radius = r;
    spec.bilateral_radius = r;
  }
  return spec;
}

json train_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"lambda_prior", c.lambda_prior}};
}

json arm_json(const ArmSpec& a) {
  if (a.name == "none") return json{{"name", a.name}};
  return json{{"name", a.name},       {"eta", a.attack.eta},   {"eta_mask", a.attack.eta_mask},
              {"eta_unit", a.attack.eta_unit}, {"rho", a.attack.rho}, {"iters", a.attack.iters}};
}

json purifier_json(const PurifierSpec& s) {
  switch (s.kind) {
    case PurifierKind::identity: return json{{"name", "identity"}};
    case PurifierKind::gaussian:
      return json{{"name", "gaussian"}, {"sigma", s.gaussian_sigma}, {"radius", s.gaussian_radius}};
    case PurifierKind::bilateral:
      return json{{"name", "bilateral"},
                  {"sigma_s", s.bilateral_sigma_s},
                  {"sigma_r", s.bilateral_sigma_r},
                  {"radius", s.bilateral_radius}};
    case PurifierKind::diffpure: return json{{"name", "diffpure"}, {"t", s.diffpure_t}};
  }
  return {};
}

void validate_config(const PipelineConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.n_identities < 1) errs.push_back("dataset.n_identities must be >= 1");
  if (cfg.image_size < 8) errs.push_back("dataset.image_size must be >= 8");
  if (cfg.diffusion_T < 2) errs.push_back("diffusion.T must be >= 2");
  if (!(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max < 1.0)) {
    errs.push_back("diffusion: need 0 < beta_min <= beta_max < 1");
  }
  if (cfg.n_priors < 1) errs.push_back("n_priors must be >= 1");
  if (cfg.n_gen < 1) errs.push_back("n_gen must be >= 1");
  if (cfg.arms.empty()) errs.push_back("arms must be nonempty");
  if (cfg.purifiers.empty()) errs.push_back("purifiers must be nonempty");
  for (std::size_t i = 0; i < cfg.arms.size(); ++i) {
    for (std::size_t k = i + 1; k < cfg.arms.size(); ++k) {
      if (cfg.arms[i].name == cfg.arms[k].name) {
        errs.push_back("arms: duplicate name '" + cfg.arms[i].name + "'");
      }
    }
    if (cfg.arms[i].name == "none") continue;
    try {
      validate(cfg.arms[i].attack);
    } catch (const std::invalid_argument& e) {
      errs.push_back("arms[" + cfg.arms[i].name + "]: " + e.what());
    }
  }
  for (std::size_t i = 0; i < cfg.purifiers.size(); ++i) {
    for (std::size_t k = i + 1; k < cfg.purifiers.size(); ++k) {
      if (cfg.purifiers[i].kind == cfg.purifiers[k].kind) {
        errs.push_back(std::string("purifiers: duplicate '") +
                       purifier_name(cfg.purifiers[i].kind) + "'");
      }
    }
    try {
      validate(cfg.purifiers[i], cfg.diffusion_T);
    } catch (const std::invalid_argument& e) {
      errs.push_back(std::string("purifiers[") + purifier_name(cfg.purifiers[i].kind) +
                     "]: " + e.what());
    }
  }
  for (const auto* tc : {&cfg.base_train, &cfg.purifier_train, &cfg.pers_train}) {
    try {
      validate(*tc);
    } catch (const std::invalid_argument& e) {
      errs.push_back(std::string("train config: ") + e.what());
    }
  }
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

// artifact writes go through a temp file so a crash never leaves a partial
// file under the final name
template <typename F>
void write_via_tmp(const std::filesystem::path& path, F&& writer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  writer(tmp);
  std::filesystem::rename(tmp, path);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t e = line.find(sep, pos);
    out.push_back(line.substr(pos, e - pos));
    if (e == std::string::npos) break;
    pos = e + 1;
  }
  return out;
}

}  // namespace

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.base_train.steps = 1500;
  cfg.purifier_arch.hidden = 32;
  cfg.purifier_arch.emb_dim = 32;
  cfg.purifier_train.steps = 4000;
  cfg.purifier_train.t_max = 10;  // diffpure only ever runs the low-t tail
  cfg.pers_train.steps = 300;
  cfg.arms.push_back({"none", {}});
  cfg.arms.push_back({"uniform", arm_template("uniform")});
  cfg.arms.push_back({"hf", arm_template("hf")});
  PurifierSpec ident;
  PurifierSpec bila;
  bila.kind = PurifierKind::bilateral;
  PurifierSpec dp;
  dp.kind = PurifierKind::diffpure;
  cfg.purifiers = {ident, bila, dp};
  return cfg;
}

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("invalid config: top level must be an object");

  PipelineConfig cfg = default_config();
  std::vector<std::string> errs;
  check_keys(j,
             {"out_dir", "seed", "dataset", "diffusion", "model", "purifier_model", "base_train",
              "personalize", "arms", "purifiers", "n_priors", "n_gen"},
             "config", errs);

  if (j.contains("out_dir")) {
    std::string s;
    get_to(j, "out_dir", s, "config", errs);
    cfg.out_dir = s;
  }
  get_to(j, "seed", cfg.seed, "config", errs);
  get_to(j, "n_priors", cfg.n_priors, "config", errs);
  get_to(j, "n_gen", cfg.n_gen, "config", errs);

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, {"n_identities", "image_size", "seed"}, "dataset", errs);
    get_to(d, "n_identities", cfg.n_identities, "dataset", errs);
    get_to(d, "image_size", cfg.image_size, "dataset", errs);
    get_to(d, "seed", cfg.data_seed, "dataset", errs);
  }
  if (j.contains("diffusion")) {
    const auto& d = j["diffusion"];
    check_keys(d, {"T", "beta_min", "beta_max"}, "diffusion", errs);
    get_to(d, "T", cfg.diffusion_T, "diffusion", errs);
    get_to(d, "beta_min", cfg.beta_min, "diffusion", errs);
    get_to(d, "beta_max", cfg.beta_max, "diffusion", errs);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"hidden"}, "model", errs);
    get_to(m, "hidden", cfg.arch.hidden, "model", errs);
    cfg.arch.emb_dim = cfg.arch.hidden;
  }
  if (j.contains("purifier_model")) {
    const auto& m = j["purifier_model"];
    check_keys(m, {"hidden", "steps", "lr", "batch_size", "t_max"}, "purifier_model", errs);
    get_to(m, "hidden", cfg.purifier_arch.hidden, "purifier_model", errs);
    cfg.purifier_arch.emb_dim = cfg.purifier_arch.hidden;
    get_to(m, "steps", cfg.purifier_train.steps, "purifier_model", errs);
    get_to(m, "lr", cfg.purifier_train.lr, "purifier_model", errs);
    get_to(m, "batch_size", cfg.purifier_train.batch_size, "purifier_model", errs);
    get_to(m, "t_max", cfg.purifier_train.t_max, "purifier_model", errs);
  }
  if (j.contains("base_train")) parse_train(j["base_train"], cfg.base_train, "base_train", errs);
  if (j.contains("personalize")) parse_train(j["personalize"], cfg.pers_train, "personalize", errs);

  if (j.contains("arms")) {
    if (!j["arms"].is_array()) {
      errs.push_back("arms: must be an array");
    } else {
      cfg.arms.clear();
      for (const auto& a : j["arms"]) cfg.arms.push_back(parse_arm(a, errs));
    }
  }
  if (j.contains("purifiers")) {
    if (!j["purifiers"].is_array()) {
      errs.push_back("purifiers: must be an array");
    } else {
      cfg.purifiers.clear();
      for (const auto& p : j["purifiers"]) cfg.purifiers.push_back(parse_purifier(p, errs));
    }
  }

  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  validate_config(cfg);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const PipelineConfig& cfg) {
  json arms = json::array();
  for (const auto& a : cfg.arms) arms.push_back(arm_json(a));
  json purs = json::array();
  for (const auto& p : cfg.purifiers) purs.push_back(purifier_json(p));
  json j{{"out_dir", cfg.out_dir.string()},
         {"seed", cfg.seed},
         {"dataset",
          {{"n_identities", cfg.n_identities},
           {"image_size", cfg.image_size},
           {"seed", cfg.data_seed}}},
         {"diffusion", {{"T", cfg.diffusion_T}, {"beta_min", cfg.beta_min}, {"beta_max", cfg.beta_max}}},
         {"model", {{"hidden", cfg.arch.hidden}}},
         {"purifier_model",
          {{"hidden", cfg.purifier_arch.hidden},
           {"steps", cfg.purifier_train.steps},
           {"lr", cfg.purifier_train.lr},
           {"batch_size", cfg.purifier_train.batch_size},
           {"t_max", cfg.purifier_train.t_max}}},
         {"base_train", train_json(cfg.base_train)},
         {"personalize", train_json(cfg.pers_train)},
         {"arms", arms},
         {"purifiers", purs},
         {"n_priors", cfg.n_priors},
         {"n_gen", cfg.n_gen}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  sched_ = make_schedule(cfg_.diffusion_T, cfg_.beta_min, cfg_.beta_max);
  // run identity is the config minus its location on disk
  PipelineConfig fp = cfg_;
  fp.out_dir.clear();
  std::string canon = config_json(fp);
  fingerprint_ = hash_hex(fnv1a64(canon.data(), canon.size()));
  manifest_ = Manifest::load_or_empty(abs("manifest.json"));
  if (!manifest_.has("#config") || manifest_.hash("#config") != fingerprint_) {
    manifest_ = Manifest{};
    manifest_.put("#config", fingerprint_);
  }
}

namespace {

std::string id_dir(std::size_t i) { return "id" + std::to_string(i); }

}  // namespace

bool Pipeline::stage_done(const std::string& stage, const std::vector<std::string>& outputs) {
  if (!manifest_.has("#stage:" + stage)) return false;
  for (const auto& o : outputs) {
    if (!manifest_.matches(cfg_.out_dir, o)) return false;
  }
  std::printf("[%s] up to date, skipping\n", stage.c_str());
  return true;
}

void Pipeline::require_inputs(const std::string& needed_stage,
                              const std::vector<std::string>& inputs) {
  for (const auto& in : inputs) {
    if (!manifest_.matches(cfg_.out_dir, in)) {
      throw MissingInput("missing or stale artifact '" + in + "' from stage '" + needed_stage +
                         "'; run `hfshield " + needed_stage + "` first");
    }
  }
}

void Pipeline::commit(const std::string& stage, const std::vector<std::string>& outputs) {
  for (const auto& o : outputs) manifest_.put(o, hash_file(abs(o)));
  manifest_.put("#stage:" + stage, "done");
  manifest_.save(abs("manifest.json"));
}

// --------------------------- artifact name lists ---------------------------

namespace {

std::vector<std::string> data_outputs(const PipelineConfig& cfg) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      v.push_back("data/" + id_dir(i) + "/orig" + std::to_string(j) + ".png");
      v.push_back("data/" + id_dir(i) + "/ref" + std::to_string(j) + ".png");
    }
  }
  return v;
}

std::vector<std::string> base_outputs(const PipelineConfig& cfg) {
  std::vector<std::string> v = {"base/model.ckpt", "base/purifier.ckpt"};
  for (std::size_t k = 0; k < cfg.n_priors; ++k) {
    v.push_back("base/prior" + std::to_string(k) + ".hft");
  }
  return v;
}

std::string adv_name(const std::string& arm, std::size_t i, std::size_t j) {
  return "attack/" + arm + "/" + id_dir(i) + "/adv" + std::to_string(j) + ".png";
}

std::string pur_name(const std::string& arm, const std::string& pur, std::size_t i,
                     std::size_t j) {
  return "purify/" + arm + "/" + pur + "/" + id_dir(i) + "/img" + std::to_string(j) + ".png";
}

std::string pers_name(const std::string& arm, const std::string& pur, std::size_t i) {
  return "personalize/" + arm + "/" + pur + "/" + id_dir(i) + ".ckpt";
}

std::string gen_name(const std::string& arm, const std::string& pur, std::size_t i,
                     std::size_t k) {
  return "generate/" + arm + "/" + pur + "/" + id_dir(i) + "/s" + std::to_string(k) + ".png";
}

}  // namespace

// ------------------------------- stages ------------------------------------

void Pipeline::gen_data() {
  auto outputs = data_outputs(cfg_);
  if (stage_done("gen-data", outputs)) return;
  auto data = generate_dataset(cfg_.n_identities, cfg_.data_seed, cfg_.image_size);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      write_via_tmp(abs("data/" + id_dir(i) + "/orig" + std::to_string(j) + ".png"),
                    [&](const std::filesystem::path& f) { save_png(data[i].originals[j], f); });
      write_via_tmp(abs("data/" + id_dir(i) + "/ref" + std::to_string(j) + ".png"),
                    [&](const std::filesystem::path& f) { save_png(data[i].references[j], f); });
    }
  }
  commit("gen-data", outputs);
  std::printf("[gen-data] %zu identities at %zux%zu\n", cfg_.n_identities, cfg_.image_size,
              cfg_.image_size);
}

// dataset as the stages downstream of gen-data see it: decoded PNGs
std::vector<IdentityData> Pipeline::load_data() const {
  std::vector<IdentityData> data(cfg_.n_identities);
  for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
    data[i].spec.image_size = cfg_.image_size;
    for (std::size_t j = 0; j < 4; ++j) {
      data[i].originals.push_back(
          load_png(abs("data/" + id_dir(i) + "/orig" + std::to_string(j) + ".png")));
      data[i].references.push_back(
          load_png(abs("data/" + id_dir(i) + "/ref" + std::to_string(j) + ".png")));
    }
  }
  return data;
}

void Pipeline::train_base() {
  auto outputs = base_outputs(cfg_);
  if (stage_done("train-base", outputs)) return;
  require_inputs("gen-data", data_outputs(cfg_));
  auto data = load_data();

  TrainConfig bc = cfg_.base_train;
  bc.seed = mix64(cfg_.seed, 0xb43e);
  SurrogateModel base = hfshield::train_base(data, sched_, bc, cfg_.arch);
  write_via_tmp(abs("base/model.ckpt"),
                [&](const std::filesystem::path& f) { save_model(base, f); });
  std::printf("[train-base] base model trained (%zu steps)\n", bc.steps);

  TrainConfig pc = cfg_.purifier_train;
  pc.seed = mix64(cfg_.seed, 0xbf17);
  SurrogateModel purifier = hfshield::train_base(data, sched_, pc, cfg_.purifier_arch);
  write_via_tmp(abs("base/purifier.ckpt"),
                [&](const std::filesystem::path& f) { save_model(purifier, f); });
  std::printf("[train-base] purifier model trained (%zu steps)\n", pc.steps);

  auto priors = sample_set(base, sched_, kTokenClass, mix64(cfg_.seed, 0x9410), cfg_.n_priors,
                           cfg_.image_size, cfg_.image_size);
  for (std::size_t k = 0; k < priors.size(); ++k) {
    write_via_tmp(abs("base/prior" + std::to_string(k) + ".hft"),
                  [&](const std::filesystem::path& f) { save_tensor(priors[k], f); });
  }
  commit("train-base", outputs);
  std::printf("[train-base] %zu class priors sampled\n", cfg_.n_priors);
}

std::vector<Tensor> Pipeline::load_priors() const {
  std::vector<Tensor> priors;
  for (std::size_t k = 0; k < cfg_.n_priors; ++k) {
    priors.push_back(load_tensor(abs("base/prior" + std::to_string(k) + ".hft")));
  }
  return priors;
}

void Pipeline::attack() {
  std::vector<std::string> outputs;
  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
      for (std::size_t j = 0; j < 4; ++j) outputs.push_back(adv_name(arm.name, i, j));
    }
  }
  if (stage_done("attack", outputs)) return;
  require_inputs("gen-data", data_outputs(cfg_));
  require_inputs("train-base", base_outputs(cfg_));
  auto data = load_data();
  SurrogateModel theta_pre = load_model(abs("base/model.ckpt"));
  auto priors = load_priors();

  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
      if (arm.name == "none") {
        // hand the originals through untouched
        for (std::size_t j = 0; j < 4; ++j) {
          std::ifstream in(abs("data/" + id_dir(i) + "/orig" + std::to_string(j) + ".png"),
                           std::ios::binary);
          std::ostringstream ss;
          ss << in.rdbuf();
          atomic_write(abs(adv_name(arm.name, i, j)), ss.str());
        }
        continue;
      }
      AttackConfig ac = arm.attack;
      ac.seed = mix64(cfg_.seed, 0x477a, i);  // arm-independent: arms stay paired
      ProtectedSet set = aspl(data[i].originals, data[i].references, ac, theta_pre, sched_, priors);
      for (std::size_t j = 0; j < 4; ++j) {
        write_via_tmp(abs(adv_name(arm.name, i, j)), [&](const std::filesystem::path& f) {
          save_png(Image(set.adversarial[j]), f);
        });
      }
      std::printf("[attack] arm=%s id=%zu  final adv loss %.4f vs clean %.4f\n", arm.name.c_str(),
                  i, set.loss_adv.empty() ? 0.0 : set.loss_adv[0],
                  set.loss_clean.empty() ? 0.0 : set.loss_clean[0]);
    }
  }
  commit("attack", outputs);
}

void Pipeline::purify() {
  std::vector<std::string> outputs;
  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (const auto& pur : cfg_.purifiers) {
      std::string pname = purifier_name(pur.kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        for (std::size_t j = 0; j < 4; ++j) outputs.push_back(pur_name(arm.name, pname, i, j));
      }
    }
  }
  if (stage_done("purify", outputs)) return;
  {
    std::vector<std::string> needed;
    for (const auto& arm : cfg_.arms) {
      if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        for (std::size_t j = 0; j < 4; ++j) needed.push_back(adv_name(arm.name, i, j));
      }
    }
    require_inputs("attack", needed);
  }
  bool any_diffpure = false;
  for (const auto& pur : cfg_.purifiers) any_diffpure |= pur.kind == PurifierKind::diffpure;
  SurrogateModel purifier_model;
  if (any_diffpure) {
    require_inputs("train-base", {"base/purifier.ckpt"});
    purifier_model = load_model(abs("base/purifier.ckpt"));
  }

  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (std::size_t p = 0; p < cfg_.purifiers.size(); ++p) {
      PurifierSpec spec = cfg_.purifiers[p];
      std::string pname = purifier_name(spec.kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          Image adv = load_png(abs(adv_name(arm.name, i, j)));
          // seed depends on (purifier, image) but never the arm, so purified
          // clean and purified adversarial stay comparable
          spec.seed = mix64(cfg_.seed, 0xd1f5, p, i, j);
          Image out = hfshield::purify(adv, spec, &purifier_model, &sched_);
          write_via_tmp(abs(pur_name(arm.name, pname, i, j)),
                        [&](const std::filesystem::path& f) { save_png(out, f); });
        }
      }
    }
  }
  commit("purify", outputs);
  std::printf("[purify] done\n");
}

void Pipeline::personalize() {
  std::vector<std::string> outputs;
  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (const auto& pur : cfg_.purifiers) {
      std::string pname = purifier_name(pur.kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        outputs.push_back(pers_name(arm.name, pname, i));
      }
    }
  }
  if (stage_done("personalize", outputs)) return;
  require_inputs("train-base", base_outputs(cfg_));
  SurrogateModel base = load_model(abs("base/model.ckpt"));
  auto priors = load_priors();

  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (std::size_t p = 0; p < cfg_.purifiers.size(); ++p) {
      std::string pname = purifier_name(cfg_.purifiers[p].kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        std::vector<std::string> needed;
        for (std::size_t j = 0; j < 4; ++j) needed.push_back(pur_name(arm.name, pname, i, j));
        require_inputs("purify", needed);
        std::vector<Tensor> images;
        for (const auto& n : needed) images.push_back(load_png(abs(n)).tensor());
        TrainConfig pc = cfg_.pers_train;
        pc.seed = mix64(cfg_.seed, 0xbe57, p, i);  // arm-independent
        SurrogateModel tuned = hfshield::personalize(base, images, priors, sched_, pc);
        write_via_tmp(abs(pers_name(arm.name, pname, i)),
                      [&](const std::filesystem::path& f) { save_model(tuned, f); });
      }
      std::printf("[personalize] arm=%s purifier=%s done\n", arm.name.c_str(), pname.c_str());
    }
  }
  commit("personalize", outputs);
}

void Pipeline::generate() {
  std::vector<std::string> outputs;
  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (const auto& pur : cfg_.purifiers) {
      std::string pname = purifier_name(pur.kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        for (std::size_t k = 0; k < cfg_.n_gen; ++k) {
          outputs.push_back(gen_name(arm.name, pname, i, k));
        }
      }
    }
  }
  if (stage_done("generate", outputs)) return;

  for (const auto& arm : cfg_.arms) {
    if (!arm_filter_.empty() && arm.name != arm_filter_) continue;
    for (std::size_t p = 0; p < cfg_.purifiers.size(); ++p) {
      std::string pname = purifier_name(cfg_.purifiers[p].kind);
      if (!purifier_filter_.empty() && pname != purifier_filter_) continue;
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        require_inputs("personalize", {pers_name(arm.name, pname, i)});
        SurrogateModel tuned = load_model(abs(pers_name(arm.name, pname, i)));
        auto samples = sample_set(tuned, sched_, kTokenInstance, mix64(cfg_.seed, 0x6e4a, p, i),
                                  cfg_.n_gen, cfg_.image_size, cfg_.image_size);
        for (std::size_t k = 0; k < samples.size(); ++k) {
          write_via_tmp(abs(gen_name(arm.name, pname, i, k)), [&](const std::filesystem::path& f) {
            save_png(Image(samples[k]), f);
          });
        }
      }
      std::printf("[generate] arm=%s purifier=%s done\n", arm.name.c_str(), pname.c_str());
    }
  }
  commit("generate", outputs);
}

void Pipeline::evaluate() {
  std::vector<std::string> outputs = {"eval/per_identity.csv"};
  if (stage_done("evaluate", outputs)) return;
  require_inputs("gen-data", data_outputs(cfg_));
  {
    std::vector<std::string> needed;
    for (const auto& arm : cfg_.arms) {
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        for (std::size_t j = 0; j < 4; ++j) needed.push_back(adv_name(arm.name, i, j));
      }
    }
    require_inputs("attack", needed);
  }
  {
    std::vector<std::string> needed;
    for (const auto& arm : cfg_.arms) {
      for (const auto& pur : cfg_.purifiers) {
        for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
          for (std::size_t k = 0; k < cfg_.n_gen; ++k) {
            needed.push_back(gen_name(arm.name, purifier_name(pur.kind), i, k));
          }
        }
      }
    }
    require_inputs("generate", needed);
  }

  bool any_diffpure = false;
  for (const auto& pur : cfg_.purifiers) any_diffpure |= pur.kind == PurifierKind::diffpure;
  SurrogateModel purifier_model;
  if (any_diffpure) {
    require_inputs("train-base", {"base/purifier.ckpt"});
    purifier_model = load_model(abs("base/purifier.ckpt"));
  }

  std::string csv =
      "arm,purifier,identity,delta_l1,delta_linf,retention,psnr,gen_mse,gen_hf\n";
  for (const auto& arm : cfg_.arms) {
    for (std::size_t p = 0; p < cfg_.purifiers.size(); ++p) {
      std::string pname = purifier_name(cfg_.purifiers[p].kind);
      for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
        std::vector<Image> origs, advs;
        for (std::size_t j = 0; j < 4; ++j) {
          origs.push_back(load_png(abs("data/" + id_dir(i) + "/orig" + std::to_string(j) + ".png")));
          advs.push_back(load_png(abs(adv_name(arm.name, i, j))));
        }
        double d_l1 = 0.0, d_linf = 0.0, ret = 0.0, ps = 0.0;
        bool has_delta = arm.name != "none";
        for (std::size_t j = 0; j < 4 && has_delta; ++j) {
          Tensor delta = sub(advs[j].tensor(), origs[j].tensor());
          if (l2_norm(delta) == 0.0) {
            has_delta = false;
            break;
          }
          d_l1 += l1_mean(delta) / 4.0;
          d_linf = std::max(d_linf, linf(delta));
          PurifierSpec spec = cfg_.purifiers[p];
          spec.seed = mix64(cfg_.seed, 0xd1f0, p, i, j);
          ret += retention_ratio(origs[j], delta, spec, &purifier_model, &sched_) / 4.0;
          ps += psnr(advs[j].tensor(), origs[j].tensor()) / 4.0;
        }
        double g_mse = 0.0, g_hf = 0.0;
        for (std::size_t k = 0; k < cfg_.n_gen; ++k) {
          Image s = load_png(abs(gen_name(arm.name, pname, i, k)));
          double best = mse(s.tensor(), origs[0].tensor());
          for (std::size_t j = 1; j < 4; ++j) {
            best = std::min(best, mse(s.tensor(), origs[j].tensor()));
          }
          g_mse += best / double(cfg_.n_gen);
          g_hf += hf_energy(s) / double(cfg_.n_gen);
        }
        csv += arm.name + "," + pname + "," + std::to_string(i) + ",";
        if (has_delta) {
          csv += fmt17(d_l1) + "," + fmt17(d_linf) + "," + fmt17(ret) + "," + fmt17(ps) + ",";
        } else {
          csv += "na,na,na,na,";
        }
        csv += fmt17(g_mse) + "," + fmt17(g_hf) + "\n";
      }
    }
  }
  atomic_write(abs("eval/per_identity.csv"), csv);
  commit("evaluate", outputs);
  std::printf("[evaluate] per-identity metrics written\n");
}

void Pipeline::report() {
  std::vector<std::string> outputs = {"eval/report.csv", "eval/report.txt"};
  for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
    outputs.push_back("eval/grid_" + id_dir(i) + ".png");
  }
  if (stage_done("report", outputs)) return;
  require_inputs("evaluate", {"eval/per_identity.csv"});

  std::ifstream in(abs("eval/per_identity.csv"), std::ios::binary);
  std::string line;
  std::getline(in, line);  // header
  std::vector<ConditionSamples> conds;
  for (const auto& arm : cfg_.arms) {
    for (const auto& pur : cfg_.purifiers) {
      ConditionSamples c;
      c.arm = arm.name;
      c.purifier = purifier_name(pur.kind);
      conds.push_back(std::move(c));
    }
  }
  auto cell = [&](const std::string& arm, const std::string& pur) -> ConditionSamples* {
    for (auto& c : conds) {
      if (c.arm == arm && c.purifier == pur) return &c;
    }
    return nullptr;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 9) throw MissingInput("corrupt eval/per_identity.csv row: " + line);
    ConditionSamples* c = cell(f[0], f[1]);
    if (!c) throw MissingInput("eval/per_identity.csv has unknown condition " + f[0] + "/" + f[1]);
    auto push = [](std::vector<double>& v, const std::string& s) {
      if (s != "na") v.push_back(std::strtod(s.c_str(), nullptr));
    };
    push(c->delta_l1, f[3]);
    push(c->delta_linf, f[4]);
    push(c->retention, f[5]);
    push(c->psnr_attacked, f[6]);
    push(c->gen_mse, f[7]);
    push(c->gen_hf, f[8]);
  }
  MetricsReport rep = build_report(conds);
  atomic_write(abs("eval/report.csv"), to_csv(rep));
  atomic_write(abs("eval/report.txt"), to_table(rep));

  // one contact sheet per identity: per arm a row of
  // [clean, attacked, purified..., generated...]
  for (std::size_t i = 0; i < cfg_.n_identities; ++i) {
    std::vector<Image> tiles;
    std::size_t cols = 2 + 2 * cfg_.purifiers.size();
    for (const auto& arm : cfg_.arms) {
      tiles.push_back(load_png(abs("data/" + id_dir(i) + "/orig0.png")));
      tiles.push_back(load_png(abs(adv_name(arm.name, i, 0))));
      for (const auto& pur : cfg_.purifiers) {
        tiles.push_back(load_png(abs(pur_name(arm.name, purifier_name(pur.kind), i, 0))));
      }
      for (const auto& pur : cfg_.purifiers) {
        tiles.push_back(load_png(abs(gen_name(arm.name, purifier_name(pur.kind), i, 0))));
      }
    }
    write_via_tmp(abs("eval/grid_" + id_dir(i) + ".png"),
                  [&](const std::filesystem::path& f) { write_grid_png(f, tiles, cols); });
  }
  commit("report", outputs);
  std::printf("[report] report.csv, report.txt and %zu grids written\n", cfg_.n_identities);
}

void Pipeline::run_all() {
  gen_data();
  train_base();
  attack();
  purify();
  personalize();
  generate();
  evaluate();
  report();
}

}  // namespace hfshield
