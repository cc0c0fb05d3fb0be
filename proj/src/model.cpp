#include "hfshield/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace hfshield {

namespace {

constexpr char kMagic[4] = {'H', 'F', 'S', 'M'};
constexpr std::uint32_t kVersion = 1;

std::vector<std::vector<std::size_t>> expected_shapes(const ModelConfig& c) {
  return {
      {c.hidden, c.in_channels, 3, 3}, {c.hidden},      {c.hidden, c.hidden, 3, 3}, {c.hidden},
      {c.in_channels, c.hidden, 3, 3}, {c.in_channels}, {c.emb_dim, c.hidden},      {c.vocab, c.hidden},
  };
}

}  // namespace

std::size_t token_id(const std::string& name) {
  if (name == "person") return kTokenClass;
  if (name == "sks") return kTokenInstance;
  throw std::invalid_argument("token_id: unknown token '" + name + "'");
}

const char* token_name(std::size_t id) {
  if (id == kTokenClass) return "person";
  if (id == kTokenInstance) return "sks";
  throw std::invalid_argument("token_name: unknown token id " + std::to_string(id));
}

const std::array<const char*, SurrogateModel::kNumParams>& SurrogateModel::param_names() {
  static const std::array<const char*, kNumParams> names = {
      "conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b", "time_proj", "token_emb"};
  return names;
}

SurrogateModel::SurrogateModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.emb_dim != cfg.hidden) {
    throw std::invalid_argument("SurrogateModel: emb_dim must equal hidden");
  }
  if (cfg.vocab < 2) throw std::invalid_argument("SurrogateModel: vocab must hold both tokens");
  const auto shapes = expected_shapes(cfg);
  params_.resize(kNumParams);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.in_channels * 9));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden * 9));
  params_[0] = Tensor::randn(shapes[0], rng, s1);
  params_[1] = Tensor(shapes[1]);
  params_[2] = Tensor::randn(shapes[2], rng, s2);
  params_[3] = Tensor(shapes[3]);
  params_[4] = Tensor::randn(shapes[4], rng, 0.01);  // near-zero output at init
  params_[5] = Tensor(shapes[5]);
  params_[6] = Tensor::randn(shapes[6], rng, 1.0 / std::sqrt(static_cast<double>(cfg.emb_dim)));
  params_[7] = Tensor::randn(shapes[7], rng, 0.1);
}

bool SurrogateModel::all_finite() const {
  for (const auto& p : params_)
    if (!p.all_finite()) return false;
  return true;
}

Tensor SurrogateModel::time_embedding(std::size_t t, std::size_t emb_dim) {
  const std::size_t half = emb_dim / 2;
  Tensor e({1, emb_dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    e.at(0, i) = std::sin(static_cast<double>(t) * freq);
    e.at(0, half + i) = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Var SurrogateModel::forward(Tape& tape, Var x_t, std::size_t t, std::size_t token,
                            std::vector<Var>* param_vars) const {
  if (params_.size() != kNumParams) throw std::logic_error("SurrogateModel: uninitialized");
  if (token >= cfg_.vocab) {
    throw std::invalid_argument("SurrogateModel: token id " + std::to_string(token) +
                                " outside vocabulary");
  }
  std::vector<Var> pv;
  pv.reserve(kNumParams);
  for (const auto& p : params_) pv.push_back(tape.leaf(p));
  if (param_vars) *param_vars = pv;

  auto temb = tape.leaf(time_embedding(t, cfg_.emb_dim));
  auto tbias = tape.select_row(tape.matmul(temb, pv[6]), 0);
  auto cbias = tape.select_row(pv[7], token);

  auto h1 = tape.conv2d(x_t, pv[0], kernels::Padding::zero);
  h1 = tape.add_channel_bias(h1, pv[1]);
  h1 = tape.add_channel_bias(h1, tbias);
  h1 = tape.add_channel_bias(h1, cbias);
  h1 = tape.tanh(h1);

  auto h2 = tape.tanh(tape.add_channel_bias(tape.conv2d(h1, pv[2], kernels::Padding::zero), pv[3]));
  return tape.add_channel_bias(tape.conv2d(h2, pv[4], kernels::Padding::zero), pv[5]);
}

Tensor SurrogateModel::predict(const Tensor& x_t, std::size_t t, std::size_t token) const {
  Tape tape;
  auto out = forward(tape, tape.leaf(x_t), t, token);
  return tape.value(out);
}

void save_model(const SurrogateModel& m, const std::filesystem::path& path,
                const std::string& extra_json) {
  nlohmann::json header;
  header["arch"] = {{"in_channels", m.config().in_channels},
                    {"hidden", m.config().hidden},
                    {"emb_dim", m.config().emb_dim},
                    {"vocab", m.config().vocab}};
  header["params"] = nlohmann::json::array();
  for (const char* n : SurrogateModel::param_names()) header["params"].push_back(n);
  header["meta"] = nlohmann::json::parse(extra_json);
  const std::string hs = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_model: cannot open " + tmp);
    f.write(kMagic, 4);
    const std::uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const std::uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i) write_tensor(f, m.param(i));
    if (!f) throw std::runtime_error("save_model: write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

SurrogateModel load_model(const std::filesystem::path& path, std::string* extra_json) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_model: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("load_model: bad magic in " + path.string());
  }
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  if (!f || ver != kVersion) throw std::runtime_error("load_model: unsupported version");
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  if (!f || len > (1u << 20)) throw std::runtime_error("load_model: corrupt header length");
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("load_model: truncated header");

  nlohmann::json header = nlohmann::json::parse(hs);
  ModelConfig cfg;
  cfg.in_channels = header.at("arch").at("in_channels").get<std::size_t>();
  cfg.hidden = header.at("arch").at("hidden").get<std::size_t>();
  cfg.emb_dim = header.at("arch").at("emb_dim").get<std::size_t>();
  cfg.vocab = header.at("arch").at("vocab").get<std::size_t>();
  if (extra_json) *extra_json = header.value("meta", nlohmann::json::object()).dump();

  Rng scratch(0);
  SurrogateModel m(cfg, scratch);
  const auto shapes = expected_shapes(cfg);
  for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i) {
    Tensor t = read_tensor(f);
    if (t.shape() != shapes[i]) {
      throw std::runtime_error("load_model: parameter " +
                               std::string(SurrogateModel::param_names()[i]) +
                               " has unexpected shape");
    }
    m.param(i) = std::move(t);
  }
  return m;
}

}  // namespace hfshield
