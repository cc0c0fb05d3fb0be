#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hfshield/dataset.hpp"
#include "hfshield/model.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/sampler.hpp"
#include "hfshield/schedule.hpp"
#include "hfshield/train.hpp"
#include "oracles.hpp"

using namespace hfshield;

namespace {

ModelConfig reduced_config() {
  ModelConfig c;
  c.hidden = 4;
  c.emb_dim = 4;
  return c;
}

// small trained model shared by the slower cases; 16x16 data, one identity
struct TrainedFixture {
  DiffusionSchedule sched = make_schedule(100, 1e-4, 0.02);
  std::vector<IdentityData> data = generate_dataset(2, 5, 16);
  SurrogateModel base;
  TrainedFixture() {
    TrainConfig cfg;
    cfg.steps = 800;
    cfg.seed = 11;
    base = train_base(data, sched, cfg);
  }
};

const TrainedFixture& trained() {
  static TrainedFixture f;
  return f;
}

double mean_pool_loss(const SurrogateModel& m, const DiffusionSchedule& sched,
                      const std::vector<IdentityData>& data, std::uint64_t seed,
                      std::size_t draws) {
  Rng rng(seed);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (const auto& id : data) {
      for (const auto& img : id.originals) {
        acc += loss_cond(m, sched, img.tensor(), kTokenClass, rng);
        ++n;
      }
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("schedule: defining identities and the pinned endpoint") {
  auto s = make_schedule(100, 1e-4, 0.02);
  CHECK(s.alpha_bar[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-12));
  for (std::size_t t = 2; t <= 100; ++t) {
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.alpha_bar[t] > 0.0);
    CHECK(s.alpha_bar[t] < 1.0);
    CHECK(s.beta[t] > s.beta[t - 1]);
  }
  CHECK(s.beta[1] == 1e-4);
  CHECK(s.beta[100] == doctest::Approx(0.02).epsilon(1e-12));

  // independent accumulation of the product
  double prod = 1.0;
  for (std::size_t t = 1; t <= 100; ++t) {
    prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * static_cast<double>(t - 1) / 99.0);
  }
  CHECK(s.alpha_bar[100] == doctest::Approx(prod).epsilon(1e-12));
  CHECK(std::fabs(s.alpha_bar[100] - 0.36) < 0.01);

  CHECK(s.posterior_var[1] == 0.0);
  CHECK(s.posterior_var[2] > 0.0);

  CHECK_THROWS_AS(make_schedule(1, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(100, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(100, 0.03, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(100, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("forward_diffuse endpoints and noise variance") {
  auto s = make_schedule(100, 1e-4, 0.02);
  Rng rng(3);
  auto x0 = Tensor::randn({3, 4, 4}, rng, 0.25);
  Tensor zero(x0.shape());

  auto no_noise = forward_diffuse(x0, 40, zero, s);
  const double a40 = std::sqrt(s.alpha_bar[40]);
  for (std::size_t i = 0; i < x0.size(); ++i)
    CHECK(no_noise[i] == doctest::Approx(a40 * x0[i]).epsilon(1e-12));

  auto eps = Tensor::randn({3, 4, 4}, rng);
  auto pure = forward_diffuse(zero, 70, eps, s);
  const double b70 = std::sqrt(1.0 - s.alpha_bar[70]);
  for (std::size_t i = 0; i < eps.size(); ++i)
    CHECK(pure[i] == doctest::Approx(b70 * eps[i]).epsilon(1e-12));

  CHECK_THROWS_AS(forward_diffuse(x0, 0, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_diffuse(x0, 101, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_diffuse(x0, 10, Tensor({3, 4, 5}), s), std::invalid_argument);

  // pooled sample variance of x_t - sqrt(ab)*x0 over 1e4 draws
  const std::size_t t = 55;
  const double want = 1.0 - s.alpha_bar[t];
  Rng mc(99);
  double acc = 0.0, acc2 = 0.0;
  std::size_t n = 0;
  for (int d = 0; d < 10000 / 16; ++d) {
    auto e = Tensor::randn({1, 4, 4}, mc);
    Tensor x0s({1, 4, 4});
    auto xt = forward_diffuse(x0s, t, e, s);
    for (std::size_t i = 0; i < xt.size(); ++i) {
      acc += xt[i];
      acc2 += xt[i] * xt[i];
      ++n;
    }
  }
  const double m = acc / static_cast<double>(n);
  const double var = acc2 / static_cast<double>(n) - m * m;
  CHECK(var == doctest::Approx(want).epsilon(0.05));
}

TEST_CASE("time and token embeddings are well-formed") {
  auto e1 = SurrogateModel::time_embedding(1, 16);
  auto e2 = SurrogateModel::time_embedding(2, 16);
  CHECK(e1.shape()[1] == 16);
  CHECK_FALSE(bitwise_equal(e1, e2));
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(std::fabs(e1[i]) <= 1.0);

  CHECK(token_id("person") == kTokenClass);
  CHECK(token_id("sks") == kTokenInstance);
  CHECK_THROWS_AS(token_id("dog"), std::invalid_argument);
}

TEST_CASE("untrained loss sits near one and is seed-deterministic") {
  Rng init(1);
  SurrogateModel m(ModelConfig{}, init);
  auto s = make_schedule(100, 1e-4, 0.02);
  auto data = generate_dataset(1, 2, 16);
  const auto& x0 = data[0].originals[0].tensor();

  Rng a(42), b(42);
  CHECK(loss_cond(m, s, x0, kTokenClass, a) == loss_cond(m, s, x0, kTokenClass, b));

  Rng mc(7);
  double acc = 0.0;
  for (int i = 0; i < 100; ++i) acc += loss_cond(m, s, x0, kTokenClass, mc);
  CHECK(acc / 100.0 == doctest::Approx(1.0).epsilon(0.2));

  CHECK_THROWS_AS(loss_cond(m, s, x0, 99, a), std::invalid_argument);
}

TEST_CASE("personalization loss decomposes into its two terms") {
  Rng init(2);
  SurrogateModel m(ModelConfig{}, init);
  auto s = make_schedule(100, 1e-4, 0.02);
  auto data = generate_dataset(1, 3, 16);
  const auto& x = data[0].originals[0].tensor();
  std::vector<Tensor> priors;
  for (int i = 0; i < 3; ++i) priors.push_back(data[0].references[i].tensor());

  // lambda 0: exactly the instance term
  {
    Rng r1(5), r2(5);
    CHECK(loss_db(m, s, x, kTokenInstance, priors, 0.0, r1) ==
          loss_cond(m, s, x, kTokenInstance, r2));
  }
  // lambda 1: the sum of the two terms computed with a replayed rng
  {
    Rng whole(6);
    const double got = loss_db(m, s, x, kTokenInstance, priors, 1.0, whole);
    Rng replay(6);
    const double inst = loss_cond(m, s, x, kTokenInstance, replay);
    const auto& prior = priors[replay.uniform_int(priors.size())];
    const double pr = loss_cond(m, s, prior, kTokenClass, replay);
    CHECK(got == inst + pr);
  }
  // empty prior set degrades to the instance term
  {
    Rng r1(8), r2(8);
    CHECK(loss_db(m, s, x, kTokenInstance, {}, 1.0, r1) ==
          loss_cond(m, s, x, kTokenInstance, r2));
  }
}

TEST_CASE("loss gradients match finite differences on the reduced model") {
  Rng init(3);
  SurrogateModel m(reduced_config(), init);
  auto s = make_schedule(100, 1e-4, 0.02);
  Rng imgr(4);
  Tensor x = clip(Tensor::randn({3, 8, 8}, imgr, 0.2), 0.0, 1.0);
  std::vector<Tensor> priors = {clip(Tensor::randn({3, 8, 8}, imgr, 0.2), 0.0, 1.0)};

  const std::uint64_t seed = 31;
  Rng grad_rng(seed);
  auto ev = loss_db_grad(m, s, x, kTokenInstance, priors, 1.0, grad_rng);

  const double h = 1e-5;
  double worst = 0.0;
  // input gradient
  for (std::size_t e = 0; e < x.size(); ++e) {
    Tensor p = x, q = x;
    p[e] += h;
    q[e] -= h;
    Rng rp(seed), rq(seed);
    const double fd =
        (loss_db(m, s, p, kTokenInstance, priors, 1.0, rp) -
         loss_db(m, s, q, kTokenInstance, priors, 1.0, rq)) /
        (2.0 * h);
    const double a = ev.input_grad[e];
    worst = std::max(worst, std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-4}));
  }
  // parameter gradients
  for (std::size_t pi = 0; pi < SurrogateModel::kNumParams; ++pi) {
    for (std::size_t e = 0; e < m.param(pi).size(); ++e) {
      SurrogateModel mp = m, mq = m;
      mp.param(pi)[e] += h;
      mq.param(pi)[e] -= h;
      Rng rp(seed), rq(seed);
      const double fd = (loss_db(mp, s, x, kTokenInstance, priors, 1.0, rp) -
                         loss_db(mq, s, x, kTokenInstance, priors, 1.0, rq)) /
                        (2.0 * h);
      const double a = ev.param_grads[pi][e];
      worst = std::max(worst, std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-4}));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  Rng init(4);
  SurrogateModel m(ModelConfig{}, init);
  auto before = m.params();
  auto s = make_schedule(100, 1e-4, 0.02);
  auto data = generate_dataset(1, 9, 16);

  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.lambda_prior = 0.0;
  cfg.seed = 1;
  Trainer tr(std::move(m), s, cfg);
  tr.finetune_step({&data[0].originals[0].tensor()}, kTokenClass, {});
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(bitwise_equal(tr.model().param(i), before[i]));
}

TEST_CASE("repeated steps on one image drive the loss down") {
  Rng init(5);
  SurrogateModel m(ModelConfig{}, init);
  auto s = make_schedule(100, 1e-4, 0.02);
  auto data = generate_dataset(1, 13, 16);
  const Tensor& img = data[0].originals[0].tensor();

  TrainConfig cfg;
  cfg.lambda_prior = 0.0;
  cfg.seed = 77;
  Trainer tr(std::move(m), s, cfg);
  double head = 0.0, tail = 0.0;
  for (int step = 0; step < 200; ++step) {
    const double l = tr.finetune_step({&img}, kTokenClass, {});
    if (step < 20) head += l;
    if (step >= 180) tail += l;
  }
  CHECK(tail / 20.0 < head / 20.0);
}

TEST_CASE("training is reproducible bit-exactly") {
  auto s = make_schedule(100, 1e-4, 0.02);
  auto data = generate_dataset(1, 21, 16);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.seed = 123;
  auto m1 = train_base(data, s, cfg);
  auto m2 = train_base(data, s, cfg);
  for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i)
    CHECK(bitwise_equal(m1.param(i), m2.param(i)));
}

TEST_CASE("pretraining halves the conditional loss") {
  const auto& f = trained();
  Rng init(mix64(std::uint64_t{11}, 0x1417));
  SurrogateModel fresh(ModelConfig{}, init);
  const double before = mean_pool_loss(fresh, f.sched, f.data, 404, 10);
  const double after = mean_pool_loss(f.base, f.sched, f.data, 404, 10);
  CHECK(before == doctest::Approx(1.0).epsilon(0.25));
  CHECK(after < 0.5 * before);
}

TEST_CASE("personalize: zero steps is the identity, fixed seed reproduces") {
  const auto& f = trained();
  std::vector<Tensor> imgs;
  for (const auto& im : f.data[0].originals) imgs.push_back(im.tensor());
  auto priors = sample_set(f.base, f.sched, kTokenClass, 7, 4, 16, 16);

  TrainConfig cfg;
  cfg.steps = 0;
  cfg.seed = 9;
  auto same = personalize(f.base, imgs, priors, f.sched, cfg);
  for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i)
    CHECK(bitwise_equal(same.param(i), f.base.param(i)));

  cfg.steps = 25;
  auto p1 = personalize(f.base, imgs, priors, f.sched, cfg);
  auto p2 = personalize(f.base, imgs, priors, f.sched, cfg);
  for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i)
    CHECK(bitwise_equal(p1.param(i), p2.param(i)));
}

TEST_CASE("sampling is deterministic, in range, and better than noise") {
  const auto& f = trained();
  auto s1 = sample(f.base, f.sched, kTokenClass, 51, 16, 16);
  auto s2 = sample(f.base, f.sched, kTokenClass, 51, 16, 16);
  auto s3 = sample(f.base, f.sched, kTokenClass, 52, 16, 16);
  CHECK(bitwise_equal(s1, s2));
  CHECK_FALSE(bitwise_equal(s1, s3));
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i] >= 0.0);
    CHECK(s1[i] <= 1.0);
  }

  // the model scores its own samples better than it scores pure noise images
  Rng noise_rng(60);
  Rng eval_rng(61);
  double loss_samples = 0.0, loss_noise = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto smp = sample(f.base, f.sched, kTokenClass, 1000 + static_cast<std::uint64_t>(i), 16, 16);
    auto junk = clip(Tensor::randn({3, 16, 16}, noise_rng, 1.0), 0.0, 1.0);
    Rng r1(mix64(std::uint64_t{70}, static_cast<std::uint64_t>(i)));
    Rng r2(mix64(std::uint64_t{70}, static_cast<std::uint64_t>(i)));
    loss_samples += loss_cond(f.base, f.sched, smp, kTokenClass, r1);
    loss_noise += loss_cond(f.base, f.sched, junk, kTokenClass, r2);
  }
  (void)eval_rng;
  CHECK(loss_samples < loss_noise);
}

TEST_CASE("checkpoint round trip preserves every bit and the metadata") {
  Rng init(8);
  SurrogateModel m(ModelConfig{}, init);
  oracles::TmpDir dir("ckpt");
  const auto path = dir.path() / "model.ckpt";
  save_model(m, path, "{\"steps\":123,\"seed\":7}");

  std::string meta;
  auto back = load_model(path, &meta);
  CHECK(back.config().hidden == m.config().hidden);
  for (std::size_t i = 0; i < SurrogateModel::kNumParams; ++i)
    CHECK(bitwise_equal(back.param(i), m.param(i)));
  CHECK(meta.find("123") != std::string::npos);

  CHECK_THROWS_AS(load_model(dir.path() / "missing.ckpt"), std::runtime_error);
  {
    std::ofstream junk(dir.path() / "junk.ckpt", std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_model(dir.path() / "junk.ckpt"), std::runtime_error);
}
