#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "hfshield/freq_mask.hpp"
#include "hfshield/kernels.hpp"
#include "hfshield/metrics.hpp"
#include "hfshield/report.hpp"
#include "hfshield/rng.hpp"
#include "oracles.hpp"

using namespace hfshield;

namespace {

Image uniform_image(std::uint64_t seed, double lo, double hi, std::size_t h = 16,
                    std::size_t w = 16) {
  Rng rng(seed);
  Image img(3, h, w);
  for (std::size_t i = 0; i < img.tensor().size(); ++i) {
    img.tensor().data()[i] = lo + (hi - lo) * rng.uniform();
  }
  return img;
}

Tensor sign_noise(std::uint64_t seed, const std::vector<std::size_t>& shape, double amp) {
  Rng rng(seed);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform() < 0.5 ? -amp : amp;
  return t;
}

Image checkerboard(std::size_t n) {
  Image img(3, n, n);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) img.at(c, y, x) = double((y + x) % 2);
    }
  }
  return img;
}

}  // namespace

TEST_CASE("mse and psnr basics") {
  Image a = uniform_image(1, 0.1, 0.8);
  CHECK(mse(a.tensor(), a.tensor()) == 0.0);
  CHECK(std::isinf(psnr(a.tensor(), a.tensor())));
  CHECK(psnr(a.tensor(), a.tensor()) > 0.0);

  Tensor b = add_scalar(a.tensor(), 0.1);
  CHECK(mse(a.tensor(), b) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(psnr(a.tensor(), b) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr(a.tensor(), b) == psnr(b, a.tensor()));

  Tensor wrong({3, 4, 4});
  CHECK_THROWS_AS(mse(a.tensor(), wrong), std::invalid_argument);
}

TEST_CASE("norm helpers") {
  Tensor t({2}, {3.0, -4.0});
  CHECK(l1_mean(t) == 3.5);
  CHECK(linf(t) == 4.0);
  CHECK(l2_norm(t) == 5.0);
}

TEST_CASE("retention: identity keeps everything, heavy blur little") {
  Image x = uniform_image(7, 0.3, 0.7);
  Tensor delta = sign_noise(8, x.tensor().shape(), 0.05);

  PurifierSpec ident;
  CHECK(retention_ratio(x, delta, ident) == 1.0);

  PurifierSpec heavy;
  heavy.kind = PurifierKind::gaussian;
  heavy.gaussian_sigma = 4.0;
  heavy.gaussian_radius = 8;
  double r = retention_ratio(x, delta, heavy);
  CHECK(r >= 0.0);
  CHECK(r < 0.5);
}

TEST_CASE("retention: scale-invariant in delta for a linear purifier") {
  Image x = uniform_image(9, 0.3, 0.7);
  Tensor delta = sign_noise(10, x.tensor().shape(), 0.05);
  PurifierSpec blur;
  blur.kind = PurifierKind::gaussian;

  double base = retention_ratio(x, delta, blur);
  for (double c : {0.5, 2.0}) {
    Tensor scaled(delta.shape());
    for (std::size_t i = 0; i < delta.size(); ++i) scaled.data()[i] = c * delta.data()[i];
    CHECK(retention_ratio(x, scaled, blur) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("retention: zero delta is rejected") {
  Image x = uniform_image(11, 0.2, 0.8);
  Tensor zero(x.tensor().shape());
  PurifierSpec ident;
  CHECK_THROWS_AS(retention_ratio(x, zero, ident), std::invalid_argument);
}

TEST_CASE("hf_energy: constant zero, checkerboard value by hand") {
  Image flat(3, 12, 12);
  for (std::size_t i = 0; i < flat.tensor().size(); ++i) flat.tensor().data()[i] = 0.42;
  CHECK(hf_energy(flat) == doctest::Approx(0.0).epsilon(1e-12));

  // 16x16 checkerboard under replicate padding: interior |lap| = 4 (196 px),
  // border edges 3 (56 px), corners 2 (4 px) -> mean 960/256
  Image cb = checkerboard(16);
  CHECK(hf_energy(cb) == doctest::Approx(960.0 / 256.0).epsilon(1e-12));

  Tensor lap = laplacian_edge(to_luminance(cb));
  double interior = 0.0;
  for (std::size_t y = 1; y < 15; ++y) {
    for (std::size_t x = 1; x < 15; ++x) interior += lap.at(y, x);
  }
  CHECK(interior / 196.0 == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("hf_energy: noise strictly increases it, 20 seeds") {
  // smooth base: blurred uniform noise
  Image base(uniform_image(21, 0.2, 0.8, 16, 16));
  base = Image(kernels::gaussian_blur(base.tensor(), 2.0, 4));
  double e0 = hf_energy(base);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(1000 + s);
    Tensor noise = Tensor::randn(base.tensor().shape(), rng, 0.1);
    Image noisy(clip(add(base.tensor(), noise), 0.0, 1.0));
    CHECK(hf_energy(noisy) > e0);
  }
}

TEST_CASE("summarize: mean and population std") {
  CHECK_THROWS_AS(summarize({}), std::invalid_argument);
  Stat one = summarize({3.25});
  CHECK(one.mean == 3.25);
  CHECK(one.stddev == 0.0);
  Stat two = summarize({0.25, 0.75});
  CHECK(two.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(two.stddev == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("build_report: aggregates match a two-pass oracle") {
  std::vector<ConditionSamples> conds;
  ConditionSamples c1;
  c1.arm = "hf";
  c1.purifier = "bilateral";
  c1.delta_l1 = {0.01, 0.02, 0.03};
  c1.delta_linf = {0.5, 0.5, 0.5};
  c1.retention = {0.9, 0.8, 0.7};
  c1.psnr_attacked = {30.0, 31.0, 29.0};
  c1.gen_mse = {0.1, 0.2, 0.3};
  c1.gen_hf = {1.0, 2.0, 3.0};
  ConditionSamples c2;
  c2.arm = "none";
  c2.purifier = "identity";
  c2.gen_mse = {0.05, 0.06, 0.07};
  c2.gen_hf = {0.5, 0.6, 0.7};
  conds = {c1, c2};

  MetricsReport rep = build_report(conds);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].n == 3);
  CHECK(rep.rows[1].n == 3);
  CHECK_FALSE(rep.rows[1].retention.has_value());

  // independent two-pass mean/std
  auto two_pass = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return Stat{m, std::sqrt(v / double(xs.size()))};
  };
  Stat ret = two_pass(c1.retention);
  CHECK(std::abs(rep.rows[0].retention->mean - ret.mean) < 1e-12);
  CHECK(std::abs(rep.rows[0].retention->stddev - ret.stddev) < 1e-12);
  Stat gm = two_pass(c2.gen_mse);
  CHECK(std::abs(rep.rows[1].gen_mse->mean - gm.mean) < 1e-12);
  CHECK(std::abs(rep.rows[1].gen_mse->stddev - gm.stddev) < 1e-12);
}

TEST_CASE("build_report: rejects empty, ragged, and sample-free conditions") {
  CHECK_THROWS_AS(build_report({}), std::invalid_argument);

  ConditionSamples ragged;
  ragged.arm = "hf";
  ragged.purifier = "identity";
  ragged.delta_l1 = {0.1, 0.2};
  ragged.gen_mse = {0.1};
  CHECK_THROWS_AS(build_report({ragged}), std::invalid_argument);

  ConditionSamples hollow;
  hollow.arm = "hf";
  hollow.purifier = "identity";
  CHECK_THROWS_AS(build_report({hollow}), std::invalid_argument);
}

TEST_CASE("csv and table serialization are deterministic and complete") {
  ConditionSamples c;
  c.arm = "uniform";
  c.purifier = "diffpure";
  c.delta_l1 = {0.25, 0.75};
  c.delta_linf = {0.02, 0.02};
  c.retention = {0.5, 0.5};
  c.psnr_attacked = {std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
  c.gen_mse = {0.125, 0.375};
  c.gen_hf = {2.0, 4.0};
  ConditionSamples clean;
  clean.arm = "none";
  clean.purifier = "identity";
  clean.gen_mse = {0.5};
  clean.gen_hf = {0.25};

  MetricsReport rep = build_report({c, clean});
  std::string csv = to_csv(rep);
  CHECK(csv == to_csv(rep));
  CHECK(csv.find("arm,purifier,n_identities") == 0);
  CHECK(csv.find("uniform,diffpure,2,0.5,0.25,") != std::string::npos);
  CHECK(csv.find("inf,nan") != std::string::npos);  // psnr of identical images
  CHECK(csv.find("na,na") != std::string::npos);   // clean row has no delta stats
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  std::string table = to_table(rep);
  CHECK(table.find("+/-") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(table.find("uniform") != std::string::npos);
  // every line same width
  std::size_t firstw = table.find('\n');
  std::size_t pos = 0;
  while (pos < table.size()) {
    std::size_t e = table.find('\n', pos);
    CHECK(e - pos <= firstw);
    pos = e + 1;
  }
}

TEST_CASE("grid png: tiles land in row-major cells") {
  oracles::TmpDir tmp("grid");
  std::vector<Image> tiles;
  for (int i = 0; i < 5; ++i) {
    Image t(3, 8, 8);
    for (std::size_t k = 0; k < t.tensor().size(); ++k) t.tensor().data()[k] = 0.2 * i / 4.0 + 0.1;
    tiles.push_back(t);
  }
  auto path = tmp.path() / "grid.png";
  write_grid_png(path, tiles, 3);
  Image grid = load_png(path);
  CHECK(grid.height() == 16);
  CHECK(grid.width() == 24);
  // cell (1,1) holds tile 4; the last cell (1,2) is unused and black
  CHECK(grid.at(0, 12, 12) == doctest::Approx(0.2 + 0.1).epsilon(0.01));
  CHECK(grid.at(0, 12, 20) == 0.0);

  CHECK_THROWS_AS(write_grid_png(path, {}, 2), std::invalid_argument);
  CHECK_THROWS_AS(write_grid_png(path, tiles, 0), std::invalid_argument);
}
