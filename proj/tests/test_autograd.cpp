#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hfshield/autograd.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/tensor.hpp"
#include "oracles.hpp"

using hfshield::Rng;
using hfshield::Tape;
using hfshield::Tensor;
using hfshield::Var;
namespace ker = hfshield::kernels;

TEST_CASE("gradient of sum is all ones, gradient of half squared norm is the input") {
  Rng rng(1);
  auto x = hfshield::Tensor::randn({3, 4}, rng);

  Tape t1;
  auto v = t1.leaf(x);
  t1.backward(t1.sum(v));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(t1.grad(v)[i] == 1.0);

  Tape t2;
  auto u = t2.leaf(x);
  t2.backward(t2.scale(t2.sum(t2.mul(u, u)), 0.5));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(t2.grad(u)[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape t;
  auto v = t.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(t.backward(v), std::invalid_argument);
}

TEST_CASE("a value used twice accumulates both contributions") {
  Tensor x({2});
  x[0] = 3.0;
  x[1] = -1.0;
  Tape t;
  auto v = t.leaf(x);
  // loss = sum(x + x) -> grad 2 everywhere
  t.backward(t.sum(t.add(v, v)));
  CHECK(t.grad(v)[0] == 2.0);
  CHECK(t.grad(v)[1] == 2.0);
}

TEST_CASE("tensors unreachable from the loss keep zero gradient") {
  Tape t;
  auto a = t.leaf(Tensor({3}));
  Tensor b({2});
  b[0] = 1.0;
  b[1] = 2.0;
  auto v = t.leaf(b);
  t.backward(t.sum(t.mul(v, v)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(t.grad(a)[i] == 0.0);
  CHECK(t.grad(v)[0] == 2.0);
  CHECK(t.grad(v)[1] == 4.0);
}

TEST_CASE("every op passes a finite-difference check on random inputs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(900 + seed);
    auto x = hfshield::Tensor::randn({2, 4, 5}, rng, 0.5);
    auto y = hfshield::Tensor::randn({2, 4, 5}, rng, 0.5);
    auto r = hfshield::Tensor::randn({2, 4, 5}, rng);
    auto bias = hfshield::Tensor::randn({2}, rng, 0.5);
    auto kern = hfshield::Tensor::randn({3, 2, 3, 3}, rng, 0.5);
    auto rc = hfshield::Tensor::randn({3, 4, 5}, rng);
    auto ma = hfshield::Tensor::randn({3, 4}, rng, 0.5);
    auto mb = hfshield::Tensor::randn({4, 2}, rng, 0.5);
    auto rm = hfshield::Tensor::randn({3, 2}, rng);
    auto rrow = hfshield::Tensor::randn({4}, rng);

    const auto weighted = [](Tape& t, Var out, const Tensor& w) {
      return t.sum(t.mul(out, t.leaf(w)));
    };

    struct Case {
      const char* name;
      oracles::GraphFn fn;
      std::vector<Tensor> inputs;
      double tol;
    };
    const Case cases[] = {
        {"add",
         [&](Tape& t, const std::vector<Var>& v) { return weighted(t, t.add(v[0], v[1]), r); },
         {x, y},
         1e-5},
        {"sub",
         [&](Tape& t, const std::vector<Var>& v) { return weighted(t, t.sub(v[0], v[1]), r); },
         {x, y},
         1e-5},
        {"mul",
         [&](Tape& t, const std::vector<Var>& v) { return weighted(t, t.mul(v[0], v[1]), r); },
         {x, y},
         1e-5},
        {"scale",
         [&](Tape& t, const std::vector<Var>& v) { return weighted(t, t.scale(v[0], -1.7), r); },
         {x},
         1e-5},
        {"add_scalar",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.add_scalar(v[0], 0.3), r);
         },
         {x},
         1e-5},
        {"tanh",
         [&](Tape& t, const std::vector<Var>& v) { return weighted(t, t.tanh(v[0]), r); },
         {x},
         1e-5},
        {"matmul",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.matmul(v[0], v[1]), rm);
         },
         {ma, mb},
         1e-5},
        {"sum", [&](Tape& t, const std::vector<Var>& v) { return t.scale(t.sum(v[0]), 0.7); },
         {x}, 1e-5},
        {"mean", [&](Tape& t, const std::vector<Var>& v) { return t.scale(t.mean(v[0]), 1.3); },
         {x}, 1e-5},
        {"add_channel_bias",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.add_channel_bias(v[0], v[1]), r);
         },
         {x, bias},
         1e-5},
        {"conv2d_zero",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.conv2d(v[0], v[1], ker::Padding::zero), rc);
         },
         {x, kern},
         1e-5},
        {"conv2d_replicate",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.conv2d(v[0], v[1], ker::Padding::replicate), rc);
         },
         {x, kern},
         1e-5},
        {"select_row",
         [&](Tape& t, const std::vector<Var>& v) {
           return weighted(t, t.select_row(v[0], 1), rrow);
         },
         {ma},
         1e-5},
    };
    for (const auto& c : cases) {
      auto res = oracles::grad_check(c.fn, c.inputs);
      INFO(c.name << " seed " << seed << " worst input " << res.worst_input << " elem "
                  << res.worst_elem);
      CHECK(res.max_rel_err < c.tol);
    }
  }
}

TEST_CASE("a two-layer convolutional net gradchecks tightly") {
  Rng rng(77);
  auto x = hfshield::Tensor::randn({1, 8, 8}, rng, 0.5);
  auto w1 = hfshield::Tensor::randn({4, 1, 3, 3}, rng, 0.3);
  auto b1 = hfshield::Tensor::randn({4}, rng, 0.1);
  auto w2 = hfshield::Tensor::randn({1, 4, 3, 3}, rng, 0.3);
  auto b2 = hfshield::Tensor::randn({1}, rng, 0.1);
  auto target = hfshield::Tensor::randn({1, 8, 8}, rng, 0.5);

  oracles::GraphFn net = [&](Tape& t, const std::vector<Var>& v) {
    auto h1 = t.tanh(t.add_channel_bias(t.conv2d(v[0], v[1], ker::Padding::zero), v[2]));
    auto out = t.add_channel_bias(t.conv2d(h1, v[3], ker::Padding::zero), v[4]);
    auto diff = t.sub(out, t.leaf(target));
    return t.mean(t.mul(diff, diff));
  };
  auto res = oracles::grad_check(net, {x, w1, b1, w2, b2});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("select_row only touches its row") {
  Rng rng(5);
  auto m = hfshield::Tensor::randn({3, 4}, rng);
  Tape t;
  auto v = t.leaf(m);
  t.backward(t.sum(t.select_row(v, 2)));
  const auto& g = t.grad(v);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(g.at(r, c) == (r == 2 ? 1.0 : 0.0));
}

TEST_CASE("forward values and gradients are deterministic") {
  Rng r1(9), r2(9);
  auto run = [](Rng& rng) {
    auto x = hfshield::Tensor::randn({2, 6, 6}, rng, 0.5);
    auto k = hfshield::Tensor::randn({2, 2, 3, 3}, rng, 0.5);
    Tape t;
    auto vx = t.leaf(x), vk = t.leaf(k);
    auto out = t.tanh(t.conv2d(vx, vk, ker::Padding::replicate));
    t.backward(t.mean(t.mul(out, out)));
    return std::pair<Tensor, Tensor>(t.grad(vx), t.grad(vk));
  };
  auto [gx1, gk1] = run(r1);
  auto [gx2, gk2] = run(r2);
  CHECK(hfshield::bitwise_equal(gx1, gx2));
  CHECK(hfshield::bitwise_equal(gk1, gk2));
}
