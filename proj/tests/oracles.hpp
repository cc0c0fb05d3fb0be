#pragma once

// Test-only reference implementations and checking helpers. These stay
// independent of the library's kernel/backprop code paths on purpose: the
// naive convolution walks the input directly instead of going through a
// padded buffer, and gradients are checked against central finite
// differences of freshly rebuilt graphs.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hfshield/autograd.hpp"
#include "hfshield/kernels.hpp"
#include "hfshield/tensor.hpp"

namespace oracles {

inline double sample_padded(const hfshield::Tensor& in, std::size_t c, std::ptrdiff_t y,
                            std::ptrdiff_t x, hfshield::kernels::Padding pad) {
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(in.shape()[1]);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(in.shape()[2]);
  if (pad == hfshield::kernels::Padding::zero) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
  } else {
    y = std::min(h - 1, std::max<std::ptrdiff_t>(0, y));
    x = std::min(w - 1, std::max<std::ptrdiff_t>(0, x));
  }
  return in.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
}

// direct cross-correlation, same padding
inline hfshield::Tensor naive_conv2d(const hfshield::Tensor& in, const hfshield::Tensor& k,
                                     hfshield::kernels::Padding pad) {
  const std::size_t co = k.shape()[0], ci = k.shape()[1], ks = k.shape()[2];
  const std::size_t h = in.shape()[1], w = in.shape()[2];
  const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(ks / 2);
  hfshield::Tensor out({co, h, w});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t dy = 0; dy < ks; ++dy)
            for (std::size_t dx = 0; dx < ks; ++dx) {
              acc += sample_padded(in, i, static_cast<std::ptrdiff_t>(y + dy) - p,
                                   static_cast<std::ptrdiff_t>(x + dx) - p, pad) *
                     k.at(o, i, dy, dx);
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

// graph builder: given a tape and leaf handles (one per input tensor), return the scalar loss
using GraphFn =
    std::function<hfshield::Var(hfshield::Tape&, const std::vector<hfshield::Var>&)>;

inline double eval_graph(const GraphFn& f, const std::vector<hfshield::Tensor>& inputs) {
  hfshield::Tape tape;
  std::vector<hfshield::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  return tape.value(f(tape, vars))[0];
}

inline std::vector<hfshield::Tensor> analytic_grads(const GraphFn& f,
                                                    const std::vector<hfshield::Tensor>& inputs) {
  hfshield::Tape tape;
  std::vector<hfshield::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(f(tape, vars));
  std::vector<hfshield::Tensor> grads;
  for (auto v : vars) grads.push_back(tape.grad(v));
  return grads;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0, worst_elem = 0;
};

// central finite differences over every element of every input
inline GradCheckResult grad_check(const GraphFn& f, std::vector<hfshield::Tensor> inputs,
                                  double h = 1e-5, double denom_floor = 1e-4) {
  const auto grads = analytic_grads(f, inputs);
  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double keep = inputs[i][e];
      inputs[i][e] = keep + h;
      const double fp = eval_graph(f, inputs);
      inputs[i][e] = keep - h;
      const double fm = eval_graph(f, inputs);
      inputs[i][e] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = grads[i][e];
      const double denom = std::max({std::fabs(a), std::fabs(fd), denom_floor});
      const double rel = std::fabs(a - fd) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_input = i;
        res.worst_elem = e;
      }
    }
  }
  return res;
}

inline double max_abs_diff(const hfshield::Tensor& a, const hfshield::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

class TmpDir {
 public:
  explicit TmpDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("hfshield_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracles
