#include "hfshield/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace hfshield {

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("Tape: invalid Var handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("Tape: invalid Var handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backprop)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = node(v);
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) {
    // lazily materialize the zero gradient for unreached tensors
    const_cast<Node&>(n).grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& l = node(loss);
  if (l.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got size " +
                                std::to_string(l.value.size()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  l.grad = Tensor(l.value.shape(), 1.0);
  // recording order is a topological order, so the reverse visits each op
  // exactly once with its output gradient complete
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backprop && !n.grad.empty()) n.backprop(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  }
}

Var Tape::add(Var a, Var b) {
  Tensor out = hfshield::add(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = hfshield::sub(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, hfshield::scale(g, -1.0));
  });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = hfshield::mul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, hfshield::mul(g, t.value(b)));
    t.accumulate(b, hfshield::mul(g, t.value(a)));
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = hfshield::scale(value(a), s);
  return push(std::move(out),
              [a, s](Tape& t, const Tensor& g) { t.accumulate(a, hfshield::scale(g, s)); });
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = hfshield::add_scalar(value(a), s);
  return push(std::move(out), [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var Tape::tanh(Var a) {
  Tensor out = tanh_elem(value(a));
  Var v = push(std::move(out), nullptr);
  node(v).backprop = [a, v](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(v);
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - y[i] * y[i]);
    t.accumulate(a, ga);
  };
  return v;
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = hfshield::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Tensor ga({m, k});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * bv.at(p, j);
        ga.at(i, p) = acc;
      }
    Tensor gb({k, n});
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += av.at(i, p) * g.at(i, j);
        gb.at(p, j) = acc;
      }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

Var Tape::sum(Var a) {
  Tensor out = Tensor::scalar(hfshield::sum(value(a)));
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor(t.value(a).shape(), g[0]));
  });
}

Var Tape::mean(Var a) {
  Tensor out = Tensor::scalar(hfshield::mean(value(a)));
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    const double s = g[0] / static_cast<double>(t.value(a).size());
    t.accumulate(a, Tensor(t.value(a).shape(), s));
  });
}

Var Tape::add_channel_bias(Var a, Var bias) {
  Tensor out = hfshield::add_channel_bias(value(a), value(bias));
  return push(std::move(out), [a, bias](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    const std::size_t c = g.shape()[0], hw = g.shape()[1] * g.shape()[2];
    Tensor gb({c});
    for (std::size_t ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += g[ci * hw + i];
      gb[ci] = acc;
    }
    t.accumulate(bias, gb);
  });
}

Var Tape::conv2d(Var in, Var kernel, kernels::Padding pad) {
  Tensor out = kernels::conv2d_forward(value(in), value(kernel), pad);
  return push(std::move(out), [in, kernel, pad](Tape& t, const Tensor& g) {
    const Tensor& iv = t.value(in);
    const Tensor& kv = t.value(kernel);
    t.accumulate(in, kernels::conv2d_grad_input(g, kv, pad, iv.shape()[1], iv.shape()[2]));
    t.accumulate(kernel, kernels::conv2d_grad_kernel(g, iv, pad, kv.shape()[2]));
  });
}

Var Tape::select_row(Var matrix, std::size_t row) {
  const Tensor& m = value(matrix);
  if (m.rank() != 2 || row >= m.shape()[0]) {
    throw std::invalid_argument("select_row: need [R,D] matrix and row < R");
  }
  const std::size_t d = m.shape()[1];
  Tensor out({d});
  for (std::size_t j = 0; j < d; ++j) out[j] = m.at(row, j);
  return push(std::move(out), [matrix, row, d](Tape& t, const Tensor& g) {
    Tensor gm(t.value(matrix).shape());
    for (std::size_t j = 0; j < d; ++j) gm.at(row, j) = g[j];
    t.accumulate(matrix, gm);
  });
}

}  // namespace hfshield
