#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "hfshield/kernels.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Single-writer: record a graph, call backward(loss) once
// for a scalar loss, then read grad(v) for any recorded tensor. Tensors never
// reached from the loss keep an all-zero gradient. A tape may be reused for
// further recording after backward; gradients are reset by the next backward.
class Tape {
 public:
  Var leaf(Tensor value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var tanh(Var a);
  Var matmul(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);
  // [C,H,W] + [C]
  Var add_channel_bias(Var a, Var bias);
  // in [Ci,H,W], kernel [Co,Ci,k,k]
  Var conv2d(Var in, Var kernel, kernels::Padding pad);
  // one row of a [R,D] matrix as a [D] vector; backward scatters into that row
  Var select_row(Var matrix, std::size_t row);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Tensor&)> backprop;  // null for leaves
  };

  Var push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop);
  void accumulate(Var v, const Tensor& g);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace hfshield
