#pragma once

#include <cstddef>

#include "hfshield/image.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

enum class LaplacianKind { four_neighbor, eight_neighbor };

// Binary edge mask with an exact number of selected pixels.
struct BinaryMask {
  Tensor m;           // [H,W], values in {0,1}
  double rho = 0.0;   // requested ratio
  std::size_t ones = 0;

  bool on(std::size_t y, std::size_t x) const { return m.at(y, x) != 0.0; }
  static BinaryMask full(std::size_t h, std::size_t w);
};

// |conv2d(img, K)| with replicate padding; img must be single-channel [1,H,W]
Tensor laplacian_edge(const Image& gray, LaplacianKind kind = LaplacianKind::four_neighbor);

// selects exactly ceil(rho*H*W) pixels with the largest magnitudes; ties
// broken toward the smaller row-major index
BinaryMask threshold_for_ratio(const Tensor& edges, double rho);

// luminance -> Laplacian magnitude -> exact-ratio threshold
BinaryMask build_mask(const Image& rgb, double rho,
                      LaplacianKind kind = LaplacianKind::four_neighbor);

}  // namespace hfshield
