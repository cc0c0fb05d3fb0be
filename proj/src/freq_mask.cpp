#include "hfshield/freq_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hfshield/kernels.hpp"

namespace hfshield {

BinaryMask BinaryMask::full(std::size_t h, std::size_t w) {
  BinaryMask mask;
  mask.m = Tensor({h, w}, 1.0);
  mask.rho = 1.0;
  mask.ones = h * w;
  return mask;
}

Tensor laplacian_edge(const Image& gray, LaplacianKind kind) {
  if (gray.channels() != 1) throw std::invalid_argument("laplacian_edge: need a 1-channel image");
  Tensor k({1, 1, 3, 3});
  if (kind == LaplacianKind::four_neighbor) {
    const double vals[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
    for (int i = 0; i < 9; ++i) k[i] = vals[i];
  } else {
    const double vals[9] = {1, 1, 1, 1, -8, 1, 1, 1, 1};
    for (int i = 0; i < 9; ++i) k[i] = vals[i];
  }
  Tensor resp = kernels::conv2d_forward(gray.tensor(), k, kernels::Padding::replicate);
  Tensor out({gray.height(), gray.width()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(resp[i]);
  return out;
}

BinaryMask threshold_for_ratio(const Tensor& edges, double rho) {
  if (edges.rank() != 2) throw std::invalid_argument("threshold_for_ratio: edges must be [H,W]");
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("threshold_for_ratio: rho must be in (0,1)");
  }
  const std::size_t n = edges.size();
  const std::size_t k =
      static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (edges[a] != edges[b]) return edges[a] > edges[b];
    return a < b;
  });
  BinaryMask mask;
  mask.m = Tensor(edges.shape());
  mask.rho = rho;
  mask.ones = k;
  for (std::size_t i = 0; i < k; ++i) mask.m[idx[i]] = 1.0;
  return mask;
}

BinaryMask build_mask(const Image& rgb, double rho, LaplacianKind kind) {
  return threshold_for_ratio(laplacian_edge(to_luminance(rgb), kind), rho);
}

}  // namespace hfshield
