#pragma once

#include <cstddef>
#include <vector>

#include "hfshield/tensor.hpp"

// Hot inner loops: 2D convolution (forward and both gradients) and the two
// smoothing filters. Each kernel exists in a serial and an OpenMP variant.
// The OpenMP variants parallelize only over independent output slices and
// run the same per-slice code as the serial ones, so the two backends are
// bit-identical; the serial variant is the reference the tests compare
// against and the baseline for the benchmark target.
namespace hfshield::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int max_threads();

enum class Padding { zero, replicate };

// in: [Ci,H,W], kernel: [Co,Ci,k,k] (k odd), out: [Co,H,W] (same padding, stride 1)
Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, Padding pad);
Tensor conv2d_forward_serial(const Tensor& in, const Tensor& kernel, Padding pad);
Tensor conv2d_forward_omp(const Tensor& in, const Tensor& kernel, Padding pad);

// grad_out: [Co,H,W] -> gradient w.r.t. the [Ci,H,W] input
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                         std::size_t in_h, std::size_t in_w);
Tensor conv2d_grad_input_serial(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                                std::size_t in_h, std::size_t in_w);
Tensor conv2d_grad_input_omp(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                             std::size_t in_h, std::size_t in_w);

// grad_out: [Co,H,W], in: [Ci,H,W] -> gradient w.r.t. the [Co,Ci,k,k] kernel
Tensor conv2d_grad_kernel(const Tensor& grad_out, const Tensor& in, Padding pad, std::size_t k);
Tensor conv2d_grad_kernel_serial(const Tensor& grad_out, const Tensor& in, Padding pad,
                                 std::size_t k);
Tensor conv2d_grad_kernel_omp(const Tensor& grad_out, const Tensor& in, Padding pad,
                              std::size_t k);

// separable Gaussian, kernel normalized to sum 1, replicate padding; img [C,H,W]
Tensor gaussian_blur(const Tensor& img, double sigma, int radius);
Tensor gaussian_blur_serial(const Tensor& img, double sigma, int radius);
Tensor gaussian_blur_omp(const Tensor& img, double sigma, int radius);

// bilateral with range weights computed on lum [H,W], shared by all channels
Tensor bilateral(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r, int radius);
Tensor bilateral_serial(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                        int radius);
Tensor bilateral_omp(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                     int radius);

// replicate- or zero-pad [C,H,W] by p on each spatial side
Tensor pad2d(const Tensor& in, std::size_t p, Padding mode);

}  // namespace hfshield::kernels
