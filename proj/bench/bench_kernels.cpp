// Times the serial kernels against their OpenMP variants on personalization-
// sized workloads and verifies the two backends agree bitwise. Run with an
// optional repetition count: ./hfshield_bench [reps]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "hfshield/kernels.hpp"
#include "hfshield/rng.hpp"
#include "hfshield/tensor.hpp"

using namespace hfshield;
using kernels::Padding;

namespace {

double time_median(const std::function<Tensor()>& fn, int reps, Tensor* out) {
  std::vector<double> ts;
  ts.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    Tensor result = fn();
    auto t1 = std::chrono::steady_clock::now();
    ts.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (r == 0) *out = std::move(result);
  }
  std::sort(ts.begin(), ts.end());
  return ts[ts.size() / 2];
}

void row(const char* name, const std::function<Tensor()>& serial,
         const std::function<Tensor()>& omp, int reps) {
  Tensor a, b;
  const double ms_s = time_median(serial, reps, &a);
  const double ms_o = time_median(omp, reps, &b);
  std::printf("%-18s %10.3f ms %10.3f ms %8.2fx   %s\n", name, ms_s, ms_o, ms_s / ms_o,
              bitwise_equal(a, b) ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 9;
  std::printf("threads available: %d (OpenMP %s)\n", kernels::max_threads(),
              kernels::openmp_compiled() ? "compiled in" : "not compiled");
  std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(1234);
  Tensor in = Tensor::randn({16, 96, 96}, rng);
  Tensor k = Tensor::randn({16, 16, 3, 3}, rng, 0.1);
  Tensor gout = Tensor::randn({16, 96, 96}, rng);
  Tensor img = Tensor::randn({3, 256, 256}, rng, 0.2);
  Tensor lum = Tensor::randn({256, 256}, rng, 0.2);

  row("conv2d_forward",
      [&] { return kernels::conv2d_forward_serial(in, k, Padding::zero); },
      [&] { return kernels::conv2d_forward_omp(in, k, Padding::zero); }, reps);
  row("conv2d_grad_input",
      [&] { return kernels::conv2d_grad_input_serial(gout, k, Padding::zero, 96, 96); },
      [&] { return kernels::conv2d_grad_input_omp(gout, k, Padding::zero, 96, 96); }, reps);
  row("conv2d_grad_kernel",
      [&] { return kernels::conv2d_grad_kernel_serial(gout, in, Padding::zero, 3); },
      [&] { return kernels::conv2d_grad_kernel_omp(gout, in, Padding::zero, 3); }, reps);
  row("gaussian_blur",
      [&] { return kernels::gaussian_blur_serial(img, 2.0, 4); },
      [&] { return kernels::gaussian_blur_omp(img, 2.0, 4); }, reps);
  row("bilateral",
      [&] { return kernels::bilateral_serial(img, lum, 2.0, 0.1, 3); },
      [&] { return kernels::bilateral_omp(img, lum, 2.0, 0.1, 3); }, reps);
  return 0;
}
