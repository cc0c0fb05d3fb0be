#pragma once

#include "hfshield/image.hpp"
#include "hfshield/purify.hpp"
#include "hfshield/tensor.hpp"

namespace hfshield {

// Plain distances; shapes must agree.
double mse(const Tensor& a, const Tensor& b);
double psnr(const Tensor& a, const Tensor& b);  // 10*log10(1/mse), +inf when mse == 0
double l1_mean(const Tensor& t);
double linf(const Tensor& t);
double l2_norm(const Tensor& t);

// ||P(x+delta) - P(x)||_2 / ||(x+delta) - x||_2: the fraction of perturbation
// energy that survives the purifier, measured against the perturbation as it
// exists in the adversarial image. Both purify calls share spec (and its
// seed). delta = 0 is rejected; the ratio is undefined there.
double retention_ratio(const Image& x, const Tensor& delta, const PurifierSpec& spec,
                       const SurrogateModel* model = nullptr,
                       const DiffusionSchedule* sched = nullptr);

// Mean Laplacian magnitude of the luminance plane; high for noisy or
// artifact-ridden generations, near zero for smooth ones.
double hf_energy(const Image& img);

}  // namespace hfshield
