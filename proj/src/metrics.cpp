#include "hfshield/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "hfshield/freq_mask.hpp"

namespace hfshield {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  }
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) throw std::invalid_argument("mse: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
  double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double l1_mean(const Tensor& t) {
  if (t.size() == 0) throw std::invalid_argument("l1_mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += std::abs(t.data()[i]);
  return acc / static_cast<double>(t.size());
}

double linf(const Tensor& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t.data()[i]));
  return m;
}

double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t.data()[i] * t.data()[i];
  return std::sqrt(acc);
}

double retention_ratio(const Image& x, const Tensor& delta, const PurifierSpec& spec,
                       const SurrogateModel* model, const DiffusionSchedule* sched) {
  require_same_shape(x.tensor(), delta, "retention_ratio");
  if (l2_norm(delta) == 0.0) throw std::invalid_argument("retention_ratio: delta is zero");
  // measure against the perturbation as materialized in the adversarial image;
  // for the identity purifier numerator and denominator then share every bit,
  // making the ratio exactly 1
  Image adv(add(x.tensor(), delta));
  double denom = l2_norm(sub(adv.tensor(), x.tensor()));
  if (denom == 0.0) throw std::invalid_argument("retention_ratio: delta vanishes in the image");
  Image clean = purify(x, spec, model, sched);
  Image noisy = purify(adv, spec, model, sched);
  return l2_norm(sub(noisy.tensor(), clean.tensor())) / denom;
}

double hf_energy(const Image& img) {
  Tensor mag = laplacian_edge(to_luminance(img));
  return l1_mean(mag);
}

}  // namespace hfshield
