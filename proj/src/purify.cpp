#include "hfshield/purify.hpp"

#include <stdexcept>

#include "hfshield/kernels.hpp"
#include "hfshield/sampler.hpp"

namespace hfshield {

const char* purifier_name(PurifierKind k) {
  switch (k) {
    case PurifierKind::identity: return "identity";
    case PurifierKind::gaussian: return "gaussian";
    case PurifierKind::bilateral: return "bilateral";
    case PurifierKind::diffpure: return "diffpure";
  }
  throw std::invalid_argument("purifier_name: bad kind");
}

PurifierKind purifier_from_name(const std::string& name) {
  if (name == "identity") return PurifierKind::identity;
  if (name == "gaussian") return PurifierKind::gaussian;
  if (name == "bilateral") return PurifierKind::bilateral;
  if (name == "diffpure") return PurifierKind::diffpure;
  throw std::invalid_argument("purifier_from_name: unknown purifier '" + name + "'");
}

void validate(const PurifierSpec& spec, std::size_t T_diff) {
  std::string errs;
  if (!(spec.gaussian_sigma > 0.0)) errs += "  gaussian_sigma must be > 0\n";
  if (spec.gaussian_radius < 1) errs += "  gaussian_radius must be >= 1\n";
  if (!(spec.bilateral_sigma_s > 0.0)) errs += "  bilateral_sigma_s must be > 0\n";
  if (!(spec.bilateral_sigma_r > 0.0)) errs += "  bilateral_sigma_r must be > 0\n";
  if (spec.bilateral_radius < 1) errs += "  bilateral_radius must be >= 1\n";
  if (spec.diffpure_t < 1 || spec.diffpure_t > T_diff) {
    errs += "  diffpure_t must be in 1..T_diff\n";
  }
  if (!errs.empty()) throw std::invalid_argument("invalid purifier spec:\n" + errs);
}

Image purify(const Image& img, const PurifierSpec& spec, const SurrogateModel* model,
             const DiffusionSchedule* sched) {
  switch (spec.kind) {
    case PurifierKind::identity:
      return img;
    case PurifierKind::gaussian: {
      auto out = kernels::gaussian_blur(img.tensor(), spec.gaussian_sigma, spec.gaussian_radius);
      return Image(clip(out, 0.0, 1.0));
    }
    case PurifierKind::bilateral: {
      auto out = kernels::bilateral(img.tensor(), luminance_plane(img), spec.bilateral_sigma_s,
                                    spec.bilateral_sigma_r, spec.bilateral_radius);
      return Image(clip(out, 0.0, 1.0));
    }
    case PurifierKind::diffpure: {
      if (!model || !sched) {
        throw std::invalid_argument("purify: diffpure needs a model and a schedule");
      }
      validate(spec, sched->T);
      Rng rng(mix64(spec.seed, 0xd1ff));
      Tensor eps = Tensor::randn(img.tensor().shape(), rng);
      Tensor x_t = forward_diffuse(img.tensor(), spec.diffpure_t, eps, *sched);
      // the same stream supplies the reverse-path posterior noise
      Tensor x0 = reverse_diffuse(*model, *sched, std::move(x_t), spec.diffpure_t, kTokenClass,
                                  rng);
      return Image(clip(x0, 0.0, 1.0));
    }
  }
  throw std::invalid_argument("purify: bad kind");
}

}  // namespace hfshield
