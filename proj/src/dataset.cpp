#include "hfshield/dataset.hpp"

#include <cmath>
#include <stdexcept>

#include "hfshield/rng.hpp"

namespace hfshield {

namespace {

struct FaceParams {
  double skin[3];
  double hair[3];
  double bg[3];
  double cx, cy;       // head center, pixels
  double ax, ay;       // head half-axes
  double eye_dx;       // eye offset from center
  double eye_y;        // eye row
  double eye_r;
  double eye_col;      // dark gray level
  double hairline;     // y above which the head is hair
  double mouth_y, mouth_halfw, mouth_thick, mouth_curv;
  double mouth_col[3];
  double grate_amp[2], grate_fx[2], grate_fy[2], grate_ph[2];
  double noise_amp;
};

double lerp(double a, double b, double t) { return a + (b - a) * t; }

FaceParams face_params(const IdentitySpec& spec) {
  Rng rng(mix64(spec.seed, 0x0face));
  const double s = static_cast<double>(spec.image_size);
  FaceParams p{};
  p.skin[0] = lerp(0.68, 0.92, rng.uniform());
  p.skin[1] = p.skin[0] - lerp(0.08, 0.20, rng.uniform());
  p.skin[2] = p.skin[1] - lerp(0.08, 0.18, rng.uniform());
  const double hair_level = lerp(0.05, 0.35, rng.uniform());
  p.hair[0] = hair_level * lerp(0.8, 1.2, rng.uniform());
  p.hair[1] = hair_level * lerp(0.6, 1.0, rng.uniform());
  p.hair[2] = hair_level * lerp(0.4, 0.9, rng.uniform());
  p.bg[0] = lerp(0.15, 0.45, rng.uniform());
  p.bg[1] = lerp(0.25, 0.55, rng.uniform());
  p.bg[2] = lerp(0.35, 0.65, rng.uniform());
  p.cx = s * lerp(0.46, 0.54, rng.uniform());
  p.cy = s * lerp(0.48, 0.56, rng.uniform());
  p.ax = s * lerp(0.26, 0.33, rng.uniform());
  p.ay = s * lerp(0.33, 0.41, rng.uniform());
  p.eye_dx = s * lerp(0.11, 0.15, rng.uniform());
  p.eye_y = p.cy - s * lerp(0.08, 0.13, rng.uniform());
  p.eye_r = s * lerp(0.040, 0.065, rng.uniform());
  p.eye_col = lerp(0.02, 0.18, rng.uniform());
  p.hairline = p.cy - p.ay * lerp(0.55, 0.75, rng.uniform());
  p.mouth_y = p.cy + s * lerp(0.16, 0.22, rng.uniform());
  p.mouth_halfw = s * lerp(0.09, 0.14, rng.uniform());
  p.mouth_thick = s * lerp(0.020, 0.038, rng.uniform());
  p.mouth_curv = s * lerp(-0.03, 0.05, rng.uniform());
  p.mouth_col[0] = lerp(0.45, 0.65, rng.uniform());
  p.mouth_col[1] = lerp(0.10, 0.22, rng.uniform());
  p.mouth_col[2] = lerp(0.12, 0.25, rng.uniform());
  for (int g = 0; g < 2; ++g) {
    p.grate_amp[g] = lerp(0.06, 0.11, rng.uniform());
    const double wavelen = lerp(5.0, 8.0, rng.uniform());
    const double angle = rng.uniform() * 6.283185307179586;
    p.grate_fx[g] = std::cos(angle) * 6.283185307179586 / wavelen;
    p.grate_fy[g] = std::sin(angle) * 6.283185307179586 / wavelen;
    p.grate_ph[g] = rng.uniform() * 6.283185307179586;
  }
  p.noise_amp = 0.015;
  return p;
}

}  // namespace

Image render_identity_image(const IdentitySpec& spec, std::size_t j) {
  const FaceParams p = face_params(spec);
  Rng jit(mix64(spec.seed, 0x01177e5, j));
  const double dx = lerp(-1.5, 1.5, jit.uniform());
  const double dy = lerp(-1.5, 1.5, jit.uniform());
  const double sc = lerp(0.95, 1.05, jit.uniform());
  double cjit[3];
  for (double& c : cjit) c = lerp(-0.03, 0.03, jit.uniform());
  const double ph0 = p.grate_ph[0] + jit.uniform() * 0.8;
  const double ph1 = p.grate_ph[1] + jit.uniform() * 0.8;
  const std::uint64_t noise_seed = jit.raw();

  const std::size_t s = spec.image_size;
  const double cx = p.cx + dx, cy = p.cy + dy;
  const double ax = p.ax * sc, ay = p.ay * sc;
  Image img(3, s, s);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double col[3];
      const double g0 = p.grate_amp[0] * std::sin(p.grate_fx[0] * fx + p.grate_fy[0] * fy + ph0);
      const double g1 = p.grate_amp[1] * std::sin(p.grate_fx[1] * fx + p.grate_fy[1] * fy + ph1);
      const double n =
          p.noise_amp * (2.0 * (static_cast<double>(mix64(noise_seed, y * s + x) >> 11) *
                                0x1.0p-53) -
                         1.0);
      for (int c = 0; c < 3; ++c) col[c] = p.bg[c] + g0 + g1 + n;

      const double ex = (fx - cx) / ax, ey = (fy - cy) / ay;
      if (ex * ex + ey * ey <= 1.0) {
        if (fy < p.hairline + dy) {
          for (int c = 0; c < 3; ++c) col[c] = p.hair[c] + 0.5 * n;
        } else {
          for (int c = 0; c < 3; ++c) col[c] = p.skin[c] + 0.5 * n;
        }
        // eyes
        for (int side = -1; side <= 1; side += 2) {
          const double exc = cx + side * p.eye_dx * sc;
          const double eyc = p.eye_y + dy;
          const double d2 = (fx - exc) * (fx - exc) + (fy - eyc) * (fy - eyc);
          if (d2 <= p.eye_r * p.eye_r * sc * sc) {
            for (int c = 0; c < 3; ++c) col[c] = p.eye_col;
            if (d2 <= 0.25) col[0] = col[1] = col[2] = 0.9;  // specular dot
          }
        }
        // mouth
        const double mx = (fx - cx) / p.mouth_halfw;
        if (std::fabs(mx) <= 1.0) {
          const double my = p.mouth_y + dy + p.mouth_curv * mx * mx;
          if (std::fabs(fy - my) <= p.mouth_thick) {
            for (int c = 0; c < 3; ++c) col[c] = p.mouth_col[c];
          }
        }
      }
      for (int c = 0; c < 3; ++c) {
        img.at(static_cast<std::size_t>(c), y, x) = std::min(1.0, std::max(0.0, col[c] + cjit[c]));
      }
    }
  }
  return img;
}

std::vector<IdentityData> generate_dataset(std::size_t n_identities, std::uint64_t seed,
                                           std::size_t image_size) {
  if (n_identities < 1) throw std::invalid_argument("generate_dataset: need n_identities >= 1");
  std::vector<IdentityData> out;
  out.reserve(n_identities);
  for (std::size_t i = 0; i < n_identities; ++i) {
    IdentityData d;
    d.spec = IdentitySpec{mix64(seed, 0x1d, i), image_size};
    for (std::size_t j = 0; j < 8; ++j) {
      Image img = render_identity_image(d.spec, j);
      if (j < 4) {
        d.originals.push_back(std::move(img));
      } else {
        d.references.push_back(std::move(img));
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace hfshield
