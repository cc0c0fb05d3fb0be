#include "hfshield/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#if defined(__GNUC__)
#define HF_NOINLINE __attribute__((noinline))
#else
#define HF_NOINLINE
#endif

namespace hfshield::kernels {

namespace {

std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::openmp
#else
    Backend::serial
#endif
};

std::size_t clamp_idx(std::ptrdiff_t v, std::size_t n) {
  if (v < 0) return 0;
  if (v >= static_cast<std::ptrdiff_t>(n)) return n - 1;
  return static_cast<std::size_t>(v);
}

void check_conv_shapes(const Tensor& in, const Tensor& kernel) {
  if (in.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W]");
  if (kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [Co,Ci,k,k]");
  if (kernel.shape()[1] != in.shape()[0]) {
    throw std::invalid_argument("conv2d: kernel Ci=" + std::to_string(kernel.shape()[1]) +
                                " does not match input C=" + std::to_string(in.shape()[0]));
  }
  if (kernel.shape()[2] != kernel.shape()[3]) {
    throw std::invalid_argument("conv2d: kernel must be square");
  }
  if (kernel.shape()[2] % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
}

// ---- per-slice bodies ----
// Shared by the serial and OpenMP drivers so both backends execute literally
// the same machine code per output slice.

// one output row (o, y): out_row[x] = sum_{i,dy,dx} pad[i][y+dy][x+dx] * k[o][i][dy][dx]
HF_NOINLINE void conv_fwd_row(const double* pad, std::size_t ci, std::size_t hp, std::size_t wp,
                              const double* ko, std::size_t k, std::size_t y, std::size_t w,
                              double* out_row) {
  std::fill(out_row, out_row + w, 0.0);
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      const double* src = pad + (i * hp + y + dy) * wp;
      for (std::size_t dx = 0; dx < k; ++dx) {
        const double coef = ko[(i * k + dy) * k + dx];
        const double* s = src + dx;
        for (std::size_t x = 0; x < w; ++x) out_row[x] += coef * s[x];
      }
    }
  }
}

// one padded-gradient row (i, py): gather from grad_out wherever the forward read this row
HF_NOINLINE void conv_gin_row(const double* go, std::size_t co, std::size_t h, std::size_t w,
                              const double* ker, std::size_t ci, std::size_t k, std::size_t i,
                              std::size_t py, std::size_t wp, double* gpad_row) {
  std::fill(gpad_row, gpad_row + wp, 0.0);
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(py) - static_cast<std::ptrdiff_t>(dy);
      if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
      const double* go_row = go + (o * h + static_cast<std::size_t>(y)) * w;
      for (std::size_t dx = 0; dx < k; ++dx) {
        const double coef = ker[((o * ci + i) * k + dy) * k + dx];
        for (std::size_t x = 0; x < w; ++x) gpad_row[dx + x] += coef * go_row[x];
      }
    }
  }
}

// one kernel slice (o, i): gk[dy][dx] = sum_{y,x} grad_out[o][y][x] * pad[i][y+dy][x+dx]
HF_NOINLINE void conv_gk_slice(const double* go, std::size_t h, std::size_t w, const double* pad,
                               std::size_t hp, std::size_t wp, std::size_t k, std::size_t o,
                               std::size_t i, double* gk_slice) {
  for (std::size_t dy = 0; dy < k; ++dy) {
    for (std::size_t dx = 0; dx < k; ++dx) {
      double acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        const double* go_row = go + (o * h + y) * w;
        const double* pad_row = pad + (i * hp + y + dy) * wp + dx;
        for (std::size_t x = 0; x < w; ++x) acc += go_row[x] * pad_row[x];
      }
      gk_slice[dy * k + dx] = acc;
    }
  }
}

// horizontal blur of one row with replicate clamping
HF_NOINLINE void blur_row_h(const double* src_row, std::size_t w, const double* wts, int radius,
                            double* dst_row) {
  for (std::size_t x = 0; x < w; ++x) {
    double acc = 0.0;
    for (int d = -radius; d <= radius; ++d) {
      const std::size_t sx = clamp_idx(static_cast<std::ptrdiff_t>(x) + d, w);
      acc += wts[d + radius] * src_row[sx];
    }
    dst_row[x] = acc;
  }
}

// vertical blur of one row, reading clamped rows of the horizontally blurred image
HF_NOINLINE void blur_row_v(const double* tmp_c, std::size_t h, std::size_t w, const double* wts,
                            int radius, std::size_t y, double* dst_row) {
  std::fill(dst_row, dst_row + w, 0.0);
  for (int d = -radius; d <= radius; ++d) {
    const std::size_t sy = clamp_idx(static_cast<std::ptrdiff_t>(y) + d, h);
    const double coef = wts[d + radius];
    const double* src = tmp_c + sy * w;
    for (std::size_t x = 0; x < w; ++x) dst_row[x] += coef * src[x];
  }
}

// one bilateral output row across all channels
HF_NOINLINE void bilateral_row(const double* img, const double* lum, std::size_t c, std::size_t h,
                               std::size_t w, const double* spatial, int radius, double inv2sr2,
                               std::size_t y, double* out) {
  const int win = 2 * radius + 1;
  for (std::size_t x = 0; x < w; ++x) {
    double wsum = 0.0;
    double acc[3] = {0.0, 0.0, 0.0};
    const double center = lum[y * w + x];
    for (int dy = -radius; dy <= radius; ++dy) {
      const std::size_t qy = clamp_idx(static_cast<std::ptrdiff_t>(y) + dy, h);
      for (int dx = -radius; dx <= radius; ++dx) {
        const std::size_t qx = clamp_idx(static_cast<std::ptrdiff_t>(x) + dx, w);
        const double di = center - lum[qy * w + qx];
        const double wt =
            spatial[(dy + radius) * win + (dx + radius)] * std::exp(-di * di * inv2sr2);
        wsum += wt;
        for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += wt * img[(ch * h + qy) * w + qx];
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = acc[ch] / wsum;
  }
}

std::vector<double> gaussian_weights(double sigma, int radius) {
  std::vector<double> w(2 * radius + 1);
  double s = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    w[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
    s += w[d + radius];
  }
  for (double& v : w) v /= s;
  return w;
}

}  // namespace

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Tensor pad2d(const Tensor& in, std::size_t p, Padding mode) {
  if (in.rank() != 3) throw std::invalid_argument("pad2d: input must be [C,H,W]");
  const std::size_t c = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
  Tensor out({c, h + 2 * p, w + 2 * p});
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t y = 0; y < hp; ++y) {
      for (std::size_t x = 0; x < wp; ++x) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(p);
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(p);
        double v = 0.0;
        if (mode == Padding::replicate) {
          v = in.at(i, clamp_idx(sy, h), clamp_idx(sx, w));
        } else if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                   sx < static_cast<std::ptrdiff_t>(w)) {
          v = in.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
        out.at(i, y, x) = v;
      }
    }
  }
  return out;
}

// ---- conv2d forward ----

namespace {

Tensor conv_fwd_impl(const Tensor& in, const Tensor& kernel, Padding pad, bool parallel) {
  check_conv_shapes(in, kernel);
  const std::size_t h = in.shape()[1], w = in.shape()[2];
  const std::size_t co = kernel.shape()[0], ci = kernel.shape()[1], k = kernel.shape()[2];
  const std::size_t p = k / 2;
  const Tensor padded = pad2d(in, p, pad);
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  Tensor out({co, h, w});
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(co * h);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t o = static_cast<std::size_t>(idx) / h;
    const std::size_t y = static_cast<std::size_t>(idx) % h;
    conv_fwd_row(padded.data(), ci, hp, wp, kernel.data() + o * ci * k * k, k, y, w,
                 out.data() + (o * h + y) * w);
  }
  (void)parallel;
  return out;
}

}  // namespace

Tensor conv2d_forward_serial(const Tensor& in, const Tensor& kernel, Padding pad) {
  return conv_fwd_impl(in, kernel, pad, false);
}
Tensor conv2d_forward_omp(const Tensor& in, const Tensor& kernel, Padding pad) {
  return conv_fwd_impl(in, kernel, pad, true);
}
Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, Padding pad) {
  return conv_fwd_impl(in, kernel, pad, backend() == Backend::openmp);
}

// ---- conv2d gradient w.r.t. input ----

namespace {

Tensor conv_gin_impl(const Tensor& grad_out, const Tensor& kernel, Padding pad, std::size_t in_h,
                     std::size_t in_w, bool parallel) {
  if (grad_out.rank() != 3) throw std::invalid_argument("conv2d_grad_input: grad must be [Co,H,W]");
  const std::size_t co = kernel.shape()[0], ci = kernel.shape()[1], k = kernel.shape()[2];
  const std::size_t h = grad_out.shape()[1], w = grad_out.shape()[2];
  const std::size_t p = k / 2;
  const std::size_t hp = in_h + 2 * p, wp = in_w + 2 * p;

  // gradient w.r.t. the padded buffer, gathered per row (deterministic, no scatter races)
  Tensor gpad({ci, hp, wp});
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(ci * hp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / hp;
    const std::size_t py = static_cast<std::size_t>(idx) % hp;
    conv_gin_row(grad_out.data(), co, h, w, kernel.data(), ci, k, i, py, wp,
                 gpad.data() + (i * hp + py) * wp);
  }
  (void)parallel;

  // fold the padded border back onto the image; cheap, fixed order
  Tensor gin({ci, in_h, in_w});
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t py = 0; py < hp; ++py) {
      for (std::size_t px = 0; px < wp; ++px) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(py) - static_cast<std::ptrdiff_t>(p);
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(px) - static_cast<std::ptrdiff_t>(p);
        if (pad == Padding::zero) {
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(in_h) || sx < 0 ||
              sx >= static_cast<std::ptrdiff_t>(in_w)) {
            continue;
          }
          gin.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) +=
              gpad.at(i, py, px);
        } else {
          gin.at(i, clamp_idx(sy, in_h), clamp_idx(sx, in_w)) += gpad.at(i, py, px);
        }
      }
    }
  }
  return gin;
}

}  // namespace

Tensor conv2d_grad_input_serial(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                                std::size_t in_h, std::size_t in_w) {
  return conv_gin_impl(grad_out, kernel, pad, in_h, in_w, false);
}
Tensor conv2d_grad_input_omp(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                             std::size_t in_h, std::size_t in_w) {
  return conv_gin_impl(grad_out, kernel, pad, in_h, in_w, true);
}
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernel, Padding pad,
                         std::size_t in_h, std::size_t in_w) {
  return conv_gin_impl(grad_out, kernel, pad, in_h, in_w, backend() == Backend::openmp);
}

// ---- conv2d gradient w.r.t. kernel ----

namespace {

Tensor conv_gk_impl(const Tensor& grad_out, const Tensor& in, Padding pad, std::size_t k,
                    bool parallel) {
  const std::size_t co = grad_out.shape()[0], h = grad_out.shape()[1], w = grad_out.shape()[2];
  const std::size_t ci = in.shape()[0];
  const std::size_t p = k / 2;
  const Tensor padded = pad2d(in, p, pad);
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  Tensor gk({co, ci, k, k});
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(co * ci);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t o = static_cast<std::size_t>(idx) / ci;
    const std::size_t i = static_cast<std::size_t>(idx) % ci;
    conv_gk_slice(grad_out.data(), h, w, padded.data(), hp, wp, k, o, i,
                  gk.data() + (o * ci + i) * k * k);
  }
  (void)parallel;
  return gk;
}

}  // namespace

Tensor conv2d_grad_kernel_serial(const Tensor& grad_out, const Tensor& in, Padding pad,
                                 std::size_t k) {
  return conv_gk_impl(grad_out, in, pad, k, false);
}
Tensor conv2d_grad_kernel_omp(const Tensor& grad_out, const Tensor& in, Padding pad,
                              std::size_t k) {
  return conv_gk_impl(grad_out, in, pad, k, true);
}
Tensor conv2d_grad_kernel(const Tensor& grad_out, const Tensor& in, Padding pad, std::size_t k) {
  return conv_gk_impl(grad_out, in, pad, k, backend() == Backend::openmp);
}

// ---- gaussian blur ----

namespace {

Tensor gaussian_impl(const Tensor& img, double sigma, int radius, bool parallel) {
  if (img.rank() != 3) throw std::invalid_argument("gaussian_blur: input must be [C,H,W]");
  if (sigma <= 0.0 || radius < 1) throw std::invalid_argument("gaussian_blur: need sigma>0, r>=1");
  const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  const std::vector<double> wts = gaussian_weights(sigma, radius);
  Tensor tmp({c, h, w});
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(c * h);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t idx = 0; idx < rows; ++idx) {
    blur_row_h(img.data() + idx * static_cast<std::ptrdiff_t>(w), w, wts.data(), radius,
               tmp.data() + idx * static_cast<std::ptrdiff_t>(w));
  }
  Tensor out({c, h, w});
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t idx = 0; idx < rows; ++idx) {
    const std::size_t ch = static_cast<std::size_t>(idx) / h;
    const std::size_t y = static_cast<std::size_t>(idx) % h;
    blur_row_v(tmp.data() + ch * h * w, h, w, wts.data(), radius, y,
               out.data() + (ch * h + y) * w);
  }
  (void)parallel;
  return out;
}

}  // namespace

Tensor gaussian_blur_serial(const Tensor& img, double sigma, int radius) {
  return gaussian_impl(img, sigma, radius, false);
}
Tensor gaussian_blur_omp(const Tensor& img, double sigma, int radius) {
  return gaussian_impl(img, sigma, radius, true);
}
Tensor gaussian_blur(const Tensor& img, double sigma, int radius) {
  return gaussian_impl(img, sigma, radius, backend() == Backend::openmp);
}

// ---- bilateral ----

namespace {

Tensor bilateral_impl(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                      int radius, bool parallel) {
  if (img.rank() != 3) throw std::invalid_argument("bilateral: input must be [C,H,W]");
  if (img.shape()[0] > 3) throw std::invalid_argument("bilateral: at most 3 channels");
  if (lum.rank() != 2 || lum.shape()[0] != img.shape()[1] || lum.shape()[1] != img.shape()[2]) {
    throw std::invalid_argument("bilateral: lum must be [H,W] matching img");
  }
  if (sigma_s <= 0.0 || sigma_r <= 0.0 || radius < 1) {
    throw std::invalid_argument("bilateral: need sigma_s>0, sigma_r>0, r>=1");
  }
  const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  const int win = 2 * radius + 1;
  std::vector<double> spatial(static_cast<std::size_t>(win) * win);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      spatial[(dy + radius) * win + (dx + radius)] =
          std::exp(-0.5 * (dy * dy + dx * dx) / (sigma_s * sigma_s));
    }
  }
  const double inv2sr2 = 0.5 / (sigma_r * sigma_r);
  Tensor out({c, h, w});
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y) {
    bilateral_row(img.data(), lum.data(), c, h, w, spatial.data(), radius, inv2sr2,
                  static_cast<std::size_t>(y), out.data());
  }
  (void)parallel;
  return out;
}

}  // namespace

Tensor bilateral_serial(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                        int radius) {
  return bilateral_impl(img, lum, sigma_s, sigma_r, radius, false);
}
Tensor bilateral_omp(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                     int radius) {
  return bilateral_impl(img, lum, sigma_s, sigma_r, radius, true);
}
Tensor bilateral(const Tensor& img, const Tensor& lum, double sigma_s, double sigma_r,
                 int radius) {
  return bilateral_impl(img, lum, sigma_s, sigma_r, radius, backend() == Backend::openmp);
}

}  // namespace hfshield::kernels
