#include "hfshield/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace hfshield {

Image::Image(std::size_t channels, std::size_t height, std::size_t width)
    : t_(Tensor({channels, height, width})) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("Image: channels must be 1 or 3");
}

Image::Image(Tensor t) : t_(std::move(t)) {
  if (t_.rank() != 3 || (t_.shape()[0] != 1 && t_.shape()[0] != 3)) {
    throw std::invalid_argument("Image: tensor must be [C,H,W] with C in {1,3}");
  }
}

bool Image::in_range() const {
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (!(t_[i] >= 0.0 && t_[i] <= 1.0)) return false;
  }
  return true;
}

Image to_luminance(const Image& img) {
  if (img.channels() != 3) throw std::invalid_argument("to_luminance: need a 3-channel image");
  Image out(1, img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    }
  }
  return out;
}

Tensor luminance_plane(const Image& img) {
  const Image gray = img.channels() == 3 ? to_luminance(img) : img;
  Tensor out({img.height(), img.width()});
  std::memcpy(out.data(), gray.tensor().data(), out.size() * sizeof(double));
  return out;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  const std::size_t c = img.channels(), h = img.height(), w = img.width();
  if (c != 1 && c != 3) throw std::invalid_argument("save_png: channels must be 1 or 3");
  std::vector<png_byte> bytes(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::min(255.0, std::max(0.0, std::round(img.at(ch, y, x) * 255.0)));
        bytes[(y * w + x) * c + ch] = static_cast<png_byte>(v);
      }
    }
  }
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(w);
  pi.height = static_cast<png_uint_32>(h);
  pi.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&pi, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("save_png: " + path.string() + ": " + pi.message);
  }
}

Image load_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str())) {
    throw std::runtime_error("load_png: " + path.string() + ": " + pi.message);
  }
  pi.format = PNG_FORMAT_RGB;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw std::runtime_error("load_png: " + path.string() + ": " + pi.message);
  }
  const std::size_t h = pi.height, w = pi.width;
  Image out(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(ch, y, x) = bytes[(y * w + x) * 3 + ch] / 255.0;
      }
    }
  }
  return out;
}

}  // namespace hfshield
