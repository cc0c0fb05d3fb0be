#pragma once

#include <filesystem>

#include "hfshield/tensor.hpp"

namespace hfshield {

// Image with values in [0,1], stored channels-first [C,H,W], C in {1,3}.
class Image {
 public:
  Image() = default;
  Image(std::size_t channels, std::size_t height, std::size_t width);
  explicit Image(Tensor t);  // validates rank/channel count, not the value range

  std::size_t channels() const { return t_.empty() ? 0 : t_.shape()[0]; }
  std::size_t height() const { return t_.empty() ? 0 : t_.shape()[1]; }
  std::size_t width() const { return t_.empty() ? 0 : t_.shape()[2]; }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return t_.at(c, y, x); }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return t_.at(c, y, x); }

  Tensor& tensor() { return t_; }
  const Tensor& tensor() const { return t_; }

  bool in_range() const;  // every value in [0,1]

 private:
  Tensor t_;
};

// y = 0.299 R + 0.587 G + 0.114 B
Image to_luminance(const Image& img);
Tensor luminance_plane(const Image& img);  // [H,W]; single-channel images pass through

// 8-bit PNG: RGB for C=3, grayscale for C=1. Encode rounds v*255 to nearest,
// decode maps byte b to b/255.
void save_png(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

}  // namespace hfshield
