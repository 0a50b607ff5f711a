#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sgadv {

struct ImageDims {
  int width = 0;
  int height = 0;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(channels);
  }
  bool valid() const { return width > 0 && height > 0 && (channels == 1 || channels == 3); }
  std::string to_string() const;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Pixel tensor with every value in [0,1]. Row-major, channel-interleaved:
/// index = (y * width + x) * channels + c.
class Image {
 public:
  Image() = default;
  /// Throws std::invalid_argument if dims are invalid, the pixel count does
  /// not match, or any value lies outside [0,1].
  Image(ImageDims dims, std::vector<double> pixels);

  static Image filled(ImageDims dims, double value);

  const ImageDims& dims() const { return dims_; }
  std::size_t size() const { return pixels_.size(); }
  std::span<const double> pixels() const { return pixels_; }
  double operator[](std::size_t i) const { return pixels_[i]; }
  double at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * dims_.width + x) * dims_.channels + c];
  }

  std::vector<double> take_pixels() && { return std::move(pixels_); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  ImageDims dims_;
  std::vector<double> pixels_;
};

/// Real-valued tensor shaped like an Image; no range constraint.
struct GradientImage {
  ImageDims dims;
  std::vector<double> values;
};

/// Throws std::invalid_argument naming `what` if the two shapes differ.
void require_same_dims(const ImageDims& a, const ImageDims& b, const char* what);

}  // namespace sgadv
