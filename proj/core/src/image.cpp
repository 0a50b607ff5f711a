#include "sgadv/image.hpp"

#include <stdexcept>

namespace sgadv {

std::string ImageDims::to_string() const {
  return std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels);
}

Image::Image(ImageDims dims, std::vector<double> pixels)
    : dims_(dims), pixels_(std::move(pixels)) {
  if (!dims_.valid()) {
    throw std::invalid_argument("image: invalid dims " + dims_.to_string());
  }
  if (pixels_.size() != dims_.size()) {
    throw std::invalid_argument("image: expected " + std::to_string(dims_.size()) +
                                " values for " + dims_.to_string() + ", got " +
                                std::to_string(pixels_.size()));
  }
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    // Negated comparison also rejects NaN.
    if (!(pixels_[i] >= 0.0 && pixels_[i] <= 1.0)) {
      throw std::invalid_argument("image: pixel " + std::to_string(i) + " = " +
                                  std::to_string(pixels_[i]) + " outside [0,1]");
    }
  }
}

Image Image::filled(ImageDims dims, double value) {
  return Image(dims, std::vector<double>(dims.valid() ? dims.size() : 0, value));
}

void require_same_dims(const ImageDims& a, const ImageDims& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " + a.to_string() +
                                " vs " + b.to_string());
  }
}

}  // namespace sgadv
