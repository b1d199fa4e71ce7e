#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cfbench {

inline constexpr int kImageSide = 28;
inline constexpr int kPixels = kImageSide * kImageSide;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A 28x28 grayscale raster. Row-major so that the flat view matches the
/// on-disk pixel order of every dataset we read.
template <typename Scalar>
using ImageT = Eigen::Matrix<Scalar, kImageSide, kImageSide, Eigen::RowMajor>;
using Image = ImageT<double>;

/// Raw 8-bit images stored one per column (784 x N).
using RawImages = Eigen::Matrix<std::uint8_t, kPixels, Eigen::Dynamic>;

inline constexpr double kPixelMin = -0.5;
inline constexpr double kPixelMax = 0.5;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Flat column view of an image.
template <typename Scalar>
Eigen::Map<const Vec<Scalar>> flat(const ImageT<Scalar>& image) {
  return Eigen::Map<const Vec<Scalar>>(image.data(), kPixels);
}

template <typename Scalar, typename Derived>
ImageT<Scalar> to_image(const Eigen::MatrixBase<Derived>& column) {
  if (column.size() != kPixels) throw Error("to_image: expected 784 values, got " + std::to_string(column.size()));
  ImageT<Scalar> out;
  Eigen::Map<Vec<Scalar>>(out.data(), kPixels) = column.template cast<Scalar>();
  return out;
}

template <typename Scalar>
bool in_pixel_range(const ImageT<Scalar>& image) {
  return image.minCoeff() >= Scalar(kPixelMin) && image.maxCoeff() <= Scalar(kPixelMax);
}

}  // namespace cfbench
