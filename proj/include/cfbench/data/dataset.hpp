#pragma once

#include "cfbench/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cfbench::data {

// ---------------------------------------------------------------------------
// Pixel scaling

/// Affine map 0..255 -> [-0.5, 0.5]. Throws on out-of-range input.
double scale_pixel(int raw);
/// Inverse of scale_pixel on the 256-point grid.
int unscale_pixel(double scaled);

template <typename Scalar>
Scalar scale_pixel_as(std::uint8_t raw) {
  return static_cast<Scalar>(static_cast<double>(raw) / 255.0 - 0.5);
}

/// Scales selected columns of a raw image block into a (784 x n) matrix.
template <typename Scalar>
Mat<Scalar> scaled_columns(const RawImages& raw, std::span<const std::size_t> columns) {
  Mat<Scalar> out(kPixels, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(columns[j]);
    for (int i = 0; i < kPixels; ++i) out(i, static_cast<Eigen::Index>(j)) = scale_pixel_as<Scalar>(raw(i, col));
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> scaled_all(const RawImages& raw) {
  return raw.template cast<double>().unaryExpr([](double v) { return v / 255.0 - 0.5; }).template cast<Scalar>();
}

Image scaled_image(const RawImages& raw, std::size_t column);

// ---------------------------------------------------------------------------
// IDX container

struct IdxImages {
  int rows = 0;
  int cols = 0;
  RawImages pixels;  // 784 x N (only 28x28 supported)
};

using IdxPayload = std::variant<IdxImages, std::vector<std::uint8_t>>;

/// Decodes an IDX byte stream (magic 0x803 images / 0x801 labels).
IdxPayload parse_idx(std::span<const std::uint8_t> bytes);
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// QuickDraw numpy bitmap container (.npy v1.0, uint8, N x 784)

RawImages parse_quickdraw_bitmaps(std::span<const std::uint8_t> bytes, const std::string& class_name);

/// Serialises raw images into the same container (used by tests and tooling).
std::vector<std::uint8_t> write_npy_u8(const RawImages& images);

// ---------------------------------------------------------------------------
// Splits

struct DatasetSplit {
  std::string name;
  RawImages train_images;
  std::vector<int> train_labels;
  RawImages test_images;
  std::vector<int> test_labels;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;
  /// Training indices whose label equals `label`, ascending.
  std::vector<std::size_t> train_indices_of(int label) const;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Loads MNIST from the four standard IDX files in `dir`.
DatasetSplit load_mnist(const std::string& dir);

inline const std::vector<std::string>& quickdraw_default_classes() {
  static const std::vector<std::string> kClasses{"bicycle", "giraffe", "helicopter", "mushroom", "pizza"};
  return kClasses;
}

/// Builds a stratified split from per-class bitmap blocks: the first
/// `per_class` images of each class, with the last `test_fraction` of them held out.
DatasetSplit split_quickdraw(const std::vector<RawImages>& per_class_images, const std::vector<std::string>& classes,
                             std::size_t per_class = 7000, double test_fraction = 0.1);

/// Loads `<dir>/<class>.npy` for each class.
DatasetSplit load_quickdraw(const std::string& dir, const std::vector<std::string>& classes = quickdraw_default_classes(),
                            std::size_t per_class = 7000, double test_fraction = 0.1);

/// Dataset manifest: JSON document naming files and class names.
///   {"dataset": "mnist", "format": "idx", "train_images": ..., "train_labels": ...,
///    "test_images": ..., "test_labels": ..., "class_names": [...]}
///   {"dataset": "quickdraw", "format": "npy", "class_files": {"pizza": "pizza.npy", ...},
///    "per_class": 7000, "test_fraction": 0.1}
/// Relative paths resolve against the manifest's directory.
DatasetSplit load_from_manifest(const std::string& manifest_path);

/// Resolves a dataset id ("mnist" / "quickdraw") against CFBENCH_DATA_DIR
/// (or `data_root` when non-empty).
DatasetSplit load_dataset(const std::string& dataset_id, const std::string& data_root = "");
std::string data_root_from_env();

// ---------------------------------------------------------------------------
// Misclassification sampling

struct MisclassifiedItem {
  std::string item_id;
  std::size_t test_index = 0;
  Image query;
  int true_label = 0;
  int predicted_label = 0;
};

/// Stable identifier: content hash of (dataset, test index).
std::string item_id_for(const std::string& dataset, std::size_t test_index);

/// Indices of test images where the prediction disagrees with the label.
std::vector<std::size_t> misclassified_pool(const DatasetSplit& split, std::span<const int> predicted_test_labels);

/// Uniform sample without replacement of `n` misclassified test items,
/// deterministic in `seed`. The returned order is the sampling order.
std::vector<MisclassifiedItem> sample_misclassifications(const DatasetSplit& split,
                                                         std::span<const int> predicted_test_labels, std::size_t n,
                                                         std::uint64_t seed);

}  // namespace cfbench::data
