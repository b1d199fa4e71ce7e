#pragma once

#include "cfbench/core.hpp"
#include "cfbench/data/dataset.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace cfbench::prototypes {

/// k(x, x') = exp(-gamma * d) with d = ||x - x'||_2, or d = ||x - x'||_2^2
/// when `squared` is set.
struct KernelConfig {
  double gamma = 1.0;
  bool squared = false;
  void validate() const;
};

template <typename DA, typename DB>
double rbf_kernel(const Eigen::MatrixBase<DA>& x, const Eigen::MatrixBase<DB>& y, const KernelConfig& cfg) {
  const double d2 = (x - y).squaredNorm();
  return std::exp(-cfg.gamma * (cfg.squared ? d2 : std::sqrt(d2)));
}

/// Kernel value from a squared distance.
inline double kernel_from_sq(double d2, const KernelConfig& cfg) {
  return std::exp(-cfg.gamma * (cfg.squared ? d2 : std::sqrt(d2)));
}

/// Direct triple-sum MMD^2 between prototype columns and data columns.
double mmd_squared(const Mat<double>& prototypes, const Mat<double>& data, const KernelConfig& cfg);

/// 1 / median pairwise distance among the columns (squared distance when the
/// kernel is squared). Even counts average the two middle values.
double median_heuristic_gamma(const Mat<double>& data, bool squared = false);

/// Greedy MMD^2 minimization; returns column indices in selection order.
std::vector<std::size_t> select_prototypes_greedy(const Mat<double>& data, int m, const KernelConfig& cfg);

struct ClassPrototypes {
  int label = 0;
  KernelConfig kernel;
  std::vector<std::size_t> train_indices;  // into the split's training set
  std::vector<Image> images;
};

struct PrototypeSet {
  std::string dataset;
  int per_class = 0;
  std::vector<ClassPrototypes> classes;  // one entry per class, ordered by label

  const ClassPrototypes& of(int label) const;
  /// All prototypes as columns with their labels, in (class, rank) order.
  Mat<double> matrix() const;
  std::vector<int> labels() const;
};

/// Selects `per_class` prototypes for every class with a median-heuristic
/// gamma per class.
PrototypeSet select_prototypes(const data::DatasetSplit& split, int per_class, bool squared_kernel = false);

struct NnResult {
  std::vector<int> predicted;
  double accuracy = 0.0;  // against `truth` when given
};

/// 1-NN in pixel space against labeled reference columns. Ties go to the
/// lowest label, then the lowest column.
NnResult nearest_neighbor_classify(const Mat<double>& reference, std::span<const int> reference_labels,
                                   const Mat<double>& images, std::span<const int> truth = {});
NnResult prototype_1nn_classify(const PrototypeSet& set, const Mat<double>& images, std::span<const int> truth = {});

nlohmann::json to_json(const PrototypeSet& set);
/// Rebuilds a set from its JSON index; images are re-read from the split.
PrototypeSet prototypes_from_json(const nlohmann::json& j, const data::DatasetSplit& split);

}  // namespace cfbench::prototypes
