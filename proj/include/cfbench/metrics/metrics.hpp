#pragma once

#include "cfbench/distance.hpp"
#include "cfbench/models/autoencoder.hpp"
#include "cfbench/models/classifier.hpp"
#include "cfbench/prototypes/prototypes.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfbench::metrics {

using Classifier = models::ClassifierModel<double>;
using Autoencoder = models::Autoencoder<double>;

double l1_distance(const Image& a, const Image& b);
double l2_distance(const Image& a, const Image& b);

struct McSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the passes
};

McSummary mc_uncertainty(const Classifier& model, const Image& image, int target, const models::McDropoutConfig& cfg);

inline constexpr double kIm1Epsilon = 1e-8;

/// ||x - AE_cf(x)||^2 / (||x - AE_orig(x)||^2 + eps).
double im1(const Image& image, const Autoencoder& ae_cf, const Autoencoder& ae_orig);

/// Local Outlier Factor against a fixed reference set. Neighbourhoods are
/// tie-inclusive: every point at distance <= k-distance belongs to N_k. The
/// local reachability density uses 1 / (mean reach-dist + 1e-10) so exact
/// duplicates do not divide by zero.
class LofModel {
 public:
  LofModel() = default;
  /// `reference` holds one point per column.
  LofModel(Mat<double> reference, int k);

  int k() const { return k_; }
  Eigen::Index size() const { return reference_.cols(); }
  const Vec<double>& k_distances() const { return k_distance_; }
  const Vec<double>& lrd() const { return lrd_; }

  /// LOF of an out-of-sample point.
  double lof(const Vec<double>& x) const;
  /// LOF of reference point i, its own entry excluded from its neighbourhood.
  double lof_in_sample(Eigen::Index i) const;
  /// 1 - LOF: about 0 inside the data, negative for outliers.
  double score(const Vec<double>& x) const { return 1.0 - lof(x); }

 private:
  struct Neighbourhood {
    std::vector<Eigen::Index> members;
    std::vector<double> distances;
  };
  Neighbourhood neighbours(const Vec<double>& d, Eigen::Index exclude) const;
  double lof_from(const Neighbourhood& nb) const;

  Mat<double> reference_;
  int k_ = 10;
  Vec<double> k_distance_;
  Vec<double> lrd_;
};

inline constexpr int kLofNeighbours = 10;

double lof10_score(const Image& image, const LofModel& reference);

/// 100 * A / A_ref where A is the test accuracy of 1-NN fitted on the
/// explanations labelled by their target classes.
double substitutability(const std::vector<Image>& explanations, std::span<const int> labels, const Mat<double>& test,
                        std::span<const int> test_labels, double reference_accuracy);

double grad_cos(const Classifier& model, const Image& a, int label_a, const Image& b, int label_b);
double grad_cos_to_prototypes(const Classifier& model, const Image& image, int target,
                              const prototypes::PrototypeSet& prototypes);

/// Source of an evaluated explanation: a generator name or "ground_truth".
struct MetricRecord {
  std::string item_id;
  std::string source;
  int target_class = 0;
  bool covered = false;  // false for FAILURE results, which carry no metric values
  std::string reason;
  double l1 = 0.0, l2 = 0.0;
  double mc_mean = 0.0, mc_std = 0.0;
  double im1 = 0.0;
  double lof10 = 0.0;
  double grad_cos = 0.0;
};

/// Models shared by every evaluation in a run.
struct EvaluationContext {
  const Classifier* classifier = nullptr;
  const std::vector<Autoencoder>* class_autoencoders = nullptr;  // indexed by class
  const std::vector<LofModel>* lof_models = nullptr;             // indexed by class
  const prototypes::PrototypeSet* prototypes = nullptr;
  models::McDropoutConfig mc{};
  bool binarize = false;  // threshold explanations at 0 before scoring
};

/// `original_class` is the classifier's prediction on the query. A missing
/// explanation yields an uncovered record.
MetricRecord evaluate(const EvaluationContext& ctx, const std::string& item_id, const std::string& source,
                      const Image& query, int original_class, int target, const std::optional<Image>& explanation,
                      const std::string& failure_reason = "");

nlohmann::json to_json(const MetricRecord& r);
MetricRecord record_from_json(const nlohmann::json& j);
std::string csv_header();
std::string to_csv_row(const MetricRecord& r);

/// Shortest round-trip decimal form, so CSV output is byte-stable.
std::string format_double(double v);

}  // namespace cfbench::metrics
