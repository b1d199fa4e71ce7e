#pragma once

#include "cfbench/data/dataset.hpp"
#include "cfbench/models/autoencoder.hpp"
#include "cfbench/models/classifier.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfbench::cf {

enum class Method { MinEdit, Cem, Vlk, Revise };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::MinEdit, Method::Cem, Method::Vlk, Method::Revise};
  return m;
}

struct CounterfactualRequest {
  data::MisclassifiedItem item;
  int target_class = 0;
  Method method = Method::MinEdit;
};

/// Target defaults to the item's true label. Throws if the target equals the
/// predicted label.
CounterfactualRequest make_request(const data::MisclassifiedItem& item, Method method,
                                   std::optional<int> target = std::nullopt);

/// A failed generation has no image; `note` says why.
struct CounterfactualResult {
  Method method = Method::MinEdit;
  std::string item_id;
  int target_class = 0;
  std::optional<Image> image;
  bool valid = false;
  int iterations = 0;
  std::map<std::string, double> loss_terms;
  std::string note;

  bool failed() const { return !image.has_value(); }
};

using Classifier = models::ClassifierModel<double>;
using Autoencoder = models::Autoencoder<double>;
using Vae = models::VariationalAutoencoder<double>;

bool check_validity(const Classifier& model, const Vec<double>& x, int target);
bool check_validity(const Classifier& model, const Image& image, int target);

/// Settings shared by the proximal-gradient generators. A step that raises the
/// objective is retried at half size; accepted steps grow it by `step_growth`.
struct DescentConfig {
  int max_steps = 300;
  double step_size = 0.01;
  double step_growth = 1.2;
  double tolerance = 1e-6;  // stop when no pixel moves more than this
};

struct MinEditConfig {
  double lambda = 1.0;  // used as-is when lambda_search_steps == 0
  double target_probability = 0.9;
  int lambda_search_steps = 10;
  double lambda_max = 100.0;
  DescentConfig descent{};
  void validate() const;
};

struct CemConfig {
  double beta = 0.1;
  double gamma = 1.0;
  double c = 1.0;
  double kappa = 0.1;
  int c_search_steps = 4;  // c is multiplied by 10 after each run without a valid result
  DescentConfig descent{};
  void validate() const;
};

struct VlkConfig {
  double c = 1.0;
  double beta = 0.1;
  double kappa = 0.1;
  double ae_weight = 1.0;
  double proto_weight = 1.0;
  int prototype_k = 5;
  int c_search_steps = 4;
  DescentConfig descent{};
  void validate() const;
};

struct ReviseConfig {
  double lambda = 1.0;
  /// "mean": the distance term is the per-pixel mean absolute difference;
  /// "sum": the plain L1 norm.
  std::string l1_reduction = "mean";
  double step_size = 0.05;
  int max_iterations = 500;
  void validate() const;
};

void to_json(nlohmann::json& j, const DescentConfig& c);
void from_json(const nlohmann::json& j, DescentConfig& c);
void to_json(nlohmann::json& j, const MinEditConfig& c);
void from_json(const nlohmann::json& j, MinEditConfig& c);
void to_json(nlohmann::json& j, const CemConfig& c);
void from_json(const nlohmann::json& j, CemConfig& c);
void to_json(nlohmann::json& j, const VlkConfig& c);
void from_json(const nlohmann::json& j, VlkConfig& c);
void to_json(nlohmann::json& j, const ReviseConfig& c);
void from_json(const nlohmann::json& j, ReviseConfig& c);

CounterfactualResult generate_min_edit(const CounterfactualRequest& req, const Classifier& model,
                                       const MinEditConfig& cfg);

CounterfactualResult generate_cem_pn(const CounterfactualRequest& req, const Classifier& model, const Autoencoder& ae,
                                     const CemConfig& cfg);

/// Mean latent code of the k training images of the target class whose codes
/// are nearest to the query's code (ties: lower column index first).
Vec<double> latent_prototype(const Autoencoder& ae, const Vec<double>& query, const Mat<double>& class_codes, int k);

/// `class_codes` holds the encoder output for every training image of the
/// target class (latent x n).
CounterfactualResult generate_vlk(const CounterfactualRequest& req, const Classifier& model, const Autoencoder& ae,
                                  const Mat<double>& class_codes, const VlkConfig& cfg);

CounterfactualResult generate_revise(const CounterfactualRequest& req, const Classifier& model, const Vae& vae,
                                     const ReviseConfig& cfg);

nlohmann::json result_to_json(const CounterfactualResult& r);
/// Inverse of result_to_json; the image is supplied separately.
CounterfactualResult result_from_json(const nlohmann::json& j, std::optional<Image> image);

}  // namespace cfbench::cf
