#pragma once

#include "cfbench/cf/counterfactual.hpp"
#include "cfbench/models/config.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cfbench::study {

/// Everything that determines a run. Model sections are optional so that a
/// manifest can omit stages; validate() rejects manifests whose enabled
/// methods need a missing stage.
struct RunManifest {
  std::string dataset = "mnist";
  std::string data_root;  // empty: CFBENCH_DATA_DIR
  std::uint64_t seed = 0;
  std::size_t items = 50;

  std::optional<models::TrainConfig> classifier;
  std::optional<models::TrainConfig> class_autoencoders;
  std::optional<models::TrainConfig> dataset_autoencoder;
  std::optional<models::TrainConfig> vae;
  int ae_latent_dim = 16;
  int vae_latent_dim = 8;

  std::vector<cf::Method> methods = cf::all_methods();
  cf::MinEditConfig minedit;
  cf::CemConfig cem;
  cf::VlkConfig vlk;
  cf::ReviseConfig revise;

  int prototypes_per_class = 5;
  bool squared_kernel = false;
  /// Reference accuracy for R%-Sub; when absent it is computed with the
  /// prototype 1-NN classifier.
  std::optional<double> reference_accuracy;

  models::McDropoutConfig mc;
  double oracle_tolerance = 1e-3;
  /// Directory of study session logs; when set, the ground truth is the
  /// centroid of the participants' final images instead of the oracle edit.
  std::string ground_truth_logs;
  bool binarize_ground_truth = false;
  bool welch = false;
  /// "target_class" or "global" (a per-class stratified subsample of the
  /// training set of `lof_global_per_class` images each).
  std::string lof_reference = "target_class";
  int lof_global_per_class = 600;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Full default manifest for a dataset (all stages present).
RunManifest default_manifest(const std::string& dataset);
RunManifest load_manifest(const std::string& path);

}  // namespace cfbench::study
