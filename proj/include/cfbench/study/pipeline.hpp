#pragma once

#include "cfbench/cf/counterfactual.hpp"
#include "cfbench/data/dataset.hpp"
#include "cfbench/ground_truth/session.hpp"
#include "cfbench/models/training.hpp"
#include "cfbench/prototypes/prototypes.hpp"
#include "cfbench/study/manifest.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfbench::study {

struct StageInfo {
  std::string name;
  std::string key;  // hex SHA-256 of the stage inputs
  std::filesystem::path dir;
  bool reused = false;
};

/// Raised when a stage fails; names the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Stages live in <out>/stages/<name>-<key16>/ and are finished once their
/// stage.json exists; a finished stage with the same key is never recomputed.
/// Asking for a stage runs (or reuses) everything upstream of it.
class Pipeline {
 public:
  Pipeline(RunManifest manifest, std::filesystem::path out_dir, models::Logger log = {});

  const RunManifest& manifest() const { return manifest_; }
  const std::filesystem::path& out_dir() const { return out_; }
  const data::DatasetSplit& split();

  StageInfo classifier();
  StageInfo sample();
  StageInfo prototypes();
  StageInfo class_autoencoders();
  StageInfo dataset_autoencoder();
  StageInfo vae();
  StageInfo explain(cf::Method method);
  StageInfo oracle();
  StageInfo evaluate();
  /// Writes the report to <out>/report and the resolved manifest to
  /// <out>/run_manifest.json.
  StageInfo report();

  /// train, sample, prototypes, explain for every enabled method, oracle or
  /// session ground truth, evaluate, report.
  StageInfo run_all();

  /// Loaded artefacts (running the producing stage when needed).
  const cf::Classifier& classifier_model();
  std::vector<data::MisclassifiedItem> sampled_items();
  std::vector<data::MisclassifiedItem> practice_items();
  const prototypes::PrototypeSet& prototype_set();
  ground_truth::Study study();

  const std::vector<StageInfo>& history() const { return history_; }

 private:
  using Body = std::function<void(const std::filesystem::path& dir, nlohmann::json& summary)>;
  StageInfo run_stage(const std::string& name, const nlohmann::json& inputs, const Body& body);
  std::string data_fingerprint();
  void log(const std::string& line) const;
  std::vector<data::MisclassifiedItem> read_items(const std::string& file);
  StageInfo ground_truth_stage();

  RunManifest manifest_;
  std::filesystem::path out_;
  models::Logger log_;
  std::optional<data::DatasetSplit> split_;
  std::optional<std::string> fingerprint_;
  std::optional<cf::Classifier> classifier_;
  std::optional<prototypes::PrototypeSet> prototypes_;
  std::map<std::string, StageInfo> done_;
  std::vector<StageInfo> history_;
};

/// Non-practice final images per item from a directory of session logs.
/// Later revisions within a session replace earlier ones.
std::map<std::string, std::vector<Image>> read_session_finals(const std::filesystem::path& log_dir);

}  // namespace cfbench::study
