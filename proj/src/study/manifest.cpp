#include "cfbench/study/manifest.hpp"

#include "cfbench/io.hpp"

#include <algorithm>

namespace cfbench::study {

void RunManifest::validate() const {
  if (dataset.empty()) throw ConfigError("manifest: dataset id is required");
  if (items < 1) throw ConfigError("manifest: items must be >= 1");
  if (!classifier) throw ConfigError("manifest: the classifier stage is required");
  if (!class_autoencoders) throw ConfigError("manifest: the class_autoencoders stage is required for IM1");
  auto uses = [&](cf::Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  if ((uses(cf::Method::Cem) || uses(cf::Method::Vlk)) && !dataset_autoencoder)
    throw ConfigError("manifest: CEM and VLK are enabled but the dataset_autoencoder stage is missing");
  if (uses(cf::Method::Revise) && !vae) throw ConfigError("manifest: Revise is enabled but the vae stage is missing");
  for (const auto* c : {&classifier, &class_autoencoders, &dataset_autoencoder, &vae})
    if (*c) (*c)->validate();
  minedit.validate();
  cem.validate();
  vlk.validate();
  revise.validate();
  mc.validate();
  if (ae_latent_dim < 1 || vae_latent_dim < 1) throw ConfigError("manifest: latent dimensions must be positive");
  if (prototypes_per_class < 1) throw ConfigError("manifest: prototypes_per_class must be >= 1");
  if (reference_accuracy && !(*reference_accuracy > 0.0 && *reference_accuracy <= 1.0))
    throw ConfigError("manifest: reference_accuracy must lie in (0, 1]");
  if (!(oracle_tolerance > 0.0)) throw ConfigError("manifest: oracle_tolerance must be positive");
  if (lof_reference != "target_class" && lof_reference != "global")
    throw ConfigError("manifest: lof_reference must be target_class or global");
  if (lof_global_per_class < 2) throw ConfigError("manifest: lof_global_per_class must be >= 2");
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json::object();
  j["dataset"] = m.dataset;
  j["data_root"] = m.data_root;
  j["seed"] = m.seed;
  j["items"] = m.items;
  if (m.classifier) j["classifier"] = *m.classifier;
  if (m.class_autoencoders) j["class_autoencoders"] = *m.class_autoencoders;
  if (m.dataset_autoencoder) j["dataset_autoencoder"] = *m.dataset_autoencoder;
  if (m.vae) j["vae"] = *m.vae;
  j["ae_latent_dim"] = m.ae_latent_dim;
  j["vae_latent_dim"] = m.vae_latent_dim;
  std::vector<std::string> methods;
  for (auto mm : m.methods) methods.push_back(cf::to_string(mm));
  j["methods"] = methods;
  j["minedit"] = m.minedit;
  j["cem"] = m.cem;
  j["vlk"] = m.vlk;
  j["revise"] = m.revise;
  j["prototypes_per_class"] = m.prototypes_per_class;
  j["squared_kernel"] = m.squared_kernel;
  j["reference_accuracy"] = m.reference_accuracy ? nlohmann::json(*m.reference_accuracy) : nlohmann::json();
  j["mc"] = m.mc;
  j["oracle_tolerance"] = m.oracle_tolerance;
  j["ground_truth_logs"] = m.ground_truth_logs;
  j["binarize_ground_truth"] = m.binarize_ground_truth;
  j["welch"] = m.welch;
  j["lof_reference"] = m.lof_reference;
  j["lof_global_per_class"] = m.lof_global_per_class;
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  if (!j.is_object()) throw ConfigError("manifest: expected a JSON object");
  m.dataset = j.value("dataset", m.dataset);
  m.data_root = j.value("data_root", m.data_root);
  m.seed = j.value("seed", m.seed);
  m.items = j.value("items", m.items);
  auto section = [&](const char* name, std::optional<models::TrainConfig>& out) {
    if (j.contains(name) && !j.at(name).is_null()) out = j.at(name).get<models::TrainConfig>();
    else out.reset();
  };
  section("classifier", m.classifier);
  section("class_autoencoders", m.class_autoencoders);
  section("dataset_autoencoder", m.dataset_autoencoder);
  section("vae", m.vae);
  m.ae_latent_dim = j.value("ae_latent_dim", m.ae_latent_dim);
  m.vae_latent_dim = j.value("vae_latent_dim", m.vae_latent_dim);
  if (j.contains("methods")) {
    m.methods.clear();
    for (const auto& s : j.at("methods")) m.methods.push_back(cf::method_from_string(s.get<std::string>()));
  }
  if (j.contains("minedit")) j.at("minedit").get_to(m.minedit);
  if (j.contains("cem")) j.at("cem").get_to(m.cem);
  if (j.contains("vlk")) j.at("vlk").get_to(m.vlk);
  if (j.contains("revise")) j.at("revise").get_to(m.revise);
  m.prototypes_per_class = j.value("prototypes_per_class", m.prototypes_per_class);
  m.squared_kernel = j.value("squared_kernel", m.squared_kernel);
  if (j.contains("reference_accuracy") && !j.at("reference_accuracy").is_null())
    m.reference_accuracy = j.at("reference_accuracy").get<double>();
  else
    m.reference_accuracy.reset();
  if (j.contains("mc")) j.at("mc").get_to(m.mc);
  m.oracle_tolerance = j.value("oracle_tolerance", m.oracle_tolerance);
  m.ground_truth_logs = j.value("ground_truth_logs", m.ground_truth_logs);
  m.binarize_ground_truth = j.value("binarize_ground_truth", m.binarize_ground_truth);
  m.welch = j.value("welch", m.welch);
  m.lof_reference = j.value("lof_reference", m.lof_reference);
  m.lof_global_per_class = j.value("lof_global_per_class", m.lof_global_per_class);
}

RunManifest default_manifest(const std::string& dataset) {
  RunManifest m;
  m.dataset = dataset;
  m.classifier = models::TrainConfig{10, 256, 1e-3, 1};
  m.class_autoencoders = models::TrainConfig{5, 128, 1e-3, 2};
  m.dataset_autoencoder = models::TrainConfig{5, 256, 1e-3, 3};
  m.vae = models::TrainConfig{5, 256, 1e-3, 4};
  if (dataset == "mnist") {
    m.reference_accuracy = 0.7557;
    m.prototypes_per_class = 5;
  } else {
    m.prototypes_per_class = 10;
  }
  return m;
}

RunManifest load_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.classifier.reset();
  m.class_autoencoders.reset();
  m.dataset_autoencoder.reset();
  m.vae.reset();
  try {
    from_json(j, m);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path + ": " + e.what());
  }
  return m;
}

}  // namespace cfbench::study
