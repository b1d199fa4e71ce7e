#pragma once

#include "cfbench/cf/counterfactual.hpp"
#include "cfbench/data/dataset.hpp"
#include "cfbench/models/autoencoder.hpp"
#include "cfbench/models/classifier.hpp"
#include "cfbench/rng.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include <unistd.h>

namespace fixtures {

using namespace cfbench;

inline Image random_image(Rng& rng) {
  Image img;
  for (int i = 0; i < kPixels; ++i) img.data()[i] = uniform01(rng) - 0.5;
  return img;
}

inline Image constant_image(double v) { return Image::Constant(v); }

inline Vec<double> random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vec<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

inline std::vector<std::string> class_names(int k) {
  std::vector<std::string> names;
  for (int c = 0; c < k; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

/// Single dense layer on the flattened image.
inline cf::Classifier linear_classifier(int k, std::uint64_t seed, double scale = 0.05) {
  nn::Architecture arch(nn::Shape{1, kImageSide, kImageSide});
  arch.dense(k);
  nn::Network<double> net(arch);
  Rng rng(seed);
  net.parameters() = random_vector(net.parameters().size(), rng, scale);
  return cf::Classifier(net, class_names(k));
}

inline cf::Classifier conv_classifier(int k, std::uint64_t seed) {
  return cf::Classifier(nn::Network<double>::initialized(models::classifier_architecture(k), seed), class_names(k));
}

inline cf::Autoencoder random_autoencoder(int latent, std::uint64_t seed) {
  return cf::Autoencoder(nn::Network<double>::initialized(models::encoder_architecture(latent), seed),
                         nn::Network<double>::initialized(models::decoder_architecture(latent), seed + 1), "test");
}

inline cf::Vae random_vae(int latent, std::uint64_t seed) {
  return cf::Vae(nn::Network<double>::initialized(models::encoder_architecture(2 * latent), seed),
                 nn::Network<double>::initialized(models::decoder_logit_architecture(latent), seed + 1));
}

inline data::MisclassifiedItem make_item(const Image& query, int predicted, int truth, std::string id = "item") {
  data::MisclassifiedItem it;
  it.item_id = std::move(id);
  it.query = query;
  it.predicted_label = predicted;
  it.true_label = truth;
  return it;
}

/// MNIST from CFBENCH_DATA_DIR, loaded once; nullptr when unavailable.
inline const data::DatasetSplit* mnist() {
  static const std::optional<data::DatasetSplit> split = []() -> std::optional<data::DatasetSplit> {
    const char* root = std::getenv("CFBENCH_DATA_DIR");
    if (!root || !std::filesystem::exists(std::filesystem::path(root) / "mnist")) return std::nullopt;
    try {
      return data::load_dataset("mnist", root);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }();
  return split ? &*split : nullptr;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cfbench_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
