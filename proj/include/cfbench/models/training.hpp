#pragma once

#include "cfbench/data/dataset.hpp"
#include "cfbench/models/autoencoder.hpp"
#include "cfbench/models/classifier.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cfbench::models {

using Logger = std::function<void(const std::string&)>;

struct ClassifierTrainingResult {
  ClassifierModel<float> model;
  double test_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

/// Adam on mean softmax cross-entropy with dropout active; deterministic in cfg.seed.
ClassifierTrainingResult train_classifier(const Mat<float>& x_train, std::span<const int> y_train,
                                          const Mat<float>& x_test, std::span<const int> y_test,
                                          const nn::Architecture& arch, std::vector<std::string> class_names,
                                          const TrainConfig& cfg, const Logger& log = {});
ClassifierTrainingResult train_classifier(const data::DatasetSplit& split, const TrainConfig& cfg,
                                          const Logger& log = {});

double accuracy(const ClassifierModel<float>& model, const Mat<float>& x, std::span<const int> labels);

struct AutoencoderTrainingResult {
  Autoencoder<float> model;
  double initial_heldout_loss = 0.0;  // mean squared reconstruction error per image
  double final_heldout_loss = 0.0;
  std::vector<double> epoch_losses;
};

AutoencoderTrainingResult train_autoencoder(const Mat<float>& train, const Mat<float>& heldout, int latent_dim,
                                            const TrainConfig& cfg, std::string scope, const Logger& log = {});

/// Trains on class `c`, holding out the last 10% of that class's training images.
AutoencoderTrainingResult train_class_autoencoder(const data::DatasetSplit& split, int c, const TrainConfig& cfg,
                                                  int latent_dim = 16, const Logger& log = {});
AutoencoderTrainingResult train_dataset_autoencoder(const data::DatasetSplit& split, const TrainConfig& cfg,
                                                    int latent_dim = 16, const Logger& log = {});

double mean_reconstruction_error(const Autoencoder<float>& ae, const Mat<float>& x);

struct VaeTrainingResult {
  VariationalAutoencoder<float> model;
  double initial_heldout_neg_elbo = 0.0;  // per image, lower is better
  double final_heldout_neg_elbo = 0.0;
  std::vector<double> epoch_losses;
};

VaeTrainingResult train_vae(const Mat<float>& train, const Mat<float>& heldout, int latent_dim, const TrainConfig& cfg,
                            const Logger& log = {});
VaeTrainingResult train_vae(const data::DatasetSplit& split, const TrainConfig& cfg, int latent_dim = 8,
                            const Logger& log = {});

/// Negative ELBO summed over the batch with one reparameterised sample per
/// column. When `ge` is non-null, writes the encoder and decoder gradients of
/// the batch mean.
template <typename Scalar>
double vae_batch_loss(const nn::Network<Scalar>& enc, const nn::Network<Scalar>& dec, const Mat<Scalar>& xb, Rng& rng,
                      Vec<Scalar>* ge, Vec<Scalar>* gd);

/// Negative ELBO (BCE reconstruction + KL) per image with a fixed noise seed.
double vae_negative_elbo(const VariationalAutoencoder<float>& vae, const Mat<float>& x, std::uint64_t seed = 7);

}  // namespace cfbench::models
