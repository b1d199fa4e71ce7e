#include "cfbench/models/training.hpp"

#include "cfbench/nn/adam.hpp"

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace cfbench::models {

nn::Architecture classifier_architecture(int num_classes, nn::Shape input) {
  return nn::Architecture(input)
      .conv(32, 3)
      .relu()
      .maxpool()
      .dropout(0.3)
      .conv(64, 3)
      .relu()
      .maxpool()
      .dropout(0.3)
      .dense(128)
      .relu()
      .dropout(0.5)
      .dense(num_classes);
}

nn::Architecture encoder_architecture(int latent_outputs, nn::Shape input) {
  return nn::Architecture(input).conv(8, 3, 1).relu().maxpool().conv(16, 3, 1).relu().maxpool().dense(latent_outputs);
}

nn::Architecture decoder_logit_architecture(int latent_dim, int outputs) {
  return nn::Architecture(nn::Shape{latent_dim, 1, 1}).dense(256).relu().dense(outputs);
}

nn::Architecture decoder_architecture(int latent_dim, int outputs) {
  return decoder_logit_architecture(latent_dim, outputs).bounded_output();
}

namespace {

Mat<float> gather(const Mat<float>& x, std::span<const std::size_t> idx) {
  Mat<float> out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

void emit(const Logger& log, const char* fmt, auto... args) {
  if (!log) return;
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  log(buf);
}

void check_finite(double loss, const char* what, int epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw Error(std::string(what) + ": training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                ", batch " + std::to_string(batch));
}

/// Runs `epochs` of shuffled minibatches, calling `step(batch_indices)` which
/// returns the batch loss.
template <typename Step>
std::vector<double> run_epochs(std::size_t n, const TrainConfig& cfg, const char* what, const Logger& log, Step step) {
  // Batch activations are large and short-lived; keep them on the heap
  // instead of round-tripping through mmap on every layer.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  Rng rng(cfg.seed);
  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = permutation(n, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
      const double loss = step(std::span<const std::size_t>(order.data() + start, len), rng);
      check_finite(loss, what, epoch, batches);
      total += loss;
      ++batches;
    }
    epoch_losses.push_back(total / static_cast<double>(batches));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(log, "%s epoch %d/%d loss %.5f (%.1fs)", what, epoch + 1, cfg.epochs, epoch_losses.back(), secs);
  }
  return epoch_losses;
}

}  // namespace

double accuracy(const ClassifierModel<float>& model, const Mat<float>& x, std::span<const int> labels) {
  const auto pred = model.predict_labels(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
}

ClassifierTrainingResult train_classifier(const Mat<float>& x_train, std::span<const int> y_train,
                                          const Mat<float>& x_test, std::span<const int> y_test,
                                          const nn::Architecture& arch, std::vector<std::string> class_names,
                                          const TrainConfig& cfg, const Logger& log) {
  cfg.validate();
  if (static_cast<std::size_t>(x_train.cols()) != y_train.size()) throw Error("train_classifier: label count mismatch");
  auto net = nn::Network<float>::initialized(arch, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Adam<float> adam(net.parameters().size(), {cfg.learning_rate});
  Vec<float> grad(net.parameters().size());
  std::vector<int> batch_labels;

  ClassifierTrainingResult result;
  result.epoch_losses = run_epochs(
      static_cast<std::size_t>(x_train.cols()), cfg, "classifier", log,
      [&](std::span<const std::size_t> idx, Rng& rng) {
        const Mat<float> xb = gather(x_train, idx);
        batch_labels.resize(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) batch_labels[j] = y_train[idx[j]];
        nn::Tape<float> tape;
        const Mat<float> z = net.forward(xb, &tape, {true, &rng});
        Mat<float> dz;
        const float loss = nn::softmax_cross_entropy<float>(z, batch_labels, &dz);
        grad.setZero();
        net.backward(tape, dz, &grad, false);
        adam.step(net.parameters(), grad);
        return static_cast<double>(loss);
      });
  result.model = ClassifierModel<float>(std::move(net), std::move(class_names));
  result.test_accuracy = x_test.cols() > 0 ? accuracy(result.model, x_test, y_test) : 0.0;
  emit(log, "classifier test accuracy %.4f", result.test_accuracy);
  return result;
}

ClassifierTrainingResult train_classifier(const data::DatasetSplit& split, const TrainConfig& cfg, const Logger& log) {
  split.validate();
  const Mat<float> x_train = data::scaled_all<float>(split.train_images);
  const Mat<float> x_test = data::scaled_all<float>(split.test_images);
  return train_classifier(x_train, split.train_labels, x_test, split.test_labels,
                          classifier_architecture(split.num_classes()), split.class_names, cfg, log);
}

double mean_reconstruction_error(const Autoencoder<float>& ae, const Mat<float>& x) {
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += 512) {
    const Eigen::Index n = std::min<Eigen::Index>(512, x.cols() - start);
    const Mat<float> xb = x.middleCols(start, n);
    total += (xb - ae.reconstruct(xb)).cast<double>().squaredNorm();
  }
  return x.cols() > 0 ? total / static_cast<double>(x.cols()) : 0.0;
}

AutoencoderTrainingResult train_autoencoder(const Mat<float>& train, const Mat<float>& heldout, int latent_dim,
                                            const TrainConfig& cfg, std::string scope, const Logger& log) {
  cfg.validate();
  if (latent_dim < 1) throw ConfigError("autoencoder: latent dimension must be positive");
  auto enc = nn::Network<float>::initialized(encoder_architecture(latent_dim), cfg.seed ^ 0x1234abcdULL);
  auto dec = nn::Network<float>::initialized(decoder_architecture(latent_dim), cfg.seed ^ 0x5678ef01ULL);
  AutoencoderTrainingResult result;
  result.initial_heldout_loss = mean_reconstruction_error(Autoencoder<float>(enc, dec, scope), heldout);

  nn::Adam<float> adam_e(enc.parameters().size(), {cfg.learning_rate});
  nn::Adam<float> adam_d(dec.parameters().size(), {cfg.learning_rate});
  Vec<float> ge(enc.parameters().size()), gd(dec.parameters().size());
  const std::string what = "autoencoder[" + scope + "]";
  result.epoch_losses = run_epochs(static_cast<std::size_t>(train.cols()), cfg, what.c_str(), log,
                                   [&](std::span<const std::size_t> idx, Rng&) {
                                     const Mat<float> xb = gather(train, idx);
                                     nn::Tape<float> te, td;
                                     const Mat<float> z = enc.forward(xb, &te);
                                     const Mat<float> r = dec.forward(z, &td);
                                     const Mat<float> diff = r - xb;
                                     const float b = static_cast<float>(xb.cols());
                                     ge.setZero();
                                     gd.setZero();
                                     const Mat<float> dz = dec.backward(td, (2.0f / b) * diff, &gd);
                                     enc.backward(te, dz, &ge, false);
                                     adam_e.step(enc.parameters(), ge);
                                     adam_d.step(dec.parameters(), gd);
                                     return static_cast<double>(diff.squaredNorm() / b);
                                   });
  result.model = Autoencoder<float>(std::move(enc), std::move(dec), std::move(scope));
  result.final_heldout_loss = mean_reconstruction_error(result.model, heldout);
  emit(log, "%s held-out reconstruction %.4f -> %.4f", what.c_str(), result.initial_heldout_loss,
       result.final_heldout_loss);
  return result;
}

AutoencoderTrainingResult train_class_autoencoder(const data::DatasetSplit& split, int c, const TrainConfig& cfg,
                                                  int latent_dim, const Logger& log) {
  if (c < 0 || c >= split.num_classes()) throw Error("class autoencoder: class index out of range");
  const auto idx = split.train_indices_of(c);
  if (idx.size() < 100)
    throw Error("class autoencoder: class " + split.class_names[static_cast<std::size_t>(c)] + " has only " +
                std::to_string(idx.size()) + " training images (need >= 100)");
  const std::size_t n_hold = idx.size() / 10;
  const std::span<const std::size_t> all(idx);
  const Mat<float> train = data::scaled_columns<float>(split.train_images, all.first(idx.size() - n_hold));
  const Mat<float> hold = data::scaled_columns<float>(split.train_images, all.last(n_hold));
  return train_autoencoder(train, hold, latent_dim, cfg, "class:" + std::to_string(c), log);
}

AutoencoderTrainingResult train_dataset_autoencoder(const data::DatasetSplit& split, const TrainConfig& cfg,
                                                    int latent_dim, const Logger& log) {
  const Mat<float> train = data::scaled_all<float>(split.train_images);
  const Mat<float> test = data::scaled_all<float>(split.test_images);
  return train_autoencoder(train, test, latent_dim, cfg, "dataset", log);
}

template <typename Scalar>
double vae_batch_loss(const nn::Network<Scalar>& enc, const nn::Network<Scalar>& dec, const Mat<Scalar>& xb, Rng& rng,
                      Vec<Scalar>* ge, Vec<Scalar>* gd) {
  using S = Scalar;
  const Eigen::Index d = dec.input_size();
  const Eigen::Index B = xb.cols();
  nn::Tape<S> te, td;
  const bool train = ge != nullptr;
  const Mat<S> h = enc.forward(xb, train ? &te : nullptr);
  const Mat<S> mu = h.topRows(d);
  const Mat<S> logvar = h.bottomRows(d);
  Mat<S> eps(d, B);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<S>(standard_normal(rng));
  const Mat<S> sd = (S(0.5) * logvar.array()).exp().matrix();
  const Mat<S> z = mu + sd.cwiseProduct(eps);
  const Mat<S> a = dec.forward(z, train ? &td : nullptr);
  const Mat<S> t = xb.array() + S(0.5);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double av = a.data()[i], tv = t.data()[i];
    loss += std::max(av, 0.0) - av * tv + std::log1p(std::exp(-std::abs(av)));
  }
  loss += -0.5 * (1.0 + logvar.array().template cast<double>() - mu.array().template cast<double>().square() -
                  logvar.array().template cast<double>().exp())
                     .sum();
  if (!train) return loss;

  const S inv_b = S(1) / static_cast<S>(B);
  const Mat<S> sig = a.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
  const Mat<S> dz = dec.backward(td, inv_b * (sig - t), gd);
  Mat<S> dh(2 * d, B);
  // dz already carries the 1/B factor
  dh.topRows(d) = dz + inv_b * mu;
  dh.bottomRows(d) =
      dz.cwiseProduct(eps).cwiseProduct(S(0.5) * sd) + inv_b * S(0.5) * (logvar.array().exp() - S(1)).matrix();
  enc.backward(te, dh, ge, false);
  return loss;
}

template double vae_batch_loss<float>(const nn::Network<float>&, const nn::Network<float>&, const Mat<float>&, Rng&,
                                       Vec<float>*, Vec<float>*);
template double vae_batch_loss<double>(const nn::Network<double>&, const nn::Network<double>&, const Mat<double>&,
                                        Rng&, Vec<double>*, Vec<double>*);

double vae_negative_elbo(const VariationalAutoencoder<float>& vae, const Mat<float>& x, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += 512) {
    const Eigen::Index n = std::min<Eigen::Index>(512, x.cols() - start);
    total += vae_batch_loss<float>(vae.encoder(), vae.decoder(), x.middleCols(start, n), rng, nullptr, nullptr);
  }
  return x.cols() > 0 ? total / static_cast<double>(x.cols()) : 0.0;
}

VaeTrainingResult train_vae(const Mat<float>& train, const Mat<float>& heldout, int latent_dim, const TrainConfig& cfg,
                            const Logger& log) {
  cfg.validate();
  if (latent_dim < 1) throw ConfigError("vae: latent dimension must be positive");
  auto enc = nn::Network<float>::initialized(encoder_architecture(2 * latent_dim), cfg.seed ^ 0xabcdef12ULL);
  auto dec = nn::Network<float>::initialized(decoder_logit_architecture(latent_dim), cfg.seed ^ 0x13572468ULL);
  VaeTrainingResult result;
  result.initial_heldout_neg_elbo = vae_negative_elbo(VariationalAutoencoder<float>(enc, dec), heldout);
  nn::Adam<float> adam_e(enc.parameters().size(), {cfg.learning_rate});
  nn::Adam<float> adam_d(dec.parameters().size(), {cfg.learning_rate});
  Vec<float> ge(enc.parameters().size()), gd(dec.parameters().size());
  result.epoch_losses = run_epochs(static_cast<std::size_t>(train.cols()), cfg, "vae", log,
                                   [&](std::span<const std::size_t> idx, Rng& rng) {
                                     const Mat<float> xb = gather(train, idx);
                                     ge.setZero();
                                     gd.setZero();
                                     const double loss = vae_batch_loss(enc, dec, xb, rng, &ge, &gd);
                                     adam_e.step(enc.parameters(), ge);
                                     adam_d.step(dec.parameters(), gd);
                                     return loss / static_cast<double>(xb.cols());
                                   });
  result.model = VariationalAutoencoder<float>(std::move(enc), std::move(dec));
  result.final_heldout_neg_elbo = vae_negative_elbo(result.model, heldout);
  emit(log, "vae held-out negative ELBO %.3f -> %.3f", result.initial_heldout_neg_elbo, result.final_heldout_neg_elbo);
  return result;
}

VaeTrainingResult train_vae(const data::DatasetSplit& split, const TrainConfig& cfg, int latent_dim, const Logger& log) {
  const Mat<float> train = data::scaled_all<float>(split.train_images);
  const Mat<float> test = data::scaled_all<float>(split.test_images);
  return train_vae(train, test, latent_dim, cfg, log);
}

}  // namespace cfbench::models
