#pragma once

#include "cfbench/models/config.hpp"
#include "cfbench/nn/checkpoint.hpp"
#include "cfbench/nn/network.hpp"

#include <cmath>
#include <string>

namespace cfbench::models {

/// Convolutional encoder: two conv/pool stages then a linear map to the latent code.
nn::Architecture encoder_architecture(int latent_outputs, nn::Shape input = {1, kImageSide, kImageSide});
/// Dense decoder ending in logits over pixels (no output activation).
nn::Architecture decoder_logit_architecture(int latent_dim, int outputs = kPixels);
/// Dense decoder ending in the bounded (pixel-range) activation.
nn::Architecture decoder_architecture(int latent_dim, int outputs = kPixels);

template <typename Scalar>
class Autoencoder {
 public:
  using Vector = Vec<Scalar>;
  using Matrix = Mat<Scalar>;

  Autoencoder() = default;
  Autoencoder(nn::Network<Scalar> encoder, nn::Network<Scalar> decoder, std::string scope)
      : encoder_(std::move(encoder)), decoder_(std::move(decoder)), scope_(std::move(scope)) {
    if (encoder_.output_size() != decoder_.input_size()) throw Error("autoencoder: latent width mismatch");
    if (decoder_.output_size() != encoder_.input_size()) throw Error("autoencoder: output shape mismatch");
  }

  int latent_dim() const { return static_cast<int>(encoder_.output_size()); }
  const std::string& scope() const { return scope_; }
  const nn::Network<Scalar>& encoder() const { return encoder_; }
  const nn::Network<Scalar>& decoder() const { return decoder_; }
  nn::Network<Scalar>& encoder() { return encoder_; }
  nn::Network<Scalar>& decoder() { return decoder_; }

  template <typename Other>
  Autoencoder<Other> cast() const {
    return Autoencoder<Other>(encoder_.template cast<Other>(), decoder_.template cast<Other>(), scope_);
  }

  Matrix encode(const Matrix& x) const { return encoder_.forward(x); }
  Matrix decode(const Matrix& z) const { return decoder_.forward(z); }
  Matrix reconstruct(const Matrix& x) const { return decode(encode(x)); }
  Vector encode(const Vector& x) const { return encoder_.forward(x).col(0); }
  Vector reconstruct(const Vector& x) const { return decode(encode(Matrix(x))).col(0); }

  /// ||x - AE(x)||^2 and its gradient with respect to x (both paths).
  Scalar reconstruction_error(const Vector& x, Vector* grad = nullptr) const {
    nn::Tape<Scalar> te, td;
    const Matrix z = encoder_.forward(x, grad ? &te : nullptr);
    const Matrix r = decoder_.forward(z, grad ? &td : nullptr);
    const Vector diff = x - r.col(0);
    if (grad) {
      const Matrix dr = -Scalar(2) * diff;
      const Matrix dz = decoder_.backward(td, dr, nullptr);
      *grad = Scalar(2) * diff + encoder_.backward(te, dz, nullptr).col(0);
    }
    return diff.squaredNorm();
  }

  /// ||encode(x) - target||^2 and its gradient with respect to x.
  Scalar latent_distance_sq(const Vector& x, const Vector& target, Vector* grad = nullptr) const {
    nn::Tape<Scalar> te;
    const Vector z = encoder_.forward(x, grad ? &te : nullptr).col(0);
    const Vector diff = z - target;
    if (grad) *grad = encoder_.backward(te, Matrix(Scalar(2) * diff), nullptr).col(0);
    return diff.squaredNorm();
  }

  nn::Checkpoint to_checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const {
    nn::Checkpoint ckpt;
    ckpt.kind = "autoencoder";
    ckpt.metadata = metadata;
    ckpt.metadata["scope"] = scope_;
    ckpt.networks.push_back({"encoder", encoder_.template cast<float>()});
    ckpt.networks.push_back({"decoder", decoder_.template cast<float>()});
    return ckpt;
  }

  static Autoencoder from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.kind != "autoencoder") throw Error("checkpoint is a '" + ckpt.kind + "', expected an autoencoder");
    return Autoencoder<float>(ckpt.get("encoder"), ckpt.get("decoder"), ckpt.metadata.at("scope").get<std::string>())
        .template cast<Scalar>();
  }

 private:
  nn::Network<Scalar> encoder_;
  nn::Network<Scalar> decoder_;
  std::string scope_;
};

/// Variational autoencoder. The encoder emits [mean; log-variance]; the
/// decoder emits pixel logits and decode() applies sigmoid - 0.5.
template <typename Scalar>
class VariationalAutoencoder {
 public:
  using Vector = Vec<Scalar>;
  using Matrix = Mat<Scalar>;

  VariationalAutoencoder() = default;
  VariationalAutoencoder(nn::Network<Scalar> encoder, nn::Network<Scalar> decoder)
      : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    if (encoder_.output_size() != 2 * decoder_.input_size()) throw Error("vae: encoder must emit mean and log-variance");
  }

  int latent_dim() const { return static_cast<int>(decoder_.input_size()); }
  const nn::Network<Scalar>& encoder() const { return encoder_; }
  const nn::Network<Scalar>& decoder() const { return decoder_; }
  nn::Network<Scalar>& encoder() { return encoder_; }
  nn::Network<Scalar>& decoder() { return decoder_; }

  template <typename Other>
  VariationalAutoencoder<Other> cast() const {
    return VariationalAutoencoder<Other>(encoder_.template cast<Other>(), decoder_.template cast<Other>());
  }

  /// Posterior mean for each column.
  Matrix encode_mean(const Matrix& x) const { return encoder_.forward(x).topRows(latent_dim()); }
  Vector encode(const Vector& x) const { return encode_mean(Matrix(x)).col(0); }

  Matrix decode(const Matrix& z) const { return activate(decoder_.forward(z)); }
  Vector decode(const Vector& z) const { return decode(Matrix(z)).col(0); }

  /// decode(z) together with a pullback that maps d(loss)/d(image) to d(loss)/d(z).
  struct DecodeTrace {
    nn::Tape<Scalar> tape;
    Vector image;
  };
  DecodeTrace decode_traced(const Vector& z) const {
    DecodeTrace t;
    t.image = activate(decoder_.forward(z, &t.tape)).col(0);
    return t;
  }
  Vector decode_pullback(const DecodeTrace& trace, const Vector& d_image) const {
    // d sigmoid = s (1 - s) with s = image + 0.5
    const Vector s = trace.image.array() + Scalar(0.5);
    const Vector d_logits = d_image.cwiseProduct(s.cwiseProduct((Scalar(1) - s.array()).matrix()));
    return decoder_.backward(trace.tape, d_logits, nullptr).col(0);
  }

  /// KL(q(z|x) || N(0, I)) for one input.
  Scalar kl_divergence(const Vector& x) const {
    const Vector out = encoder_.forward(x).col(0);
    const auto mu = out.head(latent_dim()).array();
    const auto logvar = out.tail(latent_dim()).array();
    return Scalar(-0.5) * (Scalar(1) + logvar - mu.square() - logvar.exp()).sum();
  }

  static Matrix activate(const Matrix& logits) {
    return logits.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)) - Scalar(0.5); });
  }

  nn::Checkpoint to_checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const {
    nn::Checkpoint ckpt;
    ckpt.kind = "vae";
    ckpt.metadata = metadata;
    ckpt.networks.push_back({"encoder", encoder_.template cast<float>()});
    ckpt.networks.push_back({"decoder", decoder_.template cast<float>()});
    return ckpt;
  }

  static VariationalAutoencoder from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.kind != "vae") throw Error("checkpoint is a '" + ckpt.kind + "', expected a vae");
    return VariationalAutoencoder<float>(ckpt.get("encoder"), ckpt.get("decoder")).template cast<Scalar>();
  }

 private:
  nn::Network<Scalar> encoder_;
  nn::Network<Scalar> decoder_;
};

}  // namespace cfbench::models
