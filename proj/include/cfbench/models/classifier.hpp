#pragma once

#include "cfbench/models/config.hpp"
#include "cfbench/nn/checkpoint.hpp"
#include "cfbench/nn/losses.hpp"
#include "cfbench/nn/network.hpp"

#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace cfbench::models {

/// Two conv blocks with dropout, a dense hidden layer with dropout, logits out.
nn::Architecture classifier_architecture(int num_classes, nn::Shape input = {1, kImageSide, kImageSide});

// Scalar objectives over the classifier output that input_gradient understands.
struct TargetProbabilitySquaredError {
  int target = 0;
  double target_probability = 0.9;
};
struct CrossEntropyLoss {
  int label = 0;
};
/// max(0, max_{j != target} z_j - z_target + kappa) on logits.
struct LogitMarginLoss {
  int target = 0;
  double kappa = 0.0;
};
/// max(0, max_{j != target} p_j - p_target + kappa) on probabilities.
struct ProbabilityMarginLoss {
  int target = 0;
  double kappa = 0.0;
};
struct ConstantLoss {
  double value = 0.0;
};
/// Misclassification indicator; has no useful gradient and is rejected.
struct ZeroOneLoss {
  int label = 0;
};

using LossSpec = std::variant<TargetProbabilitySquaredError, CrossEntropyLoss, LogitMarginLoss,
                              ProbabilityMarginLoss, ConstantLoss, ZeroOneLoss>;

/// Evaluates `spec` on one logit vector and writes d(loss)/d(logits).
template <typename Scalar>
Scalar evaluate_loss(const LossSpec& spec, const Vec<Scalar>& logits, Vec<Scalar>& d_logits) {
  const Eigen::Index k = logits.size();
  d_logits = Vec<Scalar>::Zero(k);
  auto check = [&](int c) {
    if (c < 0 || c >= k) throw Error("loss: class index out of range");
  };
  return std::visit(
      [&](const auto& s) -> Scalar {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TargetProbabilitySquaredError>) {
          check(s.target);
          const Vec<Scalar> p = nn::softmax(logits);
          const Scalar diff = p[s.target] - static_cast<Scalar>(s.target_probability);
          // d p_t / d z_j = p_t (delta_tj - p_j)
          Vec<Scalar> dp = -p[s.target] * p;
          dp[s.target] += p[s.target];
          d_logits = Scalar(2) * diff * dp;
          return diff * diff;
        } else if constexpr (std::is_same_v<T, CrossEntropyLoss>) {
          check(s.label);
          const Vec<Scalar> p = nn::softmax(logits);
          d_logits = p;
          d_logits[s.label] -= Scalar(1);
          const Scalar m = logits.maxCoeff();
          return m + std::log((logits.array() - m).exp().sum()) - logits[s.label];
        } else if constexpr (std::is_same_v<T, LogitMarginLoss> || std::is_same_v<T, ProbabilityMarginLoss>) {
          check(s.target);
          constexpr bool on_probs = std::is_same_v<T, ProbabilityMarginLoss>;
          const Vec<Scalar> v = on_probs ? nn::softmax(logits) : logits;
          Eigen::Index other = s.target == 0 ? 1 : 0;
          for (Eigen::Index j = 0; j < k; ++j)
            if (j != s.target && v[j] > v[other]) other = j;
          const Scalar margin = v[other] - v[s.target] + static_cast<Scalar>(s.kappa);
          if (margin <= Scalar(0)) return Scalar(0);
          Vec<Scalar> dv = Vec<Scalar>::Zero(k);
          dv[other] = 1;
          dv[s.target] = -1;
          if constexpr (on_probs) {
            // Softmax Jacobian is symmetric: J = diag(p) - p p^T.
            d_logits = v.cwiseProduct(dv) - v * v.dot(dv);
          } else {
            d_logits = dv;
          }
          return margin;
        } else if constexpr (std::is_same_v<T, ConstantLoss>) {
          return static_cast<Scalar>(s.value);
        } else {
          throw Error("loss: zero-one loss is not differentiable");
        }
      },
      spec);
}

template <typename Scalar>
class ClassifierModel {
 public:
  using Vector = Vec<Scalar>;
  using Matrix = Mat<Scalar>;

  ClassifierModel() = default;
  ClassifierModel(nn::Network<Scalar> net, std::vector<std::string> class_names)
      : net_(std::move(net)), class_names_(std::move(class_names)) {
    if (net_.output_size() != static_cast<Eigen::Index>(class_names_.size()))
      throw Error("classifier: output width does not match class count");
  }

  const nn::Network<Scalar>& network() const { return net_; }
  nn::Network<Scalar>& network() { return net_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  Eigen::Index input_size() const { return net_.input_size(); }

  template <typename Other>
  ClassifierModel<Other> cast() const {
    return ClassifierModel<Other>(net_.template cast<Other>(), class_names_);
  }

  Matrix logits(const Matrix& x, bool dropout_on = false, Rng* rng = nullptr) const {
    return net_.forward(x, nullptr, {dropout_on, rng});
  }

  Vector predict_proba(const Vector& x, bool dropout_on = false, Rng* rng = nullptr) const {
    check_input(x);
    return nn::softmax(Vector(logits(x, dropout_on, rng).col(0)));
  }
  Vector predict_proba(const ImageT<Scalar>& image, bool dropout_on = false, Rng* rng = nullptr) const {
    return predict_proba(Vector(flat(image)), dropout_on, rng);
  }

  int predict(const Vector& x) const { return nn::argmax(predict_proba(x)); }

  /// Deterministic labels for a (features x N) block, evaluated in batches.
  std::vector<int> predict_labels(const Matrix& x, Eigen::Index batch = 512) const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index start = 0; start < x.cols(); start += batch) {
      const Eigen::Index n = std::min(batch, x.cols() - start);
      const Matrix z = logits(x.middleCols(start, n));
      for (Eigen::Index j = 0; j < n; ++j) out.push_back(nn::argmax(z.col(j)));
    }
    return out;
  }

  /// Gradient of a scalar objective of the output w.r.t. the input pixels.
  Vector input_gradient(const Vector& x, const LossSpec& spec, Scalar* value = nullptr) const {
    check_input(x);
    nn::Tape<Scalar> tape;
    const Vector z = net_.forward(x, &tape).col(0);
    Vector dz;
    const Scalar v = evaluate_loss(spec, z, dz);
    if (value) *value = v;
    return net_.backward(tape, dz, nullptr).col(0);
  }

  /// Back-propagates an arbitrary d(loss)/d(logits) to the input.
  Vector input_gradient_from_logits(const Vector& x, const std::function<Scalar(const Vector&, Vector&)>& head,
                                    Scalar* value = nullptr) const {
    check_input(x);
    nn::Tape<Scalar> tape;
    const Vector z = net_.forward(x, &tape).col(0);
    Vector dz;
    const Scalar v = head(z, dz);
    if (value) *value = v;
    return net_.backward(tape, dz, nullptr).col(0);
  }

  /// Gradient of the cross-entropy at (x, y) w.r.t. every parameter, in
  /// layer order (weights then biases per layer).
  Vector parameter_gradient(const Vector& x, int label, Scalar* loss = nullptr) const {
    check_input(x);
    if (label < 0 || label >= num_classes()) throw Error("parameter_gradient: label out of range");
    nn::Tape<Scalar> tape;
    const Vector z = net_.forward(x, &tape).col(0);
    Vector dz;
    const Scalar v = evaluate_loss<Scalar>(CrossEntropyLoss{label}, z, dz);
    if (loss) *loss = v;
    Vector grad = Vector::Zero(net_.parameters().size());
    net_.backward(tape, dz, &grad);
    return grad;
  }

  /// T stochastic passes with dropout active; deterministic for a given seed.
  std::vector<Vector> mc_forward_passes(const Vector& x, const McDropoutConfig& cfg) const {
    cfg.validate();
    check_input(x);
    Rng rng(cfg.seed);
    bool stochastic = false;
    for (const auto& l : net_.architecture().layers()) stochastic |= l.kind == nn::LayerKind::Dropout && l.rate > 0.0;
    // Without active dropout every pass is the deterministic forward pass.
    const Matrix p = stochastic ? nn::softmax(logits(x.replicate(1, cfg.passes), true, &rng))
                                : nn::softmax(logits(x)).replicate(1, cfg.passes);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(cfg.passes));
    for (int t = 0; t < cfg.passes; ++t) out.emplace_back(p.col(t));
    return out;
  }

  nn::Checkpoint to_checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const {
    nn::Checkpoint ckpt;
    ckpt.kind = "classifier";
    ckpt.metadata = metadata;
    ckpt.metadata["class_names"] = class_names_;
    ckpt.networks.push_back({"classifier", net_.template cast<float>()});
    return ckpt;
  }

  static ClassifierModel from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.kind != "classifier") throw Error("checkpoint is a '" + ckpt.kind + "', expected a classifier");
    return ClassifierModel<float>(ckpt.get("classifier"),
                                  ckpt.metadata.at("class_names").get<std::vector<std::string>>())
        .template cast<Scalar>();
  }

 private:
  void check_input(const Vector& x) const {
    if (x.size() != net_.input_size())
      throw Error("classifier: input has " + std::to_string(x.size()) + " values, expected " +
                  std::to_string(net_.input_size()));
  }

  nn::Network<Scalar> net_;
  std::vector<std::string> class_names_;
};

}  // namespace cfbench::models
