#pragma once

#include "cfbench/core.hpp"
#include "cfbench/nn/architecture.hpp"
#include "cfbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace cfbench::nn {

/// Per-call forward record used by backward(). Owned by the caller, so a
/// single immutable Network can serve concurrent forward/backward passes.
template <typename Scalar>
struct Tape {
  std::vector<Mat<Scalar>> inputs;
  std::vector<Mat<Scalar>> masks;
  std::vector<std::vector<Eigen::Index>> argmax;
};

struct ForwardOptions {
  bool dropout = false;
  Rng* rng = nullptr;  // required when dropout is on
};

namespace detail {

// Activations are stored channel-last (HWC) per column. A patch column holds
// (ky, kx, c) in that order, so each kernel row copies C contiguous values.
template <typename Scalar>
void im2col(const LayerSpec& s, const Mat<Scalar>& x, Mat<Scalar>& cols) {
  const int C = s.in.channels, H = s.in.height, W = s.in.width, k = s.kernel, pad = s.padding;
  const int OH = s.out.height, OW = s.out.width, P = OH * OW;
  const Eigen::Index B = x.cols();
  cols.resize(Eigen::Index(C) * k * k, B * P);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Scalar* in = x.col(b).data();
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        Scalar* dst = cols.col(b * P + oy * OW + ox).data();
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy + ky - pad;
          for (int kx = 0; kx < k; ++kx, dst += C) {
            const int ix = ox + kx - pad;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
              std::copy_n(in + (Eigen::Index(iy) * W + ix) * C, C, dst);
            else
              std::fill_n(dst, C, Scalar(0));
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const LayerSpec& s, const Mat<Scalar>& cols, Mat<Scalar>& dx) {
  const int C = s.in.channels, H = s.in.height, W = s.in.width, k = s.kernel, pad = s.padding;
  const int OH = s.out.height, OW = s.out.width, P = OH * OW;
  const Eigen::Index B = dx.cols();
  for (Eigen::Index b = 0; b < B; ++b) {
    Scalar* out = dx.col(b).data();
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        const Scalar* src = cols.col(b * P + oy * OW + ox).data();
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy + ky - pad;
          for (int kx = 0; kx < k; ++kx, src += C) {
            const int ix = ox + kx - pad;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            Scalar* d = out + (Eigen::Index(iy) * W + ix) * C;
            for (int c = 0; c < C; ++c) d[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Sequential network over column batches: input is (features x batch),
/// each column one sample in channel-last (HWC) order.
template <typename Scalar>
class Network {
 public:
  using Matrix = Mat<Scalar>;
  using Vector = Vec<Scalar>;

  Network() = default;
  explicit Network(Architecture arch)
      : arch_(std::move(arch)), params_(Vector::Zero(static_cast<Eigen::Index>(arch_.parameter_count()))) {}
  Network(Architecture arch, Vector params) : arch_(std::move(arch)), params_(std::move(params)) {
    if (static_cast<std::size_t>(params_.size()) != arch_.parameter_count())
      throw Error("network: parameter vector size does not match architecture");
  }

  /// He-normal weights, zero biases.
  static Network initialized(Architecture arch, std::uint64_t seed) {
    Network net(std::move(arch));
    Rng rng(seed);
    for (const auto& l : net.arch_.layers()) {
      const std::size_t wc = l.weight_count();
      if (wc == 0) continue;
      const double fan_in = l.kind == LayerKind::Conv2D ? double(l.in.channels) * l.kernel * l.kernel : l.in.size();
      const double stddev = std::sqrt(2.0 / fan_in);
      for (std::size_t i = 0; i < wc; ++i)
        net.params_[static_cast<Eigen::Index>(l.param_offset + i)] = static_cast<Scalar>(stddev * standard_normal(rng));
    }
    return net;
  }

  const Architecture& architecture() const { return arch_; }
  const Vector& parameters() const { return params_; }
  Vector& parameters() { return params_; }
  Eigen::Index input_size() const { return arch_.input().size(); }
  Eigen::Index output_size() const { return arch_.output().size(); }

  template <typename Other>
  Network<Other> cast() const {
    return Network<Other>(arch_, params_.template cast<Other>());
  }

  Matrix forward(const Matrix& x, Tape<Scalar>* tape = nullptr, ForwardOptions opt = {}) const {
    if (x.rows() != input_size())
      throw Error("network: input has " + std::to_string(x.rows()) + " features, expected " +
                  std::to_string(input_size()));
    const auto& layers = arch_.layers();
    if (tape) {
      tape->inputs.assign(layers.size(), Matrix());
      tape->masks.assign(layers.size(), Matrix());
      tape->argmax.assign(layers.size(), {});
    }
    Matrix cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Matrix next = forward_layer(layers[i], cur, tape ? &tape->masks[i] : nullptr, tape ? &tape->argmax[i] : nullptr,
                                  opt);
      if (tape) tape->inputs[i] = std::move(cur);
      cur = std::move(next);
    }
    return cur;
  }

  /// Back-propagates d(loss)/d(output). Accumulates parameter gradients into
  /// `param_grad` when non-null and returns d(loss)/d(input), or an empty
  /// matrix when `input_grad` is false.
  Matrix backward(const Tape<Scalar>& tape, const Matrix& d_out, Vector* param_grad, bool input_grad = true) const {
    const auto& layers = arch_.layers();
    if (tape.inputs.size() != layers.size()) throw Error("network: tape does not belong to this network");
    if (param_grad && param_grad->size() != params_.size()) param_grad->setZero(params_.size());
    Matrix grad = d_out;
    for (std::size_t i = layers.size(); i-- > 0;)
      grad = backward_layer(layers[i], tape, i, grad, param_grad, i > 0 || input_grad);
    return grad;
  }

 private:
  Eigen::Map<const Matrix> weights(const LayerSpec& l, Eigen::Index rows, Eigen::Index cols) const {
    return Eigen::Map<const Matrix>(params_.data() + l.param_offset, rows, cols);
  }
  Eigen::Map<const Vector> biases(const LayerSpec& l, Eigen::Index n) const {
    return Eigen::Map<const Vector>(params_.data() + l.param_offset + l.weight_count(), n);
  }

  Matrix forward_layer(const LayerSpec& l, const Matrix& x, Matrix* mask, std::vector<Eigen::Index>* argmax,
                       const ForwardOptions& opt) const {
    const Eigen::Index B = x.cols();
    switch (l.kind) {
      case LayerKind::Dense: {
        const auto W = weights(l, l.out.size(), l.in.size());
        Matrix y = W * x;
        y.colwise() += biases(l, l.out.size());
        return y;
      }
      case LayerKind::Conv2D: {
        const Eigen::Index ckk = Eigen::Index(l.in.channels) * l.kernel * l.kernel;
        const Eigen::Index P = Eigen::Index(l.out.height) * l.out.width;
        const Eigen::Index OC = l.out.channels;
        Matrix cols;
        detail::im2col(l, x, cols);
        // (OC x B*P) in column-major order is already the HWC batch layout.
        Matrix y(OC * P, B);
        Eigen::Map<Matrix> yc(y.data(), OC, B * P);
        yc.noalias() = weights(l, OC, ckk) * cols;
        yc.colwise() += biases(l, OC);
        return y;
      }
      case LayerKind::MaxPool2: {
        const int C = l.in.channels, W = l.in.width, OH = l.out.height, OW = l.out.width;
        Matrix y(l.out.size(), B);
        if (argmax) argmax->resize(static_cast<std::size_t>(y.size()));
        for (Eigen::Index b = 0; b < B; ++b) {
          const Scalar* in = x.col(b).data();
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
              for (int c = 0; c < C; ++c) {
                Eigen::Index best = (Eigen::Index(2 * oy) * W + 2 * ox) * C + c;
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx) {
                    const Eigen::Index idx = (Eigen::Index(2 * oy + dy) * W + 2 * ox + dx) * C + c;
                    if (in[idx] > in[best]) best = idx;
                  }
                const Eigen::Index o = (Eigen::Index(oy) * OW + ox) * C + c;
                y(o, b) = in[best];
                if (argmax) (*argmax)[static_cast<std::size_t>(b * y.rows() + o)] = best;
              }
        }
        return y;
      }
      case LayerKind::ReLU: return x.cwiseMax(Scalar(0));
      case LayerKind::Dropout: {
        if (!opt.dropout || l.rate <= 0.0) return x;
        if (!opt.rng) throw Error("network: dropout requested without a random source");
        const double keep = 1.0 - l.rate;
        // Each 64-bit draw decides two units through its 32-bit halves.
        const auto threshold = static_cast<std::uint64_t>(keep * 4294967296.0);
        const Scalar scale = static_cast<Scalar>(1.0 / keep);
        Matrix m(x.rows(), x.cols());
        std::uint64_t bits = 0;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
          if ((i & 1) == 0) bits = (*opt.rng)();
          const std::uint64_t u = (i & 1) == 0 ? (bits >> 32) : (bits & 0xffffffffULL);
          m.data()[i] = u < threshold ? scale : Scalar(0);
        }
        Matrix y = x.cwiseProduct(m);
        if (mask) *mask = std::move(m);
        return y;
      }
      case LayerKind::BoundedOutput:
        return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)) - Scalar(0.5); });
    }
    throw Error("network: unhandled layer");
  }

  Matrix backward_layer(const LayerSpec& l, const Tape<Scalar>& tape, std::size_t i, const Matrix& dy,
                        Vector* param_grad, bool input_grad) const {
    const Matrix& x = tape.inputs[i];
    const Eigen::Index B = x.cols();
    switch (l.kind) {
      case LayerKind::Dense: {
        const auto W = weights(l, l.out.size(), l.in.size());
        if (param_grad) {
          Eigen::Map<Matrix>(param_grad->data() + l.param_offset, l.out.size(), l.in.size()).noalias() +=
              dy * x.transpose();
          Eigen::Map<Vector>(param_grad->data() + l.param_offset + l.weight_count(), l.out.size()) +=
              dy.rowwise().sum();
        }
        if (!input_grad) return Matrix();
        return W.transpose() * dy;
      }
      case LayerKind::Conv2D: {
        const Eigen::Index ckk = Eigen::Index(l.in.channels) * l.kernel * l.kernel;
        const Eigen::Index P = Eigen::Index(l.out.height) * l.out.width;
        const Eigen::Index OC = l.out.channels;
        const Eigen::Map<const Matrix> dyc(dy.data(), OC, B * P);
        Matrix cols;
        detail::im2col(l, x, cols);
        if (param_grad) {
          Eigen::Map<Matrix>(param_grad->data() + l.param_offset, OC, ckk).noalias() += dyc * cols.transpose();
          Eigen::Map<Vector>(param_grad->data() + l.param_offset + l.weight_count(), OC) += dyc.rowwise().sum();
        }
        if (!input_grad) return Matrix();
        cols.noalias() = weights(l, OC, ckk).transpose() * dyc;
        Matrix dx = Matrix::Zero(x.rows(), B);
        detail::col2im_add(l, cols, dx);
        return dx;
      }
      case LayerKind::MaxPool2: {
        Matrix dx = Matrix::Zero(x.rows(), B);
        const auto& am = tape.argmax[i];
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index o = 0; o < dy.rows(); ++o) dx(am[static_cast<std::size_t>(b * dy.rows() + o)], b) += dy(o, b);
        return dx;
      }
      case LayerKind::ReLU:
        return dy.binaryExpr(x, [](Scalar g, Scalar v) { return v > Scalar(0) ? g : Scalar(0); });
      case LayerKind::Dropout: {
        const Matrix& m = tape.masks[i];
        return m.size() == 0 ? dy : Matrix(dy.cwiseProduct(m));
      }
      case LayerKind::BoundedOutput:
        return dy.binaryExpr(x, [](Scalar g, Scalar v) {
          const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
          return g * s * (Scalar(1) - s);
        });
    }
    throw Error("network: unhandled layer");
  }

  Architecture arch_;
  Vector params_;
};

}  // namespace cfbench::nn
