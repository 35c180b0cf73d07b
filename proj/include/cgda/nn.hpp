#pragma once

// A small MLP encoder with a linear classifier head, written out by hand:
// forward passes, cross-entropy, the cluster-guided triplet hinge, their
// gradients, and momentum SGD. Double precision throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cgda/error.hpp"
#include "cgda/random.hpp"

namespace cgda {

enum class Activation { Identity, Relu };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  bool operator==(const DenseLayer& o) const {
    return activation == o.activation && weight.rows() == o.weight.rows() &&
           weight.cols() == o.weight.cols() && weight == o.weight && bias == o.bias;
  }
};

struct ModelShape {
  int input_dim = 2;
  std::vector<int> hidden{64};
  int embed_dim = 32;
  int num_classes = 2;
};

// Encoder f(.) (ReLU hidden layers, identity output) plus a linear classifier
// over the embedding.
struct Model {
  std::vector<DenseLayer> encoder;
  DenseLayer classifier;

  int input_dim() const { return encoder.front().in_dim(); }
  int embed_dim() const { return encoder.back().out_dim(); }
  int num_classes() const { return classifier.out_dim(); }

  bool operator==(const Model& o) const = default;
};

// Glorot-uniform weights, zero biases.
inline Model make_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.embed_dim < 1 || shape.num_classes < 2) {
    throw InvalidArgument("model needs input_dim >= 1, embed_dim >= 1, num_classes >= 2");
  }
  Rng rng(seed);
  auto layer = [&rng](int in, int out, Activation act) {
    if (in < 1 || out < 1) throw InvalidArgument("layer widths must be >= 1");
    DenseLayer l;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    l.weight.resize(out, in);
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = rng.uniform(-bound, bound);
    }
    l.bias = Eigen::VectorXd::Zero(out);
    l.activation = act;
    return l;
  };
  Model m;
  int in = shape.input_dim;
  for (int h : shape.hidden) {
    m.encoder.push_back(layer(in, h, Activation::Relu));
    in = h;
  }
  m.encoder.push_back(layer(in, shape.embed_dim, Activation::Identity));
  m.classifier = layer(shape.embed_dim, shape.num_classes, Activation::Identity);
  return m;
}

// Parameter-shaped buffer for gradients and optimizer state.
struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct Gradients {
  std::vector<LayerGrad> encoder;
  LayerGrad classifier;

  static Gradients zeros_like(const Model& m) {
    auto z = [](const DenseLayer& l) {
      return LayerGrad{Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                       Eigen::VectorXd::Zero(l.bias.size())};
    };
    Gradients g;
    for (const auto& l : m.encoder) g.encoder.push_back(z(l));
    g.classifier = z(m.classifier);
    return g;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& l : encoder) {
      fn(l.weight);
      fn(l.bias);
    }
    fn(classifier.weight);
    fn(classifier.bias);
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& l : encoder) {
      fn(l.weight);
      fn(l.bias);
    }
    fn(classifier.weight);
    fn(classifier.bias);
  }

  // this += scale * other
  void add_scaled(const Gradients& other, double scale) {
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      encoder[i].weight += scale * other.encoder[i].weight;
      encoder[i].bias += scale * other.encoder[i].bias;
    }
    classifier.weight += scale * other.classifier.weight;
    classifier.bias += scale * other.classifier.bias;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&ok](const auto& a) { ok = ok && a.allFinite(); });
    return ok;
  }

  // Concatenation of every entry, in for_each order.
  Eigen::VectorXd flatten() const {
    std::vector<double> buf;
    for_each([&buf](const auto& a) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) buf.push_back(a(i, j));
      }
    });
    return Eigen::Map<Eigen::VectorXd>(buf.data(), static_cast<Eigen::Index>(buf.size()));
  }
};

// Per-layer values kept by a forward pass for backpropagation.
struct EncoderTape {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preacts;
};

namespace detail {

inline void check_input(const Model& m, Eigen::Index rows) {
  if (rows != m.input_dim()) {
    throw DimensionMismatch("input has dimension " + std::to_string(rows) +
                            ", model expects " + std::to_string(m.input_dim()));
  }
}

inline Eigen::MatrixXd affine(const DenseLayer& l, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = l.weight * x;
  z.colwise() += l.bias;
  return z;
}

}  // namespace detail

// Embeds a batch given as columns (input_dim x n) into embed_dim x n.
inline Eigen::MatrixXd encode(const Model& m, const Eigen::MatrixXd& x,
                              EncoderTape* tape = nullptr) {
  detail::check_input(m, x.rows());
  Eigen::MatrixXd h = x;
  for (const auto& l : m.encoder) {
    Eigen::MatrixXd z = detail::affine(l, h);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->preacts.push_back(z);
    }
    h = l.activation == Activation::Relu ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

inline Eigen::VectorXd embed(const Model& m, const Eigen::VectorXd& x) {
  return encode(m, Eigen::MatrixXd(x)).col(0);
}

// Accumulates parameter gradients of the encoder given dLoss/dEmbedding.
inline void encoder_backward(const Model& m, const EncoderTape& tape, Eigen::MatrixXd grad,
                             Gradients& g) {
  for (std::size_t li = m.encoder.size(); li-- > 0;) {
    const auto& l = m.encoder[li];
    if (l.activation == Activation::Relu) {
      grad = grad.cwiseProduct((tape.preacts[li].array() > 0.0).cast<double>().matrix());
    }
    g.encoder[li].weight.noalias() += grad * tape.inputs[li].transpose();
    g.encoder[li].bias += grad.rowwise().sum();
    if (li > 0) grad = l.weight.transpose() * grad;
  }
}

inline Eigen::MatrixXd logits(const Model& m, const Eigen::MatrixXd& x) {
  return detail::affine(m.classifier, encode(m, x));
}

// Column-wise softmax, shifted by the column max for stability.
inline Eigen::MatrixXd softmax(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Eigen::VectorXd e = (z.col(j).array() - z.col(j).maxCoeff()).exp();
    p.col(j) = e / e.sum();
  }
  return p;
}

inline Eigen::VectorXd classify(const Model& m, const Eigen::VectorXd& x) {
  return softmax(logits(m, Eigen::MatrixXd(x))).col(0);
}

inline std::vector<int> predict(const Model& m, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd z = logits(m, x);
  std::vector<int> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    Eigen::Index arg = 0;
    z.col(j).maxCoeff(&arg);
    out[static_cast<std::size_t>(j)] = static_cast<int>(arg);
  }
  return out;
}

struct LossGrad {
  double loss = 0.0;
  Gradients grads;
};

// Mean negative log-likelihood of the true class over the batch.
inline LossGrad cross_entropy(const Model& m, const Eigen::MatrixXd& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.cols()) != y.size()) {
    throw DimensionMismatch("cross_entropy: batch and label counts differ");
  }
  const auto n = static_cast<double>(y.size());
  EncoderTape tape;
  const Eigen::MatrixXd e = encode(m, x, &tape);
  const Eigen::MatrixXd z = detail::affine(m.classifier, e);
  Eigen::MatrixXd dz = softmax(z);
  LossGrad out{0.0, Gradients::zeros_like(m)};
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const int c = y[static_cast<std::size_t>(j)];
    if (c < 0 || c >= m.num_classes()) throw InvalidArgument("label out of range");
    const double zmax = z.col(j).maxCoeff();
    const double lse = zmax + std::log((z.col(j).array() - zmax).exp().sum());
    out.loss += lse - z(c, j);
    dz(c, j) -= 1.0;
  }
  if (y.empty()) return out;
  out.loss /= n;
  dz /= n;
  out.grads.classifier.weight = dz * e.transpose();
  out.grads.classifier.bias = dz.rowwise().sum();
  encoder_backward(m, tape, m.classifier.weight.transpose() * dz, out.grads);
  return out;
}

// max(|fa - fp|^2 - |fa - fn|^2 + margin, 0)
inline double triplet_loss(const Eigen::VectorXd& fa, const Eigen::VectorXd& fp,
                           const Eigen::VectorXd& fn, double margin) {
  if (fa.size() != fp.size() || fa.size() != fn.size()) {
    throw DimensionMismatch("triplet_loss: embeddings differ in dimension");
  }
  return std::max((fa - fp).squaredNorm() - (fa - fn).squaredNorm() + margin, 0.0);
}

// Mean triplet hinge over columns of (anchor, positive, negative) inputs and
// its gradient through the shared encoder. The classifier gets no gradient.
inline LossGrad triplet_backward(const Model& m, const Eigen::MatrixXd& anchors,
                                 const Eigen::MatrixXd& positives,
                                 const Eigen::MatrixXd& negatives, double margin) {
  if (anchors.cols() != positives.cols() || anchors.cols() != negatives.cols()) {
    throw DimensionMismatch("triplet_backward: branch batch sizes differ");
  }
  LossGrad out{0.0, Gradients::zeros_like(m)};
  const auto n = anchors.cols();
  if (n == 0) return out;
  EncoderTape ta, tp, tn;
  const Eigen::MatrixXd fa = encode(m, anchors, &ta);
  const Eigen::MatrixXd fp = encode(m, positives, &tp);
  const Eigen::MatrixXd fn = encode(m, negatives, &tn);
  Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(fa.rows(), n);
  Eigen::MatrixXd gp = ga, gn = ga;
  const double scale = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = (fa.col(j) - fp.col(j)).squaredNorm() -
                     (fa.col(j) - fn.col(j)).squaredNorm() + margin;
    if (h <= 0.0) continue;
    out.loss += h;
    ga.col(j) = 2.0 * scale * (fn.col(j) - fp.col(j));
    gp.col(j) = 2.0 * scale * (fp.col(j) - fa.col(j));
    gn.col(j) = 2.0 * scale * (fa.col(j) - fn.col(j));
  }
  out.loss *= scale;
  encoder_backward(m, ta, std::move(ga), out.grads);
  encoder_backward(m, tp, std::move(gp), out.grads);
  encoder_backward(m, tn, std::move(gn), out.grads);
  return out;
}

inline LossGrad triplet_backward(const Model& m, const Eigen::VectorXd& anchor,
                                 const Eigen::VectorXd& positive,
                                 const Eigen::VectorXd& negative, double margin) {
  return triplet_backward(m, Eigen::MatrixXd(anchor), Eigen::MatrixXd(positive),
                          Eigen::MatrixXd(negative), margin);
}

struct TrainConfig {
  double margin = 1.0;
  double lambda = 1.0;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int batch_size = 32;
  int triplets_per_step = 32;
  int epochs_per_round = 5;
  int pretrain_multiplier = 4;
  std::uint64_t seed = 0;
};

// Momentum SGD: v <- momentum * v + g; p <- p - lr * v.
class Sgd {
 public:
  Sgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}
  explicit Sgd(const TrainConfig& cfg) : Sgd(cfg.learning_rate, cfg.momentum) {}

  void step(Model& m, const Gradients& g) {
    if (g.encoder.size() != m.encoder.size()) {
      throw DimensionMismatch("gradient layer count does not match model");
    }
    if (!g.all_finite()) throw TrainingDiverged("non-finite gradient");
    if (!velocity_) velocity_ = Gradients::zeros_like(m);
    auto& v = *velocity_;
    auto apply = [this](DenseLayer& l, LayerGrad& vel, const LayerGrad& grad) {
      if (grad.weight.rows() != l.weight.rows() || grad.weight.cols() != l.weight.cols() ||
          grad.bias.size() != l.bias.size()) {
        throw DimensionMismatch("gradient shape does not match layer");
      }
      vel.weight = momentum_ * vel.weight + grad.weight;
      vel.bias = momentum_ * vel.bias + grad.bias;
      l.weight -= lr_ * vel.weight;
      l.bias -= lr_ * vel.bias;
    };
    for (std::size_t i = 0; i < m.encoder.size(); ++i) apply(m.encoder[i], v.encoder[i], g.encoder[i]);
    apply(m.classifier, v.classifier, g.classifier);
  }

 private:
  double lr_;
  double momentum_;
  std::optional<Gradients> velocity_;
};

}  // namespace cgda
