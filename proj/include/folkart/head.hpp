#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "folkart/rng.hpp"

namespace folkart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Task { multiclass, multilabel };
enum class OutputActivation { softmax, sigmoid };

inline std::string to_string(Task t) { return t == Task::multiclass ? "multiclass" : "multilabel"; }
inline Task parse_task(std::string_view s) {
  if (s == "multiclass") return Task::multiclass;
  if (s == "multilabel") return Task::multilabel;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}
inline OutputActivation activation_for(Task t) {
  return t == Task::multiclass ? OutputActivation::softmax : OutputActivation::sigmoid;
}

inline constexpr double kLogEpsilon = 1e-12;

/// A contiguous block of parameters and its gradient accumulator.
struct ParamBlock {
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

// --- activations -------------------------------------------------------------

inline Vector softmax(const Vector& logits) {
  const double shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp();
  return e / e.sum();
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

/// Column-wise activation of an (outputs x batch) logit matrix.
inline Matrix activate(const Matrix& logits, OutputActivation act) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (act == OutputActivation::softmax) {
      out.col(j) = softmax(logits.col(j));
    } else {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) out(i, j) = sigmoid(logits(i, j));
    }
  }
  return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

// --- losses ------------------------------------------------------------------

/// -log(pred[true]) with the label given as a one-hot vector.
inline double cross_entropy(std::span<const double> pred, std::span<const double> one_hot) {
  if (pred.size() != one_hot.size()) throw std::invalid_argument("cross_entropy: length mismatch");
  std::size_t hot = 0, count = 0;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == 1.0) {
      hot = i;
      ++count;
    } else if (one_hot[i] != 0.0) {
      throw std::invalid_argument("cross_entropy: label is not one-hot");
    }
  }
  if (count != 1) throw std::invalid_argument("cross_entropy: label is not one-hot");
  return -std::log(std::max(pred[hot], kLogEpsilon));
}

inline double cross_entropy(std::span<const double> pred, std::size_t true_class) {
  if (true_class >= pred.size()) throw std::invalid_argument("cross_entropy: class index out of range");
  return -std::log(std::max(pred[true_class], kLogEpsilon));
}

/// Mean over labels of -[y log p + (1 - y) log(1 - p)].
inline double binary_cross_entropy(std::span<const double> pred, std::span<const double> labels) {
  if (pred.size() != labels.size()) throw std::invalid_argument("binary_cross_entropy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("binary_cross_entropy: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kLogEpsilon, 1.0 - kLogEpsilon);
    const double y = labels[i];
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total / static_cast<double>(pred.size());
}

// --- head ----------------------------------------------------------------------

struct HeadConfig {
  int input_dim = 0;
  int hidden_dim = 1024;
  int output_dim = 0;
  OutputActivation activation = OutputActivation::softmax;

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
      throw std::invalid_argument("head dimensions must be >= 1");
  }

  bool operator==(const HeadConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const HeadConfig& c) {
  j = {{"input_dim", c.input_dim},
       {"hidden_dim", c.hidden_dim},
       {"output_dim", c.output_dim},
       {"activation", c.activation == OutputActivation::softmax ? "softmax" : "sigmoid"}};
}

inline void from_json(const nlohmann::json& j, HeadConfig& c) {
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.output_dim = j.at("output_dim").get<int>();
  auto act = j.at("activation").get<std::string>();
  if (act != "softmax" && act != "sigmoid") throw std::invalid_argument("unknown activation '" + act + "'");
  c.activation = act == "softmax" ? OutputActivation::softmax : OutputActivation::sigmoid;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> flat(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw std::invalid_argument("matrix payload size mismatch");
  return Eigen::Map<Matrix>(flat.data(), rows, cols);
}

}  // namespace detail

/// linear(input -> hidden), ReLU, linear(hidden -> output), softmax or sigmoid.
///
/// Batches are column-major: features are (input_dim x N), outputs (output_dim x N).
class DenseHead {
 public:
  DenseHead() = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases of both layers.
  static DenseHead build(const HeadConfig& config, std::uint64_t seed) {
    config.validate();
    DenseHead h;
    h.config_ = config;
    Rng rng(seed);
    auto fill = [&](Matrix& m, Eigen::Index rows, Eigen::Index cols, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      m.resize(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
    };
    Matrix b1, b2;
    fill(h.w1_, config.hidden_dim, config.input_dim, config.input_dim);
    fill(b1, config.hidden_dim, 1, config.input_dim);
    fill(h.w2_, config.output_dim, config.hidden_dim, config.hidden_dim);
    fill(b2, config.output_dim, 1, config.hidden_dim);
    h.b1_ = b1.col(0);
    h.b2_ = b2.col(0);
    h.zero_grad();
    return h;
  }

  const HeadConfig& config() const { return config_; }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1_.size() + b1_.size() + w2_.size() + b2_.size());
  }

  Matrix& w1() { return w1_; }
  Vector& b1() { return b1_; }
  Matrix& w2() { return w2_; }
  Vector& b2() { return b2_; }
  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }

  Matrix logits(const Matrix& features) const {
    check_input(features);
    Matrix hidden = ((w1_ * features).colwise() + b1_).cwiseMax(0.0);
    return (w2_ * hidden).colwise() + b2_;
  }

  Matrix forward(const Matrix& features) const { return activate(logits(features), config_.activation); }

  /// Forward pass that keeps activations for backward().
  Matrix forward_train(const Matrix& features) {
    check_input(features);
    cached_input_ = features;
    cached_pre_ = (w1_ * features).colwise() + b1_;
    cached_hidden_ = cached_pre_.cwiseMax(0.0);
    return (w2_ * cached_hidden_).colwise() + b2_;
  }

  /// Accumulates parameter gradients from dL/dlogits; returns dL/dfeatures.
  Matrix backward(const Matrix& grad_logits) {
    if (grad_logits.cols() != cached_hidden_.cols() || grad_logits.rows() != w2_.rows())
      throw std::invalid_argument("backward: gradient shape does not match last forward_train");
    gw2_ += grad_logits * cached_hidden_.transpose();
    gb2_ += grad_logits.rowwise().sum();
    Matrix grad_hidden = (w2_.transpose() * grad_logits).cwiseProduct(
        (cached_pre_.array() > 0.0).cast<double>().matrix());
    gw1_ += grad_hidden * cached_input_.transpose();
    gb1_ += grad_hidden.rowwise().sum();
    return w1_.transpose() * grad_hidden;
  }

  void zero_grad() {
    gw1_.setZero(w1_.rows(), w1_.cols());
    gb1_.setZero(b1_.size());
    gw2_.setZero(w2_.rows(), w2_.cols());
    gb2_.setZero(b2_.size());
  }

  std::vector<ParamBlock> parameters() {
    return {{w1_.data(), gw1_.data(), static_cast<std::size_t>(w1_.size())},
            {b1_.data(), gb1_.data(), static_cast<std::size_t>(b1_.size())},
            {w2_.data(), gw2_.data(), static_cast<std::size_t>(w2_.size())},
            {b2_.data(), gb2_.data(), static_cast<std::size_t>(b2_.size())}};
  }

  nlohmann::json to_json() const {
    return {{"config", config_},
            {"w1", detail::matrix_to_json(w1_)},
            {"b1", detail::matrix_to_json(b1_)},
            {"w2", detail::matrix_to_json(w2_)},
            {"b2", detail::matrix_to_json(b2_)}};
  }

  static DenseHead from_json(const nlohmann::json& j) {
    DenseHead h;
    h.config_ = j.at("config").get<HeadConfig>();
    h.config_.validate();
    h.w1_ = detail::matrix_from_json(j.at("w1"));
    h.b1_ = detail::matrix_from_json(j.at("b1")).col(0);
    h.w2_ = detail::matrix_from_json(j.at("w2"));
    h.b2_ = detail::matrix_from_json(j.at("b2")).col(0);
    const auto& c = h.config_;
    if (h.w1_.rows() != c.hidden_dim || h.w1_.cols() != c.input_dim || h.b1_.size() != c.hidden_dim ||
        h.w2_.rows() != c.output_dim || h.w2_.cols() != c.hidden_dim || h.b2_.size() != c.output_dim)
      throw std::invalid_argument("head weights do not match head config");
    h.zero_grad();
    return h;
  }

 private:
  void check_input(const Matrix& features) const {
    if (features.rows() != config_.input_dim)
      throw std::invalid_argument("head expects " + std::to_string(config_.input_dim) + " input features, got " +
                                  std::to_string(features.rows()));
  }

  HeadConfig config_;
  Matrix w1_, w2_;
  Vector b1_, b2_;
  Matrix gw1_, gw2_;
  Vector gb1_, gb2_;
  Matrix cached_input_, cached_pre_, cached_hidden_;
};

inline DenseHead build_head(const HeadConfig& config, std::uint64_t seed) { return DenseHead::build(config, seed); }

/// Batch loss and dL/dlogits for the task's output activation.
///
/// `targets` is (outputs x N): one-hot columns for softmax, multi-hot for sigmoid. The loss is
/// the batch mean of CE, or of BCE (itself a mean over labels).
struct LossAndGradient {
  double loss = 0.0;
  Matrix grad_logits;
};

inline LossAndGradient loss_and_gradient(const Matrix& probabilities, const Matrix& targets,
                                         OutputActivation act) {
  if (probabilities.rows() != targets.rows() || probabilities.cols() != targets.cols())
    throw std::invalid_argument("loss: prediction/target shape mismatch");
  const auto n = static_cast<double>(probabilities.cols());
  LossAndGradient out;
  out.grad_logits = probabilities - targets;
  double total = 0.0;
  for (Eigen::Index j = 0; j < probabilities.cols(); ++j) {
    std::span<const double> p(probabilities.col(j).data(), static_cast<std::size_t>(probabilities.rows()));
    std::span<const double> y(targets.col(j).data(), static_cast<std::size_t>(targets.rows()));
    total += act == OutputActivation::softmax ? cross_entropy(p, y) : binary_cross_entropy(p, y);
  }
  out.loss = total / n;
  out.grad_logits /= n;
  if (act == OutputActivation::sigmoid) out.grad_logits /= static_cast<double>(probabilities.rows());
  return out;
}

}  // namespace folkart
