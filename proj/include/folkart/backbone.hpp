#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "folkart/head.hpp"
#include "folkart/preprocess.hpp"
#include "folkart/rng.hpp"
#include "folkart/util.hpp"

namespace folkart {

/// Headless feature extractor ending in global average pooling.
///
/// Implementations own their weights. features() is const and reentrant; forward_train()
/// caches activations for a following backward() and is single-writer.
class BackboneAdapter {
 public:
  virtual ~BackboneAdapter() = default;

  virtual const BackboneProfile& profile() const = 0;
  virtual std::string kind() const = 0;
  virtual std::string version() const = 0;

  /// (gap_dim x N) features for a batch.
  virtual Matrix features(std::span<const NormalizedTensor> batch) const = 0;
  virtual Matrix forward_train(std::span<const NormalizedTensor> batch) = 0;
  /// Accumulates weight gradients from dL/dfeatures (gap_dim x N).
  virtual void backward(const Matrix& grad_features) = 0;
  virtual std::vector<ParamBlock> parameters() = 0;
  virtual void zero_grad() = 0;

  virtual std::unique_ptr<BackboneAdapter> clone() const = 0;
  virtual nlohmann::json state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;

  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }

 protected:
  void check_batch(std::span<const NormalizedTensor> batch) const {
    const auto side = profile().input_side;
    for (const auto& t : batch) {
      if (t.side != side || t.values.size() != static_cast<std::size_t>(side) * side * 3)
        throw std::invalid_argument("tensor shape does not match backbone '" + profile().name + "' (" +
                                    std::to_string(side) + "x" + std::to_string(side) + "x3)");
    }
  }

 private:
  bool trainable_ = true;
};

struct DeskConvSpec {
  std::string name;
  int pool = 4;
  int kernel = 5;
  int stride = 1;
  int filters = 24;

  bool operator==(const DeskConvSpec&) const = default;
};

/// Small CPU backbone: average-pool stem, one conv layer, ReLU, global average pooling.
///
/// Its "pretrained" weights are a fixed analytic filter bank (channel means, oriented
/// luminance edges, color-opponent and grating filters) plus name-seeded random filters, so
/// every instance of the same spec starts from identical weights.
class DeskConvBackbone final : public BackboneAdapter {
 public:
  explicit DeskConvBackbone(DeskConvSpec spec) : spec_(std::move(spec)) {
    if (spec_.pool < 1 || 224 % spec_.pool != 0) throw std::invalid_argument("pool must divide 224");
    pooled_side_ = 224 / spec_.pool;
    if (spec_.kernel < 1 || spec_.kernel > pooled_side_ || spec_.stride < 1 || spec_.filters < 1)
      throw std::invalid_argument("invalid conv geometry");
    out_side_ = (pooled_side_ - spec_.kernel) / spec_.stride + 1;
    profile_ = BackboneProfile{spec_.name, 224, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, spec_.filters};
    init_filter_bank();
    zero_grad();
  }

  const BackboneProfile& profile() const override { return profile_; }
  std::string kind() const override { return "desk-conv"; }
  std::string version() const override { return "1"; }
  const DeskConvSpec& spec() const { return spec_; }

  Matrix features(std::span<const NormalizedTensor> batch) const override {
    check_batch(batch);
    Matrix out(spec_.filters, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t n = 0; n < batch.size(); ++n) {
      Matrix cols = im2col(batch[n]);
      Matrix pre = (weights_ * cols).colwise() + bias_;
      out.col(static_cast<Eigen::Index>(n)) = pre.cwiseMax(0.0).rowwise().mean();
    }
    return out;
  }

  Matrix forward_train(std::span<const NormalizedTensor> batch) override {
    check_batch(batch);
    cached_cols_.clear();
    cached_active_.clear();
    Matrix out(spec_.filters, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t n = 0; n < batch.size(); ++n) {
      Matrix cols = im2col(batch[n]);
      Matrix pre = (weights_ * cols).colwise() + bias_;
      out.col(static_cast<Eigen::Index>(n)) = pre.cwiseMax(0.0).rowwise().mean();
      cached_active_.push_back((pre.array() > 0.0).cast<double>().matrix());
      cached_cols_.push_back(std::move(cols));
    }
    return out;
  }

  void backward(const Matrix& grad_features) override {
    if (grad_features.cols() != static_cast<Eigen::Index>(cached_cols_.size()) ||
        grad_features.rows() != spec_.filters)
      throw std::invalid_argument("backbone backward: gradient shape does not match last forward_train");
    const double inv_positions = 1.0 / static_cast<double>(out_side_ * out_side_);
    for (std::size_t n = 0; n < cached_cols_.size(); ++n) {
      Vector g = grad_features.col(static_cast<Eigen::Index>(n)) * inv_positions;
      Matrix grad_pre = cached_active_[n].array().colwise() * g.array();
      grad_weights_ += grad_pre * cached_cols_[n].transpose();
      grad_bias_ += grad_pre.rowwise().sum();
    }
  }

  std::vector<ParamBlock> parameters() override {
    return {{weights_.data(), grad_weights_.data(), static_cast<std::size_t>(weights_.size())},
            {bias_.data(), grad_bias_.data(), static_cast<std::size_t>(bias_.size())}};
  }

  void zero_grad() override {
    grad_weights_.setZero(weights_.rows(), weights_.cols());
    grad_bias_.setZero(bias_.size());
  }

  std::unique_ptr<BackboneAdapter> clone() const override {
    auto copy = std::make_unique<DeskConvBackbone>(*this);
    copy->cached_cols_.clear();
    copy->cached_active_.clear();
    return copy;
  }

  nlohmann::json state() const override {
    return {{"spec",
             {{"name", spec_.name},
              {"pool", spec_.pool},
              {"kernel", spec_.kernel},
              {"stride", spec_.stride},
              {"filters", spec_.filters}}},
            {"weights", detail::matrix_to_json(weights_)},
            {"bias", detail::matrix_to_json(bias_)}};
  }

  void load_state(const nlohmann::json& state) override {
    const auto& s = state.at("spec");
    DeskConvSpec spec{s.at("name").get<std::string>(), s.at("pool").get<int>(), s.at("kernel").get<int>(),
                      s.at("stride").get<int>(), s.at("filters").get<int>()};
    if (!(spec == spec_)) throw std::invalid_argument("backbone state was saved for a different desk-conv spec");
    Matrix w = detail::matrix_from_json(state.at("weights"));
    Matrix b = detail::matrix_from_json(state.at("bias"));
    if (w.rows() != weights_.rows() || w.cols() != weights_.cols() || b.rows() != bias_.size())
      throw std::invalid_argument("backbone weight shape mismatch");
    weights_ = w;
    bias_ = b.col(0);
    zero_grad();
  }

  Matrix& weights() { return weights_; }
  Vector& bias() { return bias_; }

 private:
  int patch_size() const { return spec_.kernel * spec_.kernel * 3; }

  // Average-pooled stem then patch extraction: (k*k*3) x positions.
  Matrix im2col(const NormalizedTensor& t) const {
    const int p = spec_.pool;
    const int ps = pooled_side_;
    std::vector<double> pooled(static_cast<std::size_t>(ps) * ps * 3, 0.0);
    const double inv = 1.0 / (p * p);
    for (int y = 0; y < t.side; ++y) {
      const int py = y / p;
      for (int x = 0; x < t.side; ++x) {
        const std::size_t dst = (static_cast<std::size_t>(py) * ps + x / p) * 3;
        const std::size_t src = (static_cast<std::size_t>(y) * t.side + x) * 3;
        pooled[dst] += t.values[src];
        pooled[dst + 1] += t.values[src + 1];
        pooled[dst + 2] += t.values[src + 2];
      }
    }
    for (auto& v : pooled) v *= inv;

    const int k = spec_.kernel;
    Matrix cols(patch_size(), out_side_ * out_side_);
    for (int oy = 0; oy < out_side_; ++oy) {
      for (int ox = 0; ox < out_side_; ++ox) {
        const Eigen::Index pos = oy * out_side_ + ox;
        Eigen::Index row = 0;
        for (int dy = 0; dy < k; ++dy) {
          const std::size_t base = (static_cast<std::size_t>(oy * spec_.stride + dy) * ps + ox * spec_.stride) * 3;
          for (int i = 0; i < k * 3; ++i) cols(row++, pos) = pooled[base + i];
        }
      }
    }
    return cols;
  }

  void init_filter_bank() {
    const int k = spec_.kernel;
    const int K = patch_size();
    weights_ = Matrix::Zero(spec_.filters, K);
    bias_ = Vector::Zero(spec_.filters);
    std::vector<Vector> bank;
    auto idx = [k](int dx, int dy, int c) { return (dy * k + dx) * 3 + c; };
    const double centre = (k - 1) / 2.0;
    const double area = static_cast<double>(k * k);

    for (int c = 0; c < 3; ++c) {
      for (double sign : {1.0, -1.0}) {
        Vector f = Vector::Zero(K);
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) f(idx(dx, dy, c)) = sign / area;
        bank.push_back(f);
      }
    }
    auto oriented = [&](double theta, auto profile_fn) {
      Vector f = Vector::Zero(K);
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          double u = (dx - centre) * std::cos(theta) + (dy - centre) * std::sin(theta);
          for (int c = 0; c < 3; ++c) f(idx(dx, dy, c)) = profile_fn(u) / 3.0;
        }
      double norm = f.norm();
      return norm > 0 ? Vector(f / norm) : f;
    };
    for (int o = 0; o < 4; ++o) {
      const double theta = o * M_PI / 4.0;
      for (double sign : {1.0, -1.0}) bank.push_back(oriented(theta, [sign](double u) { return sign * u; }));
    }
    for (double sign : {1.0, -1.0}) {
      Vector rg = Vector::Zero(K), by = Vector::Zero(K);
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          rg(idx(dx, dy, 0)) = sign / area;
          rg(idx(dx, dy, 1)) = -sign / area;
          by(idx(dx, dy, 0)) = 0.5 * sign / area;
          by(idx(dx, dy, 1)) = 0.5 * sign / area;
          by(idx(dx, dy, 2)) = -sign / area;
        }
      bank.push_back(rg);
      bank.push_back(by);
    }
    const double wavelength = std::max(2.0, static_cast<double>(k));
    for (int phase = 0; phase < 2; ++phase)
      for (int o = 0; o < 4; ++o) {
        const double theta = o * M_PI / 4.0;
        bank.push_back(oriented(theta, [&](double u) {
          return phase == 0 ? std::cos(2.0 * M_PI * u / wavelength) : std::sin(2.0 * M_PI * u / wavelength);
        }));
      }

    Rng rng(fnv1a64(spec_.name));
    const double stddev = std::sqrt(2.0 / K);
    for (int f = 0; f < spec_.filters; ++f) {
      if (f < static_cast<int>(bank.size())) {
        weights_.row(f) = bank[static_cast<std::size_t>(f)].transpose();
      } else {
        for (int i = 0; i < K; ++i) weights_(f, i) = rng.normal(0.0, stddev);
      }
    }
  }

  DeskConvSpec spec_;
  BackboneProfile profile_;
  int pooled_side_ = 0;
  int out_side_ = 0;
  Matrix weights_;
  Vector bias_;
  Matrix grad_weights_;
  Vector grad_bias_;
  std::vector<Matrix> cached_cols_;
  std::vector<Matrix> cached_active_;
};

namespace desk {

inline DeskConvSpec conv3() { return {"desk-conv3", 4, 3, 1, 20}; }
inline DeskConvSpec conv5() { return {"desk-conv5", 4, 5, 2, 24}; }
inline DeskConvSpec conv7() { return {"desk-conv7", 8, 7, 1, 32}; }

}  // namespace desk

using BackboneFactory = std::function<std::unique_ptr<BackboneAdapter>()>;

/// Name -> adapter factory. Desk adapters are built in; ImageNet backbones need a provider
/// registered by the embedding application.
class BackboneRegistry {
 public:
  static BackboneRegistry& instance() {
    static BackboneRegistry registry;
    return registry;
  }

  void add(const std::string& name, BackboneFactory factory) {
    std::lock_guard lock(mutex_);
    factories_[name] = std::move(factory);
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return factories_.count(name) > 0;
  }

  std::unique_ptr<BackboneAdapter> create(const std::string& name) const {
    BackboneFactory factory;
    {
      std::lock_guard lock(mutex_);
      auto it = factories_.find(name);
      if (it != factories_.end()) factory = it->second;
    }
    if (!factory) {
      static const std::map<std::string, BackboneProfile> known = {
          {"vgg16", profiles::vgg16()},
          {"resnet50", profiles::resnet50()},
          {"efficientnet_b0", profiles::efficientnet_b0()},
          {"inception_v3", profiles::inception_v3()}};
      if (known.count(name))
        throw std::runtime_error("backbone '" + name +
                                 "' needs pretrained weights from an external provider; register one with "
                                 "BackboneRegistry::add, or use a built-in desk backbone (" +
                                 text::join(names(), ", ") + ")");
      throw std::invalid_argument("unknown backbone '" + name + "' (available: " + text::join(names(), ", ") + ")");
    }
    return factory();
  }

  std::vector<std::string> names() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [n, f] : factories_) out.push_back(n);
    return out;
  }

 private:
  BackboneRegistry() {
    for (auto spec : {desk::conv3(), desk::conv5(), desk::conv7()})
      factories_[spec.name] = [spec] { return std::make_unique<DeskConvBackbone>(spec); };
  }

  mutable std::mutex mutex_;
  std::map<std::string, BackboneFactory> factories_;
};

inline std::unique_ptr<BackboneAdapter> create_backbone(const std::string& name) {
  return BackboneRegistry::instance().create(name);
}

}  // namespace folkart
