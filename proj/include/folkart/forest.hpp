#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkart/rng.hpp"

namespace folkart {

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 25;
  int min_samples_split = 8;
  /// Features examined per split; 0 means floor(sqrt(n_features)).
  int max_features = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators < 1) throw std::invalid_argument("n_estimators must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (min_samples_split < 2) throw std::invalid_argument("min_samples_split must be >= 2");
    if (max_features < 0) throw std::invalid_argument("max_features must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"n_estimators", n_estimators}, {"max_depth", max_depth},   {"min_samples_split", min_samples_split},
            {"max_features", max_features}, {"bootstrap", bootstrap}, {"seed", seed}};
  }

  static ForestConfig from_json(const nlohmann::json& j) {
    ForestConfig c;
    c.n_estimators = j.at("n_estimators").get<int>();
    c.max_depth = j.at("max_depth").get<int>();
    c.min_samples_split = j.at("min_samples_split").get<int>();
    c.max_features = j.value("max_features", 0);
    c.bootstrap = j.value("bootstrap", true);
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
  }

  bool operator==(const ForestConfig&) const = default;
};

/// Row-major sample matrix view.
struct FeatureTable {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
};

/// CART classification tree with Gini impurity; a sample goes left when x[feature] <= threshold.
class DecisionTree {
 public:
  int predict(std::span<const double> x) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].label;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  int depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  static DecisionTree fit(const FeatureTable& X, std::span<const int> y, int n_classes, std::vector<std::size_t> sample,
                          const ForestConfig& cfg, Rng& rng) {
    DecisionTree t;
    t.n_classes_ = n_classes;
    t.max_features_ = cfg.max_features > 0 ? std::min<std::size_t>(static_cast<std::size_t>(cfg.max_features), X.cols)
                                           : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(X.cols))));
    t.grow(X, y, sample, 0, cfg, rng);
    return t;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : nodes_) {
      if (n.feature < 0) arr.push_back({{"label", n.label}});
      else arr.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"label", n.label}});
    }
    return arr;
  }

  static DecisionTree from_json(const nlohmann::json& j, int n_classes) {
    DecisionTree t;
    t.n_classes_ = n_classes;
    for (const auto& e : j) {
      TreeNode n;
      n.label = e.at("label").get<int>();
      if (e.contains("f")) {
        n.feature = e.at("f").get<int>();
        n.threshold = e.at("t").get<double>();
        n.left = e.at("l").get<int>();
        n.right = e.at("r").get<int>();
      }
      t.nodes_.push_back(n);
    }
    const int count = static_cast<int>(t.nodes_.size());
    if (count == 0) throw std::invalid_argument("empty tree");
    for (const auto& n : t.nodes_)
      if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
        throw std::invalid_argument("tree node child index out of range");
    return t;
  }

 private:
  int depth_from(int i) const {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.feature < 0) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  static double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double s = 0.0;
    for (double c : counts) s += (c / total) * (c / total);
    return 1.0 - s;
  }

  static int majority(const std::vector<double>& counts) {
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  int grow(const FeatureTable& X, std::span<const int> y, std::vector<std::size_t>& sample, int depth,
           const ForestConfig& cfg, Rng& rng) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    std::vector<double> counts(static_cast<std::size_t>(n_classes_), 0.0);
    for (auto s : sample) counts[static_cast<std::size_t>(y[s])] += 1.0;
    nodes_[static_cast<std::size_t>(index)].label = majority(counts);

    const double n = static_cast<double>(sample.size());
    const double parent = gini(counts, n);
    if (depth >= cfg.max_depth || sample.size() < static_cast<std::size_t>(cfg.min_samples_split) || parent == 0.0)
      return index;

    std::vector<std::size_t> features(X.cols);
    std::iota(features.begin(), features.end(), std::size_t{0});
    rng.shuffle(features);

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_impurity = parent;
    std::vector<std::pair<double, int>> column(sample.size());
    std::size_t examined = 0;
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      // Keep drawing past max_features only while every examined feature has been constant.
      if (examined >= max_features_ && best_feature >= 0) break;
      const std::size_t f = features[fi];
      for (std::size_t i = 0; i < sample.size(); ++i) column[i] = {X.at(sample[i], f), y[sample[i]]};
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++examined;
      std::vector<double> left(static_cast<std::size_t>(n_classes_), 0.0);
      std::vector<double> right = counts;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left[static_cast<std::size_t>(column[i].second)] += 1.0;
        right[static_cast<std::size_t>(column[i].second)] -= 1.0;
        if (column[i].first == column[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
        if (impurity < best_impurity - 1e-12) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          best_threshold = column[i].first + (column[i + 1].first - column[i].first) / 2.0;
          if (!(best_threshold < column[i + 1].first)) best_threshold = column[i].first;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::size_t> ls, rs;
    for (auto s : sample) (X.at(s, static_cast<std::size_t>(best_feature)) <= best_threshold ? ls : rs).push_back(s);
    sample.clear();
    sample.shrink_to_fit();
    const int l = grow(X, y, ls, depth + 1, cfg, rng);
    const int r = grow(X, y, rs, depth + 1, cfg, rng);
    auto& node = nodes_[static_cast<std::size_t>(index)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  std::vector<TreeNode> nodes_;
  int n_classes_ = 0;
  std::size_t max_features_ = 1;
};

/// Bagged CART ensemble combined by majority vote. Deterministic for a given config.seed.
class RandomForest {
 public:
  static RandomForest fit(const FeatureTable& X, std::span<const int> y, int n_classes, const ForestConfig& cfg) {
    cfg.validate();
    if (X.rows == 0 || X.cols == 0) throw std::invalid_argument("random forest needs a non-empty feature table");
    if (X.values.size() != X.rows * X.cols) throw std::invalid_argument("feature table size mismatch");
    if (y.size() != X.rows) throw std::invalid_argument("label count does not match row count");
    if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
    for (int v : y)
      if (v < 0 || v >= n_classes) throw std::out_of_range("label outside [0, n_classes)");
    for (double v : X.values)
      if (!std::isfinite(v)) throw std::invalid_argument("random forest features must be finite");

    RandomForest f;
    f.config_ = cfg;
    f.n_classes_ = n_classes;
    f.n_features_ = X.cols;
    for (int t = 0; t < cfg.n_estimators; ++t) {
      Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(t)));
      std::vector<std::size_t> sample(X.rows);
      if (cfg.bootstrap) {
        for (auto& s : sample) s = rng.uniform_index(X.rows);
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      f.trees_.push_back(DecisionTree::fit(X, y, n_classes, std::move(sample), cfg, rng));
    }
    return f;
  }

  /// Fraction of trees voting for each class.
  std::vector<double> vote_fractions(std::span<const double> x) const {
    check_width(x.size());
    std::vector<double> votes(static_cast<std::size_t>(n_classes_), 0.0);
    for (const auto& t : trees_) votes[static_cast<std::size_t>(t.predict(x))] += 1.0;
    for (auto& v : votes) v /= static_cast<double>(trees_.size());
    return votes;
  }

  /// Majority vote, lowest class index on ties.
  int predict(std::span<const double> x) const {
    auto v = vote_fractions(x);
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }

  std::vector<int> predict(const FeatureTable& X) const {
    std::vector<int> out;
    out.reserve(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out.push_back(predict(X.row(r)));
    return out;
  }

  const ForestConfig& config() const { return config_; }
  int n_classes() const { return n_classes_; }
  std::size_t n_features() const { return n_features_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  nlohmann::json to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"config", config_.to_json()}, {"n_classes", n_classes_}, {"n_features", n_features_}, {"trees", trees}};
  }

  static RandomForest from_json(const nlohmann::json& j) {
    RandomForest f;
    f.config_ = ForestConfig::from_json(j.at("config"));
    f.n_classes_ = j.at("n_classes").get<int>();
    f.n_features_ = j.at("n_features").get<std::size_t>();
    for (const auto& t : j.at("trees")) f.trees_.push_back(DecisionTree::from_json(t, f.n_classes_));
    if (f.trees_.empty()) throw std::invalid_argument("forest has no trees");
    return f;
  }

 private:
  void check_width(std::size_t width) const {
    if (width != n_features_)
      throw std::invalid_argument("feature width " + std::to_string(width) + " does not match fitted width " +
                                  std::to_string(n_features_));
  }

  ForestConfig config_;
  int n_classes_ = 0;
  std::size_t n_features_ = 0;
  std::vector<DecisionTree> trees_;
};

}  // namespace folkart
