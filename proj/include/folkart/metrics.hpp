#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "folkart/util.hpp"

namespace folkart {

/// 100 * matches / total.
inline double accuracy(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::vector<std::string> classes)
      : classes_(std::move(classes)), counts_(classes_.size() * classes_.size(), 0) {}

  std::size_t size() const { return classes_.size(); }
  const std::vector<std::string>& classes() const { return classes_; }

  std::int64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * size() + predicted); }
  std::int64_t& at(std::size_t truth, std::size_t predicted) { return counts_.at(truth * size() + predicted); }

  std::int64_t row_sum(std::size_t truth) const {
    std::int64_t s = 0;
    for (std::size_t p = 0; p < size(); ++p) s += at(truth, p);
    return s;
  }

  std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

  std::int64_t trace() const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < size(); ++i) s += at(i, i);
    return s;
  }

  double overall_accuracy() const {
    auto t = total();
    if (t == 0) throw std::logic_error("confusion matrix is empty");
    return 100.0 * static_cast<double>(trace()) / static_cast<double>(t);
  }

  /// Diagonal over row sum, in percent; nullopt for classes absent from the evaluation set.
  std::vector<std::optional<double>> per_class_accuracy() const {
    std::vector<std::optional<double>> out(size());
    for (std::size_t c = 0; c < size(); ++c) {
      auto r = row_sum(c);
      if (r > 0) out[c] = 100.0 * static_cast<double>(at(c, c)) / static_cast<double>(r);
    }
    return out;
  }

  std::string to_csv() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::vector<std::string> classes_;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths,
                                 const std::vector<std::string>& classes) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix m(classes);
  const auto n = static_cast<int>(classes.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] < 0 || predictions[i] >= n || truths[i] < 0 || truths[i] >= n)
      throw std::out_of_range("confusion: class index out of range at position " + std::to_string(i));
    m.at(static_cast<std::size_t>(truths[i]), static_cast<std::size_t>(predictions[i]))++;
  }
  return m;
}

/// AP over one ranking: rank by descending score (ties keep original order), then
/// (1/P) * sum of precision@k over ranks k that hold a positive.
template <class Score, class Label>
double average_precision(std::span<const Score> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != Label{0}) {
      ++positives;
      sum += static_cast<double>(positives) / static_cast<double>(rank + 1);
    }
  }
  if (positives == 0) throw std::domain_error("average_precision: no positive labels");
  return sum / static_cast<double>(positives);
}

inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  return average_precision(std::span<const double>(scores), std::span<const int>(labels));
}

struct MapResult {
  double map = 0.0;                                // percent
  std::vector<std::optional<double>> per_tag_ap;  // nullopt where the tag has no positives
  std::size_t excluded_tags = 0;
};

/// Macro AP over tags (columns) that have at least one positive, times 100.
/// Both matrices are N x T (rows = samples).
inline MapResult mean_average_precision(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("mean_average_precision: shape mismatch");
  MapResult r;
  r.per_tag_ap.resize(static_cast<std::size_t>(scores.cols()));
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> s(static_cast<std::size_t>(scores.rows())), y(s.size());
  for (Eigen::Index t = 0; t < scores.cols(); ++t) {
    bool any = false;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores(i, t);
      y[static_cast<std::size_t>(i)] = labels(i, t);
      any = any || labels(i, t) != 0.0;
    }
    if (!any) {
      ++r.excluded_tags;
      continue;
    }
    double ap = average_precision(std::span<const double>(s), std::span<const double>(y));
    r.per_tag_ap[static_cast<std::size_t>(t)] = ap;
    sum += ap;
    ++used;
  }
  if (used == 0) throw std::domain_error("mean_average_precision: no tag has a positive label");
  r.map = 100.0 * sum / static_cast<double>(used);
  return r;
}

inline std::string ConfusionMatrix::to_csv() const {
  std::vector<std::string> header = {"true\\predicted"};
  header.insert(header.end(), classes_.begin(), classes_.end());
  std::string out = csv::join_row(header) + "\n";
  for (std::size_t t = 0; t < size(); ++t) {
    std::vector<std::string> row = {classes_[t]};
    for (std::size_t p = 0; p < size(); ++p) row.push_back(std::to_string(at(t, p)));
    out += csv::join_row(row) + "\n";
  }
  return out;
}

}  // namespace folkart
