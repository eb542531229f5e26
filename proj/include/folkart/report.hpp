#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkart/image.hpp"
#include "folkart/metrics.hpp"

namespace folkart {

inline constexpr int kReportSchemaVersion = 1;

struct TagScores {
  double map = 0.0;
  std::vector<std::string> tags;
  std::vector<std::optional<double>> per_tag_ap;
  std::size_t excluded_tags = 0;

  bool operator==(const TagScores&) const = default;
};

struct EvaluationReport {
  int schema_version = kReportSchemaVersion;
  std::string task = "multiclass";  // multilabel reports carry only `tagging`
  std::string model_id;
  std::string split;
  std::uint64_t seed = 0;
  std::string timestamp;
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class_accuracy;
  ConfusionMatrix confusion;
  std::optional<TagScores> tagging;
  std::vector<std::string> notes;

  bool operator==(const EvaluationReport&) const = default;
};

namespace detail {

inline nlohmann::json optional_list(const std::vector<std::optional<double>>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& x : v) arr.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
  return arr;
}

inline std::vector<std::optional<double>> optional_list(const nlohmann::json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return out;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvaluationReport& r) {
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    auto row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.size(); ++p) row.push_back(r.confusion.at(t, p));
    counts.push_back(row);
  }
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["task"] = r.task;
  j["metadata"] = {{"model_id", r.model_id}, {"split", r.split}, {"seed", r.seed}, {"timestamp", r.timestamp}};
  if (r.task == "multiclass") {
    j["accuracy"] = r.accuracy;
    j["classes"] = r.confusion.classes();
    j["per_class_accuracy"] = detail::optional_list(r.per_class_accuracy);
    j["confusion"] = counts;
  }
  if (r.tagging) {
    j["tagging"] = {{"map", r.tagging->map},
                    {"tags", r.tagging->tags},
                    {"per_tag_ap", detail::optional_list(r.tagging->per_tag_ap)},
                    {"excluded_tags", r.tagging->excluded_tags}};
  }
  j["notes"] = r.notes;
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kReportSchemaVersion)
    throw std::invalid_argument("unsupported report schema version " + std::to_string(r.schema_version));
  r.task = j.value("task", "multiclass");
  const auto& m = j.at("metadata");
  r.model_id = m.at("model_id").get<std::string>();
  r.split = m.at("split").get<std::string>();
  r.seed = m.at("seed").get<std::uint64_t>();
  r.timestamp = m.at("timestamp").get<std::string>();
  if (r.task == "multiclass") {
    r.accuracy = j.at("accuracy").get<double>();
    r.per_class_accuracy = detail::optional_list(j.at("per_class_accuracy"));
    r.confusion = ConfusionMatrix(j.at("classes").get<std::vector<std::string>>());
    const auto& counts = j.at("confusion");
    if (counts.size() != r.confusion.size()) throw std::invalid_argument("report confusion matrix has wrong shape");
    for (std::size_t t = 0; t < counts.size(); ++t) {
      if (counts[t].size() != r.confusion.size()) throw std::invalid_argument("report confusion matrix has wrong shape");
      for (std::size_t p = 0; p < counts[t].size(); ++p) r.confusion.at(t, p) = counts[t][p].get<std::int64_t>();
    }
  } else if (r.task != "multilabel") {
    throw std::invalid_argument("unknown report task '" + r.task + "'");
  }
  if (j.contains("tagging")) {
    const auto& t = j.at("tagging");
    r.tagging = TagScores{t.at("map").get<double>(), t.at("tags").get<std::vector<std::string>>(),
                          detail::optional_list(t.at("per_tag_ap")), t.at("excluded_tags").get<std::size_t>()};
  }
  r.notes = j.value("notes", std::vector<std::string>{});
  return r;
}

/// Classification report from predicted and true class indices.
inline EvaluationReport make_report(const std::string& model_id, const std::string& split, std::uint64_t seed,
                                    std::span<const int> predictions, std::span<const int> truths,
                                    const std::vector<std::string>& classes) {
  EvaluationReport r;
  r.model_id = model_id;
  r.split = split;
  r.seed = seed;
  r.timestamp = utc_timestamp();
  r.accuracy = accuracy(predictions, truths);
  r.confusion = confusion(predictions, truths, classes);
  r.per_class_accuracy = r.confusion.per_class_accuracy();
  return r;
}

/// Tagging report (mAP and per-tag AP only).
inline EvaluationReport make_tag_report(const std::string& model_id, const std::string& split, std::uint64_t seed,
                                        TagScores scores) {
  EvaluationReport r;
  r.task = "multilabel";
  r.model_id = model_id;
  r.split = split;
  r.seed = seed;
  r.timestamp = utc_timestamp();
  r.tagging = std::move(scores);
  return r;
}

inline TagScores make_tag_scores(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels,
                                 const std::vector<std::string>& tags) {
  if (static_cast<std::size_t>(scores.cols()) != tags.size()) throw std::invalid_argument("tag name count mismatch");
  auto m = mean_average_precision(scores, labels);
  return {m.map, tags, m.per_tag_ap, m.excluded_tags};
}

/// Row-normalized heatmap: white at 0, deep blue at 1, square cells, no gridlines.
inline RasterImage render_heatmap(const ConfusionMatrix& cm, int cell = 24) {
  if (cm.size() == 0) throw std::invalid_argument("empty confusion matrix");
  if (cell < 1) throw std::invalid_argument("cell size must be positive");
  const int n = static_cast<int>(cm.size());
  RasterImage img(n * cell, n * cell, 255);
  for (int t = 0; t < n; ++t) {
    const double row = static_cast<double>(cm.row_sum(static_cast<std::size_t>(t)));
    for (int p = 0; p < n; ++p) {
      const double v = row > 0 ? static_cast<double>(cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p))) / row : 0.0;
      auto lerp = [v](double lo) { return static_cast<std::uint8_t>(std::lround(255.0 + (lo - 255.0) * v)); };
      const auto r = lerp(8.0), g = lerp(48.0), b = lerp(107.0);
      for (int y = t * cell; y < (t + 1) * cell; ++y)
        for (int x = p * cell; x < (p + 1) * cell; ++x) img.set_rgb(x, y, r, g, b);
    }
  }
  return img;
}

struct ReportFiles {
  std::filesystem::path report;
  std::filesystem::path confusion_csv;
  std::filesystem::path heatmap;
};

/// Writes <stem>.json, and for classification reports <stem>-confusion.csv and <stem>-heatmap.png.
inline ReportFiles emit_report(const EvaluationReport& r, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  ReportFiles f{dir / (stem + ".json"), {}, {}};
  io::write_file(f.report, report_to_json(r).dump(2) + "\n");
  if (r.task == "multiclass") {
    f.confusion_csv = dir / (stem + "-confusion.csv");
    f.heatmap = dir / (stem + "-heatmap.png");
    io::write_file(f.confusion_csv, r.confusion.to_csv());
    write_png(render_heatmap(r.confusion), f.heatmap);
  }
  return f;
}

inline EvaluationReport load_report(const std::filesystem::path& path) {
  return report_from_json(nlohmann::json::parse(io::read_file(path)));
}

// --- multi-model comparison ---------------------------------------------------

struct ComparisonRow {
  std::string model;
  std::optional<double> train;
  std::optional<double> validation;
  std::optional<double> test;
};

/// One row per model with train/validation/test scores (percent, 2 decimals).
struct ComparisonTable {
  std::string metric = "Accuracy";
  std::vector<ComparisonRow> rows;

  ComparisonRow& row(const std::string& model) {
    for (auto& r : rows)
      if (r.model == model) return r;
    rows.push_back({model, {}, {}, {}});
    return rows.back();
  }

  void set(const std::string& model, const std::string& split, double value) {
    auto& r = row(model);
    if (split == "train") r.train = value;
    else if (split == "validation") r.validation = value;
    else if (split == "test") r.test = value;
    else throw std::invalid_argument("unknown split '" + split + "'");
  }

  static std::string cell(const std::optional<double>& v) { return v ? text::format_fixed(*v, 2) : "-"; }

  std::string to_csv() const {
    const std::string m = text::lower(metric);
    std::string out = "model,train_" + m + ",validation_" + m + ",test_" + m + "\n";
    for (const auto& r : rows)
      out += csv::join_row({r.model, cell(r.train), cell(r.validation), cell(r.test)}) + "\n";
    return out;
  }

  std::string to_markdown() const {
    std::string out = "| Model | Training " + metric + " | Validation " + metric + " | Test " + metric +
                      " |\n|---|---:|---:|---:|\n";
    for (const auto& r : rows)
      out += "| " + r.model + " | " + cell(r.train) + " | " + cell(r.validation) + " | " + cell(r.test) + " |\n";
    return out;
  }
};

}  // namespace folkart
