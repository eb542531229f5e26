#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkart/dataset.hpp"
#include "folkart/forest.hpp"
#include "folkart/labeled_data.hpp"
#include "folkart/metrics.hpp"
#include "folkart/model.hpp"

namespace folkart {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Class probabilities of one base model over one split: N records x C classes.
struct ProbabilityMatrix {
  std::string model_id;
  std::string split_hash;
  std::vector<std::string> classes;
  std::vector<std::string> record_ids;
  RowMatrix values;

  std::string to_csv() const {
    std::string out = "# model_id=" + model_id + "\n# split_hash=" + split_hash + "\n";
    std::vector<std::string> header{"record_id"};
    header.insert(header.end(), classes.begin(), classes.end());
    out += csv::join_row(header) + "\n";
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      std::vector<std::string> row{record_ids[static_cast<std::size_t>(r)]};
      for (Eigen::Index c = 0; c < values.cols(); ++c) row.push_back(text::format_double(values(r, c)));
      out += csv::join_row(row) + "\n";
    }
    return out;
  }

  static ProbabilityMatrix from_csv(const std::string& content) {
    ProbabilityMatrix m;
    std::istringstream in(content);
    std::string line;
    bool header_seen = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (text::starts_with(line, "# model_id=")) { m.model_id = line.substr(11); continue; }
      if (text::starts_with(line, "# split_hash=")) { m.split_hash = line.substr(13); continue; }
      if (line[0] == '#') continue;
      auto fields = csv::parse_line(line);
      if (!header_seen) {
        if (fields.empty() || fields[0] != "record_id") throw std::invalid_argument("probability file: missing header");
        m.classes.assign(fields.begin() + 1, fields.end());
        header_seen = true;
        continue;
      }
      if (fields.size() != m.classes.size() + 1) throw std::invalid_argument("probability file: ragged row");
      m.record_ids.push_back(fields[0]);
      std::vector<double> row;
      for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(text::parse_double(fields[i]));
      rows.push_back(std::move(row));
    }
    if (!header_seen || m.model_id.empty()) throw std::invalid_argument("probability file: missing metadata header");
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.classes.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
  }
};

inline std::filesystem::path probability_cache_path(const std::filesystem::path& dir, const std::string& model_id,
                                                    const std::string& split_hash) {
  return dir / ("probs-" + model_id + "-" + split_hash + ".csv");
}

inline void check_same_registry(const std::vector<const ClassifierModel*>& models) {
  if (models.empty()) throw std::invalid_argument("no base models given");
  for (const auto* m : models) {
    if (m->task() != Task::multiclass) throw std::invalid_argument("model '" + m->id() + "' is not a multiclass model");
    if (m->labels() != models.front()->labels())
      throw std::invalid_argument("class registry mismatch between '" + models.front()->id() + "' and '" + m->id() + "'");
  }
}

/// Per-model probability matrices over the given records, in model-list order.
/// With a cache directory, files keyed by (model id, split hash) are reused when present.
inline std::vector<ProbabilityMatrix> collect_probabilities(const std::vector<const ClassifierModel*>& models,
                                                            std::span<const LabeledImage> records,
                                                            const std::string& split_hash,
                                                            const std::optional<std::filesystem::path>& cache_dir = {}) {
  check_same_registry(models);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  std::vector<ProbabilityMatrix> out;
  for (const auto* m : models) {
    if (cache_dir) {
      auto path = probability_cache_path(*cache_dir, m->id(), split_hash);
      if (std::filesystem::exists(path)) {
        auto cached = ProbabilityMatrix::from_csv(io::read_file(path));
        if (cached.model_id == m->id() && cached.split_hash == split_hash && cached.classes == m->labels() &&
            cached.record_ids == ids) {
          out.push_back(std::move(cached));
          continue;
        }
      }
    }
    ProbabilityMatrix pm;
    pm.model_id = m->id();
    pm.split_hash = split_hash;
    pm.classes = m->labels();
    pm.record_ids = ids;
    pm.values = predict_all(*m, records).transpose();
    if (cache_dir) io::write_file(probability_cache_path(*cache_dir, m->id(), split_hash), pm.to_csv());
    out.push_back(std::move(pm));
  }
  return out;
}

/// Row-wise concatenation in list order: N x (K*C). Every C-block must be a distribution.
inline RowMatrix build_stacked_features(const std::vector<RowMatrix>& per_model) {
  if (per_model.empty()) throw std::invalid_argument("no probability matrices to stack");
  const auto n = per_model.front().rows();
  const auto c = per_model.front().cols();
  if (c == 0) throw std::invalid_argument("probability matrices have no classes");
  for (const auto& m : per_model)
    if (m.rows() != n || m.cols() != c) throw std::invalid_argument("probability matrix dimension mismatch");
  RowMatrix out(n, c * static_cast<Eigen::Index>(per_model.size()));
  for (std::size_t k = 0; k < per_model.size(); ++k) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double s = per_model[k].row(r).sum();
      if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("row " + std::to_string(r) + " of model " + std::to_string(k) + " sums to " +
                                    text::format_double(s) + ", not 1");
    }
    out.middleCols(static_cast<Eigen::Index>(k) * c, c) = per_model[k];
  }
  return out;
}

inline RowMatrix build_stacked_features(const std::vector<ProbabilityMatrix>& per_model) {
  std::vector<RowMatrix> values;
  for (const auto& p : per_model) {
    if (p.classes != per_model.front().classes) throw std::invalid_argument("class order differs between models");
    if (p.record_ids != per_model.front().record_ids) throw std::invalid_argument("record order differs between models");
    values.push_back(p.values);
  }
  return build_stacked_features(values);
}

/// Random forest over stacked probabilities, with the stacking contract it was fit under.
struct MetaClassifier {
  RandomForest forest;
  std::vector<std::string> model_order;
  std::vector<std::string> classes;
  std::size_t feature_width = 0;
  std::string fit_split = "train";

  void check_width(std::size_t width) const {
    if (width != feature_width)
      throw std::invalid_argument("stacked width " + std::to_string(width) + " does not match fitted width " +
                                  std::to_string(feature_width) + " (model order or class count changed?)");
  }

  std::vector<double> vote_fractions(std::span<const double> row) const {
    check_width(row.size());
    return forest.vote_fractions(row);
  }

  int predict(std::span<const double> row) const {
    check_width(row.size());
    return forest.predict(row);
  }

  std::vector<int> predict(const RowMatrix& features) const {
    check_width(static_cast<std::size_t>(features.cols()));
    std::vector<int> out;
    for (Eigen::Index r = 0; r < features.rows(); ++r)
      out.push_back(forest.predict(std::span<const double>(features.row(r).data(), static_cast<std::size_t>(features.cols()))));
    return out;
  }

  nlohmann::json to_json() const {
    return {{"format", "folkart-meta"},   {"version", 1},
            {"model_order", model_order}, {"classes", classes},
            {"feature_width", feature_width}, {"fit_split", fit_split},
            {"forest", forest.to_json()}};
  }

  static MetaClassifier from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "folkart-meta") throw std::invalid_argument("not a folkart meta-classifier file");
    MetaClassifier m;
    m.model_order = j.at("model_order").get<std::vector<std::string>>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.feature_width = j.at("feature_width").get<std::size_t>();
    m.fit_split = j.value("fit_split", "train");
    m.forest = RandomForest::from_json(j.at("forest"));
    if (m.forest.n_features() != m.feature_width) throw std::invalid_argument("meta-classifier width is inconsistent");
    return m;
  }
};

inline FeatureTable feature_table(const RowMatrix& m) {
  return {std::span<const double>(m.data(), static_cast<std::size_t>(m.size())), static_cast<std::size_t>(m.rows()),
          static_cast<std::size_t>(m.cols())};
}

inline MetaClassifier fit_meta(const RowMatrix& features, std::span<const int> labels, const ForestConfig& config,
                               std::vector<std::string> classes, std::vector<std::string> model_order = {}) {
  if (features.rows() == 0) throw std::invalid_argument("fit_meta: empty input");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("fit_meta: feature rows and labels differ in count");
  if (classes.empty()) throw std::invalid_argument("fit_meta: no classes");
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) throw std::invalid_argument("fit_meta: labels contain a single class");
  if (!model_order.empty() && static_cast<std::size_t>(features.cols()) != model_order.size() * classes.size())
    throw std::invalid_argument("fit_meta: width is not models x classes");
  MetaClassifier m;
  m.forest = RandomForest::fit(feature_table(features), labels, static_cast<int>(classes.size()), config);
  m.classes = std::move(classes);
  m.model_order = std::move(model_order);
  m.feature_width = static_cast<std::size_t>(features.cols());
  return m;
}

inline void save_meta(const MetaClassifier& meta, const std::filesystem::path& path) {
  io::write_file(path, meta.to_json().dump() + "\n");
}

inline MetaClassifier load_meta(const std::filesystem::path& path) {
  return MetaClassifier::from_json(nlohmann::json::parse(io::read_file(path)));
}

/// Base models -> stacked row -> forest vote -> class name.
inline std::string predict_ensemble(const MetaClassifier& meta, const std::vector<const ClassifierModel*>& models,
                                    const NormalizedTensor& image, const ClassRegistry& registry) {
  check_same_registry(models);
  if (registry.classes() != meta.classes) throw std::invalid_argument("registry does not match meta-classifier classes");
  if (!meta.model_order.empty()) {
    std::vector<std::string> ids;
    for (const auto* m : models) ids.push_back(m->id());
    if (ids != meta.model_order)
      throw std::invalid_argument("model order " + text::join(ids, ",") + " differs from fit order " +
                                  text::join(meta.model_order, ","));
  }
  std::vector<double> row;
  for (const auto* m : models) {
    auto p = m->predict_proba(image);
    row.insert(row.end(), p.begin(), p.end());
  }
  return registry.name(static_cast<std::size_t>(meta.predict(row)));
}

// --- meta sweep -----------------------------------------------------------------

struct ForestGrid {
  std::vector<int> n_estimators = {100, 200, 400, 800, 1000};
  std::vector<int> max_depths = {10, 25, 35, 50};
  std::vector<int> min_samples_splits = {2, 4, 8, 16};

  std::vector<ForestConfig> cells(std::uint64_t seed) const {
    std::vector<ForestConfig> out;
    for (int n : n_estimators)
      for (int d : max_depths)
        for (int s : min_samples_splits) {
          ForestConfig c;
          c.n_estimators = n;
          c.max_depth = d;
          c.min_samples_split = s;
          c.seed = seed;
          out.push_back(c);
        }
    return out;
  }
};

struct MetaSweepCell {
  ForestConfig config;
  double accuracy = 0.0;
};

struct MetaSweepResult {
  std::vector<MetaSweepCell> cells;
  std::size_t selected = 0;

  const ForestConfig& selected_config() const { return cells.at(selected).config; }

  std::string to_csv() const {
    std::string out = "n_estimators,max_depth,min_samples_split,heldout_accuracy,selected\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      out += std::to_string(c.config.n_estimators) + "," + std::to_string(c.config.max_depth) + "," +
             std::to_string(c.config.min_samples_split) + "," + text::format_fixed(c.accuracy, 2) + "," +
             (i == selected ? "1" : "0") + "\n";
    }
    return out;
  }
};

/// Fits every cell on (X_fit, y_fit) and scores held-out accuracy. Ties go to fewer estimators,
/// then smaller depth, then smaller min_samples_split. Cell failures propagate.
inline MetaSweepResult sweep_meta(const RowMatrix& fit_x, std::span<const int> fit_y, const RowMatrix& heldout_x,
                                  std::span<const int> heldout_y, const ForestGrid& grid,
                                  const std::vector<std::string>& classes, std::uint64_t seed = 0) {
  auto configs = grid.cells(seed);
  if (configs.empty()) throw std::invalid_argument("sweep_meta: empty grid");
  MetaSweepResult r;
  for (const auto& c : configs) {
    auto meta = fit_meta(fit_x, fit_y, c, classes);
    auto preds = meta.predict(heldout_x);
    r.cells.push_back({c, accuracy(preds, std::vector<int>(heldout_y.begin(), heldout_y.end()))});
  }
  auto key = [](const MetaSweepCell& c) {
    return std::tuple(-c.accuracy, c.config.n_estimators, c.config.max_depth, c.config.min_samples_split);
  };
  for (std::size_t i = 1; i < r.cells.size(); ++i)
    if (key(r.cells[i]) < key(r.cells[r.selected])) r.selected = i;
  return r;
}

}  // namespace folkart
