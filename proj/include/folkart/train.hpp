#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkart/adam.hpp"
#include "folkart/labeled_data.hpp"
#include "folkart/metrics.hpp"
#include "folkart/model.hpp"
#include "folkart/schedule.hpp"

namespace folkart {

struct TrainingConfig {
  double learning_rate = 0.001;
  int batch_size = 32;
  int max_epochs = 100;
  int early_stop_patience = 15;
  int lr_patience = 8;
  double lr_factor = 0.5;
  std::uint64_t seed = 0;
  /// Geometry variants added per training image (0 to 3: hflip, vflip, rescale).
  int augment_multiplicity = 3;
  bool train_backbone = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (early_stop_patience < 1 || lr_patience < 1) throw std::invalid_argument("patience values must be >= 1");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw std::invalid_argument("lr_factor must be in (0, 1)");
    if (augment_multiplicity < 0 || augment_multiplicity > 3)
      throw std::invalid_argument("augment_multiplicity must be in [0, 3]");
  }

  /// Applies one `key = value` setting; unknown keys throw.
  void set(const std::string& key, const std::string& value) {
    if (key == "learning_rate") learning_rate = text::parse_double(value);
    else if (key == "batch_size") batch_size = static_cast<int>(text::parse_int(value));
    else if (key == "max_epochs") max_epochs = static_cast<int>(text::parse_int(value));
    else if (key == "early_stop_patience") early_stop_patience = static_cast<int>(text::parse_int(value));
    else if (key == "lr_patience") lr_patience = static_cast<int>(text::parse_int(value));
    else if (key == "lr_factor") lr_factor = text::parse_double(value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(text::parse_int(value));
    else if (key == "augment_multiplicity") augment_multiplicity = static_cast<int>(text::parse_int(value));
    else if (key == "train_backbone") {
      auto v = text::lower(text::trim(value));
      if (v != "true" && v != "false" && v != "1" && v != "0") throw std::invalid_argument("train_backbone must be a boolean");
      train_backbone = v == "true" || v == "1";
    } else {
      throw std::invalid_argument("unknown training key '" + key + "'");
    }
  }

  static bool is_key(const std::string& key) {
    static const std::set<std::string> keys = {"learning_rate", "batch_size",   "max_epochs",
                                               "early_stop_patience", "lr_patience", "lr_factor",
                                               "seed",          "augment_multiplicity", "train_backbone"};
    return keys.count(key) > 0;
  }

  std::string to_kv() const {
    std::string out;
    out += "learning_rate = " + text::format_double(learning_rate) + "\n";
    out += "batch_size = " + std::to_string(batch_size) + "\n";
    out += "max_epochs = " + std::to_string(max_epochs) + "\n";
    out += "early_stop_patience = " + std::to_string(early_stop_patience) + "\n";
    out += "lr_patience = " + std::to_string(lr_patience) + "\n";
    out += "lr_factor = " + text::format_double(lr_factor) + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "augment_multiplicity = " + std::to_string(augment_multiplicity) + "\n";
    out += std::string("train_backbone = ") + (train_backbone ? "true" : "false") + "\n";
    return out;
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size},
            {"max_epochs", max_epochs},       {"early_stop_patience", early_stop_patience},
            {"lr_patience", lr_patience},     {"lr_factor", lr_factor},
            {"seed", seed},                   {"augment_multiplicity", augment_multiplicity},
            {"train_backbone", train_backbone}};
  }

  bool operator==(const TrainingConfig&) const = default;
};

/// Parses `key = value` lines (`#` comments allowed). Keys outside `accept` are returned untouched.
inline std::map<std::string, std::string> parse_key_values(const std::string& content) {
  std::map<std::string, std::string> out;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = text::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    out[text::trim(t.substr(0, eq))] = text::trim(t.substr(eq + 1));
  }
  return out;
}

inline TrainingConfig parse_training_config(const std::string& content, TrainingConfig base = {}) {
  for (const auto& [k, v] : parse_key_values(content))
    if (TrainingConfig::is_key(k)) base.set(k, v);
  base.validate();
  return base;
}

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_metric = 0.0;
  double learning_rate = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"train_loss", train_loss},
            {"train_accuracy", train_accuracy},
            {"validation_metric", validation_metric},
            {"learning_rate", learning_rate}};
  }

  static EpochMetrics from_json(const nlohmann::json& j) {
    return {j.at("epoch").get<int>(), j.at("train_loss").get<double>(), j.at("train_accuracy").get<double>(),
            j.at("validation_metric").get<double>(), j.at("learning_rate").get<double>()};
  }
};

struct Checkpoint {
  ClassifierModel model;
  EpochMetrics metrics;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochMetrics> log;
  std::string stop_reason;

  std::string log_jsonl() const {
    std::string out;
    for (const auto& m : log) out += m.to_json().dump() + "\n";
    return out;
  }
};

struct TrainHooks {
  /// Replaces validation-split evaluation; lets scheduler/stopping logic run on scripted metrics.
  std::function<double(int epoch, const ClassifierModel&)> validation_metric;
  std::function<void(const EpochMetrics&)> on_epoch;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int epoch)
      : std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Validation accuracy (multiclass) or validation mAP (multilabel), both in percent.
inline double monitor_metric(const ClassifierModel& model, std::span<const LabeledImage> items) {
  if (items.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  Matrix probs = predict_all(model, items);
  if (model.task() == Task::multiclass) {
    auto preds = argmax_columns(probs);
    auto truths = class_indices(items);
    return accuracy(preds, truths);
  }
  return mean_average_precision(probs.transpose(), tag_matrix(items, model.labels().size())).map;
}

namespace detail {

inline void check_targets(const ClassifierModel& model, std::span<const LabeledImage> items) {
  const auto out = static_cast<std::size_t>(model.head().config().output_dim);
  for (const auto& it : items) {
    if (model.task() == Task::multiclass) {
      if (it.class_index < 0 || static_cast<std::size_t>(it.class_index) >= out)
        throw std::invalid_argument("item '" + it.id + "' class index outside the model's label space");
    } else if (it.tags.size() != out) {
      throw std::invalid_argument("item '" + it.id + "' tag vector does not match the model's vocabulary");
    }
  }
}

}  // namespace detail

/// Fine-tunes backbone and head with Adam; plateau LR reduction, early stopping and
/// best-validation checkpointing. Deterministic given config.seed.
inline TrainResult train(ClassifierModel model, const TrainingData& data, const TrainingConfig& config,
                         const TrainHooks& hooks = {}) {
  config.validate();
  if (data.train.empty()) throw std::invalid_argument("empty train split");
  if (!hooks.validation_metric && data.validation.empty()) throw std::invalid_argument("empty validation split");
  detail::check_targets(model, data.train);
  detail::check_targets(model, data.validation);

  // Originals plus materialized geometry variants, train split only.
  struct PoolItem {
    const RasterImage* image;
    std::size_t source;
  };
  std::vector<RasterImage> variants;
  variants.reserve(data.train.size() * static_cast<std::size_t>(config.augment_multiplicity));
  for (std::size_t i = 0; i < data.train.size() && config.augment_multiplicity > 0; ++i) {
    auto v = augment(data.train[i].image, Rng::derive(config.seed, 1000 + i));
    for (int k = 0; k < config.augment_multiplicity; ++k) variants.push_back(std::move(v[static_cast<std::size_t>(k)]));
  }
  std::vector<PoolItem> pool;
  for (std::size_t i = 0; i < data.train.size(); ++i) pool.push_back({&data.train[i].image, i});
  for (std::size_t i = 0; i < variants.size(); ++i)
    pool.push_back({&variants[i], i / static_cast<std::size_t>(config.augment_multiplicity)});

  const Task task = model.task();
  const auto act = model.head().config().activation;
  const auto outputs = static_cast<Eigen::Index>(model.head().config().output_dim);
  model.backbone().set_trainable(config.train_backbone);

  Rng shuffle_rng(Rng::derive(config.seed, 7));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Adam adam;
  SchedulerState sched = make_scheduler(config.learning_rate);
  EarlyStopState stopper;
  TrainResult result;
  bool have_checkpoint = false;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = sched.current_lr;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double correct = 0.0;
    double judged = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(static_cast<std::size_t>(config.batch_size), order.size() - start);
      std::vector<NormalizedTensor> tensors;
      tensors.reserve(n);
      Matrix targets = Matrix::Zero(outputs, static_cast<Eigen::Index>(n));
      for (std::size_t b = 0; b < n; ++b) {
        const auto& item = pool[order[start + b]];
        const auto& src = data.train[item.source];
        tensors.push_back(resize_normalize(*item.image, model.profile()));
        if (task == Task::multiclass) {
          targets(src.class_index, static_cast<Eigen::Index>(b)) = 1.0;
        } else {
          for (Eigen::Index t = 0; t < outputs; ++t) targets(t, static_cast<Eigen::Index>(b)) = src.tags.bits[static_cast<std::size_t>(t)];
        }
      }

      const bool tune_backbone = model.backbone().trainable();
      Matrix features = tune_backbone ? model.backbone().forward_train(tensors) : model.backbone().features(tensors);
      Matrix probs = activate(model.head().forward_train(features), act);
      auto lg = loss_and_gradient(probs, targets, act);
      if (!std::isfinite(lg.loss)) throw TrainingDiverged(epoch);
      loss_sum += lg.loss * static_cast<double>(n);

      for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        if (task == Task::multiclass) {
          Eigen::Index best;
          probs.col(j).maxCoeff(&best);
          correct += targets(best, j) == 1.0 ? 1.0 : 0.0;
          judged += 1.0;
        } else {
          for (Eigen::Index t = 0; t < outputs; ++t) correct += (probs(t, j) > 0.5) == (targets(t, j) == 1.0) ? 1.0 : 0.0;
          judged += static_cast<double>(outputs);
        }
      }

      model.head().zero_grad();
      model.backbone().zero_grad();
      Matrix grad_features = model.head().backward(lg.grad_logits);
      auto params = model.head().parameters();
      if (tune_backbone) {
        model.backbone().backward(grad_features);
        for (const auto& p : model.backbone().parameters()) params.push_back(p);
      }
      adam.step(params, lr);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(pool.size());
    m.train_accuracy = 100.0 * correct / judged;
    m.learning_rate = lr;
    m.validation_metric = hooks.validation_metric ? hooks.validation_metric(epoch, model)
                                                  : monitor_metric(model, data.validation);
    if (!std::isfinite(m.validation_metric)) throw std::runtime_error("validation metric is not finite");
    result.log.push_back(m);

    if (!have_checkpoint || m.validation_metric > result.best.metrics.validation_metric) {
      result.best = Checkpoint{model, m};
      have_checkpoint = true;
    }
    sched = scheduler_step(sched, m.validation_metric, config.lr_patience, config.lr_factor);
    stopper = early_stop_step(stopper, m.validation_metric, config.early_stop_patience);
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (stopper.stopped) {
      result.stop_reason = "early stop: no improvement for " + std::to_string(config.early_stop_patience) + " epochs";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max epochs reached";
  return result;
}

// --- grid sweep ------------------------------------------------------------------

struct TrainingGrid {
  std::vector<double> learning_rates = {0.001, 0.0001};
  std::vector<int> batch_sizes = {32, 64, 128};
  std::vector<double> lr_factors = {0.2, 0.5};

  /// Cartesian product in (learning rate, batch size, factor) order over a base config.
  std::vector<TrainingConfig> cells(const TrainingConfig& base) const {
    std::vector<TrainingConfig> out;
    for (double lr : learning_rates)
      for (int bs : batch_sizes)
        for (double f : lr_factors) {
          TrainingConfig c = base;
          c.learning_rate = lr;
          c.batch_size = bs;
          c.lr_factor = f;
          out.push_back(c);
        }
    return out;
  }
};

struct SweepCell {
  TrainingConfig config;
  std::optional<double> best_metric;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::optional<std::size_t> selected;

  const TrainingConfig& selected_config() const {
    if (!selected) throw std::runtime_error("no sweep cell succeeded");
    return cells[*selected].config;
  }

  std::string to_csv() const {
    std::string out = "learning_rate,batch_size,lr_factor,best_validation_metric,selected,error\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      out += csv::join_row({text::format_double(c.config.learning_rate), std::to_string(c.config.batch_size),
                            text::format_double(c.config.lr_factor),
                            c.best_metric ? text::format_double(*c.best_metric) : "",
                            selected && *selected == i ? "1" : "0", c.error}) +
             "\n";
    }
    return out;
  }
};

/// Runs every grid cell; a failing cell is recorded and the sweep continues. Selection is
/// the highest validation metric, ties to the lower learning rate, then the smaller batch,
/// then the smaller factor.
inline SweepResult sweep(const TrainingGrid& grid, const TrainingConfig& base,
                         const std::function<double(const TrainingConfig&)>& run_cell) {
  auto configs = grid.cells(base);
  if (configs.empty()) throw std::invalid_argument("empty training grid");
  SweepResult r;
  for (auto& c : configs) {
    SweepCell cell{c, std::nullopt, {}};
    try {
      cell.best_metric = run_cell(c);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    r.cells.push_back(std::move(cell));
  }
  auto better = [](const SweepCell& a, const SweepCell& b) {
    if (*a.best_metric != *b.best_metric) return *a.best_metric > *b.best_metric;
    if (a.config.learning_rate != b.config.learning_rate) return a.config.learning_rate < b.config.learning_rate;
    if (a.config.batch_size != b.config.batch_size) return a.config.batch_size < b.config.batch_size;
    return a.config.lr_factor < b.config.lr_factor;
  };
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    if (!r.cells[i].best_metric) continue;
    if (!r.selected || better(r.cells[i], r.cells[*r.selected])) r.selected = i;
  }
  return r;
}

/// Sweep that trains a fresh model per cell and scores it by its best validation metric.
inline SweepResult sweep(const std::function<ClassifierModel(const TrainingConfig&)>& model_factory,
                         const TrainingData& data, const TrainingGrid& grid, const TrainingConfig& base) {
  return sweep(grid, base, [&](const TrainingConfig& c) {
    return train(model_factory(c), data, c).best.metrics.validation_metric;
  });
}

}  // namespace folkart
