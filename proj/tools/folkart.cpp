// folkart: command-line pipeline for folk-painting classification and tagging.
//
// Stages communicate only through files under the output directory:
//   manifest.csv -> split.csv -> vocab.txt -> models/*.json -> probs/*.csv -> meta/ensemble.json -> reports/

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "folkart/ensemble.hpp"
#include "folkart/report.hpp"
#include "folkart/synth.hpp"
#include "folkart/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace folkart;

namespace {

class StageMissing : public std::runtime_error {
 public:
  StageMissing(const fs::path& path, const std::string& command)
      : std::runtime_error("missing " + path.string() + "; run `folkart " + command + "` first") {}
};

struct Layout {
  fs::path root;
  fs::path manifest() const { return root / "manifest.csv"; }
  fs::path split() const { return root / "split.csv"; }
  fs::path distribution() const { return root / "split_distribution.csv"; }
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path synonyms() const { return root / "synonyms.txt"; }
  fs::path models() const { return root / "models"; }
  fs::path model(const std::string& id) const { return models() / (id + ".json"); }
  fs::path runs() const { return root / "runs"; }
  fs::path probs() const { return root / "probs"; }
  fs::path meta() const { return root / "meta" / "ensemble.json"; }
  fs::path reports() const { return root / "reports"; }
  fs::path sweeps() const { return root / "sweeps"; }
};

void require(const fs::path& p, const std::string& command) {
  if (!fs::exists(p)) throw StageMissing(p, command);
}

/// Global state shared by subcommands: output dir, merged config file values, output mode.
struct Context {
  std::string out_flag;
  std::string config_path;
  bool json_output = false;
  std::string seed_flag;
  std::map<std::string, std::string> file_values;
  Layout layout;

  void resolve() {
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw std::runtime_error("config file not found: " + config_path);
      file_values = parse_key_values(io::read_file(config_path));
    }
    std::string out = out_flag;
    if (out.empty() && file_values.count("out")) out = file_values["out"];
    if (out.empty())
      if (const char* env = std::getenv("FOLKART_OUT")) out = env;
    if (out.empty()) out = "folkart-out";
    layout.root = out;
    fs::create_directories(layout.root);
  }

  /// Flag value when given, else the config-file value, else the fallback.
  std::string value(const CLI::Option* opt, const std::string& flag_value, const std::string& key,
                    const std::string& fallback) const {
    if (opt && opt->count() > 0) return flag_value;
    if (auto it = file_values.find(key); it != file_values.end()) return it->second;
    return fallback;
  }

  std::uint64_t seed(const CLI::Option* opt) const {
    return static_cast<std::uint64_t>(text::parse_int(value(opt, seed_flag, "seed", "0")));
  }
};

void emit(const Context& ctx, const json& machine, const std::string& human) {
  if (ctx.json_output) std::cout << machine.dump(2) << "\n";
  else std::cout << human;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out += r[i];
      if (i + 1 < r.size()) out += std::string(width[i] - r[i].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

DatasetManifest load_split(const Layout& l) {
  require(l.split(), "split");
  return load_manifest(l.split());
}

SynonymMap load_synonyms_or_seed(const Layout& l) {
  return fs::exists(l.synonyms()) ? SynonymMap::load(l.synonyms()) : seed_synonyms();
}

ClassifierModel load_model_id(const Layout& l, const std::string& id) {
  require(l.model(id), "train --model-id " + id);
  return load_model(l.model(id));
}

std::vector<std::string> list_models(const Layout& l) {
  std::vector<std::string> ids;
  if (!fs::exists(l.models())) return ids;
  for (const auto& e : fs::directory_iterator(l.models()))
    if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- training flags ----------------------------------------------------------------

struct TrainingFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* app) {
    const std::vector<std::pair<std::string, std::string>> spec = {
        {"learning_rate", "initial Adam learning rate"},
        {"batch_size", "mini-batch size"},
        {"max_epochs", "epoch budget"},
        {"early_stop_patience", "epochs without improvement before stopping"},
        {"lr_patience", "epochs without improvement before reducing the rate"},
        {"lr_factor", "rate multiplier on plateau"},
        {"augment_multiplicity", "geometry variants per training image (0-3)"},
        {"train_backbone", "fine-tune backbone weights (true/false)"}};
    for (const auto& [key, help] : spec) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      options[key] = app->add_option(flag, values[key], help);
    }
  }

  TrainingConfig resolve(const Context& ctx, const CLI::Option* seed_opt) const {
    TrainingConfig c;
    for (const auto& [k, v] : ctx.file_values)
      if (TrainingConfig::is_key(k)) c.set(k, v);
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) c.set(k, values.at(k));
    c.seed = ctx.seed(seed_opt);
    c.validate();
    return c;
  }
};

struct ForestFlags {
  std::string n_estimators, max_depth, min_samples_split;
  CLI::Option *n_opt = nullptr, *d_opt = nullptr, *s_opt = nullptr;

  void add(CLI::App* app) {
    n_opt = app->add_option("--n-estimators", n_estimators, "trees in the forest (default 100)");
    d_opt = app->add_option("--max-depth", max_depth, "maximum tree depth (default 25)");
    s_opt = app->add_option("--min-samples-split", min_samples_split, "minimum samples to split a node (default 8)");
  }

  ForestConfig resolve(const Context& ctx, std::uint64_t seed) const {
    ForestConfig c;
    c.n_estimators = static_cast<int>(text::parse_int(ctx.value(n_opt, n_estimators, "n_estimators", "100")));
    c.max_depth = static_cast<int>(text::parse_int(ctx.value(d_opt, max_depth, "max_depth", "25")));
    c.min_samples_split = static_cast<int>(text::parse_int(ctx.value(s_opt, min_samples_split, "min_samples_split", "8")));
    c.seed = seed;
    c.validate();
    return c;
  }
};

// --- data loading for model stages ------------------------------------------------------

struct LoadedSplit {
  std::vector<LabeledImage> items;
  std::string hash;
};

LoadedSplit load_items(const Layout& l, const DatasetManifest& m, Split s, Task task, bool heuristic) {
  LoadedSplit out;
  out.hash = m.split_hash(s);
  if (task == Task::multilabel) {
    require(l.vocab(), "build-vocab");
    auto vocab = TagVocabulary::load(l.vocab());
    auto syn = load_synonyms_or_seed(l);
    out.items = load_labeled_split(m, s, &vocab, &syn, heuristic);
  } else {
    out.items = load_labeled_split(m, s, nullptr, nullptr, heuristic);
  }
  if (out.items.empty()) throw std::runtime_error("split '" + to_string(s) + "' has no records");
  return out;
}

std::vector<std::string> model_labels(const Layout& l, const DatasetManifest& m, Task task) {
  if (task == Task::multiclass) return m.registry.classes();
  require(l.vocab(), "build-vocab");
  return TagVocabulary::load(l.vocab()).tags();
}

std::vector<ClassifierModel> load_models(const Layout& l, const std::vector<std::string>& ids) {
  std::vector<ClassifierModel> out;
  for (const auto& id : ids) out.push_back(load_model_id(l, id));
  return out;
}

std::vector<const ClassifierModel*> pointers(const std::vector<ClassifierModel>& models) {
  std::vector<const ClassifierModel*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

// --- subcommands ------------------------------------------------------------------------------

int cmd_ingest(Context& ctx, const std::string& manifest_flag, const CLI::Option* manifest_opt, bool no_check) {
  const std::string src = ctx.value(manifest_opt, manifest_flag, "manifest", "");
  if (src.empty()) throw std::runtime_error("ingest needs --manifest <file> (or `manifest = ...` in the config)");
  ManifestLoadOptions opts;
  opts.check_paths = !no_check;
  auto m = load_manifest(src, opts);
  for (auto& r : m.records) r.path = fs::absolute(r.path).lexically_normal();
  io::write_file(ctx.layout.manifest(), manifest_to_csv(m));

  std::map<std::string, std::size_t> counts;
  for (const auto& r : m.records) counts[r.class_label]++;
  std::vector<std::vector<std::string>> rows{{"class", "images"}};
  json per_class = json::object();
  for (const auto& c : m.registry.classes()) {
    rows.push_back({c, std::to_string(counts[c])});
    per_class[c] = counts[c];
  }
  emit(ctx,
       {{"command", "ingest"}, {"records", m.records.size()}, {"classes", m.registry.size()},
        {"per_class", per_class}, {"manifest", ctx.layout.manifest().string()}},
       "ingested " + std::to_string(m.records.size()) + " records in " + std::to_string(m.registry.size()) +
           " classes -> " + ctx.layout.manifest().string() + "\n" + table(rows));
  return 0;
}

int cmd_split(Context& ctx, const std::string& ratios_flag, const CLI::Option* ratios_opt, const CLI::Option* seed_opt) {
  require(ctx.layout.manifest(), "ingest");
  auto m = load_manifest(ctx.layout.manifest());
  auto ratios = parse_ratios(ctx.value(ratios_opt, ratios_flag, "ratios", "0.6,0.2,0.2"));
  const auto seed = ctx.seed(seed_opt);
  auto split = stratified_split(m, ratios, seed);
  io::write_file(ctx.layout.split(), manifest_to_csv(split));
  auto dist = class_distribution(split);
  io::write_file(ctx.layout.distribution(), dist.to_csv());

  std::vector<std::vector<std::string>> rows{{"class", "train", "validation", "test", "total"}};
  json per_class = json::array();
  for (std::size_t c = 0; c < dist.classes.size(); ++c) {
    rows.push_back({dist.classes[c], std::to_string(dist.counts[c][0]), std::to_string(dist.counts[c][1]),
                    std::to_string(dist.counts[c][2]), std::to_string(dist.class_total(c))});
    per_class.push_back({{"class", dist.classes[c]},
                         {"train", dist.counts[c][0]},
                         {"validation", dist.counts[c][1]},
                         {"test", dist.counts[c][2]}});
  }
  rows.push_back({"TOTAL", std::to_string(dist.split_total(Split::train)),
                  std::to_string(dist.split_total(Split::validation)), std::to_string(dist.split_total(Split::test)),
                  std::to_string(dist.total())});
  emit(ctx,
       {{"command", "split"},
        {"seed", seed},
        {"train", dist.split_total(Split::train)},
        {"validation", dist.split_total(Split::validation)},
        {"test", dist.split_total(Split::test)},
        {"per_class", per_class}},
       "split written to " + ctx.layout.split().string() + "\n" + table(rows));
  return 0;
}

int cmd_build_vocab(Context& ctx, const std::string& syn_flag, const CLI::Option* syn_opt, const std::string& max_flag,
                    const CLI::Option* max_opt) {
  auto m = load_split(ctx.layout);
  const std::string syn_path = ctx.value(syn_opt, syn_flag, "synonyms", "");
  SynonymMap syn = syn_path.empty() ? seed_synonyms() : SynonymMap::load(syn_path);
  const auto max_size = static_cast<std::size_t>(text::parse_int(ctx.value(max_opt, max_flag, "max_vocab", "1500")));
  auto result = build_vocabulary(m, syn, max_size);
  result.vocabulary.save(ctx.layout.vocab());
  io::write_file(ctx.layout.synonyms(), syn.serialize());
  emit(ctx,
       {{"command", "build-vocab"},
        {"size", result.vocabulary.size()},
        {"distinct_tags", result.distinct_tags},
        {"dropped_by_cap", result.dropped_by_cap},
        {"vocab", ctx.layout.vocab().string()}},
       "vocabulary of " + std::to_string(result.vocabulary.size()) + " tags (" +
           std::to_string(result.distinct_tags) + " distinct, " + std::to_string(result.dropped_by_cap) +
           " dropped by cap) -> " + ctx.layout.vocab().string() + "\n");
  return 0;
}

struct ModelFlags {
  std::string backbone = "desk-conv3";
  std::string task = "multiclass";
  std::string model_id;
  int hidden = 1024;
  bool no_heuristic_trim = false;
  CLI::Option *backbone_opt = nullptr, *task_opt = nullptr, *hidden_opt = nullptr;

  void add(CLI::App* app) {
    backbone_opt = app->add_option("--backbone", backbone, "backbone adapter name");
    task_opt = app->add_option("--task", task, "multiclass or multilabel");
    hidden_opt = app->add_option("--hidden", hidden, "head hidden width");
    app->add_flag("--no-heuristic-trim", no_heuristic_trim, "only trim borders given by manifest crop boxes");
  }

  std::string resolved_backbone(const Context& ctx) const { return ctx.value(backbone_opt, backbone, "backbone", "desk-conv3"); }
  Task resolved_task(const Context& ctx) const { return parse_task(ctx.value(task_opt, task, "task", "multiclass")); }
  int resolved_hidden(const Context& ctx) const {
    return static_cast<int>(text::parse_int(ctx.value(hidden_opt, std::to_string(hidden), "hidden_dim", "1024")));
  }
};

int cmd_train(Context& ctx, const ModelFlags& mf, const TrainingFlags& tf, const CLI::Option* seed_opt) {
  const auto& l = ctx.layout;
  auto m = load_split(l);
  const auto cfg = tf.resolve(ctx, seed_opt);
  const Task task = mf.resolved_task(ctx);
  const std::string backbone = mf.resolved_backbone(ctx);
  const std::string id = mf.model_id.empty() ? backbone + (task == Task::multilabel ? "-tags" : "") : mf.model_id;
  auto labels = model_labels(l, m, task);
  auto train_split = load_items(l, m, Split::train, task, !mf.no_heuristic_trim);
  auto val_split = load_items(l, m, Split::validation, task, !mf.no_heuristic_trim);
  TrainingData data{std::move(train_split.items), std::move(val_split.items)};

  auto model = make_model(id, backbone, task, labels, cfg.seed, mf.resolved_hidden(ctx));
  TrainHooks hooks;
  if (!ctx.json_output) {
    hooks.on_epoch = [](const EpochMetrics& e) {
      std::cout << "epoch " << e.epoch << "  loss " << text::format_fixed(e.train_loss, 4) << "  train "
                << text::format_fixed(e.train_accuracy, 2) << "  val " << text::format_fixed(e.validation_metric, 2)
                << "  lr " << text::format_double(e.learning_rate) << "\n";
    };
  }
  auto result = train(std::move(model), data, cfg, hooks);
  json meta = {{"config", cfg.to_json()},
               {"best", result.best.metrics.to_json()},
               {"epochs_run", result.log.size()},
               {"stop_reason", result.stop_reason},
               {"monitor", task == Task::multiclass ? "validation_accuracy" : "validation_map"},
               {"train_split_hash", train_split.hash},
               {"validation_split_hash", val_split.hash}};
  save_model(result.best.model, l.model(id), meta);
  io::write_file(l.runs() / (id + ".jsonl"), result.log_jsonl());
  io::write_file(l.runs() / (id + ".config"), cfg.to_kv());
  emit(ctx,
       {{"command", "train"}, {"model_id", id}, {"checkpoint", l.model(id).string()}, {"training", meta}},
       "best epoch " + std::to_string(result.best.metrics.epoch) + " (validation " +
           text::format_fixed(result.best.metrics.validation_metric, 2) + "), " + result.stop_reason + "\ncheckpoint -> " +
           l.model(id).string() + "\n");
  return 0;
}

template <class T>
std::vector<T> list_or(const std::string& flag, const std::vector<T>& fallback, T (*parse)(std::string_view)) {
  if (flag.empty()) return fallback;
  return text::parse_list<T>(flag, parse);
}

int parse_int32(std::string_view s) { return static_cast<int>(text::parse_int(s)); }

struct SweepFlags {
  std::string kind;
  std::string learning_rates, batch_sizes, lr_factors;
  std::string n_estimators, max_depths, min_samples_splits;
  std::string models;
  std::string fit_split = "train";
};

int cmd_sweep(Context& ctx, const SweepFlags& sf, const ModelFlags& mf, const TrainingFlags& tf,
              const CLI::Option* seed_opt) {
  const auto& l = ctx.layout;
  const auto seed = ctx.seed(seed_opt);
  if (sf.kind == "cnn") {
    auto m = load_split(l);
    const auto base = tf.resolve(ctx, seed_opt);
    const Task task = mf.resolved_task(ctx);
    const std::string backbone = mf.resolved_backbone(ctx);
    TrainingGrid grid;
    grid.learning_rates = list_or<double>(sf.learning_rates, grid.learning_rates, text::parse_double);
    grid.batch_sizes = list_or<int>(sf.batch_sizes, grid.batch_sizes, parse_int32);
    grid.lr_factors = list_or<double>(sf.lr_factors, grid.lr_factors, text::parse_double);
    auto labels = model_labels(l, m, task);
    TrainingData data{load_items(l, m, Split::train, task, !mf.no_heuristic_trim).items,
                      load_items(l, m, Split::validation, task, !mf.no_heuristic_trim).items};
    const int hidden = mf.resolved_hidden(ctx);
    auto result = sweep(
        [&](const TrainingConfig& c) { return make_model(backbone, backbone, task, labels, c.seed, hidden); }, data, grid,
        base);
    const auto path = l.sweeps() / ("cnn-" + backbone + ".csv");
    io::write_file(path, result.to_csv());
    json cells = json::array();
    for (const auto& c : result.cells)
      cells.push_back({{"config", c.config.to_json()},
                       {"best_validation_metric", c.best_metric ? json(*c.best_metric) : json(nullptr)},
                       {"error", c.error}});
    std::string human = "swept " + std::to_string(result.cells.size()) + " cells -> " + path.string() + "\n";
    if (result.selected) {
      const auto& c = result.selected_config();
      human += "selected lr " + text::format_double(c.learning_rate) + ", batch " + std::to_string(c.batch_size) +
               ", factor " + text::format_double(c.lr_factor) + "\n";
    }
    emit(ctx,
         {{"command", "sweep"}, {"kind", "cnn"}, {"cells", cells},
          {"selected", result.selected ? json(result.selected_config().to_json()) : json(nullptr)}},
         human);
    return result.selected ? 0 : 1;
  }
  if (sf.kind != "forest") throw std::runtime_error("sweep kind must be `cnn` or `forest`");
  if (sf.models.empty()) throw std::runtime_error("sweep forest needs --models a,b,c");
  auto ids = text::split(sf.models, ',');
  auto m = load_split(l);
  auto models = load_models(l, ids);
  const Split fit = parse_split(sf.fit_split);
  if (fit != Split::train && fit != Split::validation) throw std::runtime_error("--fit-split must be train or validation");
  const Split held = fit == Split::train ? Split::validation : Split::train;
  auto fit_items = load_items(l, m, fit, Task::multiclass, true);
  auto held_items = load_items(l, m, held, Task::multiclass, true);
  auto fit_x = build_stacked_features(collect_probabilities(pointers(models), fit_items.items, fit_items.hash, l.probs()));
  auto held_x = build_stacked_features(collect_probabilities(pointers(models), held_items.items, held_items.hash, l.probs()));
  ForestGrid grid;
  grid.n_estimators = list_or<int>(sf.n_estimators, grid.n_estimators, parse_int32);
  grid.max_depths = list_or<int>(sf.max_depths, grid.max_depths, parse_int32);
  grid.min_samples_splits = list_or<int>(sf.min_samples_splits, grid.min_samples_splits, parse_int32);
  auto result = sweep_meta(fit_x, class_indices(fit_items.items), held_x, class_indices(held_items.items), grid,
                           m.registry.classes(), seed);
  const auto path = l.sweeps() / "forest.csv";
  io::write_file(path, result.to_csv());
  const auto& sel = result.selected_config();
  emit(ctx,
       {{"command", "sweep"}, {"kind", "forest"}, {"cells", result.cells.size()}, {"selected", sel.to_json()},
        {"table", path.string()}},
       "swept " + std::to_string(result.cells.size()) + " forest cells -> " + path.string() + "\nselected " +
           std::to_string(sel.n_estimators) + " estimators, depth " + std::to_string(sel.max_depth) +
           ", min split " + std::to_string(sel.min_samples_split) + "\n");
  return 0;
}

int cmd_stack(Context& ctx, const std::string& models_flag, const std::string& fit_split, const ForestFlags& ff,
              const CLI::Option* seed_opt) {
  const auto& l = ctx.layout;
  if (models_flag.empty()) throw std::runtime_error("stack needs --models a,b,c");
  auto ids = text::split(models_flag, ',');
  auto m = load_split(l);
  auto models = load_models(l, ids);
  const Split fit = parse_split(fit_split);
  if (fit != Split::train && fit != Split::validation) throw std::runtime_error("--fit-split must be train or validation");
  auto items = load_items(l, m, fit, Task::multiclass, true);
  auto features = build_stacked_features(collect_probabilities(pointers(models), items.items, items.hash, l.probs()));
  const auto cfg = ff.resolve(ctx, ctx.seed(seed_opt));
  auto meta = fit_meta(features, class_indices(items.items), cfg, m.registry.classes(), ids);
  meta.fit_split = to_string(fit);
  save_meta(meta, l.meta());
  emit(ctx,
       {{"command", "stack"}, {"models", ids}, {"fit_split", meta.fit_split}, {"feature_width", meta.feature_width},
        {"forest", cfg.to_json()}, {"meta", l.meta().string()}},
       "stacked " + std::to_string(ids.size()) + " models (width " + std::to_string(meta.feature_width) +
           ") on " + meta.fit_split + " probabilities -> " + l.meta().string() + "\n");
  return 0;
}

ComparisonTable comparison_from_reports(const Layout& l, const std::string& task) {
  ComparisonTable t;
  t.metric = task == "multiclass" ? "Accuracy" : "mAP";
  if (!fs::exists(l.reports())) return t;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(l.reports()))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<EvaluationReport> reports;
  for (const auto& f : files) {
    auto r = load_report(f);
    if (r.task == task) reports.push_back(std::move(r));
  }
  // Base models first, the ensemble row last.
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return (a.model_id == "ensemble") < (b.model_id == "ensemble");
  });
  for (const auto& r : reports)
    t.set(r.model_id == "ensemble" ? "Random Forest (Ensemble)" : r.model_id, r.split,
          task == "multiclass" ? r.accuracy : r.tagging->map);
  return t;
}

void write_comparisons(const Layout& l) {
  for (const std::string task : {"multiclass", "multilabel"}) {
    auto t = comparison_from_reports(l, task);
    if (t.rows.empty()) continue;
    const std::string stem = task == "multiclass" ? "comparison" : "tagging";
    io::write_file(l.reports() / (stem + ".csv"), t.to_csv());
    io::write_file(l.reports() / (stem + ".md"), t.to_markdown());
  }
}

int cmd_evaluate(Context& ctx, const std::string& split_flag, const std::string& models_flag, bool no_ensemble,
                 bool no_heuristic, const CLI::Option* seed_opt) {
  const auto& l = ctx.layout;
  auto m = load_split(l);
  const Split split = parse_split(split_flag);
  if (split == Split::unassigned) throw std::runtime_error("--split must be train, validation or test");
  auto ids = models_flag.empty() ? list_models(l) : text::split(models_flag, ',');
  const bool with_ensemble = !no_ensemble && fs::exists(l.meta());
  if (ids.empty() && !with_ensemble) throw StageMissing(l.models(), "train");
  const auto seed = ctx.seed(seed_opt);

  std::optional<LoadedSplit> class_items, tag_items;
  auto items_for = [&](Task task) -> const LoadedSplit& {
    auto& slot = task == Task::multiclass ? class_items : tag_items;
    if (!slot) slot = load_items(l, m, split, task, !no_heuristic);
    return *slot;
  };

  json out = json::array();
  std::vector<std::vector<std::string>> rows{{"model", "split", "metric", "value"}};
  auto record = [&](const EvaluationReport& r) {
    const std::string stem = r.model_id + "-" + r.split;
    auto files = emit_report(r, l.reports(), stem);
    const bool cls = r.task == "multiclass";
    const double v = cls ? r.accuracy : r.tagging->map;
    rows.push_back({r.model_id, r.split, cls ? "accuracy" : "mAP", text::format_fixed(v, 2)});
    out.push_back({{"model_id", r.model_id}, {"split", r.split}, {"task", r.task}, {cls ? "accuracy" : "map", v},
                   {"report", files.report.string()}});
  };

  for (const auto& id : ids) {
    auto model = load_model_id(l, id);
    const auto& items = items_for(model.task());
    Matrix probs = predict_all(model, items.items);
    if (model.task() == Task::multiclass) {
      record(make_report(id, to_string(split), seed, argmax_columns(probs), class_indices(items.items),
                         model.labels()));
    } else {
      auto r = make_tag_report(
          id, to_string(split), seed,
          make_tag_scores(probs.transpose(), tag_matrix(items.items, model.labels().size()), model.labels()));
      if (split == Split::test) r.notes.push_back("test-split mAP has no published reference value");
      record(r);
    }
  }
  if (with_ensemble) {
    auto meta = load_meta(l.meta());
    auto models = load_models(l, meta.model_order);
    const auto& items = items_for(Task::multiclass);
    auto x = build_stacked_features(collect_probabilities(pointers(models), items.items, items.hash, l.probs()));
    auto r = make_report("ensemble", to_string(split), seed, meta.predict(x), class_indices(items.items), meta.classes);
    r.notes.push_back("meta-classifier fit on " + meta.fit_split + " probabilities of " + text::join(meta.model_order, ","));
    record(r);
  }
  write_comparisons(l);
  emit(ctx, {{"command", "evaluate"}, {"results", out}}, table(rows));
  return 0;
}

int cmd_predict(Context& ctx, const std::string& checkpoint, const std::string& model_id, const std::string& image,
                double threshold, bool ensemble, bool no_heuristic) {
  if (image.empty()) throw std::runtime_error("predict needs --image <file>");
  RasterImage raw = read_image(image);
  RasterImage trimmed = no_heuristic ? raw : trim_border(raw, HeuristicTrim{});
  const auto& l = ctx.layout;
  if (ensemble) {
    require(l.meta(), "stack");
    auto meta = load_meta(l.meta());
    auto models = load_models(l, meta.model_order);
    auto tensor = resize_normalize(trimmed, models.front().profile());
    for (const auto& mm : models)
      if (mm.profile().input_side != models.front().profile().input_side)
        throw std::runtime_error("ensemble members use different input sizes");
    auto name = predict_ensemble(meta, pointers(models), tensor, ClassRegistry(meta.classes));
    emit(ctx, {{"command", "predict"}, {"model_id", "ensemble"}, {"class", name}}, name + "\n");
    return 0;
  }
  fs::path path = checkpoint;
  if (path.empty()) {
    if (model_id.empty()) throw std::runtime_error("predict needs --checkpoint <file>, --model <id> or --ensemble");
    path = l.model(model_id);
    require(path, "train --model-id " + model_id);
  } else if (!fs::exists(path)) {
    throw std::runtime_error("checkpoint not found: " + path.string());
  }
  auto model = load_model(path);
  auto tensor = resize_normalize(trimmed, model.profile());
  if (model.task() == Task::multiclass) {
    auto name = predict_class(model, tensor, ClassRegistry(model.labels()));
    auto p = model.predict_proba(tensor);
    emit(ctx, {{"command", "predict"}, {"model_id", model.id()}, {"class", name}, {"probabilities", p}}, name + "\n");
  } else {
    auto tags = predict_tags(model, tensor, TagVocabulary(model.labels()), threshold);
    std::vector<std::string> list(tags.begin(), tags.end());
    emit(ctx, {{"command", "predict"}, {"model_id", model.id()}, {"tags", list}},
         list.empty() ? "(no tags)\n" : text::join(list, "\n") + "\n");
  }
  return 0;
}

int cmd_report(Context& ctx) {
  const auto& l = ctx.layout;
  write_comparisons(l);
  auto cls = comparison_from_reports(l, "multiclass");
  auto tag = comparison_from_reports(l, "multilabel");
  if (cls.rows.empty() && tag.rows.empty()) throw StageMissing(l.reports(), "evaluate");
  auto rows_json = [](const ComparisonTable& t) {
    json a = json::array();
    for (const auto& r : t.rows)
      a.push_back({{"model", r.model},
                   {"train", r.train ? json(*r.train) : json(nullptr)},
                   {"validation", r.validation ? json(*r.validation) : json(nullptr)},
                   {"test", r.test ? json(*r.test) : json(nullptr)}});
    return a;
  };
  std::string human;
  if (!cls.rows.empty()) human += cls.to_markdown();
  if (!tag.rows.empty()) human += (human.empty() ? "" : "\n") + tag.to_markdown();
  emit(ctx, {{"command", "report"}, {"classification", rows_json(cls)}, {"tagging", rows_json(tag)}}, human);
  return 0;
}

int cmd_synth(Context& ctx, const std::string& dest, int per_class, int side, const CLI::Option* seed_opt) {
  SynthOptions opt;
  opt.images_per_class = per_class;
  opt.side = side;
  opt.seed = ctx.seed(seed_opt);
  fs::path dir = dest.empty() ? ctx.layout.root / "synth" : fs::path(dest);
  auto res = generate_synth_dataset(dir, opt);
  emit(ctx,
       {{"command", "synth-data"}, {"images", res.manifest.records.size()}, {"manifest", res.manifest_path.string()},
        {"synonyms", res.synonyms_path.string()}},
       "wrote " + std::to_string(res.manifest.records.size()) + " images; manifest " + res.manifest_path.string() +
           "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"folkart: classify and tag folk paintings"};
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  app.add_option("--out", ctx.out_flag, "output directory (default $FOLKART_OUT or ./folkart-out)");
  app.add_option("--config", ctx.config_path, "key = value file; explicit flags override it");
  app.add_flag("--json", ctx.json_output, "machine-readable output");
  auto* seed_opt = app.add_option("--seed", ctx.seed_flag, "random seed for every stage (default 0)");

  auto* ingest = app.add_subcommand("ingest", "validate a manifest and record it as the pipeline input");
  std::string manifest_flag;
  bool no_check = false;
  auto* manifest_opt = ingest->add_option("--manifest", manifest_flag, "CSV or JSONL manifest");
  ingest->add_flag("--no-check-paths", no_check, "skip image existence checks");

  auto* split = app.add_subcommand("split", "stratified train/validation/test split");
  std::string ratios_flag;
  auto* ratios_opt = split->add_option("--ratios", ratios_flag, "train,validation,test (default 0.6,0.2,0.2)");

  auto* vocab = app.add_subcommand("build-vocab", "build the tag vocabulary from the train split");
  std::string syn_flag, max_flag;
  auto* syn_opt = vocab->add_option("--synonyms", syn_flag, "synonym map file (surface -> canonical)");
  auto* max_opt = vocab->add_option("--max-size", max_flag, "vocabulary cap (default 1500)");

  auto* trainc = app.add_subcommand("train", "fine-tune a backbone and head");
  ModelFlags train_mf;
  TrainingFlags train_tf;
  train_mf.add(trainc);
  trainc->add_option("--model-id", train_mf.model_id, "checkpoint name (default: backbone name)");
  train_tf.add(trainc);

  auto* sweepc = app.add_subcommand("sweep", "grid search: `sweep cnn` or `sweep forest`");
  SweepFlags sf;
  ModelFlags sweep_mf;
  TrainingFlags sweep_tf;
  sweepc->add_option("kind", sf.kind, "cnn or forest")->required();
  sweep_mf.add(sweepc);
  sweep_tf.add(sweepc);
  sweepc->add_option("--learning-rates", sf.learning_rates, "cnn grid (default 0.001,0.0001)");
  sweepc->add_option("--batch-sizes", sf.batch_sizes, "cnn grid (default 32,64,128)");
  sweepc->add_option("--lr-factors", sf.lr_factors, "cnn grid (default 0.2,0.5)");
  sweepc->add_option("--models", sf.models, "forest: base model ids in stacking order");
  sweepc->add_option("--fit-split", sf.fit_split, "forest: train or validation");
  sweepc->add_option("--n-estimators-grid", sf.n_estimators, "forest grid (default 100,200,400,800,1000)");
  sweepc->add_option("--max-depth-grid", sf.max_depths, "forest grid (default 10,25,35,50)");
  sweepc->add_option("--min-samples-split-grid", sf.min_samples_splits, "forest grid (default 2,4,8,16)");

  auto* stack = app.add_subcommand("stack", "fit the random-forest meta-classifier over base-model probabilities");
  std::string stack_models, stack_fit = "train";
  ForestFlags ff;
  stack->add_option("--models", stack_models, "base model ids in stacking order");
  stack->add_option("--fit-split", stack_fit, "train (default) or validation");
  ff.add(stack);

  auto* evaluate = app.add_subcommand("evaluate", "score models (and the ensemble) on a split");
  std::string eval_split = "test", eval_models;
  bool no_ensemble = false, eval_no_trim = false;
  evaluate->add_option("--split", eval_split, "train, validation or test");
  evaluate->add_option("--models", eval_models, "model ids (default: every checkpoint)");
  evaluate->add_flag("--no-ensemble", no_ensemble, "skip the stacked ensemble");
  evaluate->add_flag("--no-heuristic-trim", eval_no_trim, "only trim borders given by manifest crop boxes");

  auto* predict = app.add_subcommand("predict", "classify or tag one image");
  std::string ckpt, pred_model, image;
  double threshold = 0.5;
  bool use_ensemble = false, pred_no_trim = false;
  predict->add_option("--checkpoint", ckpt, "checkpoint file");
  predict->add_option("--model", pred_model, "model id under the output directory");
  predict->add_option("--image", image, "image file");
  predict->add_option("--threshold", threshold, "tag score threshold (strict)");
  predict->add_flag("--ensemble", use_ensemble, "use the stacked ensemble");
  predict->add_flag("--no-heuristic-trim", pred_no_trim, "do not strip flat margins");

  auto* report = app.add_subcommand("report", "comparison tables from saved evaluation reports");

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic 12-class dataset");
  std::string synth_dest;
  int per_class = 30, side = 224;
  synth->add_option("--dest", synth_dest, "target directory (default <out>/synth)");
  synth->add_option("--images-per-class", per_class, "images per class");
  synth->add_option("--side", side, "image side in pixels (224 or 299)");

  CLI11_PARSE(app, argc, argv);

  try {
    ctx.resolve();
    if (*ingest) return cmd_ingest(ctx, manifest_flag, manifest_opt, no_check);
    if (*split) return cmd_split(ctx, ratios_flag, ratios_opt, seed_opt);
    if (*vocab) return cmd_build_vocab(ctx, syn_flag, syn_opt, max_flag, max_opt);
    if (*trainc) return cmd_train(ctx, train_mf, train_tf, seed_opt);
    if (*sweepc) return cmd_sweep(ctx, sf, sweep_mf, sweep_tf, seed_opt);
    if (*stack) return cmd_stack(ctx, stack_models, stack_fit, ff, seed_opt);
    if (*evaluate) return cmd_evaluate(ctx, eval_split, eval_models, no_ensemble, eval_no_trim, seed_opt);
    if (*predict) return cmd_predict(ctx, ckpt, pred_model, image, threshold, use_ensemble, pred_no_trim);
    if (*report) return cmd_report(ctx);
    if (*synth) return cmd_synth(ctx, synth_dest, per_class, side, seed_opt);
  } catch (const StageMissing& e) {
    std::cerr << "folkart: " << e.what() << "\n";
    return 2;
  } catch (const ManifestError& e) {
    std::cerr << "folkart: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "folkart: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
