#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "folkart/rng.hpp"
#include "folkart/util.hpp"

namespace folkart {

enum class Split { train, validation, test, unassigned };

inline constexpr std::array<Split, 3> kAssignedSplits = {Split::train, Split::validation, Split::test};

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view s) {
  std::string t = text::lower(text::trim(s));
  if (t == "train") return Split::train;
  if (t == "validation" || t == "val") return Split::validation;
  if (t == "test") return Split::test;
  if (t.empty() || t == "unassigned") return Split::unassigned;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

/// Ordered class names with a name -> index bijection onto [0, size).
class ClassRegistry {
 public:
  ClassRegistry() = default;

  explicit ClassRegistry(std::vector<std::string> classes) : classes_(std::move(classes)) {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (text::trim(classes_[i]).empty()) throw std::invalid_argument("empty class name");
      if (!index_.emplace(classes_[i], static_cast<int>(i)).second)
        throw std::invalid_argument("duplicate class name '" + classes_[i] + "'");
    }
  }

  std::size_t size() const { return classes_.size(); }
  bool empty() const { return classes_.empty(); }
  const std::vector<std::string>& classes() const { return classes_; }
  const std::string& name(std::size_t i) const { return classes_.at(i); }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int index_of(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw std::out_of_range("unknown class '" + name + "'");
    return *idx;
  }

  std::string fingerprint() const { return hash_lines(classes_); }

  bool operator==(const ClassRegistry& other) const { return classes_ == other.classes_; }

 private:
  std::vector<std::string> classes_;
  std::unordered_map<std::string, int> index_;
};

/// Pixel rectangle; x, y is the top-left corner.
struct CropBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const CropBox&) const = default;
};

inline CropBox parse_crop(std::string_view s) {
  auto parts = text::split(s, ',');
  if (parts.size() != 4) throw std::invalid_argument("crop must be x,y,w,h: '" + std::string(s) + "'");
  return CropBox{static_cast<int>(text::parse_int(parts[0])), static_cast<int>(text::parse_int(parts[1])),
                 static_cast<int>(text::parse_int(parts[2])), static_cast<int>(text::parse_int(parts[3]))};
}

inline std::string format_crop(const CropBox& b) {
  return std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.width) + "," +
         std::to_string(b.height);
}

struct ImageRecord {
  std::string id;
  std::filesystem::path path;
  std::string class_label;
  std::vector<std::string> raw_tags;
  Split split = Split::unassigned;
  std::optional<CropBox> crop;

  bool operator==(const ImageRecord&) const = default;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;

  bool operator==(const SplitRatios&) const = default;
};

inline SplitRatios parse_ratios(std::string_view s) {
  auto values = text::parse_list<double>(s, text::parse_double);
  if (values.size() != 3) throw std::invalid_argument("ratios must be train,validation,test");
  return SplitRatios{values[0], values[1], values[2]};
}

struct DatasetManifest {
  std::vector<ImageRecord> records;
  ClassRegistry registry;
  SplitRatios split_ratios;

  std::vector<const ImageRecord*> in_split(Split s) const {
    std::vector<const ImageRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  /// Fingerprint of the ordered (id, class, split) assignments of one split.
  std::string split_hash(Split s) const {
    std::vector<std::string> lines;
    for (const auto& r : records)
      if (r.split == s) lines.push_back(r.id + "\t" + r.class_label);
    lines.push_back(to_string(s));
    return hash_lines(lines);
  }
};

/// All manifest problems found in one pass.
class ManifestError : public std::runtime_error {
 public:
  explicit ManifestError(std::vector<std::string> issues)
      : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string summarize(const std::vector<std::string>& issues) {
    std::string msg = "manifest invalid (" + std::to_string(issues.size()) + " issue" +
                      (issues.size() == 1 ? "" : "s") + ")";
    for (const auto& i : issues) msg += "\n  - " + i;
    return msg;
  }

  std::vector<std::string> issues_;
};

struct ManifestLoadOptions {
  bool check_paths = true;
  /// When set, class labels must belong to this registry and its order is kept.
  std::optional<ClassRegistry> expected_registry;
};

enum class ManifestFormat { csv, jsonl };

namespace detail {

inline std::vector<std::string> split_tags(std::string_view s) {
  std::vector<std::string> tags;
  for (auto& t : text::split(s, ';')) {
    auto trimmed = text::trim(t);
    if (!trimmed.empty()) tags.push_back(std::move(trimmed));
  }
  return tags;
}

struct RawRow {
  std::size_t line = 0;
  std::string id, path, cls, tags, split, crop;
  std::vector<std::string> tag_list;
  bool tags_as_list = false;
};

inline std::vector<RawRow> parse_csv_rows(const std::string& content, std::vector<std::string>& issues) {
  std::vector<RawRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> columns;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || text::starts_with(text::trim(line), "#")) continue;
    std::vector<std::string> fields;
    try {
      fields = csv::parse_line(line);
    } catch (const std::exception& e) {
      issues.push_back("line " + std::to_string(lineno) + ": " + e.what());
      continue;
    }
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) columns[text::lower(text::trim(fields[i]))] = i;
      for (const char* required : {"id", "path", "class", "tags"}) {
        if (!columns.count(required)) issues.push_back(std::string("header missing column '") + required + "'");
      }
      if (!issues.empty()) return rows;
      have_header = true;
      continue;
    }
    if (fields.size() != columns.size()) {
      issues.push_back("line " + std::to_string(lineno) + ": expected " + std::to_string(columns.size()) +
                       " fields, got " + std::to_string(fields.size()));
      continue;
    }
    RawRow row;
    row.line = lineno;
    auto get = [&](const char* name) -> std::string {
      auto it = columns.find(name);
      return it == columns.end() ? std::string() : text::trim(fields[it->second]);
    };
    row.id = get("id");
    row.path = get("path");
    row.cls = get("class");
    row.tags = get("tags");
    row.split = get("split");
    row.crop = get("crop");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<RawRow> parse_jsonl_rows(const std::string& content, std::vector<std::string>& issues) {
  std::vector<RawRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      RawRow row;
      row.line = lineno;
      row.id = j.value("id", "");
      row.path = j.value("path", "");
      row.cls = j.value("class", "");
      if (j.contains("tags") && j["tags"].is_array()) {
        row.tags_as_list = true;
        for (const auto& t : j["tags"]) row.tag_list.push_back(t.get<std::string>());
      } else {
        row.tags = j.value("tags", "");
      }
      row.split = j.value("split", "");
      row.crop = j.value("crop", "");
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      issues.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace detail

/// Parses manifest text. Relative paths resolve against base_dir. Throws ManifestError
/// listing every problem found.
inline DatasetManifest parse_manifest(const std::string& content, ManifestFormat format,
                                      const std::filesystem::path& base_dir = {},
                                      const ManifestLoadOptions& options = {}) {
  std::vector<std::string> issues;
  if (text::trim(content).empty()) throw ManifestError({"empty manifest"});

  auto rows = format == ManifestFormat::csv ? detail::parse_csv_rows(content, issues)
                                            : detail::parse_jsonl_rows(content, issues);
  if (rows.empty() && issues.empty()) throw ManifestError({"empty manifest"});

  DatasetManifest manifest;
  std::vector<std::string> class_order;
  std::set<std::string> seen_classes;
  std::map<std::string, std::size_t> first_line_of_id;

  for (auto& row : rows) {
    const std::string where = "line " + std::to_string(row.line);
    bool ok = true;
    if (row.id.empty()) {
      issues.push_back(where + ": empty id");
      ok = false;
    } else if (auto [it, inserted] = first_line_of_id.emplace(row.id, row.line); !inserted) {
      issues.push_back(where + ": duplicate id '" + row.id + "' (first seen on line " +
                       std::to_string(it->second) + ")");
      ok = false;
    }
    if (row.cls.empty()) {
      issues.push_back(where + ": empty class label");
      ok = false;
    } else if (options.expected_registry && !options.expected_registry->find(row.cls)) {
      issues.push_back(where + ": unknown class label '" + row.cls + "'");
      ok = false;
    }
    ImageRecord rec;
    rec.id = row.id;
    rec.class_label = row.cls;
    rec.raw_tags = row.tags_as_list ? row.tag_list : detail::split_tags(row.tags);
    try {
      rec.split = parse_split(row.split);
    } catch (const std::exception& e) {
      issues.push_back(where + ": " + e.what());
      ok = false;
    }
    if (!row.crop.empty()) {
      try {
        rec.crop = parse_crop(row.crop);
      } catch (const std::exception& e) {
        issues.push_back(where + ": " + e.what());
        ok = false;
      }
    }
    if (row.path.empty()) {
      issues.push_back(where + ": empty path");
      ok = false;
    } else {
      std::filesystem::path p(row.path);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      rec.path = p.lexically_normal();
      if (options.check_paths && !std::filesystem::exists(rec.path)) {
        issues.push_back(where + ": unresolvable path '" + rec.path.string() + "'");
        ok = false;
      }
    }
    if (!ok) continue;
    if (seen_classes.insert(rec.class_label).second) class_order.push_back(rec.class_label);
    manifest.records.push_back(std::move(rec));
  }

  if (!issues.empty()) throw ManifestError(std::move(issues));
  manifest.registry = options.expected_registry ? *options.expected_registry : ClassRegistry(class_order);
  return manifest;
}

inline ManifestFormat detect_manifest_format(const std::filesystem::path& path) {
  auto ext = text::lower(path.extension().string());
  return (ext == ".jsonl" || ext == ".ndjson") ? ManifestFormat::jsonl : ManifestFormat::csv;
}

inline DatasetManifest load_manifest(const std::filesystem::path& source, const ManifestLoadOptions& options = {}) {
  if (!std::filesystem::exists(source)) throw ManifestError({"manifest not found: " + source.string()});
  auto base = std::filesystem::absolute(source).parent_path();
  return parse_manifest(io::read_file(source), detect_manifest_format(source), base, options);
}

/// CSV serialization; the split column is always written so a split is a frozen artifact.
inline std::string manifest_to_csv(const DatasetManifest& manifest) {
  bool any_crop = std::any_of(manifest.records.begin(), manifest.records.end(),
                              [](const ImageRecord& r) { return r.crop.has_value(); });
  std::vector<std::string> header = {"id", "path", "class", "tags", "split"};
  if (any_crop) header.push_back("crop");
  std::string out = csv::join_row(header) + "\n";
  for (const auto& r : manifest.records) {
    std::vector<std::string> row = {r.id, r.path.string(), r.class_label, text::join(r.raw_tags, ";"),
                                    to_string(r.split)};
    if (any_crop) row.push_back(r.crop ? format_crop(*r.crop) : "");
    out += csv::join_row(row) + "\n";
  }
  return out;
}

inline std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["path"] = r.path.string();
    j["class"] = r.class_label;
    j["tags"] = r.raw_tags;
    j["split"] = to_string(r.split);
    if (r.crop) j["crop"] = format_crop(*r.crop);
    out += j.dump() + "\n";
  }
  return out;
}

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  io::write_file(path, detect_manifest_format(path) == ManifestFormat::jsonl ? manifest_to_jsonl(manifest)
                                                                              : manifest_to_csv(manifest));
}

inline void validate_ratios(const SplitRatios& r) {
  if (!(r.train >= 0 && r.validation >= 0 && r.test >= 0) || !std::isfinite(r.train + r.validation + r.test))
    throw std::invalid_argument("split ratios must be nonnegative");
  if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
}

/// Per class: shuffle with the seed, floor(n * r_train) to train, floor(n * r_val) to
/// validation, the remainder to test. Classes are visited in registry order from one stream.
inline DatasetManifest stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                                        std::uint64_t seed) {
  validate_ratios(ratios);
  std::vector<std::vector<std::size_t>> by_class(manifest.registry.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    by_class[manifest.registry.index_of(manifest.records[i].class_label)].push_back(i);

  std::vector<std::string> issues;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 3)
      issues.push_back("class '" + manifest.registry.name(c) + "' has " + std::to_string(by_class[c].size()) +
                       " records; at least 3 are required");
  }
  if (!issues.empty()) throw ManifestError(std::move(issues));

  DatasetManifest out = manifest;
  out.split_ratios = ratios;
  Rng rng(seed);
  // Products like 10 * 0.6 can land a hair under the integer.
  auto floor_count = [](std::size_t n, double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  for (auto& members : by_class) {
    rng.shuffle(members);
    const std::size_t n = members.size();
    const std::size_t n_train = floor_count(n, ratios.train);
    const std::size_t n_val = std::min(n - n_train, floor_count(n, ratios.validation));
    for (std::size_t k = 0; k < n; ++k) {
      Split s = k < n_train ? Split::train : (k < n_train + n_val ? Split::validation : Split::test);
      out.records[members[k]].split = s;
    }
  }
  return out;
}

/// Per-class counts for train / validation / test, in registry order.
struct ClassDistribution {
  std::vector<std::string> classes;
  std::vector<std::array<std::size_t, 3>> counts;

  std::size_t count(std::size_t cls, Split s) const { return counts.at(cls).at(static_cast<std::size_t>(s)); }

  std::size_t class_total(std::size_t cls) const {
    const auto& row = counts.at(cls);
    return row[0] + row[1] + row[2];
  }

  std::size_t split_total(Split s) const {
    std::size_t t = 0;
    for (const auto& row : counts) t += row.at(static_cast<std::size_t>(s));
    return t;
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) t += class_total(c);
    return t;
  }

  std::string to_csv() const {
    std::string out = "class,train,validation,test,total\n";
    for (std::size_t c = 0; c < classes.size(); ++c) {
      out += csv::join_row({classes[c], std::to_string(counts[c][0]), std::to_string(counts[c][1]),
                            std::to_string(counts[c][2]), std::to_string(class_total(c))}) +
             "\n";
    }
    out += csv::join_row({"TOTAL", std::to_string(split_total(Split::train)),
                          std::to_string(split_total(Split::validation)), std::to_string(split_total(Split::test)),
                          std::to_string(total())}) +
           "\n";
    return out;
  }
};

inline ClassDistribution class_distribution(const DatasetManifest& manifest) {
  ClassDistribution dist;
  dist.classes = manifest.registry.classes();
  dist.counts.assign(manifest.registry.size(), {0, 0, 0});
  std::size_t unassigned = 0;
  for (const auto& r : manifest.records) {
    if (r.split == Split::unassigned) {
      ++unassigned;
      continue;
    }
    dist.counts[manifest.registry.index_of(r.class_label)][static_cast<std::size_t>(r.split)]++;
  }
  if (unassigned)
    throw std::logic_error(std::to_string(unassigned) + " records have no split assignment; run a split first");
  return dist;
}

/// Class roster and per-class image counts of the reference corpus.
inline const std::vector<std::pair<std::string, std::size_t>>& reference_class_counts() {
  static const std::vector<std::pair<std::string, std::size_t>> counts = {
      {"Bhil", 191},      {"Gond", 183},      {"Mata Ni Pachedi", 185}, {"Kalighat", 184},
      {"Kalamkari", 184}, {"Madhubani", 187}, {"Pattachitra", 195},     {"Phad", 214},
      {"Pichwai", 187},   {"Tanjore", 191},   {"Rogan", 185},           {"Warli", 190}};
  return counts;
}

/// In-memory manifest with the reference class counts and placeholder paths.
inline DatasetManifest reference_manifest() {
  std::vector<std::string> names;
  DatasetManifest m;
  for (const auto& [name, n] : reference_class_counts()) {
    names.push_back(name);
    for (std::size_t i = 0; i < n; ++i) {
      ImageRecord r;
      r.id = name + "_" + std::to_string(i);
      r.path = "images/" + r.id + ".jpg";
      r.class_label = name;
      m.records.push_back(std::move(r));
    }
  }
  m.registry = ClassRegistry(names);
  return m;
}

}  // namespace folkart
