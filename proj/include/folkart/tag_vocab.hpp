#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "folkart/dataset.hpp"
#include "folkart/util.hpp"

namespace folkart {

/// Lowercase, trim, collapse internal whitespace runs to a single underscore.
inline std::string normalize_tag(std::string_view raw) {
  std::string t = text::lower(text::trim(raw));
  std::string out;
  out.reserve(t.size());
  bool in_space = false;
  for (char c : t) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space) out.push_back('_');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

/// Surface form -> canonical tag. Canonical tags always map to themselves.
class SynonymMap {
 public:
  SynonymMap() = default;

  void add(std::string_view surface, std::string_view canonical) {
    std::string s = normalize_tag(surface);
    std::string c = normalize_tag(canonical);
    if (s.empty() || c.empty()) throw std::invalid_argument("synonym entries must be non-empty");
    if (auto it = entries_.find(c); it != entries_.end() && it->second != c)
      throw std::invalid_argument("'" + c + "' is already a surface form of '" + it->second + "'");
    if (canonicals_.count(s) && s != c)
      throw std::invalid_argument("'" + s + "' is canonical and cannot map to '" + c + "'");
    if (auto it = entries_.find(s); it != entries_.end() && it->second != c)
      throw std::invalid_argument("'" + s + "' maps to both '" + it->second + "' and '" + c + "'");
    entries_[s] = c;
    entries_[c] = c;
    canonicals_.insert(c);
  }

  /// Canonical form of a raw tag; unknown forms pass through normalized.
  std::string lookup(std::string_view raw) const {
    std::string key = normalize_tag(raw);
    auto it = entries_.find(key);
    return it == entries_.end() ? key : it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Lines of `surface -> canonical`; blank lines and `#` comments skipped.
  static SynonymMap parse(const std::string& content) {
    SynonymMap map;
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = text::trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto arrow = t.find("->");
      if (arrow == std::string::npos)
        throw std::invalid_argument("synonym line " + std::to_string(lineno) + ": expected 'surface -> canonical'");
      map.add(t.substr(0, arrow), t.substr(arrow + 2));
    }
    return map;
  }

  static SynonymMap load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

  std::string serialize() const {
    std::string out;
    for (const auto& [surface, canonical] : entries_)
      if (surface != canonical) out += surface + " -> " + canonical + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> canonicals_;
};

/// A small starter map; real corpora ship a curated file.
inline SynonymMap seed_synonyms() {
  SynonymMap m;
  for (const char* s : {"celebrated", "celebrating", "feast", "festivity", "festivities", "festival"})
    m.add(s, "celebration");
  for (const char* s : {"dancing", "dancer", "dancers"}) m.add(s, "dance");
  for (const char* s : {"cows", "cattle"}) m.add(s, "cow");
  for (const char* s : {"star", "starry"}) m.add(s, "stars");
  for (const char* s : {"lotuses", "lotus_flower"}) m.add(s, "lotus");
  for (const char* s : {"dotted", "dot", "polka_dots"}) m.add(s, "dots");
  for (const char* s : {"tree", "trees_and_plants"}) m.add(s, "trees");
  return m;
}

/// Normalize, map through synonyms, deduplicate.
inline std::set<std::string> canonicalize_tags(const std::vector<std::string>& raw, const SynonymMap& synonyms) {
  std::set<std::string> out;
  for (const auto& r : raw) {
    auto c = synonyms.lookup(r);
    if (!c.empty()) out.insert(std::move(c));
  }
  return out;
}

inline std::set<std::string> canonicalize_tags(const std::set<std::string>& raw, const SynonymMap& synonyms) {
  return canonicalize_tags(std::vector<std::string>(raw.begin(), raw.end()), synonyms);
}

/// Binary tag presence over a vocabulary.
struct MultiHotVector {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t popcount() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  bool operator==(const MultiHotVector&) const = default;
};

/// Ordered canonical tags; line number in the vocabulary file is the index.
class TagVocabulary {
 public:
  TagVocabulary() = default;

  explicit TagVocabulary(std::vector<std::string> tags) : tags_(std::move(tags)) {
    for (std::size_t i = 0; i < tags_.size(); ++i) {
      if (tags_[i].empty()) throw std::invalid_argument("empty tag in vocabulary");
      if (!index_.emplace(tags_[i], static_cast<int>(i)).second)
        throw std::invalid_argument("duplicate tag '" + tags_[i] + "' in vocabulary");
    }
  }

  std::size_t size() const { return tags_.size(); }
  bool empty() const { return tags_.empty(); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }

  std::optional<int> find(const std::string& tag) const {
    auto it = index_.find(tag);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int index_of(const std::string& tag) const {
    auto i = find(tag);
    if (!i) throw std::out_of_range("tag '" + tag + "' not in vocabulary");
    return *i;
  }

  std::string fingerprint() const { return hash_lines(tags_); }

  std::string serialize() const {
    std::string out;
    for (const auto& t : tags_) out += t + "\n";
    return out;
  }

  static TagVocabulary parse(const std::string& content) {
    std::vector<std::string> tags;
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      tags.push_back(line);
    }
    return TagVocabulary(std::move(tags));
  }

  static TagVocabulary load(const std::filesystem::path& path) { return parse(io::read_file(path)); }
  void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

  bool operator==(const TagVocabulary& other) const { return tags_ == other.tags_; }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
};

struct VocabularyBuildResult {
  TagVocabulary vocabulary;
  std::size_t distinct_tags = 0;  // before the size cap
  std::size_t dropped_by_cap = 0;
};

/// Union of canonical tags over the train split, ordered by descending record frequency,
/// then lexicographically. Keeps at most `max_size` tags.
inline VocabularyBuildResult build_vocabulary(const DatasetManifest& manifest, const SynonymMap& synonyms,
                                              std::size_t max_size = 1500) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : manifest.records) {
    if (r.split != Split::train) continue;
    for (const auto& t : canonicalize_tags(r.raw_tags, synonyms)) freq[t]++;
  }
  if (freq.empty()) throw std::invalid_argument("empty vocabulary: no tags on train-split records");
  std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  VocabularyBuildResult result;
  result.distinct_tags = ordered.size();
  if (ordered.size() > max_size) {
    result.dropped_by_cap = ordered.size() - max_size;
    ordered.resize(max_size);
  }
  std::vector<std::string> tags;
  tags.reserve(ordered.size());
  for (auto& [t, n] : ordered) tags.push_back(t);
  result.vocabulary = TagVocabulary(std::move(tags));
  return result;
}

/// bit i = 1 iff vocab.tag(i) is in `tags`. Out-of-vocabulary tags are counted in `dropped`.
inline MultiHotVector encode_multi_hot(const std::set<std::string>& tags, const TagVocabulary& vocab,
                                       std::size_t* dropped = nullptr) {
  MultiHotVector v;
  v.bits.assign(vocab.size(), 0);
  std::size_t missing = 0;
  for (const auto& t : tags) {
    if (auto i = vocab.find(t)) v.bits[*i] = 1;
    else ++missing;
  }
  if (dropped) *dropped = missing;
  return v;
}

inline std::set<std::string> decode_multi_hot(const MultiHotVector& vector, const TagVocabulary& vocab) {
  if (vector.size() != vocab.size())
    throw std::invalid_argument("multi-hot length " + std::to_string(vector.size()) + " != vocabulary size " +
                                std::to_string(vocab.size()));
  std::set<std::string> out;
  for (std::size_t i = 0; i < vector.size(); ++i)
    if (vector.bits[i]) out.insert(vocab.tag(i));
  return out;
}

/// Source of raw tags for an image that has none (upstream captioning step).
class TagSuggester {
 public:
  virtual ~TagSuggester() = default;
  virtual std::vector<std::string> suggest(const ImageRecord& record) const = 0;
};

/// Deterministic stand-in: alphabetic tokens of the file stem.
class FilenameTagSuggester final : public TagSuggester {
 public:
  std::vector<std::string> suggest(const ImageRecord& record) const override {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : record.path.stem().string()) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
  }
};

}  // namespace folkart
