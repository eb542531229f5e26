#pragma once

#include <span>
#include <string>
#include <vector>

#include "folkart/dataset.hpp"
#include "folkart/image.hpp"
#include "folkart/model.hpp"
#include "folkart/preprocess.hpp"
#include "folkart/tag_vocab.hpp"

namespace folkart {

/// One decoded, border-trimmed painting with its targets.
struct LabeledImage {
  std::string id;
  RasterImage image;
  int class_index = -1;
  MultiHotVector tags;
};

struct TrainingData {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> validation;
};

struct LoadStats {
  std::size_t images = 0;
  std::size_t heuristic_trims = 0;
  std::size_t dropped_tags = 0;  // out-of-vocabulary tags on loaded records
};

/// Decodes and trims the records of one split. Tag targets are filled when a vocabulary is given.
inline std::vector<LabeledImage> load_labeled_split(const DatasetManifest& manifest, Split split,
                                                    const TagVocabulary* vocab = nullptr,
                                                    const SynonymMap* synonyms = nullptr,
                                                    bool heuristic_trim = true, LoadStats* stats = nullptr) {
  static const SynonymMap empty_map;
  std::vector<LabeledImage> out;
  for (const auto* rec : manifest.in_split(split)) {
    LabeledImage li;
    li.id = rec->id;
    RasterImage raw = read_image(rec->path);
    li.image = trim_border(raw, trim_policy_for(*rec, heuristic_trim));
    if (stats && !rec->crop && li.image.width() != raw.width()) stats->heuristic_trims++;
    li.class_index = manifest.registry.index_of(rec->class_label);
    if (vocab) {
      std::size_t dropped = 0;
      li.tags = encode_multi_hot(canonicalize_tags(rec->raw_tags, synonyms ? *synonyms : empty_map), *vocab, &dropped);
      if (stats) stats->dropped_tags += dropped;
    }
    if (stats) stats->images++;
    out.push_back(std::move(li));
  }
  return out;
}

inline std::vector<NormalizedTensor> to_tensors(std::span<const LabeledImage> items, const BackboneProfile& profile) {
  std::vector<NormalizedTensor> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(resize_normalize(it.image, profile));
  return out;
}

/// (output_dim x N) probabilities over a list of images, computed in batches.
inline Matrix predict_all(const ClassifierModel& model, std::span<const LabeledImage> items,
                          std::size_t batch_size = 32) {
  Matrix out(model.head().config().output_dim, static_cast<Eigen::Index>(items.size()));
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, items.size() - start);
    auto tensors = to_tensors(items.subspan(start, n), model.profile());
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = model.forward(tensors);
  }
  return out;
}

inline std::vector<int> argmax_columns(const Matrix& probabilities) {
  std::vector<int> out(static_cast<std::size_t>(probabilities.cols()));
  for (Eigen::Index j = 0; j < probabilities.cols(); ++j)
    out[static_cast<std::size_t>(j)] = static_cast<int>(
        argmax(std::span<const double>(probabilities.col(j).data(), static_cast<std::size_t>(probabilities.rows()))));
  return out;
}

inline std::vector<int> class_indices(std::span<const LabeledImage> items) {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.class_index);
  return out;
}

/// N x T label matrix from the items' multi-hot targets.
inline Matrix tag_matrix(std::span<const LabeledImage> items, std::size_t vocab_size) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(vocab_size));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].tags.size() != vocab_size) throw std::invalid_argument("item '" + items[i].id + "' has no tag targets");
    for (std::size_t t = 0; t < vocab_size; ++t) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = items[i].tags.bits[t];
  }
  return out;
}

}  // namespace folkart
