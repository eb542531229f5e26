#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkart/backbone.hpp"
#include "folkart/dataset.hpp"
#include "folkart/head.hpp"
#include "folkart/tag_vocab.hpp"

namespace folkart {

/// Backbone + dense head over a fixed label space (class registry or tag vocabulary).
class ClassifierModel {
 public:
  ClassifierModel() = default;

  ClassifierModel(std::string id, std::unique_ptr<BackboneAdapter> backbone, DenseHead head, Task task,
                  std::vector<std::string> labels)
      : id_(std::move(id)), backbone_(std::move(backbone)), head_(std::move(head)), task_(task),
        labels_(std::move(labels)) {
    validate();
  }

  ClassifierModel(const ClassifierModel& other)
      : id_(other.id_), backbone_(other.backbone_ ? other.backbone_->clone() : nullptr), head_(other.head_),
        task_(other.task_), labels_(other.labels_) {}

  ClassifierModel& operator=(const ClassifierModel& other) {
    if (this != &other) {
      ClassifierModel copy(other);
      *this = std::move(copy);
    }
    return *this;
  }

  ClassifierModel(ClassifierModel&&) noexcept = default;
  ClassifierModel& operator=(ClassifierModel&&) noexcept = default;

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  Task task() const { return task_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::string label_fingerprint() const { return hash_lines(labels_); }
  const BackboneProfile& profile() const { return backbone_->profile(); }

  BackboneAdapter& backbone() { return *backbone_; }
  const BackboneAdapter& backbone() const { return *backbone_; }
  DenseHead& head() { return head_; }
  const DenseHead& head() const { return head_; }

  /// (output_dim x N) probabilities: softmax columns for multiclass, sigmoid for multilabel.
  Matrix forward(std::span<const NormalizedTensor> batch) const {
    return head_.forward(backbone_->features(batch));
  }

  std::vector<double> predict_proba(const NormalizedTensor& image) const {
    Matrix p = forward(std::span<const NormalizedTensor>(&image, 1));
    return {p.data(), p.data() + p.size()};
  }

 private:
  void validate() const {
    if (!backbone_) throw std::invalid_argument("model needs a backbone");
    const auto& c = head_.config();
    if (c.input_dim != backbone_->profile().gap_dim)
      throw std::invalid_argument("head input_dim " + std::to_string(c.input_dim) + " != backbone gap_dim " +
                                  std::to_string(backbone_->profile().gap_dim));
    if (c.activation != activation_for(task_))
      throw std::invalid_argument("output activation does not match task " + to_string(task_));
    if (static_cast<std::size_t>(c.output_dim) != labels_.size())
      throw std::invalid_argument("head output_dim does not match label count");
  }

  std::string id_;
  std::unique_ptr<BackboneAdapter> backbone_;
  DenseHead head_;
  Task task_ = Task::multiclass;
  std::vector<std::string> labels_;
};

/// Fresh model: named backbone plus a 1024-wide head sized for the label space.
inline ClassifierModel make_model(const std::string& id, const std::string& backbone_name, Task task,
                                  std::vector<std::string> labels, std::uint64_t seed, int hidden_dim = 1024) {
  auto backbone = create_backbone(backbone_name);
  HeadConfig cfg{backbone->profile().gap_dim, hidden_dim, static_cast<int>(labels.size()), activation_for(task)};
  return ClassifierModel(id, std::move(backbone), build_head(cfg, seed), task, std::move(labels));
}

// --- inference semantics ------------------------------------------------------

/// registry.classes[argmax], lowest index on ties.
inline std::string class_from_probabilities(std::span<const double> probabilities, const ClassRegistry& registry) {
  if (probabilities.size() != registry.size())
    throw std::invalid_argument("probability vector length does not match registry");
  return registry.name(argmax(probabilities));
}

/// Tags whose score strictly exceeds the threshold.
inline std::set<std::string> tags_from_scores(std::span<const double> scores, const TagVocabulary& vocab,
                                              double threshold = 0.5) {
  if (scores.size() != vocab.size()) throw std::invalid_argument("score vector length does not match vocabulary");
  std::set<std::string> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > threshold) out.insert(vocab.tag(i));
  return out;
}

inline std::string predict_class(const ClassifierModel& model, const NormalizedTensor& image,
                                 const ClassRegistry& registry) {
  if (model.task() != Task::multiclass) throw std::invalid_argument("predict_class needs a multiclass model");
  auto p = model.predict_proba(image);
  return class_from_probabilities(p, registry);
}

inline std::set<std::string> predict_tags(const ClassifierModel& model, const NormalizedTensor& image,
                                          const TagVocabulary& vocab, double threshold = 0.5) {
  if (model.task() != Task::multilabel) throw std::invalid_argument("predict_tags needs a multilabel model");
  auto p = model.predict_proba(image);
  return tags_from_scores(p, vocab, threshold);
}

// --- checkpoint files ---------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "folkart-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json model_to_json(const ClassifierModel& model, const nlohmann::json& training = nlohmann::json::object()) {
  const auto& bb = model.backbone();
  const auto& prof = bb.profile();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model_id"] = model.id();
  j["task"] = to_string(model.task());
  j["labels"] = model.labels();
  j["label_fingerprint"] = model.label_fingerprint();
  j["backbone"] = {{"name", prof.name},
                   {"kind", bb.kind()},
                   {"version", bb.version()},
                   {"trainable", bb.trainable()},
                   {"profile",
                    {{"input_side", prof.input_side},
                     {"channel_mean", prof.channel_mean},
                     {"channel_std", prof.channel_std},
                     {"gap_dim", prof.gap_dim}}},
                   {"state", bb.state()}};
  j["head"] = model.head().to_json();
  j["training"] = training;
  return j;
}

inline ClassifierModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw std::invalid_argument("not a folkart checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::invalid_argument("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  const auto& b = j.at("backbone");
  auto backbone = create_backbone(b.at("name").get<std::string>());
  if (backbone->kind() != b.at("kind").get<std::string>() || backbone->version() != b.at("version").get<std::string>())
    throw std::invalid_argument("checkpoint backbone " + b.at("kind").get<std::string>() + " v" +
                                b.at("version").get<std::string>() + " does not match installed adapter");
  backbone->load_state(b.at("state"));
  backbone->set_trainable(b.value("trainable", true));
  auto labels = j.at("labels").get<std::vector<std::string>>();
  if (hash_lines(labels) != j.at("label_fingerprint").get<std::string>())
    throw std::invalid_argument("checkpoint label fingerprint mismatch");
  return ClassifierModel(j.at("model_id").get<std::string>(), std::move(backbone), DenseHead::from_json(j.at("head")),
                         parse_task(j.at("task").get<std::string>()), std::move(labels));
}

inline void save_model(const ClassifierModel& model, const std::filesystem::path& path,
                       const nlohmann::json& training = nlohmann::json::object()) {
  io::write_file(path, model_to_json(model, training).dump() + "\n");
}

inline ClassifierModel load_model(const std::filesystem::path& path) {
  return model_from_json(nlohmann::json::parse(io::read_file(path)));
}

inline nlohmann::json load_checkpoint_metadata(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(io::read_file(path));
  return j.value("training", nlohmann::json::object());
}

}  // namespace folkart
