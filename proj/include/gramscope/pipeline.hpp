#pragma once

// Featurizer (tokenizer + n-gram vocabulary) and trained model artifacts.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramscope/bpe.hpp"
#include "gramscope/classifiers.hpp"
#include "gramscope/corpus.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/ngram.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

struct FeatureConfig {
  std::size_t max_n = 5;
  // Preceding turns included in the features; 0 scores the target alone.
  std::size_t context_turns = 0;
  std::size_t bpe_vocab_size = kDefaultBpeVocabSize;
  std::size_t ngrams_per_order = kNgramsPerOrder;

  OrderedJson to_json() const {
    OrderedJson j;
    j["max_n"] = max_n;
    j["context_turns"] = context_turns;
    j["bpe_vocab_size"] = bpe_vocab_size;
    j["ngrams_per_order"] = ngrams_per_order;
    return j;
  }
};

struct Featurizer {
  BpeModel bpe;
  NgramVocabulary vocab;
  std::size_t context_turns = 0;

  std::vector<int> encode(const AnnotationItem& item) const { return encode_item(item, bpe, context_turns); }
  FeatureVector featurize(const AnnotationItem& item) const { return vocab.featurize(encode(item)); }

  std::vector<FeatureVector> featurize(std::span<const AnnotationItem> items) const {
    std::vector<FeatureVector> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(featurize(item));
    return out;
  }
};

/// Fits the tokenizer (unless one is supplied) and the n-gram vocabulary on
/// the given training items only.
inline Featurizer fit_featurizer(std::span<const AnnotationItem> train_items, const FeatureConfig& cfg,
                                 const BpeModel* pretrained = nullptr) {
  Featurizer f;
  f.context_turns = cfg.context_turns;
  f.bpe = pretrained ? *pretrained : train_bpe(tokenizer_corpus(train_items), cfg.bpe_vocab_size);
  std::vector<std::vector<int>> encoded;
  encoded.reserve(train_items.size());
  for (const auto& item : train_items) encoded.push_back(f.encode(item));
  f.vocab = build_ngram_vocab(encoded, cfg.max_n, cfg.ngrams_per_order);
  return f;
}

enum class ModelKind { Majority, Svm };

constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::Majority ? "majority" : "svm"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "majority") return ModelKind::Majority;
  if (s == "svm") return ModelKind::Svm;
  fail(ErrorKind::Usage, "unknown model kind '" + std::string(s) + "'");
}

struct TrainSpec {
  ModelKind kind = ModelKind::Svm;
  FeatureConfig features;
  SvmConfig svm;

  OrderedJson to_json() const {
    OrderedJson j;
    j["model"] = to_string(kind);
    j["kernel"] = "linear";
    j["features"] = features.to_json();
    j["svm"] = svm.to_json();
    return j;
  }
};

inline constexpr std::string_view kModelFormat = "gramscope.model/1";

struct TrainedModel {
  ModelKind kind = ModelKind::Majority;
  MajorityClassifier majority;
  std::optional<Featurizer> featurizer;
  LinearModel linear;
  OrderedJson config;

  std::vector<Prediction> predict(std::span<const AnnotationItem> items) const {
    std::vector<Prediction> out;
    out.reserve(items.size());
    if (kind == ModelKind::Majority) {
      for (const auto& item : items) out.push_back(majority.predict(item.item_id));
      return out;
    }
    for (const auto& item : items) {
      auto scores = linear.decision(featurizer->featurize(item));
      out.push_back({item.item_id, argmax_label(scores), scores});
    }
    return out;
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["format"] = kModelFormat;
    j["kind"] = to_string(kind);
    j["config"] = config;
    j["class_order"] = {"ungrammatical", "ambiguous", "grammatical"};
    if (kind == ModelKind::Majority) {
      j["label"] = to_string(majority.label);
      return j;
    }
    j["vocab_hash"] = featurizer->vocab.hash();
    j["feature_dim"] = linear.feature_dim;
    j["context_turns"] = featurizer->context_turns;
    j["bias_value"] = linear.bias_value;
    j["tokenizer"] = featurizer->bpe.to_json();
    j["ngram_vocab"] = featurizer->vocab.to_json();
    j["bias"] = linear.bias;
    OrderedJson w = OrderedJson::array();
    for (const auto& row : linear.weights) w.push_back(row);
    j["weights"] = std::move(w);
    return j;
  }

  static TrainedModel from_json(const Json& j) {
    if (j.value("format", std::string{}) != kModelFormat)
      fail(ErrorKind::MalformedRecord, "not a model artifact");
    TrainedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.config = j.at("config");
    if (m.kind == ModelKind::Majority) {
      m.majority.label = parse_label(j.at("label").get<std::string>());
      return m;
    }
    Featurizer f;
    f.bpe = BpeModel::from_json(j.at("tokenizer"));
    f.vocab = NgramVocabulary::from_json(j.at("ngram_vocab"));
    f.context_turns = j.at("context_turns").get<std::size_t>();
    if (f.vocab.hash() != j.at("vocab_hash").get<std::string>())
      fail(ErrorKind::MalformedRecord, "model vocab hash does not match its n-gram vocabulary");
    m.linear.feature_dim = j.at("feature_dim").get<std::size_t>();
    if (m.linear.feature_dim != f.vocab.dimension())
      fail(ErrorKind::DimensionMismatch, "model dimension differs from its vocabulary");
    m.linear.bias_value = j.at("bias_value").get<double>();
    m.linear.bias = j.at("bias").get<LabelScores>();
    const auto& w = j.at("weights");
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      m.linear.weights[c] = w.at(c).get<std::vector<double>>();
      if (m.linear.weights[c].size() != m.linear.feature_dim)
        fail(ErrorKind::DimensionMismatch, "weight vector length differs from feature dimension");
    }
    m.featurizer = std::move(f);
    return m;
  }
};

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  write_file(path, m.to_json().dump() + "\n");
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return TrainedModel::from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    fail(ErrorKind::MalformedRecord, path.string() + ": " + e.what());
  }
}

/// Items paired with their gold annotation, in item order. Items without a
/// gold record are dropped.
struct LabeledData {
  std::vector<AnnotationItem> items;
  std::vector<GoldAnnotation> gold;

  std::vector<Label> labels() const {
    std::vector<Label> out;
    out.reserve(gold.size());
    for (const auto& g : gold) out.push_back(g.label);
    return out;
  }
};

inline LabeledData align_gold(std::span<const AnnotationItem> items, std::span<const GoldAnnotation> gold) {
  std::map<std::string, const GoldAnnotation*> index;
  for (const auto& g : gold) index[g.item_id] = &g;
  LabeledData out;
  for (const auto& item : items) {
    auto it = index.find(item.item_id);
    if (it == index.end()) continue;
    out.items.push_back(item);
    out.gold.push_back(*it->second);
  }
  return out;
}

inline TrainedModel train_model(std::span<const AnnotationItem> items, std::span<const Label> labels,
                                const TrainSpec& spec, const BpeModel* pretrained = nullptr) {
  if (items.size() != labels.size()) fail(ErrorKind::LengthMismatch, "items vs labels");
  TrainedModel m;
  m.kind = spec.kind;
  m.config = spec.to_json();
  if (spec.kind == ModelKind::Majority) {
    m.majority = train_majority(labels);
    return m;
  }
  Featurizer f = fit_featurizer(items, spec.features, pretrained);
  const auto features = f.featurize(items);
  m.linear = train_svm(features, labels, f.vocab.dimension(), present_class_weights(labels), spec.svm);
  m.featurizer = std::move(f);
  return m;
}

}  // namespace gramscope
