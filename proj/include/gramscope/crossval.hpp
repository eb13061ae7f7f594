#pragma once

// Transcript-grouped cross-validation, evaluation reports and the
// context-length / training-size sweeps.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramscope/classifiers.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/metrics.hpp"
#include "gramscope/pipeline.hpp"
#include "gramscope/rng.hpp"

namespace gramscope {

struct FoldSpec {
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignment;  // transcript_id -> fold
  std::vector<std::size_t> fold_items;             // items per fold

  std::size_t fold_of(const std::string& transcript_id) const {
    auto it = assignment.find(transcript_id);
    if (it == assignment.end()) fail(ErrorKind::Precondition, "transcript " + transcript_id + " not in fold spec");
    return it->second;
  }
};

/// Transcripts are visited in a seed-shuffled order and each goes to the
/// fold currently holding the fewest items (ties: lowest fold index).
inline FoldSpec group_kfold_splits(std::span<const AnnotationItem> items, std::size_t n_folds = 5,
                                   std::uint64_t seed = 0) {
  if (n_folds < 2) fail(ErrorKind::Precondition, "need at least two folds");
  std::vector<std::string> groups;
  std::map<std::string, std::size_t> sizes;
  for (const auto& item : items)
    if (sizes[item.transcript_id]++ == 0) groups.push_back(item.transcript_id);
  if (groups.size() < n_folds)
    fail(ErrorKind::TooFewGroups, std::to_string(groups.size()) + " transcripts for " +
                                      std::to_string(n_folds) + " folds");
  Rng rng(seed);
  rng.shuffle(groups);

  FoldSpec spec;
  spec.n_folds = n_folds;
  spec.seed = seed;
  spec.fold_items.assign(n_folds, 0);
  for (const auto& g : groups) {
    const auto fold = static_cast<std::size_t>(
        std::min_element(spec.fold_items.begin(), spec.fold_items.end()) - spec.fold_items.begin());
    spec.assignment[g] = fold;
    spec.fold_items[fold] += sizes[g];
  }
  return spec;
}

enum class SweepMetric { Validation, Test };

struct CvConfig {
  TrainSpec train;
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
  BootstrapConfig bootstrap;
  // When set, every fold uses this tokenizer instead of training one on
  // its training portion.
  std::optional<BpeModel> tokenizer;

  OrderedJson to_json() const {
    OrderedJson j = train.to_json();
    j["n_folds"] = n_folds;
    j["seed"] = seed;
    j["bootstrap"] = {{"n_resamples", bootstrap.n_resamples},
                      {"confidence", bootstrap.confidence},
                      {"seed", bootstrap.seed}};
    j["tokenizer"] = tokenizer ? "supplied" : "trained per fold";
    return j;
  }
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  std::optional<double> pcc;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<Prediction> predictions;
  std::optional<TrainedModel> model;
};

struct AgreementSummary {
  std::optional<double> alpha;
  double kappa_mean = 0.0;
  double kappa_sd = 0.0;
  std::size_t n_items = 0;

  OrderedJson to_json() const {
    OrderedJson j;
    j["alpha"] = alpha ? OrderedJson(*alpha) : OrderedJson(nullptr);
    j["kappa_mean"] = kappa_mean;
    j["kappa_sd"] = kappa_sd;
    j["n_items"] = n_items;
    return j;
  }
};

/// Ordinal alpha plus mean pairwise kappa over an items x annotators matrix.
inline AgreementSummary compute_agreement(const AnnotationMatrix& matrix) {
  AgreementSummary s;
  s.alpha = krippendorff_alpha_ordinal(matrix);
  const auto k = mean_pairwise_kappa(matrix);
  s.kappa_mean = k.mean;
  s.kappa_sd = k.sd;
  s.n_items = matrix.size();
  return s;
}

struct EvalReport {
  OrderedJson config;
  std::vector<FoldResult> folds;
  MeanSd pcc;
  MeanSd accuracy;
  ConfusionMatrix confusion;  // pooled over folds
  std::optional<CategoryRecallReport> recall;
  std::optional<AgreementSummary> agreement;
  std::vector<Prediction> predictions;  // pooled, in item order

  std::vector<double> fold_pcc() const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(reported(f.pcc));
    return v;
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["schema"] = "gramscope.eval_report/1";
    j["config"] = config;
    OrderedJson fj = OrderedJson::array();
    for (const auto& f : folds) {
      OrderedJson r;
      r["fold"] = f.fold;
      r["n_train"] = f.n_train;
      r["n_test"] = f.n_eval;
      r["pcc"] = reported(f.pcc);
      r["pcc_defined"] = f.pcc.has_value();
      r["accuracy"] = f.accuracy;
      fj.push_back(std::move(r));
    }
    j["folds"] = std::move(fj);
    j["pcc"] = {{"mean", pcc.mean}, {"sd", pcc.sd}};
    j["accuracy"] = {{"mean", accuracy.mean}, {"sd", accuracy.sd}};
    j["confusion"] = confusion.to_json();
    j["per_category_recall"] = recall ? gramscope::to_json(*recall) : OrderedJson(nullptr);
    j["agreement"] = agreement ? agreement->to_json() : OrderedJson(nullptr);
    return j;
  }
};

namespace detail {

template <typename T>
std::vector<T> pick(std::span<const T> values, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(values[i]);
  return out;
}

}  // namespace detail

/// Trains on `train_idx` and scores `eval_idx`. Tokenizer and n-gram
/// vocabulary only ever see the training indices.
inline FoldResult evaluate_fold(const LabeledData& data, std::span<const std::size_t> train_idx,
                                std::span<const std::size_t> eval_idx, const CvConfig& cfg,
                                std::size_t fold, bool keep_model = false) {
  const auto labels = data.labels();
  const auto train_items = detail::pick<AnnotationItem>(data.items, train_idx);
  const auto train_labels = detail::pick<Label>(labels, train_idx);
  const auto eval_items = detail::pick<AnnotationItem>(data.items, eval_idx);
  const auto eval_labels = detail::pick<Label>(labels, eval_idx);

  TrainSpec spec = cfg.train;
  spec.svm.seed = mix_seed(cfg.seed, fold);
  TrainedModel model = train_model(train_items, train_labels, spec, cfg.tokenizer ? &*cfg.tokenizer : nullptr);

  FoldResult r;
  r.fold = fold;
  r.n_train = train_idx.size();
  r.n_eval = eval_idx.size();
  r.predictions = model.predict(eval_items);
  std::vector<Label> pred;
  for (const auto& p : r.predictions) pred.push_back(p.label);
  r.pcc = pcc(pred, eval_labels);
  r.accuracy = eval_labels.empty() ? 0.0 : accuracy(pred, eval_labels);
  r.confusion = confusion(pred, eval_labels);
  if (keep_model) r.model = std::move(model);
  return r;
}

struct FoldIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline std::vector<FoldIndices> fold_indices(const LabeledData& data, const FoldSpec& spec) {
  std::vector<FoldIndices> out(spec.n_folds);
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto fold = spec.fold_of(data.items[i].transcript_id);
    for (std::size_t f = 0; f < spec.n_folds; ++f) (f == fold ? out[f].test : out[f].train).push_back(i);
  }
  return out;
}

inline EvalReport assemble_report(const LabeledData& data, std::vector<FoldResult> folds, const CvConfig& cfg) {
  EvalReport report;
  report.config = cfg.to_json();
  report.folds = std::move(folds);
  std::vector<double> accs;
  for (const auto& f : report.folds) {
    accs.push_back(f.accuracy);
    report.confusion += f.confusion;
  }
  const auto pccs = report.fold_pcc();
  report.pcc = mean_sd(pccs);
  report.accuracy = mean_sd(accs);

  std::map<std::string, Prediction> pooled;
  for (const auto& f : report.folds)
    for (const auto& p : f.predictions) pooled[p.item_id] = p;
  std::vector<Label> pred;
  std::vector<GoldAnnotation> gold;
  bool any_categories = false;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    auto it = pooled.find(data.items[i].item_id);
    if (it == pooled.end()) continue;
    report.predictions.push_back(it->second);
    pred.push_back(it->second.label);
    gold.push_back(data.gold[i]);
    any_categories = any_categories || !data.gold[i].categories.empty();
  }
  if (any_categories) report.recall = per_category_recall(pred, gold, cfg.bootstrap);
  return report;
}

/// K-fold evaluation where no transcript spans training and test.
inline EvalReport run_cross_validation(const LabeledData& data, const CvConfig& cfg,
                                       bool keep_models = false) {
  const auto spec = group_kfold_splits(data.items, cfg.n_folds, cfg.seed);
  const auto indices = fold_indices(data, spec);
  std::vector<FoldResult> folds;
  for (std::size_t f = 0; f < spec.n_folds; ++f)
    folds.push_back(evaluate_fold(data, indices[f].train, indices[f].test, cfg, f, keep_models));
  return assemble_report(data, std::move(folds), cfg);
}

/// Baseline-vs-gold evaluation of predictions produced elsewhere.
inline EvalReport evaluate_predictions(const LabeledData& data, std::span<const Prediction> preds,
                                       const BootstrapConfig& bootstrap = {}) {
  std::map<std::string, const Prediction*> index;
  for (const auto& p : preds) index[p.item_id] = &p;
  FoldResult all;
  std::vector<Label> pred, gold;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    auto it = index.find(data.items[i].item_id);
    if (it == index.end()) fail(ErrorKind::MisalignedItems, "no prediction for item " + data.items[i].item_id);
    all.predictions.push_back(*it->second);
    pred.push_back(it->second->label);
    gold.push_back(data.gold[i].label);
  }
  all.n_eval = pred.size();
  all.pcc = pcc(pred, gold);
  all.accuracy = accuracy(pred, gold);
  all.confusion = confusion(pred, gold);
  CvConfig cfg;
  cfg.bootstrap = bootstrap;
  auto report = assemble_report(data, {std::move(all)}, cfg);
  report.config = OrderedJson{{"model", "imported"}};
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  double value = 0.0;
  MeanSd pcc;
  std::vector<double> fold_pcc;
};

inline std::string sweep_csv(std::span<const SweepRow> rows, std::string_view key) {
  std::string out = std::string(key) + ",pcc_mean,pcc_sd\n";
  for (const auto& r : rows)
    out += format_double(r.value) + "," + format_double(r.pcc.mean) + "," + format_double(r.pcc.sd) + "\n";
  return out;
}

/// PCC as a function of the number of preceding turns in the features.
/// With SweepMetric::Validation each fold holds out 20% of its training
/// portion and reports PCC there; Test reports on the fold's test set.
inline std::vector<SweepRow> sweep_context_length(const LabeledData& data, std::span<const std::size_t> lengths,
                                                  const CvConfig& cfg,
                                                  SweepMetric metric = SweepMetric::Validation) {
  const auto spec = group_kfold_splits(data.items, cfg.n_folds, cfg.seed);
  const auto indices = fold_indices(data, spec);
  std::vector<SweepRow> rows;
  for (auto length : lengths) {
    CvConfig c = cfg;
    c.train.features.context_turns = length;
    SweepRow row;
    row.value = static_cast<double>(length);
    for (std::size_t f = 0; f < spec.n_folds; ++f) {
      FoldResult r;
      if (metric == SweepMetric::Validation) {
        auto [fit, val] = validation_split(indices[f].train.size(), cfg.train.svm.validation_fraction,
                                           mix_seed(cfg.seed, 2000 + f));
        std::vector<std::size_t> fit_idx, val_idx;
        for (auto i : fit) fit_idx.push_back(indices[f].train[i]);
        for (auto i : val) val_idx.push_back(indices[f].train[i]);
        r = evaluate_fold(data, fit_idx, val_idx, c, f);
      } else {
        r = evaluate_fold(data, indices[f].train, indices[f].test, c, f);
      }
      row.fold_pcc.push_back(reported(r.pcc));
    }
    row.pcc = mean_sd(row.fold_pcc);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Label-stratified, seeded subsample of a training index set. A fraction
/// of 1.0 returns the input unchanged.
inline std::vector<std::size_t> stratified_subsample(std::span<const std::size_t> train_idx,
                                                     std::span<const Label> labels, double fraction,
                                                     std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorKind::Precondition, "fraction must lie in (0,1]");
  if (fraction == 1.0) return {train_idx.begin(), train_idx.end()};
  std::array<std::vector<std::size_t>, kNumLabels> by_class;
  for (auto i : train_idx) by_class[ordinal_code(labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    rng.shuffle(members);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (take == 0)
      fail(ErrorKind::SubsampleTooSmall, "class '" + std::string(to_string(label_from_code(static_cast<int>(c)))) +
                                             "' vanishes at fraction " + format_double(fraction));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Test PCC when only a fraction of each fold's training portion is used;
/// folds and test sets are those of run_cross_validation with the same seed.
inline std::vector<SweepRow> sweep_training_size(const LabeledData& data, std::span<const double> fractions,
                                                 const CvConfig& cfg) {
  const auto spec = group_kfold_splits(data.items, cfg.n_folds, cfg.seed);
  const auto indices = fold_indices(data, spec);
  const auto labels = data.labels();
  std::vector<SweepRow> rows;
  for (double fraction : fractions) {
    SweepRow row;
    row.value = fraction;
    for (std::size_t f = 0; f < spec.n_folds; ++f) {
      const auto train = stratified_subsample(indices[f].train, labels, fraction, mix_seed(cfg.seed, 1000 + f));
      row.fold_pcc.push_back(reported(evaluate_fold(data, train, indices[f].test, cfg, f).pcc));
    }
    row.pcc = mean_sd(row.fold_pcc);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gramscope
