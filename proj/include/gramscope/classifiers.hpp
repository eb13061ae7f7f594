#pragma once

// Majority baseline, class-weighted one-vs-rest linear SVM trained by dual
// coordinate descent, fold-ensemble voting and external prediction import.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/metrics.hpp"
#include "gramscope/ngram.hpp"
#include "gramscope/rng.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

using LabelScores = std::array<double, kNumLabels>;

struct ClassWeights {
  LabelScores weight{1.0, 1.0, 1.0};

  double operator[](Label l) const { return weight[ordinal_code(l)]; }
};

/// Balanced weights w_c = N / (K * n_c).
inline ClassWeights compute_class_weights(std::span<const Label> labels) {
  std::array<std::size_t, kNumLabels> counts{};
  for (Label l : labels) ++counts[ordinal_code(l)];
  ClassWeights w;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (counts[c] == 0)
      fail(ErrorKind::MissingClass,
           "class '" + std::string(to_string(label_from_code(static_cast<int>(c)))) + "' absent");
    w.weight[c] = static_cast<double>(labels.size()) / (static_cast<double>(kNumLabels) * counts[c]);
  }
  return w;
}

// Balanced weights for the classes that occur; absent classes get weight
// 1.0 (they contribute no loss terms).
inline ClassWeights present_class_weights(std::span<const Label> labels) {
  std::array<std::size_t, kNumLabels> counts{};
  for (Label l : labels) ++counts[ordinal_code(l)];
  ClassWeights w;
  for (std::size_t c = 0; c < kNumLabels; ++c)
    if (counts[c] > 0)
      w.weight[c] = static_cast<double>(labels.size()) / (static_cast<double>(kNumLabels) * counts[c]);
  return w;
}

struct Prediction {
  std::string item_id;
  Label label = Label::Grammatical;
  LabelScores scores{};

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Ties go to the ordinal-lower class.
inline Label argmax_label(const LabelScores& s) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumLabels; ++c)
    if (s[c] > s[best]) best = c;
  return label_from_code(static_cast<int>(best));
}

inline LabelScores one_hot(Label l) {
  LabelScores s{};
  s[ordinal_code(l)] = 1.0;
  return s;
}

// ---------------------------------------------------------------------------
// Majority baseline

struct MajorityClassifier {
  Label label = Label::Grammatical;

  Prediction predict(const std::string& item_id) const { return {item_id, label, one_hot(label)}; }
};

// The most frequent training label; count ties go to the ordinal-lower class.
inline MajorityClassifier train_majority(std::span<const Label> labels) {
  if (labels.empty()) fail(ErrorKind::EmptyInput, "majority baseline over no labels");
  LabelScores counts{};
  for (Label l : labels) counts[ordinal_code(l)] += 1.0;
  return {argmax_label(counts)};
}

// ---------------------------------------------------------------------------
// Linear SVM

struct EarlyStopping {
  bool enabled = false;
  std::size_t patience = 5;
  std::size_t max_epochs = 200;
};

struct SvmConfig {
  double C = 1.0;
  double bias = 1.0;        // value of the constant feature appended to every instance
  double epsilon = 0.1;     // projected-gradient stopping tolerance
  std::size_t max_iter = 1000;
  EarlyStopping early_stopping;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(C > 0.0)) fail(ErrorKind::Precondition, "C must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      fail(ErrorKind::Precondition, "validation fraction must lie in (0,1)");
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["C"] = C;
    j["bias"] = bias;
    j["epsilon"] = epsilon;
    j["max_iter"] = max_iter;
    j["early_stopping"] = {{"enabled", early_stopping.enabled},
                           {"patience", early_stopping.patience},
                           {"max_epochs", early_stopping.max_epochs},
                           {"metric", "pcc"}};
    j["validation_fraction"] = validation_fraction;
    j["seed"] = seed;
    return j;
  }
};

struct LinearModel {
  std::size_t feature_dim = 0;
  double bias_value = 1.0;
  std::array<std::vector<double>, kNumLabels> weights;
  LabelScores bias{};
  std::size_t epochs_run = 0;

  LabelScores decision(const FeatureVector& x) const {
    if (!x.indices.empty() && x.indices.back() >= feature_dim)
      fail(ErrorKind::DimensionMismatch, "feature index beyond model dimension");
    LabelScores s{};
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      double v = bias[c] * bias_value;
      const auto& w = weights[c];
      for (std::size_t k = 0; k < x.indices.size(); ++k) v += w[x.indices[k]] * x.counts[k];
      s[c] = v;
    }
    return s;
  }

  Label classify(const FeatureVector& x) const { return argmax_label(decision(x)); }
};

namespace detail {

// One binary L1-loss SVM subproblem of the dual, updated one epoch at a time:
//   min_a 1/2 a'Qa - e'a,  0 <= a_i <= U_i,  Q_ij = y_i y_j x_i.x_j.
class BinaryDualCd {
 public:
  BinaryDualCd(std::span<const FeatureVector> x, std::vector<double> y, std::vector<double> upper,
               std::size_t dim, double bias_value, std::uint64_t seed)
      : x_(x), y_(std::move(y)), upper_(std::move(upper)), alpha_(x.size(), 0.0), w_(dim, 0.0),
        qd_(x.size(), 0.0), order_(x.size()), bias_value_(bias_value), rng_(seed) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double q = bias_value * bias_value;
      for (double v : x[i].counts) q += v * v;
      qd_[i] = q;
      order_[i] = i;
    }
  }

  /// One pass over all instances in a freshly shuffled order; returns the
  /// spread of projected gradients seen during the pass.
  double epoch() {
    rng_.shuffle(order_);
    double pg_max = -INFINITY, pg_min = INFINITY;
    for (std::size_t i : order_) {
      const auto& xi = x_[i];
      double g = w_bias_ * bias_value_;
      for (std::size_t k = 0; k < xi.indices.size(); ++k) g += w_[xi.indices[k]] * xi.counts[k];
      g = g * y_[i] - 1.0;

      double pg = 0.0;
      if (alpha_[i] == 0.0)
        pg = std::min(g, 0.0);
      else if (alpha_[i] == upper_[i])
        pg = std::max(g, 0.0);
      else
        pg = g;
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);

      if (std::fabs(pg) > 1e-12 && qd_[i] > 0.0) {
        const double old = alpha_[i];
        alpha_[i] = std::min(std::max(old - g / qd_[i], 0.0), upper_[i]);
        const double d = (alpha_[i] - old) * y_[i];
        for (std::size_t k = 0; k < xi.indices.size(); ++k) w_[xi.indices[k]] += d * xi.counts[k];
        w_bias_ += d * bias_value_;
      }
    }
    return x_.empty() ? 0.0 : pg_max - pg_min;
  }

  const std::vector<double>& weights() const { return w_; }
  double bias_weight() const { return w_bias_; }

 private:
  std::span<const FeatureVector> x_;
  std::vector<double> y_;
  std::vector<double> upper_;
  std::vector<double> alpha_;
  std::vector<double> w_;
  double w_bias_ = 0.0;
  std::vector<double> qd_;
  std::vector<std::size_t> order_;
  double bias_value_;
  Rng rng_;
};

inline void check_dimensions(std::span<const FeatureVector> x, std::size_t dim) {
  for (const auto& fv : x)
    if (!fv.indices.empty() && fv.indices.back() >= dim)
      fail(ErrorKind::DimensionMismatch, "feature index " + std::to_string(fv.indices.back()) +
                                             " outside dimension " + std::to_string(dim));
}

struct OvrSolvers {
  std::vector<BinaryDualCd> solvers;

  OvrSolvers(std::span<const FeatureVector> x, std::span<const Label> y, const ClassWeights& weights,
             std::size_t dim, const SvmConfig& cfg) {
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      std::vector<double> yy(x.size()), upper(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        yy[i] = ordinal_code(y[i]) == static_cast<int>(c) ? 1.0 : -1.0;
        upper[i] = cfg.C * weights[y[i]];
      }
      solvers.emplace_back(x, std::move(yy), std::move(upper), dim, cfg.bias, mix_seed(cfg.seed, c));
    }
  }

  // Runs one epoch per class; returns the largest gradient spread.
  double epoch() {
    double spread = 0.0;
    for (auto& s : solvers) spread = std::max(spread, s.epoch());
    return spread;
  }

  LinearModel snapshot(std::size_t dim, double bias_value) const {
    LinearModel m;
    m.feature_dim = dim;
    m.bias_value = bias_value;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      m.weights[c] = solvers[c].weights();
      m.bias[c] = solvers[c].bias_weight();
    }
    return m;
  }
};

}  // namespace detail

/// Seeded split of [0, n) into (fit, validation) index sets.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    std::size_t n, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, n > 1 ? 1 : 0, n > 1 ? n - 1 : 0);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  return {fit, val};
}

/// One-vs-rest linear SVM. Each class solves
///   min 1/2 |w|^2 + C * sum_i weight(y_i) * hinge(y_i^c (w.x_i + b)),
/// with the bias as a regularized constant feature. With early stopping a
/// validation share of the data is held out, training runs epoch by epoch
/// and the weights of the epoch with the best validation PCC are kept.
inline LinearModel train_svm(std::span<const FeatureVector> features, std::span<const Label> labels,
                             std::size_t feature_dim, const ClassWeights& weights,
                             const SvmConfig& cfg = {}) {
  cfg.validate();
  if (features.size() != labels.size())
    fail(ErrorKind::LengthMismatch, "features and labels differ in length");
  detail::check_dimensions(features, feature_dim);
  std::array<std::size_t, kNumLabels> counts{};
  for (Label l : labels) ++counts[ordinal_code(l)];
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
    fail(ErrorKind::DegenerateData, "SVM training needs at least two classes");

  if (!cfg.early_stopping.enabled) {
    detail::OvrSolvers ovr(features, labels, weights, feature_dim, cfg);
    std::size_t epoch = 0;
    while (epoch < cfg.max_iter) {
      ++epoch;
      if (ovr.epoch() <= cfg.epsilon) break;
    }
    auto model = ovr.snapshot(feature_dim, cfg.bias);
    model.epochs_run = epoch;
    return model;
  }

  auto [fit_idx, val_idx] = validation_split(features.size(), cfg.validation_fraction,
                                             mix_seed(cfg.seed, 0x5eed));
  std::vector<FeatureVector> fit_x, val_x;
  std::vector<Label> fit_y, val_y;
  for (auto i : fit_idx) {
    fit_x.push_back(features[i]);
    fit_y.push_back(labels[i]);
  }
  for (auto i : val_idx) {
    val_x.push_back(features[i]);
    val_y.push_back(labels[i]);
  }

  detail::OvrSolvers ovr(fit_x, fit_y, weights, feature_dim, cfg);
  std::optional<LinearModel> best;
  double best_pcc = -INFINITY;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.early_stopping.max_epochs; ++epoch) {
    const double spread = ovr.epoch();
    auto model = ovr.snapshot(feature_dim, cfg.bias);
    model.epochs_run = epoch;
    std::vector<Label> pred;
    pred.reserve(val_x.size());
    for (const auto& x : val_x) pred.push_back(model.classify(x));
    const double score = reported(pcc(pred, val_y));
    if (score > best_pcc) {
      best_pcc = score;
      best = std::move(model);
      since_best = 0;
    } else if (++since_best >= cfg.early_stopping.patience) {
      break;
    }
    if (spread <= cfg.epsilon) break;
  }
  return *best;
}

inline std::vector<Prediction> predict(const LinearModel& model, std::span<const FeatureVector> features,
                                       std::span<const std::string> item_ids) {
  if (features.size() != item_ids.size()) fail(ErrorKind::LengthMismatch, "features vs item ids");
  std::vector<Prediction> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto scores = model.decision(features[i]);
    out.push_back({item_ids[i], argmax_label(scores), scores});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble and prediction files

/// Per item: mode of the model labels, ties broken by the ordinal median of
/// all model codes; scores are per-class vote fractions. Items follow the
/// order of the first list.
inline std::vector<Prediction> ensemble_vote(const std::vector<std::vector<Prediction>>& per_model) {
  if (per_model.empty()) fail(ErrorKind::EmptyInput, "ensemble over no models");
  const auto& first = per_model.front();
  std::vector<std::map<std::string, Label>> lookup;
  for (std::size_t m = 1; m < per_model.size(); ++m) {
    if (per_model[m].size() != first.size())
      fail(ErrorKind::MisalignedItems, "model " + std::to_string(m) + " predicts a different item count");
    std::map<std::string, Label> index;
    for (const auto& p : per_model[m]) index[p.item_id] = p.label;
    lookup.push_back(std::move(index));
  }
  std::vector<Prediction> out;
  out.reserve(first.size());
  const double n_models = static_cast<double>(per_model.size());
  for (const auto& p : first) {
    std::vector<Label> votes{p.label};
    for (std::size_t m = 0; m < lookup.size(); ++m) {
      auto it = lookup[m].find(p.item_id);
      if (it == lookup[m].end())
        fail(ErrorKind::MisalignedItems, "item " + p.item_id + " missing from model " + std::to_string(m + 1));
      votes.push_back(it->second);
    }
    Prediction e{p.item_id, *majority_label(votes, true), {}};
    for (Label v : votes) e.scores[ordinal_code(v)] += 1.0 / n_models;
    out.push_back(std::move(e));
  }
  return out;
}

inline OrderedJson to_json(const Prediction& p) {
  OrderedJson j;
  j["item_id"] = p.item_id;
  j["label"] = to_string(p.label);
  j["scores"] = p.scores;
  return j;
}

inline std::string predictions_to_jsonl(std::span<const Prediction> preds) {
  JsonlWriter w;
  for (const auto& p : preds) w.add(to_json(p));
  return w.str();
}

/// Reads prediction JSONL {item_id, label[, scores]}; absent scores become
/// one-hot on the label.
inline std::vector<Prediction> import_external_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for_each_jsonl(path, [&](const Json& r, std::size_t line) {
    auto bad = [&](const std::string& why) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + why);
    };
    if (!r.is_object() || !r.contains("item_id") || !r["item_id"].is_string()) bad("missing item_id");
    if (!r.contains("label") || !r["label"].is_string()) bad("missing label");
    auto label = try_parse_label(r["label"].get<std::string>());
    if (!label) bad("unknown label '" + r["label"].get<std::string>() + "'");
    Prediction p{r["item_id"].get<std::string>(), *label, one_hot(*label)};
    if (r.contains("scores") && !r["scores"].is_null()) {
      const auto& s = r["scores"];
      if (!s.is_array() || s.size() != kNumLabels) bad("scores must be [u, a, g]");
      for (std::size_t c = 0; c < kNumLabels; ++c) {
        if (!s[c].is_number()) bad("non-numeric score");
        p.scores[c] = s[c].get<double>();
      }
    }
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace gramscope
