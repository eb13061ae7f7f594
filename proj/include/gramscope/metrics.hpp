#pragma once

// Evaluation metrics: PCC, accuracy, Cohen's kappa, ordinal Krippendorff's
// alpha, confusion matrices and per-category recall with bootstrap CIs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/rng.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

inline MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

inline std::vector<double> ordinal_codes(std::span<const Label> labels) {
  std::vector<double> out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(ordinal_code(l));
  return out;
}

/// Pearson correlation; nullopt when either side has zero variance (or
/// fewer than two points).
inline std::optional<double> pcc(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size())
    fail(ErrorKind::LengthMismatch, "pcc: " + std::to_string(pred.size()) + " vs " +
                                        std::to_string(gold.size()) + " values");
  const std::size_t n = pred.size();
  if (n < 2) return std::nullopt;
  double mp = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    mg += gold[i];
  }
  mp /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = pred[i] - mp, dg = gold[i] - mg;
    sxy += dp * dg;
    sxx += dp * dp;
    syy += dg * dg;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> pcc(std::span<const Label> pred, std::span<const Label> gold) {
  const auto p = ordinal_codes(pred), g = ordinal_codes(gold);
  return pcc(std::span<const double>(p), std::span<const double>(g));
}

// Undefined correlations are reported as 0.00.
inline double reported(std::optional<double> value) { return value.value_or(0.0); }

inline double accuracy(std::span<const Label> pred, std::span<const Label> gold) {
  if (pred.size() != gold.size()) fail(ErrorKind::LengthMismatch, "accuracy: length mismatch");
  if (pred.empty()) fail(ErrorKind::EmptyInput, "accuracy of no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Cohen's kappa with marginal-product chance agreement; nullopt when the
/// expected agreement is 1.
inline std::optional<double> cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) fail(ErrorKind::LengthMismatch, "kappa: length mismatch");
  if (a.empty()) fail(ErrorKind::EmptyInput, "kappa of no items");
  std::array<double, kNumLabels> ma{}, mb{};
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[ordinal_code(a[i])] += 1.0;
    mb[ordinal_code(b[i])] += 1.0;
    agree += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < kNumLabels; ++c) pe += (ma[c] / n) * (mb[c] / n);
  if (pe >= 1.0) return std::nullopt;
  return (po - pe) / (1.0 - pe);
}

/// Items x annotators; missing judgements are nullopt.
using AnnotationMatrix = std::vector<std::vector<std::optional<Label>>>;

struct PairwiseKappa {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n_pairs = 0;
};

/// Mean and population sd of kappa over all annotator pairs, each pair
/// scored on the items both annotated. Pairs without shared items or with
/// undefined kappa are skipped.
inline PairwiseKappa mean_pairwise_kappa(const AnnotationMatrix& matrix) {
  std::size_t n_annotators = 0;
  for (const auto& row : matrix) n_annotators = std::max(n_annotators, row.size());
  if (n_annotators < 2) fail(ErrorKind::InsufficientData, "pairwise kappa needs two annotators");
  std::vector<double> kappas;
  for (std::size_t i = 0; i < n_annotators; ++i)
    for (std::size_t j = i + 1; j < n_annotators; ++j) {
      std::vector<Label> a, b;
      for (const auto& row : matrix)
        if (i < row.size() && j < row.size() && row[i] && row[j]) {
          a.push_back(*row[i]);
          b.push_back(*row[j]);
        }
      if (a.empty()) continue;
      if (auto k = cohen_kappa(a, b)) kappas.push_back(*k);
    }
  if (kappas.empty()) fail(ErrorKind::InsufficientData, "no annotator pair with a defined kappa");
  const auto ms = mean_sd(kappas);
  return {ms.mean, ms.sd, kappas.size()};
}

/// Ordinal squared difference over rank margins n_g:
/// (sum_{g=c..k} n_g - (n_c + n_k)/2)^2.
inline double ordinal_delta2(std::span<const double> margins, std::size_t c, std::size_t k) {
  if (c > k) std::swap(c, k);
  double s = 0.0;
  for (std::size_t g = c; g <= k; ++g) s += margins[g];
  s -= (margins[c] + margins[k]) / 2.0;
  return s * s;
}

/// Krippendorff's alpha at the ordinal level, coincidence-matrix form.
/// Units with fewer than two judgements are not pairable and drop out.
/// Throws InsufficientData with fewer than two pairable units; returns
/// nullopt when the expected disagreement is zero.
inline std::optional<double> krippendorff_alpha_ordinal(const AnnotationMatrix& matrix) {
  constexpr std::size_t K = kNumLabels;
  std::array<std::array<double, K>, K> o{};
  std::size_t pairable = 0;
  for (const auto& row : matrix) {
    std::array<double, K> counts{};
    double m = 0.0;
    for (const auto& v : row)
      if (v) {
        counts[ordinal_code(*v)] += 1.0;
        m += 1.0;
      }
    if (m < 2.0) continue;
    ++pairable;
    for (std::size_t c = 0; c < K; ++c)
      for (std::size_t k = 0; k < K; ++k) {
        const double pairs = c == k ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[k];
        o[c][k] += pairs / (m - 1.0);
      }
  }
  if (pairable < 2) fail(ErrorKind::InsufficientData, "alpha needs at least two pairable items");

  std::array<double, K> margins{};
  double n = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t k = 0; k < K; ++k) margins[c] += o[c][k];
    n += margins[c];
  }
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t k = 0; k < K; ++k) {
      const double d = ordinal_delta2(margins, c, k);
      observed += o[c][k] * d;
      expected += margins[c] * margins[k] * d;
    }
  if (expected == 0.0) return std::nullopt;
  return 1.0 - (n - 1.0) * observed / expected;
}

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
  // counts[true][predicted], ordinal class order.
  std::array<std::array<double, kNumLabels>, kNumLabels> counts{};

  void add(Label truth, Label predicted, double weight = 1.0) {
    counts[ordinal_code(truth)][ordinal_code(predicted)] += weight;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    for (std::size_t i = 0; i < kNumLabels; ++i)
      for (std::size_t j = 0; j < kNumLabels; ++j) counts[i][j] += other.counts[i][j];
    return *this;
  }

  double row_total(std::size_t row) const {
    double s = 0.0;
    for (double v : counts[row]) s += v;
    return s;
  }

  bool zero_row(std::size_t row) const { return row_total(row) == 0.0; }

  /// Rows divided by row sums; an all-zero row stays all zero.
  std::array<std::array<double, kNumLabels>, kNumLabels> normalized() const {
    std::array<std::array<double, kNumLabels>, kNumLabels> out{};
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      const double total = row_total(i);
      if (total == 0.0) continue;
      for (std::size_t j = 0; j < kNumLabels; ++j) out[i][j] = counts[i][j] / total;
    }
    return out;
  }

  /// Builds a matrix from already-normalized rows (e.g. a published table).
  static ConfusionMatrix from_rows(const std::array<std::array<double, kNumLabels>, kNumLabels>& rows) {
    ConfusionMatrix m;
    m.counts = rows;
    return m;
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["labels"] = {"ungrammatical", "ambiguous", "grammatical"};
    j["counts"] = counts;
    j["normalized"] = normalized();
    OrderedJson zero = OrderedJson::array();
    for (std::size_t i = 0; i < kNumLabels; ++i)
      if (zero_row(i)) zero.push_back(to_string(label_from_code(static_cast<int>(i))));
    j["zero_rows"] = std::move(zero);
    return j;
  }
};

inline ConfusionMatrix confusion(std::span<const Label> pred, std::span<const Label> gold) {
  if (pred.size() != gold.size()) fail(ErrorKind::LengthMismatch, "confusion: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.size(); ++i) m.add(gold[i], pred[i]);
  return m;
}

inline constexpr std::array<std::string_view, kNumLabels> kShortLabelNames = {"Ungramm.", "Ambig.",
                                                                              "Gramm."};

/// Row-normalized text table: true labels as rows, predictions as columns.
inline std::string render_confusion(const ConfusionMatrix& m) {
  const auto norm = m.normalized();
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-9s", "");
  out += buf;
  for (auto name : kShortLabelNames) {
    std::snprintf(buf, sizeof buf, " %8s", std::string(name).c_str());
    out += buf;
  }
  out += '\n';
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::snprintf(buf, sizeof buf, "%-9s", std::string(kShortLabelNames[i]).c_str());
    out += buf;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      std::snprintf(buf, sizeof buf, " %8.2f", norm[i][j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Reads the rows of a table produced by render_confusion.
inline ConfusionMatrix parse_confusion(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.size() < kNumLabels + 1) fail(ErrorKind::MalformedRecord, "confusion table too short");
  std::array<std::array<double, kNumLabels>, kNumLabels> rows{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    auto cells = split_whitespace(lines[i + 1]);
    if (cells.size() != kNumLabels + 1 || cells[0] != kShortLabelNames[i])
      fail(ErrorKind::MalformedRecord, "confusion table row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < kNumLabels; ++j) rows[i][j] = std::stod(cells[j + 1]);
  }
  return ConfusionMatrix::from_rows(rows);
}

// ---------------------------------------------------------------------------
// Bootstrap recall per error category

struct BootstrapConfig {
  std::size_t n_resamples = 1000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
};

/// Linear-interpolation quantile of sorted data (q in [0,1]).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorKind::EmptyInput, "quantile of no values");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct RecallEstimate {
  double recall = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

/// Point recall of a 0/1 hit vector and its percentile-bootstrap interval.
inline RecallEstimate bootstrap_recall(std::span<const int> hits, const BootstrapConfig& cfg,
                                       std::uint64_t stream) {
  if (cfg.n_resamples < 100) fail(ErrorKind::Precondition, "bootstrap needs at least 100 resamples");
  if (hits.empty()) fail(ErrorKind::EmptyInput, "recall over no items");
  RecallEstimate est;
  est.n = hits.size();
  double total = 0.0;
  for (int h : hits) total += h;
  const double n = static_cast<double>(hits.size());
  est.recall = total / n;
  Rng rng(mix_seed(cfg.seed, stream));
  std::vector<double> stats;
  stats.reserve(cfg.n_resamples);
  for (std::size_t r = 0; r < cfg.n_resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < hits.size(); ++i) s += hits[rng.below(hits.size())];
    stats.push_back(s / n);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - cfg.confidence) / 2.0;
  est.ci_low = quantile_sorted(stats, tail);
  est.ci_high = quantile_sorted(stats, 1.0 - tail);
  return est;
}

struct CategoryRecallReport {
  std::map<ErrorCategory, RecallEstimate> per_category;
  std::optional<RecallEstimate> overall;  // all gold-ungrammatical items
  std::vector<std::string> warnings;
};

/// Recall of the Ungrammatical class split by gold error category.
/// `pred` is aligned with `gold`.
inline CategoryRecallReport per_category_recall(std::span<const Label> pred,
                                                std::span<const GoldAnnotation> gold,
                                                const BootstrapConfig& cfg = {}) {
  if (pred.size() != gold.size()) fail(ErrorKind::LengthMismatch, "recall: length mismatch");
  CategoryRecallReport report;
  std::vector<int> overall;
  std::map<ErrorCategory, std::vector<int>> hits;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].label != Label::Ungrammatical) continue;
    const int hit = pred[i] == Label::Ungrammatical;
    overall.push_back(hit);
    for (auto c : gold[i].categories) hits[c].push_back(hit);
  }
  for (std::size_t ci = 0; ci < kAllCategories.size(); ++ci) {
    const auto c = kAllCategories[ci];
    auto it = hits.find(c);
    if (it == hits.end()) {
      report.warnings.push_back("EmptyCategory: no gold items tagged " + std::string(to_string(c)));
      continue;
    }
    report.per_category[c] = bootstrap_recall(it->second, cfg, ci + 1);
  }
  if (!overall.empty()) report.overall = bootstrap_recall(overall, cfg, 0);
  return report;
}

inline OrderedJson to_json(const RecallEstimate& r) {
  OrderedJson j;
  j["recall"] = r.recall;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["n"] = r.n;
  return j;
}

inline OrderedJson to_json(const CategoryRecallReport& r) {
  OrderedJson j;
  OrderedJson cats = OrderedJson::object();
  for (const auto& [c, est] : r.per_category) cats[std::string(to_string(c))] = to_json(est);
  j["per_category"] = std::move(cats);
  j["overall"] = r.overall ? to_json(*r.overall) : OrderedJson(nullptr);
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace gramscope
