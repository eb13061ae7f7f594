#pragma once

// Per-transcript label proportions against child age, and per-label
// logistic age trends with cluster-bootstrap uncertainty.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramscope/classifiers.hpp"
#include "gramscope/corpus.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/metrics.hpp"
#include "gramscope/rng.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

inline constexpr std::size_t kMinTranscriptItems = 100;
inline constexpr std::string_view kTrendMethod = "logistic+cluster-bootstrap";
inline constexpr std::string_view kTrendNote =
    "plain logistic regression on utterance-level outcomes; standard errors from a transcript-level "
    "cluster bootstrap in place of a random-intercept mixed model";

/// One predicted utterance with the metadata trends need.
struct LabeledUtterance {
  std::string transcript_id;
  std::optional<double> age_months;
  Label label = Label::Grammatical;
};

/// Joins predictions to their items on item_id. Predictions for unknown
/// items raise UnknownItem.
inline std::vector<LabeledUtterance> join_predictions(std::span<const Prediction> preds,
                                                      std::span<const AnnotationItem> items) {
  std::map<std::string, const AnnotationItem*> index;
  for (const auto& item : items) index[item.item_id] = &item;
  std::vector<LabeledUtterance> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    auto it = index.find(p.item_id);
    if (it == index.end()) fail(ErrorKind::UnknownItem, "prediction for unknown item " + p.item_id);
    out.push_back({it->second->transcript_id, it->second->child_age_months, p.label});
  }
  return out;
}

struct TranscriptProportion {
  std::string transcript_id;
  double child_age_months = 0.0;
  std::size_t n_items = 0;
  std::array<double, kNumLabels> proportions{};  // (ungrammatical, ambiguous, grammatical)

  bool plotted() const { return n_items >= kMinTranscriptItems; }
};

struct ProportionTable {
  std::vector<TranscriptProportion> rows;  // sorted by transcript_id
  std::vector<std::string> warnings;
};

inline ProportionTable transcript_proportions(std::span<const LabeledUtterance> records) {
  struct Acc {
    double age = 0.0;
    std::array<std::size_t, kNumLabels> counts{};
  };
  std::map<std::string, Acc> acc;
  std::map<std::string, std::size_t> skipped;
  for (const auto& r : records) {
    if (!r.age_months) {
      ++skipped[r.transcript_id];
      continue;
    }
    auto& a = acc[r.transcript_id];
    a.age = *r.age_months;
    ++a.counts[ordinal_code(r.label)];
  }
  ProportionTable table;
  for (const auto& [tid, n] : skipped)
    table.warnings.push_back("MissingAge: skipped " + std::to_string(n) + " utterances of " + tid);
  for (const auto& [tid, a] : acc) {
    TranscriptProportion row;
    row.transcript_id = tid;
    row.child_age_months = a.age;
    for (auto c : a.counts) row.n_items += c;
    for (std::size_t k = 0; k < kNumLabels; ++k)
      row.proportions[k] = static_cast<double>(a.counts[k]) / static_cast<double>(row.n_items);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Logistic trend

enum class AgeUnit { Months, Years };

constexpr std::string_view to_string(AgeUnit u) { return u == AgeUnit::Months ? "months" : "years"; }

inline AgeUnit parse_age_unit(std::string_view s) {
  if (s == "months") return AgeUnit::Months;
  if (s == "years") return AgeUnit::Years;
  fail(ErrorKind::Usage, "unknown age unit '" + std::string(s) + "'");
}

struct TrendObservation {
  std::string cluster_id;
  double age = 0.0;  // already in the model's age unit
  bool outcome = false;
};

struct TrendConfig {
  std::size_t n_bootstrap = 500;
  double confidence = 0.95;
  std::uint64_t seed = 0;
  double tolerance = 1e-8;
  std::size_t max_iter = 100;
  double separation_bound = 50.0;
};

struct LogisticFit {
  std::string label;
  double intercept = 0.0;
  double beta_age = 0.0;
  double se_beta = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_utterances = 0;
  std::size_t n_clusters = 0;
  std::size_t iterations = 0;
  std::size_t bootstrap_failures = 0;
  AgeUnit age_unit = AgeUnit::Months;

  double probability(double age) const { return 1.0 / (1.0 + std::exp(-(intercept + beta_age * age))); }
};

namespace detail {

// Binomial cell: `k` successes out of `n` trials at a single age. The
// binomial likelihood equals the Bernoulli likelihood of the expanded rows.
struct Cell {
  double age;
  double n;
  double k;
};

struct IrlsResult {
  double intercept;
  double beta;
  std::size_t iterations;
};

inline IrlsResult irls(std::span<const Cell> cells, double center, const TrendConfig& cfg, double a0 = 0.0,
                       double b0 = 0.0) {
  double trials = 0.0, successes = 0.0;
  for (const auto& c : cells) {
    trials += c.n;
    successes += c.k;
  }
  if (successes == 0.0 || successes == trials)
    fail(ErrorKind::Separation, "all outcomes identical; the logistic fit diverges");
  // Parameterised on centred age for conditioning.
  double a = a0 + b0 * center, b = b0;
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (const auto& c : cells) {
      const double x = c.age - center;
      const double p = 1.0 / (1.0 + std::exp(-(a + b * x)));
      const double w = c.n * p * (1.0 - p);
      const double r = c.k - c.n * p;
      g0 += r;
      g1 += r * x;
      h00 += w;
      h01 += w * x;
      h11 += w * x * x;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0.0) || !std::isfinite(det)) fail(ErrorKind::Separation, "singular information matrix");
    const double da = (h11 * g0 - h01 * g1) / det;
    const double db = (h00 * g1 - h01 * g0) / det;
    a += da;
    b += db;
    const double intercept = a - b * center;
    if (std::abs(b) > cfg.separation_bound || std::abs(intercept) > cfg.separation_bound ||
        !std::isfinite(a) || !std::isfinite(b))
      fail(ErrorKind::Separation, "coefficient magnitude exceeded " + format_double(cfg.separation_bound));
    if (std::max(std::abs(da), std::abs(db)) < cfg.tolerance) return {intercept, b, it};
  }
  fail(ErrorKind::NonConvergence, "IRLS did not converge in " + std::to_string(cfg.max_iter) + " iterations");
}

inline double centre_of(std::span<const Cell> cells) {
  double n = 0.0, s = 0.0;
  for (const auto& c : cells) {
    n += c.n;
    s += c.n * c.age;
  }
  return n > 0.0 ? s / n : 0.0;
}

}  // namespace detail

/// Fits P(outcome) = sigmoid(intercept + beta * age) by IRLS and estimates
/// the uncertainty of beta by resampling clusters with replacement.
inline LogisticFit fit_logistic_trend(std::span<const TrendObservation> obs, const TrendConfig& cfg = {},
                                      std::string label = {}) {
  std::map<std::string, std::map<double, std::pair<double, double>>> grouped;
  for (const auto& o : obs) {
    auto& cell = grouped[o.cluster_id][o.age];
    cell.first += 1.0;
    cell.second += o.outcome ? 1.0 : 0.0;
  }
  if (grouped.size() < 2) fail(ErrorKind::TooFewGroups, "trend fit needs at least two transcripts");

  std::vector<std::vector<detail::Cell>> clusters;
  std::vector<detail::Cell> all;
  for (const auto& [id, cells] : grouped) {
    auto& cl = clusters.emplace_back();
    for (const auto& [age, nk] : cells) cl.push_back({age, nk.first, nk.second});
    all.insert(all.end(), cl.begin(), cl.end());
  }

  LogisticFit fit;
  fit.label = std::move(label);
  fit.n_utterances = obs.size();
  fit.n_clusters = clusters.size();
  const auto point = detail::irls(all, detail::centre_of(all), cfg);
  fit.intercept = point.intercept;
  fit.beta_age = point.beta;
  fit.iterations = point.iterations;

  std::vector<double> betas;
  betas.reserve(cfg.n_bootstrap);
  std::vector<detail::Cell> resample;
  for (std::size_t r = 0; r < cfg.n_bootstrap; ++r) {
    Rng rng(mix_seed(cfg.seed, r));
    resample.clear();
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const auto& cl = clusters[rng.below(clusters.size())];
      resample.insert(resample.end(), cl.begin(), cl.end());
    }
    try {
      betas.push_back(detail::irls(resample, detail::centre_of(resample), cfg, point.intercept, point.beta).beta);
    } catch (const Error&) {
      ++fit.bootstrap_failures;
    }
  }
  if (betas.size() < 2) fail(ErrorKind::NonConvergence, "too few bootstrap fits converged");
  double mean = 0.0;
  for (double b : betas) mean += b;
  mean /= static_cast<double>(betas.size());
  double ss = 0.0;
  for (double b : betas) ss += (b - mean) * (b - mean);
  fit.se_beta = std::sqrt(ss / static_cast<double>(betas.size() - 1));
  std::sort(betas.begin(), betas.end());
  const double tail = (1.0 - cfg.confidence) / 2.0;
  fit.ci_low = quantile_sorted(betas, tail);
  fit.ci_high = quantile_sorted(betas, 1.0 - tail);
  fit.p_value = fit.se_beta > 0.0 ? std::erfc(std::abs(fit.beta_age / fit.se_beta) / std::sqrt(2.0)) : 0.0;
  return fit;
}

inline std::vector<TrendObservation> trend_observations(std::span<const LabeledUtterance> records, Label target,
                                                        AgeUnit unit) {
  std::vector<TrendObservation> out;
  for (const auto& r : records) {
    if (!r.age_months) continue;
    const double age = unit == AgeUnit::Months ? *r.age_months : *r.age_months / 12.0;
    out.push_back({r.transcript_id, age, r.label == target});
  }
  return out;
}

/// Independent fits for each label (the three probabilities need not sum
/// to one).
inline std::vector<LogisticFit> fit_all_labels(std::span<const LabeledUtterance> records, AgeUnit unit,
                                               const TrendConfig& cfg = {}) {
  std::vector<LogisticFit> fits;
  for (auto label : kAllLabels) {
    const auto obs = trend_observations(records, label, unit);
    TrendConfig c = cfg;
    c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(ordinal_code(label)));
    auto fit = fit_logistic_trend(obs, c, std::string(to_string(label)));
    fit.age_unit = unit;
    fits.push_back(std::move(fit));
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Outputs

inline OrderedJson to_json(const LogisticFit& f) {
  OrderedJson j;
  j["label"] = f.label;
  j["beta_age"] = f.beta_age;
  j["intercept"] = f.intercept;
  j["se"] = f.se_beta;
  j["p"] = f.p_value;
  j["ci_low"] = f.ci_low;
  j["ci_high"] = f.ci_high;
  j["n"] = f.n_utterances;
  j["n_clusters"] = f.n_clusters;
  j["age_unit"] = to_string(f.age_unit);
  j["bootstrap_failures"] = f.bootstrap_failures;
  j["method"] = kTrendMethod;
  return j;
}

inline OrderedJson trend_report(std::span<const LogisticFit> fits, const TrendConfig& cfg,
                                std::span<const std::string> warnings = {}) {
  OrderedJson j;
  j["method"] = kTrendMethod;
  j["note"] = kTrendNote;
  j["n_bootstrap"] = cfg.n_bootstrap;
  j["seed"] = cfg.seed;
  j["fits"] = OrderedJson::array();
  for (const auto& f : fits) j["fits"].push_back(to_json(f));
  j["warnings"] = std::vector<std::string>(warnings.begin(), warnings.end());
  return j;
}

inline std::string proportions_csv(const ProportionTable& table) {
  std::string out = "transcript_id,age_months,n,p_ungram,p_ambig,p_gram\n";
  for (const auto& r : table.rows) {
    if (!r.plotted()) continue;
    out += r.transcript_id + "," + format_double(r.child_age_months) + "," + std::to_string(r.n_items);
    for (double p : r.proportions) out += "," + format_double(p);
    out += "\n";
  }
  return out;
}

/// Ages from `lo` to `hi` inclusive at `step`.
inline std::vector<double> age_grid(double lo, double hi, double step = 0.5) {
  std::vector<double> out;
  if (hi < lo) return out;
  const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= steps; ++i) out.push_back(lo + step * static_cast<double>(i));
  return out;
}

/// Fitted curves sampled over [lo, hi] (in months). Fits in years are
/// evaluated at age/12.
inline std::string curve_csv(std::span<const LogisticFit> fits, double lo, double hi) {
  std::string out = "label,age_months,probability,intercept,beta_age\n";
  const auto grid = age_grid(lo, hi);
  for (const auto& f : fits) {
    for (double age : grid) {
      const double x = f.age_unit == AgeUnit::Months ? age : age / 12.0;
      out += f.label + "," + format_double(age) + "," + format_double(f.probability(x)) + "," +
             format_double(f.intercept) + "," + format_double(f.beta_age) + "\n";
    }
  }
  return out;
}

struct TrendFiles {
  std::filesystem::path proportions;
  std::filesystem::path curves;
};

inline TrendFiles export_trend_csv(std::span<const LogisticFit> fits, const ProportionTable& table,
                                   const std::filesystem::path& dir) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& r : table.rows) {
    lo = first ? r.child_age_months : std::min(lo, r.child_age_months);
    hi = first ? r.child_age_months : std::max(hi, r.child_age_months);
    first = false;
  }
  TrendFiles files{dir / "trend_proportions.csv", dir / "trend_curves.csv"};
  write_file(files.proportions, proportions_csv(table));
  write_file(files.curves, curve_csv(fits, lo, hi));
  return files;
}

}  // namespace gramscope
