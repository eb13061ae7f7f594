#pragma once

// Label set, error taxonomy, gold annotations and vote logic.

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gramscope/error.hpp"
#include "gramscope/io.hpp"

namespace gramscope {

/// Ordinal: Ungrammatical < Ambiguous < Grammatical, coded 0/1/2.
enum class Label : int { Ungrammatical = 0, Ambiguous = 1, Grammatical = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {Label::Ungrammatical, Label::Ambiguous,
                                                             Label::Grammatical};

constexpr int ordinal_code(Label label) { return static_cast<int>(label); }

inline Label label_from_code(int code) {
  if (code < 0 || code > 2) fail(ErrorKind::Precondition, "ordinal code out of range");
  return static_cast<Label>(code);
}

constexpr std::string_view to_string(Label label) {
  switch (label) {
    case Label::Ungrammatical: return "ungrammatical";
    case Label::Ambiguous: return "ambiguous";
    case Label::Grammatical: return "grammatical";
  }
  return "ungrammatical";
}

inline std::optional<Label> try_parse_label(std::string_view s) {
  for (Label l : kAllLabels)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

inline Label parse_label(std::string_view s) {
  if (auto l = try_parse_label(s)) return *l;
  fail(ErrorKind::MalformedRecord, "unknown label '" + std::string(s) + "'");
}

enum class ErrorCategory {
  Subject,
  Object,
  Verb,
  Possessive,
  Plural,
  SvAgreement,
  TenseAspect,
  Determiner,
  Preposition,
  Auxiliary,
  PresentProgressive,
  Other,
};

inline constexpr std::size_t kNumCategories = 12;
inline constexpr std::array<ErrorCategory, kNumCategories> kAllCategories = {
    ErrorCategory::Subject,     ErrorCategory::Object,      ErrorCategory::Verb,
    ErrorCategory::Possessive,  ErrorCategory::Plural,      ErrorCategory::SvAgreement,
    ErrorCategory::TenseAspect, ErrorCategory::Determiner,  ErrorCategory::Preposition,
    ErrorCategory::Auxiliary,   ErrorCategory::PresentProgressive, ErrorCategory::Other,
};

enum class BroadGroup { Syntactic, NounMorphology, VerbMorphology, UnboundMorphology, Other };

constexpr std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Subject: return "subject";
    case ErrorCategory::Object: return "object";
    case ErrorCategory::Verb: return "verb";
    case ErrorCategory::Possessive: return "possessive";
    case ErrorCategory::Plural: return "plural";
    case ErrorCategory::SvAgreement: return "sv_agreement";
    case ErrorCategory::TenseAspect: return "tense_aspect";
    case ErrorCategory::Determiner: return "determiner";
    case ErrorCategory::Preposition: return "preposition";
    case ErrorCategory::Auxiliary: return "auxiliary";
    case ErrorCategory::PresentProgressive: return "present_progressive";
    case ErrorCategory::Other: return "other";
  }
  return "other";
}

constexpr BroadGroup broad_group(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Subject:
    case ErrorCategory::Object:
    case ErrorCategory::Verb: return BroadGroup::Syntactic;
    case ErrorCategory::Possessive:
    case ErrorCategory::Plural: return BroadGroup::NounMorphology;
    case ErrorCategory::SvAgreement:
    case ErrorCategory::TenseAspect: return BroadGroup::VerbMorphology;
    case ErrorCategory::Determiner:
    case ErrorCategory::Preposition:
    case ErrorCategory::Auxiliary:
    case ErrorCategory::PresentProgressive: return BroadGroup::UnboundMorphology;
    case ErrorCategory::Other: return BroadGroup::Other;
  }
  return BroadGroup::Other;
}

constexpr std::string_view to_string(BroadGroup g) {
  switch (g) {
    case BroadGroup::Syntactic: return "syntactic";
    case BroadGroup::NounMorphology: return "noun_morphology";
    case BroadGroup::VerbMorphology: return "verb_morphology";
    case BroadGroup::UnboundMorphology: return "unbound_morphology";
    case BroadGroup::Other: return "other";
  }
  return "other";
}

inline std::optional<ErrorCategory> try_parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline ErrorCategory parse_category(std::string_view s) {
  if (auto c = try_parse_category(s)) return *c;
  fail(ErrorKind::MalformedRecord, "unknown error category '" + std::string(s) + "'");
}

using CategorySet = std::set<ErrorCategory>;

struct GoldAnnotation {
  std::string item_id;
  Label label = Label::Grammatical;
  CategorySet categories;
  std::optional<std::string> annotator;

  friend bool operator==(const GoldAnnotation&, const GoldAnnotation&) = default;
};

// Categories are only meaningful on ungrammatical items.
inline void validate(const GoldAnnotation& g) {
  if (!g.categories.empty() && g.label != Label::Ungrammatical)
    fail(ErrorKind::InvalidAnnotation,
         "item " + g.item_id + ": error categories on a non-ungrammatical label");
}

inline OrderedJson to_json(const GoldAnnotation& g) {
  OrderedJson r;
  r["item_id"] = g.item_id;
  r["label"] = to_string(g.label);
  r["categories"] = OrderedJson::array();
  for (auto c : g.categories) r["categories"].push_back(to_string(c));
  if (g.annotator) r["annotator"] = *g.annotator;
  return r;
}

inline GoldAnnotation gold_from_json(const Json& r) {
  GoldAnnotation g;
  g.item_id = r.at("item_id").get<std::string>();
  g.label = parse_label(r.at("label").get<std::string>());
  if (r.contains("categories"))
    for (const auto& c : r.at("categories")) g.categories.insert(parse_category(c.get<std::string>()));
  if (r.contains("annotator") && r["annotator"].is_string())
    g.annotator = r["annotator"].get<std::string>();
  validate(g);
  return g;
}

inline std::vector<GoldAnnotation> load_gold_jsonl(const std::filesystem::path& path) {
  std::vector<GoldAnnotation> out;
  for_each_jsonl(path, [&](const Json& r, std::size_t line) {
    try {
      out.push_back(gold_from_json(r));
    } catch (const std::exception& e) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

inline std::string gold_to_jsonl(std::span<const GoldAnnotation> gold) {
  JsonlWriter w;
  for (const auto& g : gold) w.add(to_json(g));
  return w.str();
}

/// Median of ordinal codes. For an even count the two middle codes are
/// averaged and rounded toward the lower class.
inline Label ordinal_median(std::span<const Label> labels) {
  if (labels.empty()) fail(ErrorKind::EmptyInput, "median of no labels");
  std::vector<int> codes;
  codes.reserve(labels.size());
  for (Label l : labels) codes.push_back(ordinal_code(l));
  std::sort(codes.begin(), codes.end());
  const std::size_t n = codes.size();
  if (n % 2 == 1) return label_from_code(codes[n / 2]);
  return label_from_code((codes[n / 2 - 1] + codes[n / 2]) / 2);
}

/// Mode of the labels, or nullopt when the top count is shared (no
/// majority). With `resolve`, ties fall back to the ordinal median of every
/// submitted code, which makes the function total on non-empty input.
inline std::optional<Label> majority_label(std::span<const Label> labels, bool resolve = false) {
  if (labels.empty()) fail(ErrorKind::EmptyInput, "majority vote over no labels");
  std::array<std::size_t, kNumLabels> counts{};
  for (Label l : labels) ++counts[ordinal_code(l)];
  const std::size_t top = *std::max_element(counts.begin(), counts.end());
  if (std::count(counts.begin(), counts.end(), top) == 1)
    return label_from_code(static_cast<int>(std::find(counts.begin(), counts.end(), top) - counts.begin()));
  if (!resolve) return std::nullopt;
  return ordinal_median(labels);
}

struct LabelDistribution {
  std::array<std::size_t, kNumLabels> counts{};
  std::size_t total = 0;
  // Empty when total == 0.
  std::optional<std::array<double, kNumLabels>> proportions;

  std::size_t count(Label l) const { return counts[ordinal_code(l)]; }
};

inline LabelDistribution label_distribution(std::span<const Label> labels) {
  LabelDistribution d;
  for (Label l : labels) ++d.counts[ordinal_code(l)];
  d.total = labels.size();
  if (d.total > 0) {
    std::array<double, kNumLabels> p{};
    for (std::size_t i = 0; i < kNumLabels; ++i)
      p[i] = static_cast<double>(d.counts[i]) / static_cast<double>(d.total);
    d.proportions = p;
  }
  return d;
}

inline LabelDistribution label_distribution(std::span<const GoldAnnotation> gold) {
  std::vector<Label> labels;
  labels.reserve(gold.size());
  for (const auto& g : gold) labels.push_back(g.label);
  return label_distribution(labels);
}

}  // namespace gramscope
