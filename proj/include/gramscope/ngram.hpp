#pragma once

// Top-k n-gram vocabularies over token-id sequences and sparse count
// features.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gramscope/error.hpp"
#include "gramscope/io.hpp"

namespace gramscope {

inline constexpr std::size_t kNgramsPerOrder = 1000;

using Ngram = std::vector<int>;

struct NgramHash {
  std::size_t operator()(const Ngram& g) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int v : g) {
      h ^= static_cast<std::uint32_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct FeatureVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> counts;          // parallel, >= 1

  std::size_t nnz() const { return indices.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

class NgramVocabulary {
 public:
  NgramVocabulary() = default;

  std::size_t max_n() const { return per_order_.size(); }
  const std::vector<std::vector<Ngram>>& per_order() const { return per_order_; }
  std::size_t dimension() const { return index_.size(); }

  const Ngram& ngram(std::size_t feature) const { return inverse_[feature]; }

  std::optional<std::uint32_t> feature_id(const Ngram& g) const {
    auto it = index_.find(g);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Counts of every vocabulary n-gram occurring in `sequence`.
  FeatureVector featurize(std::span<const int> sequence) const {
    std::vector<std::uint32_t> hits;
    Ngram window;
    for (std::size_t k = 1; k <= max_n(); ++k) {
      if (sequence.size() < k) break;
      for (std::size_t i = 0; i + k <= sequence.size(); ++i) {
        window.assign(sequence.begin() + i, sequence.begin() + i + k);
        if (auto it = index_.find(window); it != index_.end()) hits.push_back(it->second);
      }
    }
    std::sort(hits.begin(), hits.end());
    FeatureVector fv;
    for (std::size_t i = 0; i < hits.size();) {
      std::size_t j = i;
      while (j < hits.size() && hits[j] == hits[i]) ++j;
      fv.indices.push_back(hits[i]);
      fv.counts.push_back(static_cast<double>(j - i));
      i = j;
    }
    return fv;
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["max_n"] = max_n();
    j["per_order"] = per_order_;
    return j;
  }

  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }

  static NgramVocabulary from_json(const Json& j) {
    NgramVocabulary v;
    const auto max_n = j.at("max_n").get<std::size_t>();
    auto per_order = j.at("per_order").get<std::vector<std::vector<Ngram>>>();
    if (per_order.size() != max_n) fail(ErrorKind::MalformedRecord, "n-gram vocab order count mismatch");
    v.assign(std::move(per_order));
    return v;
  }

 private:
  friend NgramVocabulary build_ngram_vocab(std::span<const std::vector<int>>, std::size_t, std::size_t);

  void assign(std::vector<std::vector<Ngram>> per_order) {
    per_order_ = std::move(per_order);
    index_.clear();
    inverse_.clear();
    for (const auto& order : per_order_)
      for (const auto& g : order) {
        index_.emplace(g, static_cast<std::uint32_t>(inverse_.size()));
        inverse_.push_back(g);
      }
  }

  std::vector<std::vector<Ngram>> per_order_;
  std::unordered_map<Ngram, std::uint32_t, NgramHash> index_;
  std::vector<Ngram> inverse_;
};

/// For each order k in 1..max_n, keeps the `per_order` most frequent k-grams
/// (ties: lexicographic id sequence). Feature ids run order by order.
inline NgramVocabulary build_ngram_vocab(std::span<const std::vector<int>> encoded_corpus,
                                         std::size_t max_n, std::size_t per_order = kNgramsPerOrder) {
  if (max_n == 0) fail(ErrorKind::Precondition, "max_n must be at least 1");
  bool any = false;
  for (const auto& s : encoded_corpus) any = any || !s.empty();
  if (!any) fail(ErrorKind::EmptyCorpus, "n-gram vocabulary over an empty corpus");

  std::vector<std::vector<Ngram>> orders(max_n);
  for (std::size_t k = 1; k <= max_n; ++k) {
    std::unordered_map<Ngram, std::int64_t, NgramHash> counts;
    Ngram window;
    for (const auto& seq : encoded_corpus) {
      for (std::size_t i = 0; i + k <= seq.size(); ++i) {
        window.assign(seq.begin() + i, seq.begin() + i + k);
        ++counts[window];
      }
    }
    std::vector<std::pair<std::int64_t, Ngram>> ranked;
    ranked.reserve(counts.size());
    for (auto& [g, c] : counts) ranked.emplace_back(c, g);
    auto better = [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    };
    const std::size_t keep = std::min(per_order, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end(), better);
    for (std::size_t i = 0; i < keep; ++i) orders[k - 1].push_back(std::move(ranked[i].second));
  }
  NgramVocabulary vocab;
  vocab.assign(std::move(orders));
  return vocab;
}

}  // namespace gramscope
