#pragma once

// Byte-pair-encoding subword tokenizer with speaker special tokens.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gramscope/corpus.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"

namespace gramscope {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kChildToken = "[CHI]";
inline constexpr std::string_view kCaregiverToken = "[CAR]";
inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::size_t kDefaultBpeVocabSize = 10000;

enum SpecialId : int { kPadId = 0, kUnkId = 1, kChildId = 2, kCaregiverId = 3 };

namespace detail {

// Splits a UTF-8 string into code points; invalid bytes stand alone.
inline std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (i + len > word.size()) len = 1;
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace detail

class BpeModel {
 public:
  BpeModel() { reset_specials(); }

  const std::vector<std::string>& specials() const { return specials_; }
  const std::vector<std::string>& id_to_token() const { return tokens_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::size_t vocab_size() const { return tokens_.size(); }

  std::optional<int> token_id(std::string_view token) const {
    auto it = vocab_.find(std::string(token));
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
  }

  /// Symbols of one word after applying the merge list in rank order.
  std::vector<std::string> segment(std::string_view word) const {
    std::vector<std::string> symbols = detail::utf8_chars(word);
    symbols.emplace_back(kEndOfWord);
    while (symbols.size() > 1) {
      std::size_t best_rank = merge_rank_.size();
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
        if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == merge_rank_.size()) break;
      const auto& [left, right] = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(std::move(symbols[i]));
          ++i;
        }
      }
      symbols = std::move(next);
    }
    return symbols;
  }

  std::vector<int> encode_word(std::string_view word) const {
    std::vector<int> ids;
    for (const auto& s : segment(word)) ids.push_back(token_id(s).value_or(kUnkId));
    return ids;
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["specials"] = specials_;
    OrderedJson vocab = OrderedJson::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) vocab[tokens_[i]] = i;
    j["vocab"] = std::move(vocab);
    OrderedJson merges = OrderedJson::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    j["merges"] = std::move(merges);
    return j;
  }

  static BpeModel from_json(const Json& j) {
    BpeModel m;
    m.tokens_.clear();
    m.vocab_.clear();
    m.specials_ = j.at("specials").get<std::vector<std::string>>();
    const auto& vocab = j.at("vocab");
    m.tokens_.resize(vocab.size());
    for (auto it = vocab.begin(); it != vocab.end(); ++it) {
      const auto id = it.value().get<std::size_t>();
      if (id >= m.tokens_.size()) fail(ErrorKind::MalformedRecord, "tokenizer vocab ids not dense");
      m.tokens_[id] = it.key();
      m.vocab_[it.key()] = static_cast<int>(id);
    }
    for (std::size_t i = 0; i < m.specials_.size(); ++i)
      if (m.token_id(m.specials_[i]) != static_cast<int>(i))
        fail(ErrorKind::MalformedRecord, "tokenizer specials must occupy the lowest ids");
    for (const auto& pair : j.at("merges")) m.add_merge(pair.at(0).get<std::string>(), pair.at(1).get<std::string>(), false);
    return m;
  }

 private:
  friend BpeModel train_bpe(std::span<const std::vector<std::string>>, std::size_t);

  void reset_specials() {
    specials_ = {std::string(kPadToken), std::string(kUnkToken), std::string(kChildToken),
                 std::string(kCaregiverToken)};
    tokens_.clear();
    vocab_.clear();
    for (const auto& s : specials_) add_token(s);
  }

  void add_token(const std::string& token) {
    if (vocab_.count(token)) return;
    vocab_[token] = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
  }

  void add_merge(const std::string& a, const std::string& b, bool extend_vocab) {
    merge_rank_[{a, b}] = merges_.size();
    merges_.emplace_back(a, b);
    if (extend_vocab) add_token(a + b);
  }

  std::vector<std::string> specials_;
  std::vector<std::string> tokens_;
  std::map<std::string, int> vocab_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
};

/// Standard BPE: characters plus an end-of-word symbol, repeatedly merging
/// the most frequent adjacent pair (ties: lexicographically smallest pair)
/// until the vocabulary reaches `vocab_size` or no pair occurs twice. If the
/// character inventory alone exceeds `vocab_size`, a characters-only model
/// is returned.
inline BpeModel train_bpe(std::span<const std::vector<std::string>> corpus,
                          std::size_t vocab_size = kDefaultBpeVocabSize) {
  std::map<std::string, std::int64_t> word_counts;
  for (const auto& tokens : corpus)
    for (const auto& w : tokens)
      if (!w.empty() && w != kUnintelligiblePlaceholder) ++word_counts[w];
  if (word_counts.empty()) fail(ErrorKind::EmptyCorpus, "BPE training corpus has no words");

  BpeModel model;
  std::vector<std::string> symbols;  // symbol id -> string
  std::map<std::string, int> symbol_ids;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = symbol_ids.try_emplace(s, static_cast<int>(symbols.size()));
    if (inserted) symbols.push_back(s);
    return it->second;
  };

  std::vector<std::vector<int>> segs;
  std::vector<std::int64_t> freqs;
  std::set<std::string> alphabet;
  for (const auto& [word, count] : word_counts) {
    std::vector<int> seg;
    for (auto& c : detail::utf8_chars(word)) {
      alphabet.insert(c);
      seg.push_back(intern(c));
    }
    seg.push_back(intern(std::string(kEndOfWord)));
    segs.push_back(std::move(seg));
    freqs.push_back(count);
  }
  alphabet.insert(std::string(kEndOfWord));
  for (const auto& c : alphabet) model.add_token(c);

  using Pair = std::pair<int, int>;
  struct PairOrder {
    const std::vector<std::string>* symbols;
    bool operator()(const std::pair<std::int64_t, Pair>& a, const std::pair<std::int64_t, Pair>& b) const {
      if (a.first != b.first) return a.first > b.first;
      const auto& s = *symbols;
      if (s[a.second.first] != s[b.second.first]) return s[a.second.first] < s[b.second.first];
      return s[a.second.second] < s[b.second.second];
    }
  };
  std::map<Pair, std::int64_t> pair_counts;
  std::map<Pair, std::set<std::size_t>> pair_words;
  std::set<std::pair<std::int64_t, Pair>, PairOrder> ranked(PairOrder{&symbols});

  auto adjust = [&](const Pair& p, std::int64_t delta) {
    auto it = pair_counts.find(p);
    std::int64_t count = 0;
    if (it != pair_counts.end()) {
      count = it->second;
      ranked.erase({count, p});
    }
    count += delta;
    if (count > 0) {
      pair_counts[p] = count;
      ranked.insert({count, p});
    } else if (it != pair_counts.end()) {
      pair_counts.erase(it);
    }
  };
  auto add_word = [&](std::size_t w, std::int64_t sign) {
    const auto& seg = segs[w];
    for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
      const Pair p{seg[i], seg[i + 1]};
      adjust(p, sign * freqs[w]);
      if (sign > 0)
        pair_words[p].insert(w);
      else if (auto it = pair_words.find(p); it != pair_words.end())
        it->second.erase(w);
    }
  };
  for (std::size_t w = 0; w < segs.size(); ++w) add_word(w, +1);

  while (model.vocab_size() < vocab_size && !ranked.empty()) {
    const auto [count, best] = *ranked.begin();
    if (count < 2) break;
    const std::string left = symbols[best.first];
    const std::string right = symbols[best.second];
    const int merged = intern(left + right);
    model.add_merge(left, right, true);

    const std::set<std::size_t> affected = pair_words[best];
    for (std::size_t w : affected) {
      add_word(w, -1);
      std::vector<int> next;
      const auto& seg = segs[w];
      for (std::size_t i = 0; i < seg.size();) {
        if (i + 1 < seg.size() && seg[i] == best.first && seg[i + 1] == best.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(seg[i]);
          ++i;
        }
      }
      segs[w] = std::move(next);
      add_word(w, +1);
    }
    pair_words.erase(best);
  }
  return model;
}

inline int speaker_token_id(const SpeakerRole& s) { return s.is_child() ? kChildId : kCaregiverId; }

inline void append_utterance(const BpeModel& bpe, const SpeakerRole& speaker,
                             std::span<const std::string> tokens, std::vector<int>& out) {
  out.push_back(speaker_token_id(speaker));
  for (const auto& w : tokens) {
    if (w == kUnintelligiblePlaceholder) {
      out.push_back(kUnkId);
      continue;
    }
    for (int id : bpe.encode_word(w)) out.push_back(id);
  }
}

/// Token ids for the last `max_context` context turns followed by the
/// target, each utterance prefixed by its speaker token. Every non-child
/// speaker encodes as [CAR].
inline std::vector<int> encode_item(const AnnotationItem& item, const BpeModel& bpe,
                                    std::size_t max_context = std::numeric_limits<std::size_t>::max()) {
  std::vector<int> out;
  const std::size_t n = std::min(max_context, item.context.size());
  for (std::size_t i = item.context.size() - n; i < item.context.size(); ++i)
    append_utterance(bpe, item.context[i].speaker, item.context[i].tokens, out);
  append_utterance(bpe, item.target.speaker, item.target.tokens, out);
  return out;
}

/// Word lists (targets and context turns) used to train a tokenizer.
inline std::vector<std::vector<std::string>> tokenizer_corpus(std::span<const AnnotationItem> items) {
  std::vector<std::vector<std::string>> out;
  for (const auto& item : items) {
    for (const auto& turn : item.context) out.push_back(turn.tokens);
    out.push_back(item.target.tokens);
  }
  return out;
}

/// Every utterance of the transcripts except the listed annotated items.
inline std::vector<std::vector<std::string>> tokenizer_corpus(std::span<const Transcript> transcripts,
                                                              const std::set<std::string>& exclude_item_ids) {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : transcripts)
    for (const auto& u : t.utterances)
      if (!exclude_item_ids.count(make_item_id(t.transcript_id, u.index))) out.push_back(u.tokens);
  return out;
}

}  // namespace gramscope
