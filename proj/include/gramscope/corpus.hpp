#pragma once

// Eligibility filtering, dialect screening, context windows and fixed-size
// annotation chunks.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gramscope/chat.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

inline constexpr std::string_view kUnintelligiblePlaceholder = "<unk-utt>";

struct ContextTurn {
  SpeakerRole speaker;
  std::vector<std::string> tokens;
};

struct AnnotationItem {
  std::string item_id;
  std::string transcript_id;
  std::optional<double> child_age_months;
  Utterance target;
  std::vector<ContextTurn> context;  // chronological, oldest first
  std::string chunk_id;
  bool chunk_partial = false;
};

struct Chunk {
  std::string chunk_id;
  std::vector<AnnotationItem> items;
  bool partial = false;
};

inline std::string make_item_id(std::string_view transcript_id, std::size_t utt_index) {
  return std::string(transcript_id) + ":" + std::to_string(utt_index);
}

inline bool is_eligible(const Utterance& u) {
  return u.speaker.is_child() && u.is_intelligible && u.tokens.size() >= 2;
}

inline std::vector<Utterance> filter_eligible(const Transcript& t) {
  std::vector<Utterance> out;
  for (const auto& u : t.utterances)
    if (is_eligible(u)) out.push_back(u);
  return out;
}

// ---------------------------------------------------------------------------
// Dialect screening

using Bigram = std::pair<std::string, std::string>;

inline std::vector<Bigram> default_dialect_bigrams() {
  return {{"she", "don't"}, {"he", "don't"}, {"it", "don't"},
          {"you", "was"},   {"we", "was"},   {"they", "was"}};
}

inline constexpr double kDefaultDialectThreshold = 5.0;

struct DialectScreenReport {
  std::string corpus;
  std::size_t caregiver_utterance_count = 0;
  std::size_t indicative_bigram_hits = 0;
  double rate_per_10k = 0.0;
  bool excluded = false;
};

namespace detail {
inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace detail

/// Counts indicative bigrams (case-insensitive) in caregiver speech across
/// one corpus' transcripts.
inline DialectScreenReport detect_dialect_divergence(std::span<const Transcript> corpus_transcripts,
                                                     std::span<const Bigram> bigrams,
                                                     double threshold = kDefaultDialectThreshold) {
  if (bigrams.empty()) fail(ErrorKind::Precondition, "dialect screen needs at least one bigram");
  std::set<Bigram> wanted;
  for (const auto& [a, b] : bigrams) wanted.emplace(detail::lowercase(a), detail::lowercase(b));

  DialectScreenReport report;
  if (!corpus_transcripts.empty()) report.corpus = corpus_transcripts.front().corpus;
  for (const auto& t : corpus_transcripts) {
    for (const auto& u : t.utterances) {
      if (u.speaker.code != SpeakerCode::Caregiver) continue;
      ++report.caregiver_utterance_count;
      for (std::size_t i = 0; i + 1 < u.tokens.size(); ++i)
        if (wanted.count({detail::lowercase(u.tokens[i]), detail::lowercase(u.tokens[i + 1])}))
          ++report.indicative_bigram_hits;
    }
  }
  report.rate_per_10k = 10000.0 * static_cast<double>(report.indicative_bigram_hits) /
                        static_cast<double>(std::max<std::size_t>(1, report.caregiver_utterance_count));
  report.excluded = report.rate_per_10k >= threshold;
  return report;
}

/// Screens every corpus in turn; reports come back in corpus-name order.
inline std::vector<DialectScreenReport> screen_corpora(std::span<const Transcript> transcripts,
                                                       std::span<const Bigram> bigrams,
                                                       double threshold = kDefaultDialectThreshold) {
  std::map<std::string, std::vector<Transcript>> by_corpus;
  for (const auto& t : transcripts) by_corpus[t.corpus].push_back(t);
  std::vector<DialectScreenReport> out;
  for (const auto& [name, group] : by_corpus) {
    auto r = detect_dialect_divergence(group, bigrams, threshold);
    r.corpus = name;
    out.push_back(std::move(r));
  }
  return out;
}

inline OrderedJson to_json(const DialectScreenReport& r) {
  OrderedJson j;
  j["corpus"] = r.corpus;
  j["caregiver_utterance_count"] = r.caregiver_utterance_count;
  j["indicative_bigram_hits"] = r.indicative_bigram_hits;
  j["rate_per_10k"] = r.rate_per_10k;
  j["excluded"] = r.excluded;
  return j;
}

// ---------------------------------------------------------------------------
// Context windows and chunks

/// The item for the child utterance at `target_index`, with up to
/// `n_context` preceding turns. Unintelligible turns stay in the window as a
/// placeholder token so turn adjacency is preserved.
inline AnnotationItem build_context_window(const Transcript& t, std::size_t target_index,
                                           std::size_t n_context) {
  if (target_index >= t.utterances.size())
    fail(ErrorKind::IndexOutOfRange, "target index " + std::to_string(target_index) +
                                         " outside transcript " + t.transcript_id);
  const Utterance& target = t.utterances[target_index];
  if (!is_eligible(target))
    fail(ErrorKind::Precondition, "utterance " + std::to_string(target_index) + " of " +
                                      t.transcript_id + " is not an eligible child utterance");

  AnnotationItem item;
  item.item_id = make_item_id(t.transcript_id, target.index);
  item.transcript_id = t.transcript_id;
  item.child_age_months = t.child_age_months();
  item.target = target;
  const std::size_t first = target_index - std::min(n_context, target_index);
  for (std::size_t i = first; i < target_index; ++i) {
    const Utterance& u = t.utterances[i];
    ContextTurn turn{u.speaker, u.tokens};
    if (!u.is_intelligible) turn.tokens = {std::string(kUnintelligiblePlaceholder)};
    item.context.push_back(std::move(turn));
  }
  return item;
}

inline constexpr std::size_t kDefaultChunkSize = 200;

inline std::string chunk_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "chunk-%03zu", index);
  return buf;
}

/// Concatenates eligible child utterances across transcripts (in order) and
/// cuts them into chunks of `chunk_size`; a short final chunk is flagged
/// partial. Context windows never cross transcript boundaries.
inline std::vector<Chunk> build_chunks(std::span<const Transcript> transcripts,
                                       std::size_t chunk_size = kDefaultChunkSize,
                                       std::size_t n_context = 10) {
  if (chunk_size == 0) fail(ErrorKind::Precondition, "chunk size must be positive");
  std::vector<Chunk> chunks;
  for (const auto& t : transcripts) {
    for (std::size_t i = 0; i < t.utterances.size(); ++i) {
      if (!is_eligible(t.utterances[i])) continue;
      if (chunks.empty() || chunks.back().items.size() == chunk_size) {
        chunks.push_back(Chunk{chunk_name(chunks.size()), {}, false});
      }
      AnnotationItem item = build_context_window(t, i, n_context);
      item.chunk_id = chunks.back().chunk_id;
      chunks.back().items.push_back(std::move(item));
    }
  }
  if (!chunks.empty() && chunks.back().items.size() < chunk_size) {
    chunks.back().partial = true;
    for (auto& item : chunks.back().items) item.chunk_partial = true;
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Items JSONL

inline OrderedJson to_json(const AnnotationItem& item) {
  OrderedJson r;
  r["item_id"] = item.item_id;
  r["transcript_id"] = item.transcript_id;
  if (item.child_age_months)
    r["child_age_months"] = *item.child_age_months;
  else
    r["child_age_months"] = nullptr;
  r["context"] = OrderedJson::array();
  for (const auto& turn : item.context) {
    OrderedJson c;
    c["role"] = to_string(turn.speaker.code);
    if (!turn.speaker.raw_tier.empty()) c["code"] = turn.speaker.raw_tier;
    c["text"] = join(turn.tokens);
    r["context"].push_back(std::move(c));
  }
  r["target_text"] = join(item.target.tokens);
  if (!item.chunk_id.empty()) {
    r["chunk_id"] = item.chunk_id;
    r["chunk_partial"] = item.chunk_partial;
  }
  return r;
}

inline AnnotationItem item_from_json(const Json& r) {
  AnnotationItem item;
  item.item_id = r.at("item_id").get<std::string>();
  item.transcript_id = r.at("transcript_id").get<std::string>();
  if (r.contains("child_age_months") && r["child_age_months"].is_number())
    item.child_age_months = r["child_age_months"].get<double>();
  for (const auto& c : r.at("context")) {
    ContextTurn turn;
    turn.speaker.code = speaker_code_from_string(c.at("role").get<std::string>());
    turn.speaker.raw_tier = c.value("code", std::string{});
    turn.tokens = split_whitespace(c.at("text").get<std::string>());
    item.context.push_back(std::move(turn));
  }
  item.target.speaker = SpeakerRole{SpeakerCode::Child, "CHI"};
  item.target.tokens = split_whitespace(r.at("target_text").get<std::string>());
  item.target.raw_text = r.at("target_text").get<std::string>();
  if (auto colon = item.item_id.rfind(':'); colon != std::string::npos) {
    try {
      item.target.index = std::stoul(item.item_id.substr(colon + 1));
    } catch (const std::exception&) {
      item.target.index = 0;
    }
  }
  item.chunk_id = r.value("chunk_id", std::string{});
  item.chunk_partial = r.value("chunk_partial", false);
  return item;
}

inline std::string items_to_jsonl(std::span<const AnnotationItem> items) {
  JsonlWriter w;
  for (const auto& item : items) w.add(to_json(item));
  return w.str();
}

inline std::vector<AnnotationItem> load_items_jsonl(const std::filesystem::path& path) {
  std::vector<AnnotationItem> out;
  for_each_jsonl(path, [&](const Json& r, std::size_t line) {
    try {
      out.push_back(item_from_json(r));
    } catch (const std::exception& e) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

inline std::vector<AnnotationItem> flatten(std::span<const Chunk> chunks) {
  std::vector<AnnotationItem> out;
  for (const auto& c : chunks) out.insert(out.end(), c.items.begin(), c.items.end());
  return out;
}

// ---------------------------------------------------------------------------
// Annotation sheets (TSV)

inline std::string render_speaker(const SpeakerRole& s) {
  if (!s.raw_tier.empty()) return s.raw_tier;
  return s.is_child() ? "CHI" : std::string(to_string(s.code));
}

inline std::string render_context(const AnnotationItem& item) {
  std::string out;
  for (std::size_t i = 0; i < item.context.size(); ++i) {
    if (i) out += " | ";
    out += render_speaker(item.context[i].speaker) + ": " + join(item.context[i].tokens);
  }
  return out;
}

inline constexpr std::string_view kSheetHeader = "item_id\tcontext\ttarget_utterance\tlabel\tcategories";

inline std::string annotation_sheet(const Chunk& chunk) {
  std::string out(kSheetHeader);
  out += '\n';
  for (const auto& item : chunk.items) {
    out += item.item_id + '\t' + render_context(item) + '\t' + join(item.target.tokens) + "\t\t\n";
  }
  return out;
}

inline void export_annotation_sheet(const Chunk& chunk, const std::filesystem::path& path) {
  write_file(path, annotation_sheet(chunk));
}

struct SheetRow {
  std::string item_id;
  std::optional<Label> label;
  CategorySet categories;
};

/// Reads a (possibly filled-in) sheet. Empty label cells stay unset;
/// categories are comma-separated ids.
inline std::vector<SheetRow> read_annotation_sheet(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty() || lines.front() != kSheetHeader)
    fail(ErrorKind::MalformedRecord, path.string() + ": missing annotation sheet header");
  std::vector<SheetRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cells = detail::split_fields(lines[i], '\t');
    if (cells.size() != 5)
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(i + 1) + ": expected 5 columns");
    SheetRow row;
    row.item_id = cells[0];
    const auto label = detail::trim(cells[3]);
    if (!label.empty()) row.label = parse_label(detail::lowercase(label));
    for (auto& c : detail::split_fields(cells[4], ',')) {
      const auto id = detail::trim(c);
      if (!id.empty()) row.categories.insert(parse_category(id));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gramscope
