#pragma once

// CHAT (.cha) transcript ingestion: header/tier parsing, participant roles,
// child age, and main-tier cleaning into surface word tokens.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gramscope/error.hpp"
#include "gramscope/io.hpp"

namespace gramscope {

enum class SpeakerCode { Child, Caregiver, OtherAdult, OtherChild, Unknown };

struct SpeakerRole {
  SpeakerCode code = SpeakerCode::Unknown;
  std::string raw_tier;  // CHAT participant code, e.g. "MOT"

  bool is_child() const { return code == SpeakerCode::Child; }
  friend bool operator==(const SpeakerRole&, const SpeakerRole&) = default;
};

inline SpeakerCode classify_participant(std::string_view code) {
  static const std::map<std::string_view, SpeakerCode> table = {
      {"CHI", SpeakerCode::Child},      {"MOT", SpeakerCode::Caregiver},
      {"FAT", SpeakerCode::Caregiver},  {"GRA", SpeakerCode::Caregiver},
      {"GRF", SpeakerCode::Caregiver},  {"GRM", SpeakerCode::Caregiver},
      {"INV", SpeakerCode::OtherAdult}, {"EXP", SpeakerCode::OtherAdult},
      {"OBS", SpeakerCode::OtherAdult}, {"ADU", SpeakerCode::OtherAdult},
      {"TEA", SpeakerCode::OtherAdult}, {"AUN", SpeakerCode::OtherAdult},
      {"UNC", SpeakerCode::OtherAdult}, {"CAR", SpeakerCode::OtherAdult},
      {"NUR", SpeakerCode::OtherAdult}, {"BAB", SpeakerCode::OtherAdult},
      {"SIS", SpeakerCode::OtherChild}, {"BRO", SpeakerCode::OtherChild},
      {"SIB", SpeakerCode::OtherChild}, {"COU", SpeakerCode::OtherChild},
      {"PLA", SpeakerCode::OtherChild}, {"FRI", SpeakerCode::OtherChild},
      {"MAT", SpeakerCode::OtherChild}, {"CHD", SpeakerCode::OtherChild},
  };
  auto it = table.find(code);
  return it == table.end() ? SpeakerCode::Unknown : it->second;
}

inline SpeakerRole make_speaker(std::string_view raw_tier) {
  return SpeakerRole{classify_participant(raw_tier), std::string(raw_tier)};
}

constexpr std::string_view to_string(SpeakerCode code) {
  switch (code) {
    case SpeakerCode::Child: return "child";
    case SpeakerCode::Caregiver: return "caregiver";
    case SpeakerCode::OtherAdult: return "other_adult";
    case SpeakerCode::OtherChild: return "other_child";
    case SpeakerCode::Unknown: return "unknown";
  }
  return "unknown";
}

inline SpeakerCode speaker_code_from_string(std::string_view s) {
  for (auto c : {SpeakerCode::Child, SpeakerCode::Caregiver, SpeakerCode::OtherAdult,
                 SpeakerCode::OtherChild, SpeakerCode::Unknown})
    if (to_string(c) == s) return c;
  fail(ErrorKind::MalformedRecord, "unknown speaker role '" + std::string(s) + "'");
}

struct AgeSpec {
  int years = 0;
  int months = 0;
  int days = 0;

  double total_months() const { return 12.0 * years + months + days / 30.4375; }
  friend bool operator==(const AgeSpec&, const AgeSpec&) = default;
};

/// Accepts "Y;MM.DD", "Y;MM" and "Y". A trailing separator with an empty
/// field ("2;06." or "3;"), which CHILDES headers use routinely, counts as
/// the field being absent.
inline AgeSpec parse_age(std::string_view text) {
  auto bad = [&]() -> AgeSpec {
    fail(ErrorKind::MalformedAge, "malformed CHAT age '" + std::string(text) + "'");
  };
  std::size_t pos = 0;
  auto read_int = [&](std::size_t max_digits) -> std::optional<int> {
    std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) return std::nullopt;
    if (pos - start > max_digits) bad();
    return std::stoi(std::string(text.substr(start, pos - start)));
  };

  AgeSpec age;
  auto years = read_int(3);
  if (!years) bad();
  age.years = *years;
  if (pos < text.size()) {
    if (text[pos] != ';') bad();
    ++pos;
    if (auto months = read_int(2)) {
      age.months = *months;
      if (pos < text.size()) {
        if (text[pos] != '.') bad();
        ++pos;
        if (auto days = read_int(2)) age.days = *days;
      }
    }
  }
  if (pos != text.size()) bad();
  if (age.months > 11 || age.days > 30) bad();
  return age;
}

inline std::string format_age(const AgeSpec& age) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%d;%02d.%02d", age.years, age.months, age.days);
  return buf;
}

enum class Terminator { Period, Question, Exclamation, TrailingOff, Interruption, Other };

constexpr std::string_view to_string(Terminator t) {
  switch (t) {
    case Terminator::Period: return "period";
    case Terminator::Question: return "question";
    case Terminator::Exclamation: return "exclamation";
    case Terminator::TrailingOff: return "trailing_off";
    case Terminator::Interruption: return "interruption";
    case Terminator::Other: return "other";
  }
  return "other";
}

inline Terminator terminator_from_string(std::string_view s) {
  for (auto t : {Terminator::Period, Terminator::Question, Terminator::Exclamation,
                 Terminator::TrailingOff, Terminator::Interruption, Terminator::Other})
    if (to_string(t) == s) return t;
  fail(ErrorKind::MalformedRecord, "unknown terminator '" + std::string(s) + "'");
}

struct Utterance {
  std::size_t index = 0;
  SpeakerRole speaker;
  std::string raw_text;
  std::vector<std::string> tokens;
  bool is_intelligible = true;
  Terminator terminator = Terminator::Other;
};

struct Transcript {
  std::string transcript_id;
  std::string corpus;
  std::optional<AgeSpec> child_age;
  std::vector<Utterance> utterances;
  std::vector<std::string> parse_warnings;

  std::optional<double> child_age_months() const {
    if (!child_age) return std::nullopt;
    return child_age->total_months();
  }
};

/// Cleaning switches. Defaults keep retraced material and apply "[: x]"
/// replacements.
struct CleaningPolicy {
  bool keep_retraced = true;
  bool apply_replacements = true;
};

struct CleanedUtterance {
  std::vector<std::string> tokens;
  bool is_intelligible = true;
  Terminator terminator = Terminator::Other;
};

namespace detail {

enum class LexKind { Word, Open, Close, Code };

struct Lexeme {
  LexKind kind;
  std::string text;
};

inline std::vector<Lexeme> lex_main_tier(std::string_view raw) {
  std::vector<Lexeme> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back({LexKind::Word, std::move(word)});
    word.clear();
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '\x15') {  // media bullet: skip to the closing bullet
      flush();
      const std::size_t close = raw.find('\x15', i + 1);
      i = close == std::string_view::npos ? raw.size() : close;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == '[') {
      flush();
      const std::size_t close = raw.find(']', i + 1);
      const std::size_t end = close == std::string_view::npos ? raw.size() : close;
      out.push_back({LexKind::Code, std::string(raw.substr(i + 1, end - i - 1))});
      i = end;
    } else if (c == ']') {
      flush();
    } else if (c == '<') {
      flush();
      out.push_back({LexKind::Open, {}});
    } else if (c == '>') {
      flush();
      out.push_back({LexKind::Close, {}});
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

inline std::optional<Terminator> terminator_of(std::string_view w) {
  if (w == ".") return Terminator::Period;
  if (w == "?") return Terminator::Question;
  if (w == "!") return Terminator::Exclamation;
  if (w == "+..." || w == "+..?") return Terminator::TrailingOff;
  if (w == "+/." || w == "+/?" || w == "+//." || w == "+//?") return Terminator::Interruption;
  if (w.size() > 1 && w[0] == '+' &&
      (w.back() == '.' || w.back() == '?' || w.back() == '!'))
    return Terminator::Other;
  return std::nullopt;
}

inline bool is_unintelligible_marker(std::string_view w) {
  return w == "xxx" || w == "yyy" || w == "www";
}

inline std::string trim_punctuation(std::string w) {
  static constexpr std::string_view ascii = ",;.?!\"";
  // UTF-8 CHAT separators: tag marker and vocative marker.
  static constexpr std::array<std::string_view, 2> multibyte = {"\xE2\x80\x9E", "\xE2\x80\xA1"};
  bool changed = true;
  while (changed && !w.empty()) {
    changed = false;
    if (ascii.find(w.front()) != std::string_view::npos) {
      w.erase(0, 1);
      changed = true;
    } else if (ascii.find(w.back()) != std::string_view::npos) {
      w.pop_back();
      changed = true;
    } else {
      for (auto mb : multibyte) {
        if (w.starts_with(mb)) {
          w.erase(0, mb.size());
          changed = true;
        } else if (w.ends_with(mb)) {
          w.erase(w.size() - mb.size());
          changed = true;
        }
      }
    }
  }
  return w;
}

inline bool is_dropped_form(std::string_view w) {
  if (w.empty()) return true;
  if (w[0] == '&' || w[0] == '+') return true;
  if (w[0] == '0' && w.size() > 1 && std::isalpha(static_cast<unsigned char>(w[1]))) return true;
  return is_unintelligible_marker(w);
}

// Returns the surface form of one CHAT word or an empty string if the word
// carries no spoken material.
inline std::string clean_word(std::string_view raw) {
  if (is_dropped_form(raw)) return {};
  std::string w(raw);
  if (auto at = w.find('@'); at != std::string::npos) w.erase(at);
  std::erase_if(w, [](char c) {
    return c == '(' || c == ')' || c == ':' || c == '^' || c == '&' || c == '<' || c == '>' ||
           c == '[' || c == ']' || c == '@';
  });
  w = trim_punctuation(std::move(w));
  if (is_dropped_form(w)) return {};
  return w;
}

}  // namespace detail

/// Turns one main-tier payload into surface tokens. Replacements "[: x]"
/// substitute the preceding word or <group>; other bracketed codes and
/// &-prefixed events/fillers are removed; retrace markers are removed while
/// the retraced words are kept.
inline CleanedUtterance clean_utterance(std::string_view raw, const CleaningPolicy& policy = {}) {
  using detail::LexKind;
  using Unit = std::vector<std::string>;

  CleanedUtterance result;
  bool saw_unintelligible = false;
  std::vector<std::vector<Unit>> stack(1);

  for (auto& lx : detail::lex_main_tier(raw)) {
    switch (lx.kind) {
      case LexKind::Open:
        stack.emplace_back();
        break;
      case LexKind::Close:
        if (stack.size() > 1) {
          Unit merged;
          for (auto& unit : stack.back()) merged.insert(merged.end(), unit.begin(), unit.end());
          stack.pop_back();
          stack.back().push_back(std::move(merged));
        }
        break;
      case LexKind::Word:
        if (auto t = detail::terminator_of(lx.text)) {
          result.terminator = *t;
          break;
        }
        if (detail::is_unintelligible_marker(lx.text.substr(0, lx.text.find('@'))))
          saw_unintelligible = true;
        stack.back().push_back(Unit{lx.text});
        break;
      case LexKind::Code: {
        auto& units = stack.back();
        const std::string_view code = lx.text;
        const bool replacement =
            code.starts_with(':') && (code.size() == 1 || code[1] == ' ' || code[1] == ':');
        const bool retrace = code == "/" || code == "//" || code == "///" || code == "/-" ||
                             code == "/?";
        if (replacement && policy.apply_replacements && !units.empty()) {
          const std::size_t start = code.find_first_not_of(':');
          units.back() = split_whitespace(start == std::string_view::npos ? "" : code.substr(start));
          for (auto& w : units.back())
            if (detail::is_unintelligible_marker(w)) saw_unintelligible = true;
        } else if (retrace && !policy.keep_retraced && !units.empty()) {
          units.pop_back();
        }
        break;
      }
    }
  }

  for (auto& level : stack)
    for (auto& unit : level)
      for (auto& word : unit) {
        std::string cleaned = detail::clean_word(word);
        if (!cleaned.empty()) result.tokens.push_back(std::move(cleaned));
      }

  result.is_intelligible = !saw_unintelligible && !result.tokens.empty();
  return result;
}

namespace detail {

inline bool valid_participant_code(std::string_view code) {
  if (code.empty()) return false;
  return std::all_of(code.begin(), code.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Parses CHAT text. `corpus` and `stem` seed the transcript id; if `corpus`
/// is empty the corpus name from the @ID headers is used.
inline Transcript parse_chat_text(std::string_view text, std::string_view stem,
                                  std::string_view corpus = {}, const CleaningPolicy& policy = {}) {
  struct Logical {
    std::size_t line_no;
    std::string text;
  };
  std::vector<Logical> logical;
  std::size_t line_no = 0;
  for (auto& line : split_lines(text)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!line.empty() && line[0] == '\t' && !logical.empty()) {
      logical.back().text += ' ';
      logical.back().text += detail::trim(line);
    } else if (!detail::trim(line).empty()) {
      logical.push_back({line_no, line});
    }
  }

  Transcript t;
  std::string id_corpus;
  for (const auto& entry : logical) {
    const std::string_view line = entry.text;
    if (line.starts_with("@ID:")) {
      auto fields = detail::split_fields(detail::trim(line.substr(4)), '|');
      if (fields.size() > 1 && id_corpus.empty()) id_corpus = std::string(detail::trim(fields[1]));
      if (fields.size() > 3 && detail::trim(fields[2]) == "CHI") {
        id_corpus = std::string(detail::trim(fields[1]));
        const auto age_text = detail::trim(fields[3]);
        if (!age_text.empty()) {
          try {
            t.child_age = parse_age(age_text);
          } catch (const Error& e) {
            t.parse_warnings.push_back("line " + std::to_string(entry.line_no) + ": " + e.what());
          }
        }
      }
    } else if (line.starts_with("*")) {
      const std::size_t colon = line.find(':');
      const std::string_view code =
          colon == std::string_view::npos ? std::string_view{} : line.substr(1, colon - 1);
      if (!detail::valid_participant_code(code)) {
        t.parse_warnings.push_back("line " + std::to_string(entry.line_no) +
                                   ": MalformedTier: main tier without CODE: prefix");
        continue;
      }
      Utterance u;
      u.index = t.utterances.size();
      u.speaker = make_speaker(code);
      u.raw_text = std::string(detail::trim(line.substr(colon + 1)));
      auto cleaned = clean_utterance(u.raw_text, policy);
      u.tokens = std::move(cleaned.tokens);
      u.is_intelligible = cleaned.is_intelligible;
      u.terminator = cleaned.terminator;
      t.utterances.push_back(std::move(u));
    }
    // '%' dependent tiers and other headers are not used.
  }

  t.corpus = !corpus.empty() ? std::string(corpus) : !id_corpus.empty() ? id_corpus : "unknown";
  t.transcript_id = t.corpus + "/" + std::string(stem);
  return t;
}

inline Transcript parse_chat_file(const std::filesystem::path& path, std::string_view corpus = {},
                                  const CleaningPolicy& policy = {}) {
  const std::string text = read_file(path);
  std::string fallback = corpus.empty() ? std::string{} : std::string(corpus);
  Transcript t = parse_chat_text(text, path.stem().string(), fallback, policy);
  if (t.corpus == "unknown" && path.has_parent_path()) {
    const auto parent = path.parent_path().filename().string();
    if (!parent.empty()) {
      t.corpus = parent;
      t.transcript_id = t.corpus + "/" + path.stem().string();
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Canonical corpus JSONL: one object per utterance.

inline OrderedJson utterance_record(const Transcript& t, const Utterance& u) {
  OrderedJson r;
  r["transcript_id"] = t.transcript_id;
  r["corpus"] = t.corpus;
  if (auto age = t.child_age_months())
    r["child_age_months"] = *age;
  else
    r["child_age_months"] = nullptr;
  r["utt_index"] = u.index;
  r["speaker_role"] = to_string(u.speaker.code);
  r["speaker_code"] = u.speaker.raw_tier;
  r["tokens"] = u.tokens;
  r["raw_text"] = u.raw_text;
  r["intelligible"] = u.is_intelligible;
  r["terminator"] = to_string(u.terminator);
  if (t.child_age) r["child_age"] = format_age(*t.child_age);
  return r;
}

inline std::string corpus_to_jsonl(const std::vector<Transcript>& transcripts) {
  JsonlWriter w;
  for (const auto& t : transcripts)
    for (const auto& u : t.utterances) w.add(utterance_record(t, u));
  return w.str();
}

/// Reads corpus JSONL back into transcripts, in order of first appearance.
inline std::vector<Transcript> load_corpus_jsonl(const std::filesystem::path& path) {
  std::vector<Transcript> out;
  std::map<std::string, std::size_t> index;
  for_each_jsonl(path, [&](const Json& r, std::size_t line) {
    try {
      const std::string id = r.at("transcript_id").get<std::string>();
      auto [it, inserted] = index.try_emplace(id, out.size());
      if (inserted) {
        Transcript t;
        t.transcript_id = id;
        t.corpus = r.at("corpus").get<std::string>();
        if (r.contains("child_age") && r["child_age"].is_string())
          t.child_age = parse_age(r["child_age"].get<std::string>());
        out.push_back(std::move(t));
      }
      Transcript& t = out[it->second];
      Utterance u;
      u.index = r.at("utt_index").get<std::size_t>();
      if (u.index != t.utterances.size())
        fail(ErrorKind::MalformedRecord, "utterance index gap in " + id);
      const auto code = r.value("speaker_code", std::string{});
      u.speaker = SpeakerRole{speaker_code_from_string(r.at("speaker_role").get<std::string>()),
                              code};
      u.tokens = r.at("tokens").get<std::vector<std::string>>();
      u.raw_text = r.value("raw_text", std::string{});
      u.is_intelligible = r.at("intelligible").get<bool>();
      u.terminator = terminator_from_string(r.value("terminator", std::string("other")));
      t.utterances.push_back(std::move(u));
    } catch (const Json::exception& e) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MalformedRecord &&
          std::string_view(e.what()).find(path.string()) != std::string_view::npos)
        throw;
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace gramscope
