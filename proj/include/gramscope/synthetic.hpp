#pragma once

// Seeded generators for corpora with known labels: planted grammatical
// errors, context-dependent ellipsis, and age-trend observations.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gramscope/chat.hpp"
#include "gramscope/corpus.hpp"
#include "gramscope/error.hpp"
#include "gramscope/rng.hpp"
#include "gramscope/schema.hpp"
#include "gramscope/trends.hpp"

namespace gramscope {

enum class SyntheticMode { Planted, Context };

constexpr std::string_view to_string(SyntheticMode m) { return m == SyntheticMode::Planted ? "planted" : "context"; }

inline SyntheticMode parse_synthetic_mode(std::string_view s) {
  if (s == "planted") return SyntheticMode::Planted;
  if (s == "context") return SyntheticMode::Context;
  fail(ErrorKind::Usage, "unknown synthetic mode '" + std::string(s) + "'");
}

struct SyntheticConfig {
  SyntheticMode mode = SyntheticMode::Planted;
  std::size_t n_items = 10000;
  std::size_t items_per_transcript = 50;
  // Per-category planting rates; their sum is the ungrammatical share.
  std::map<ErrorCategory, double> planting = {{ErrorCategory::Determiner, 0.10},
                                              {ErrorCategory::Subject, 0.10},
                                              {ErrorCategory::SvAgreement, 0.10}};
  double ambiguous_rate = 0.15;
  // Context mode: share of child turns that are bare noun phrases.
  double ellipsis_rate = 0.50;
  double label_noise = 0.03;
  std::string corpus = "synthetic";
  std::uint64_t seed = 0;

  void validate() const {
    if (n_items == 0 || items_per_transcript == 0) fail(ErrorKind::Usage, "item counts must be positive");
    double total = ambiguous_rate;
    for (const auto& [c, r] : planting) {
      if (c != ErrorCategory::Determiner && c != ErrorCategory::Subject && c != ErrorCategory::SvAgreement)
        fail(ErrorKind::Usage, "no planting rule for category " + std::string(to_string(c)));
      if (r < 0.0) fail(ErrorKind::Usage, "planting rates must be non-negative");
      total += r;
    }
    if (total > 1.0 + 1e-12) fail(ErrorKind::Usage, "planting and ambiguous rates exceed 1");
    if (!(label_noise >= 0.0 && label_noise < 1.0)) fail(ErrorKind::Usage, "label noise must lie in [0,1)");
    if (!(ellipsis_rate >= 0.0 && ellipsis_rate <= 1.0)) fail(ErrorKind::Usage, "ellipsis rate must lie in [0,1]");
  }

  OrderedJson to_json() const {
    OrderedJson j;
    j["mode"] = to_string(mode);
    j["n_items"] = n_items;
    j["items_per_transcript"] = items_per_transcript;
    OrderedJson p = OrderedJson::object();
    for (const auto& [c, r] : planting) p[std::string(to_string(c))] = r;
    j["planting"] = std::move(p);
    j["ambiguous_rate"] = ambiguous_rate;
    j["ellipsis_rate"] = ellipsis_rate;
    j["label_noise"] = label_noise;
    j["corpus"] = corpus;
    j["seed"] = seed;
    return j;
  }
};

struct SyntheticCorpus {
  std::vector<Transcript> transcripts;
  std::vector<AnnotationItem> items;
  std::vector<GoldAnnotation> gold;
};

namespace detail {

struct Lexicon {
  std::vector<std::string> subjects_plain = {"i", "you", "we", "they"};
  std::vector<std::string> subjects_third = {"he", "she", "mommy", "daddy"};
  std::vector<std::pair<std::string, std::string>> verbs = {
      {"want", "wants"}, {"like", "likes"}, {"see", "sees"},   {"have", "has"},
      {"need", "needs"}, {"get", "gets"},   {"eat", "eats"},   {"push", "pushes"}};
  std::vector<std::string> determiners = {"the", "a", "my", "that"};
  std::vector<std::string> adjectives = {"big", "red", "little", "blue"};
  std::vector<std::string> nouns = {"ball", "dog", "cookie", "car", "book", "truck", "apple", "cat", "baby", "cup"};
  std::vector<std::string> tails = {"now", "please", "too"};
  std::vector<std::string> questions = {"what do you want", "what do you see", "which one do you like",
                                        "what is that"};
  std::vector<std::string> statements = {"i am tired", "let us go outside", "that is funny",
                                         "we played yesterday"};
  std::vector<std::string> fillers = {"okay", "oh look", "come here", "good job", "alright then", "mhm"};
  std::vector<std::string> chatter = {"do you want the ball",  "look at the dog", "can you see it",
                                      "where is the truck",    "that is nice",    "what are you doing",
                                      "shall we read the book", "be careful"};
};

inline const Lexicon& lexicon() {
  static const Lexicon lex;
  return lex;
}

template <typename T>
const T& choose(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

// A fragment (`standalone`) always has at least two tokens.
inline std::vector<std::string> noun_phrase(Rng& rng, bool with_determiner, bool standalone) {
  const auto& lex = lexicon();
  std::vector<std::string> np;
  if (with_determiner) np.push_back(choose(rng, lex.determiners));
  if (rng.bernoulli(standalone && !with_determiner ? 1.0 : 0.3)) np.push_back(choose(rng, lex.adjectives));
  np.push_back(choose(rng, lex.nouns));
  return np;
}

struct Sentence {
  std::vector<std::string> tokens;
  Label label = Label::Grammatical;
  CategorySet categories;
};

inline Sentence full_sentence(Rng& rng, std::optional<ErrorCategory> error) {
  const auto& lex = lexicon();
  const bool third = rng.bernoulli(0.5);
  const auto& subject = choose(rng, third ? lex.subjects_third : lex.subjects_plain);
  const auto& verb = choose(rng, lex.verbs);
  bool agree = true;
  bool drop_subject = false;
  bool drop_det = false;
  if (error == ErrorCategory::SvAgreement) agree = false;
  if (error == ErrorCategory::Subject) drop_subject = true;
  if (error == ErrorCategory::Determiner) drop_det = true;

  Sentence s;
  if (!drop_subject) s.tokens.push_back(subject);
  s.tokens.push_back((third == agree) ? verb.second : verb.first);
  for (auto& w : noun_phrase(rng, !drop_det, false)) s.tokens.push_back(std::move(w));
  if (rng.bernoulli(0.2)) s.tokens.push_back(choose(rng, lex.tails));
  if (error) {
    s.label = Label::Ungrammatical;
    s.categories.insert(*error);
  }
  return s;
}

inline std::optional<ErrorCategory> draw_error(Rng& rng, const std::map<ErrorCategory, double>& planting,
                                               double scale) {
  double u = rng.uniform();
  for (const auto& [c, r] : planting) {
    if (u < r * scale) return c;
    u -= r * scale;
  }
  return std::nullopt;
}

inline void apply_noise(Rng& rng, Sentence& s, double noise) {
  if (!rng.bernoulli(noise)) return;
  const int shift = 1 + static_cast<int>(rng.below(2));
  s.label = label_from_code((ordinal_code(s.label) + shift) % 3);
  s.categories.clear();
  if (s.label == Label::Ungrammatical) s.categories.insert(ErrorCategory::Other);
}

inline Utterance make_utterance(std::size_t index, std::string_view code, const std::vector<std::string>& tokens,
                                Terminator term) {
  Utterance u;
  u.index = index;
  u.speaker = make_speaker(code);
  u.tokens = tokens;
  u.raw_text = join(tokens) + (term == Terminator::Question ? " ?" : " .");
  u.terminator = term;
  u.is_intelligible = !tokens.empty();
  return u;
}

inline std::string transcript_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04zu", i);
  return buf;
}

}  // namespace detail

/// Generates transcripts of alternating caregiver / child turns with a
/// known label for every child turn. Items carry 10 turns of context and
/// are cut into chunks of 200.
inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto& lex = detail::lexicon();
  Rng rng(mix_seed(cfg.seed, 0x5717));
  SyntheticCorpus out;
  std::map<std::string, GoldAnnotation> gold_by_id;

  std::size_t remaining = cfg.n_items;
  for (std::size_t t = 0; remaining > 0; ++t) {
    Transcript tr;
    tr.corpus = cfg.corpus;
    tr.transcript_id = cfg.corpus + "/" + detail::transcript_stem(t);
    const double age = rng.uniform(24.0, 60.0);
    const int whole = static_cast<int>(std::floor(age));
    tr.child_age = AgeSpec{whole / 12, whole % 12, static_cast<int>(rng.below(30))};

    const std::size_t n_child = std::min(remaining, cfg.items_per_transcript);
    remaining -= n_child;
    for (std::size_t k = 0; k < n_child; ++k) {
      detail::Sentence s;
      std::string prompt;
      bool question = false;
      if (cfg.mode == SyntheticMode::Planted) {
        prompt = detail::choose(rng, lex.chatter);
        question = prompt.rfind("do ", 0) == 0 || prompt.rfind("can ", 0) == 0 || prompt.rfind("wh", 0) == 0 ||
                   prompt.rfind("shall ", 0) == 0;
        const double u = rng.uniform();
        if (u < cfg.ambiguous_rate) {
          s.tokens = detail::noun_phrase(rng, rng.bernoulli(0.5), true);
          s.label = Label::Ambiguous;
        } else {
          // Conditional rates so the overall shares match the configuration.
          s = detail::full_sentence(rng, detail::draw_error(rng, cfg.planting, 1.0 / (1.0 - cfg.ambiguous_rate)));
        }
      } else {
        question = rng.bernoulli(0.5);
        prompt = detail::choose(rng, question ? lex.questions : lex.statements);
        if (rng.bernoulli(cfg.ellipsis_rate)) {
          s.tokens = detail::noun_phrase(rng, true, true);
          s.label = question ? Label::Grammatical : Label::Ambiguous;
        } else {
          // Planting rates apply to full sentences only in this mode.
          s = detail::full_sentence(rng, detail::draw_error(rng, cfg.planting, 1.0));
        }
      }
      detail::apply_noise(rng, s, cfg.label_noise);

      const std::string adult = rng.bernoulli(0.5) ? "MOT" : "FAT";
      // Context mode: a neutral caregiver turn precedes the prompt, so the two
      // nearest turns are the filler and the question or statement.
      if (cfg.mode == SyntheticMode::Context)
        tr.utterances.push_back(detail::make_utterance(tr.utterances.size(), adult,
                                                       split_whitespace(detail::choose(rng, lex.fillers)),
                                                       Terminator::Period));
      tr.utterances.push_back(detail::make_utterance(tr.utterances.size(), adult, split_whitespace(prompt),
                                                     question ? Terminator::Question : Terminator::Period));
      tr.utterances.push_back(
          detail::make_utterance(tr.utterances.size(), "CHI", s.tokens, Terminator::Period));
      const auto id = make_item_id(tr.transcript_id, tr.utterances.back().index);
      gold_by_id[id] = GoldAnnotation{id, s.label, s.categories, std::nullopt};
    }
    out.transcripts.push_back(std::move(tr));
  }

  out.items = flatten(build_chunks(out.transcripts, kDefaultChunkSize, 10));
  for (const auto& item : out.items) out.gold.push_back(gold_by_id.at(item.item_id));
  return out;
}

struct TrendSimConfig {
  std::size_t n_transcripts = 200;
  std::size_t per_transcript = 250;
  double age_lo = 24.0;
  double age_hi = 60.0;
  double intercept = -0.5;
  double beta = 0.014;
  double random_intercept_sd = 0.1;
  std::uint64_t seed = 0;
};

/// Utterance-level outcomes from a random-intercept logistic model: each
/// transcript has one age and its own intercept shift.
inline std::vector<TrendObservation> simulate_trend_observations(const TrendSimConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x7e4d));
  std::vector<TrendObservation> out;
  out.reserve(cfg.n_transcripts * cfg.per_transcript);
  for (std::size_t t = 0; t < cfg.n_transcripts; ++t) {
    const std::string id = "sim/" + std::to_string(t);
    const double age = rng.uniform(cfg.age_lo, cfg.age_hi);
    const double eta = cfg.intercept + cfg.beta * age + cfg.random_intercept_sd * rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-eta));
    for (std::size_t i = 0; i < cfg.per_transcript; ++i) out.push_back({id, age, rng.bernoulli(p)});
  }
  return out;
}

}  // namespace gramscope
