#include <gtest/gtest.h>

#include "gramscope/pipeline.hpp"
#include "gramscope/rng.hpp"
#include "oracles.hpp"

using namespace gramscope;

namespace {

std::vector<std::vector<std::string>> repeat_word(const std::string& w, std::size_t n) {
  return {std::vector<std::string>(n, w)};
}

std::vector<std::string> random_words(Rng& rng, std::size_t n) {
  const std::string letters = "abcde";
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string w;
    const auto len = 1 + rng.below(5);
    for (std::size_t k = 0; k < len; ++k) w += letters[rng.below(letters.size())];
    out.push_back(w);
  }
  return out;
}

// Most frequent pair, ties broken by the lexicographically smallest pair.
std::pair<std::string, std::string> oracle_best_pair(const std::vector<std::string>& words) {
  const auto counts = oracle::char_pair_counts(words);
  std::pair<std::string, std::string> best;
  std::size_t best_count = 0;
  for (const auto& [p, c] : counts)
    if (c > best_count) {
      best = p;
      best_count = c;
    }
  return best;
}

}  // namespace

TEST(Bpe, SpecialTokensOccupyLowestIds) {
  const auto m = train_bpe(repeat_word("dog", 3), 50);
  EXPECT_EQ(m.token_id("[PAD]"), 0);
  EXPECT_EQ(m.token_id("[UNK]"), 1);
  EXPECT_EQ(m.token_id("[CHI]"), 2);
  EXPECT_EQ(m.token_id("[CAR]"), 3);
}

TEST(Bpe, FirstMergeIsMostFrequentPair) {
  const auto m = train_bpe(repeat_word("aaab", 100), 100);
  ASSERT_FALSE(m.merges().empty());
  EXPECT_EQ(m.merges()[0], (std::pair<std::string, std::string>{"a", "a"}));
  EXPECT_EQ(oracle_best_pair(std::vector<std::string>(100, "aaab")), m.merges()[0]);
}

TEST(Bpe, FirstMergeMatchesOracleOnRandomCorpora) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto words = random_words(rng, 300);
    const auto m = train_bpe(std::vector<std::vector<std::string>>{words}, 40);
    ASSERT_FALSE(m.merges().empty());
    EXPECT_EQ(m.merges()[0], oracle_best_pair(words)) << "seed " << seed;
  }
}

TEST(Bpe, VocabSmallerThanAlphabetKeepsCharacters) {
  const auto m = train_bpe(std::vector<std::vector<std::string>>{{"abcdef", "ghijkl", "abcdef"}}, 5);
  EXPECT_TRUE(m.merges().empty());
  EXPECT_EQ(m.vocab_size(), 4u + 12u + 1u);
  for (char c : std::string("abcdefghijkl")) EXPECT_TRUE(m.token_id(std::string(1, c)));
}

TEST(Bpe, VocabSizeRespected) {
  Rng rng(7);
  const auto words = random_words(rng, 2000);
  for (std::size_t size : {20u, 40u, 80u}) {
    const auto m = train_bpe(std::vector<std::vector<std::string>>{words}, size);
    EXPECT_LE(m.vocab_size(), std::max<std::size_t>(size, 4 + 6));
  }
}

TEST(Bpe, SegmentsConcatenateToWord) {
  Rng rng(3);
  const auto words = random_words(rng, 500);
  const auto m = train_bpe(std::vector<std::vector<std::string>>{words}, 60);
  for (const auto& w : words) {
    std::string joined;
    for (const auto& s : m.segment(w)) joined += s;
    EXPECT_EQ(joined, w + "</w>");
    for (int id : m.encode_word(w)) EXPECT_NE(id, kUnkId);
  }
  EXPECT_EQ(m.encode_word("zz"), (std::vector<int>{kUnkId, kUnkId, *m.token_id("</w>")}));
}

TEST(Bpe, JsonRoundTripPreservesSegmentation) {
  Rng rng(11);
  const auto words = random_words(rng, 400);
  const auto m = train_bpe(std::vector<std::vector<std::string>>{words}, 50);
  const auto back = BpeModel::from_json(Json::parse(m.to_json().dump()));
  EXPECT_EQ(back.id_to_token(), m.id_to_token());
  EXPECT_EQ(back.merges(), m.merges());
  for (const auto& w : words) EXPECT_EQ(back.encode_word(w), m.encode_word(w));
}

TEST(Bpe, EmptyCorpusRejected) {
  std::vector<std::vector<std::string>> empty{{}};
  try {
    train_bpe(empty, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCorpus);
  }
}

TEST(EncodeItem, SpeakerTokensAndContextTruncation) {
  const auto m = train_bpe(std::vector<std::vector<std::string>>{{"hi", "dog", "more"}}, 30);
  AnnotationItem item;
  item.target.speaker = make_speaker("CHI");
  item.target.tokens = {"more", "dog"};
  item.context = {{make_speaker("FAT"), {"hi"}}, {make_speaker("MOT"), {std::string(kUnintelligiblePlaceholder)}}};
  const auto alone = encode_item(item, m, 0);
  EXPECT_EQ(alone.front(), kChildId);
  const auto one = encode_item(item, m, 1);
  EXPECT_EQ(one.size(), 2 + alone.size());
  EXPECT_EQ(one[0], kCaregiverId);
  EXPECT_EQ(one[1], kUnkId);
  const auto all = encode_item(item, m);
  EXPECT_EQ(all[0], kCaregiverId);
  EXPECT_EQ(std::count(all.begin(), all.end(), kChildId), 1);
  EXPECT_EQ(std::vector<int>(all.end() - static_cast<std::ptrdiff_t>(alone.size()), all.end()), alone);
}

TEST(Ngram, TopKPerOrderAndDimensionBound) {
  Rng rng(5);
  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 300; ++i) {
    std::vector<int> s;
    for (std::size_t k = 0, n = 3 + rng.below(10); k < n; ++k)
      s.push_back(static_cast<int>(4 + rng.below(30)));
    corpus.push_back(s);
  }
  const std::size_t max_n = 4, per_order = 50;
  const auto vocab = build_ngram_vocab(corpus, max_n, per_order);
  EXPECT_LE(vocab.dimension(), max_n * per_order);

  std::map<std::vector<int>, double> totals;
  for (const auto& s : corpus)
    for (const auto& [g, c] : oracle::ngram_counts(s, max_n)) totals[g] += c;
  for (std::size_t k = 1; k <= max_n; ++k) {
    std::vector<std::pair<double, std::vector<int>>> ranked;
    for (const auto& [g, c] : totals)
      if (g.size() == k) ranked.emplace_back(-c, g);
    std::sort(ranked.begin(), ranked.end());
    const auto& kept = vocab.per_order()[k - 1];
    ASSERT_EQ(kept.size(), std::min(per_order, ranked.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(kept[i], ranked[i].second);
  }
}

TEST(Ngram, FeaturizeMatchesOracleCounts) {
  std::vector<std::vector<int>> corpus{{4, 5, 6, 4, 5}, {5, 6, 7}, {4, 4, 4}};
  const auto vocab = build_ngram_vocab(corpus, 3, 1000);
  const std::vector<int> probe{4, 5, 6, 9, 4, 4};
  const auto fv = vocab.featurize(probe);
  std::map<std::uint32_t, double> got;
  for (std::size_t i = 0; i < fv.nnz(); ++i) got[fv.indices[i]] = fv.counts[i];
  std::map<std::uint32_t, double> expected;
  for (const auto& [g, c] : oracle::ngram_counts(probe, 3))
    if (auto id = vocab.feature_id(g)) expected[*id] = c;
  EXPECT_EQ(got, expected);
  EXPECT_TRUE(std::is_sorted(fv.indices.begin(), fv.indices.end()));
}

TEST(Ngram, ConcatenationAddsOnlyJunctionGrams) {
  std::vector<std::vector<int>> corpus{{4, 5, 6, 7, 8, 4, 5, 6}};
  const auto vocab = build_ngram_vocab(corpus, 3, 1000);
  const std::vector<int> a{4, 5, 6}, b{7, 8, 4};
  std::vector<int> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  auto dense = [&](const std::vector<int>& s) {
    std::vector<double> d(vocab.dimension(), 0.0);
    const auto fv = vocab.featurize(s);
    for (std::size_t i = 0; i < fv.nnz(); ++i) d[fv.indices[i]] = fv.counts[i];
    return d;
  };
  const auto da = dense(a), db = dense(b), dab = dense(ab);
  double junction = 0.0;  // n-grams of ab that start in a and end in b
  for (std::size_t n = 2; n <= 3; ++n)
    for (std::size_t i = 0; i + n <= ab.size(); ++i)
      if (i < a.size() && i + n > a.size()) {
        const std::vector<int> g(ab.begin() + static_cast<std::ptrdiff_t>(i),
                                 ab.begin() + static_cast<std::ptrdiff_t>(i + n));
        if (vocab.feature_id(g)) junction += 1.0;
      }
  double excess = 0.0;
  for (std::size_t f = 0; f < dab.size(); ++f) {
    EXPECT_GE(dab[f], da[f] + db[f]);
    excess += dab[f] - da[f] - db[f];
  }
  EXPECT_DOUBLE_EQ(excess, junction);
}

TEST(Ngram, JsonRoundTripAndHash) {
  std::vector<std::vector<int>> corpus{{4, 5, 6, 4, 5}, {5, 6, 7}};
  const auto vocab = build_ngram_vocab(corpus, 2, 10);
  const auto back = NgramVocabulary::from_json(Json::parse(vocab.to_json().dump()));
  EXPECT_EQ(back.per_order(), vocab.per_order());
  EXPECT_EQ(back.hash(), vocab.hash());
  EXPECT_THROW(build_ngram_vocab(std::vector<std::vector<int>>{{}}, 2, 10), Error);
  EXPECT_THROW(build_ngram_vocab(corpus, 0, 10), Error);
}

TEST(Featurizer, FitsOnTrainingItemsOnly) {
  auto make = [](std::vector<std::string> toks) {
    AnnotationItem it;
    it.target.speaker = make_speaker("CHI");
    it.target.tokens = std::move(toks);
    return it;
  };
  std::vector<AnnotationItem> train{make({"more", "truck"}), make({"more", "ball"})};
  FeatureConfig cfg;
  cfg.max_n = 2;
  cfg.bpe_vocab_size = 200;
  const auto f = fit_featurizer(train, cfg);
  EXPECT_FALSE(f.bpe.token_id("z"));
  const auto unseen = f.featurize(make({"zip", "fizz"}));
  // Only [CHI] and [UNK]-bearing grams can fire on an unseen alphabet.
  for (std::size_t i = 0; i < unseen.nnz(); ++i) {
    for (int id : f.vocab.ngram(unseen.indices[i])) EXPECT_TRUE(id == kChildId || id == kUnkId || f.bpe.id_to_token()[id] == "</w>");
  }
}
