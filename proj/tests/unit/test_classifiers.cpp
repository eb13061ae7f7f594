#include <gtest/gtest.h>

#include <filesystem>

#include "gramscope/classifiers.hpp"
#include "oracles.hpp"

using namespace gramscope;
using L = Label;
namespace fs = std::filesystem;

namespace {

FeatureVector fv(std::vector<std::uint32_t> idx, std::vector<double> counts) {
  return FeatureVector{std::move(idx), std::move(counts)};
}

// Three well-separated clusters: class c fires feature c strongly plus
// shared noise features 3..7.
void three_clusters(std::uint64_t seed, std::size_t n, std::vector<FeatureVector>& x, std::vector<L>& y) {
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(rng.below(3));
    FeatureVector f;
    f.indices.push_back(c);
    f.counts.push_back(3.0);
    for (std::uint32_t k = 3; k < 8; ++k)
      if (rng.bernoulli(0.5)) {
        f.indices.push_back(k);
        f.counts.push_back(1.0 + static_cast<double>(rng.below(2)));
      }
    x.push_back(f);
    y.push_back(label_from_code(static_cast<int>(c)));
  }
}

// Overlapping data the SVM cannot fit perfectly.
void noisy(std::uint64_t seed, std::size_t n, std::vector<FeatureVector>& x, std::vector<L>& y) {
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng.below(3));
    FeatureVector f;
    for (std::uint32_t k = 0; k < 6; ++k) {
      const double p = k == static_cast<std::uint32_t>(c) ? 0.7 : 0.3;
      if (rng.bernoulli(p)) {
        f.indices.push_back(k);
        f.counts.push_back(1.0 + static_cast<double>(rng.below(3)));
      }
    }
    x.push_back(f);
    y.push_back(label_from_code(c));
  }
}

std::vector<double> binary_targets(const std::vector<L>& y, int c) {
  std::vector<double> out;
  for (L l : y) out.push_back(ordinal_code(l) == c ? 1.0 : -1.0);
  return out;
}

}  // namespace

TEST(ClassWeights, BalancedScheme) {
  std::vector<L> labels;
  labels.insert(labels.end(), 1333, L::Ungrammatical);
  labels.insert(labels.end(), 648, L::Ambiguous);
  labels.insert(labels.end(), 2219, L::Grammatical);
  const auto w = compute_class_weights(labels);
  EXPECT_NEAR(w[L::Ungrammatical], 1.0503, 5e-5);
  EXPECT_NEAR(w[L::Ambiguous], 2.1605, 5e-5);
  EXPECT_NEAR(w[L::Grammatical], 0.6309, 5e-5);
  EXPECT_DOUBLE_EQ(w[L::Ungrammatical], 4200.0 / (3.0 * 1333.0));

  std::vector<L> equal{L::Ungrammatical, L::Ambiguous, L::Grammatical};
  for (double v : compute_class_weights(equal).weight) EXPECT_DOUBLE_EQ(v, 1.0);

  std::vector<L> missing{L::Grammatical, L::Ungrammatical};
  try {
    compute_class_weights(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingClass);
  }
}

TEST(Majority, PredictsMostFrequentLabel) {
  std::vector<L> labels{L::Grammatical, L::Grammatical, L::Ungrammatical};
  EXPECT_EQ(train_majority(labels).label, L::Grammatical);
  std::vector<L> all_u(5, L::Ungrammatical);
  const auto m = train_majority(all_u);
  EXPECT_EQ(m.predict("x").label, L::Ungrammatical);
  EXPECT_THROW(train_majority(std::vector<L>{}), Error);

  std::vector<L> dist;
  dist.insert(dist.end(), 1333, L::Ungrammatical);
  dist.insert(dist.end(), 648, L::Ambiguous);
  dist.insert(dist.end(), 2219, L::Grammatical);
  const auto maj = train_majority(dist);
  std::vector<L> pred(dist.size(), maj.label);
  EXPECT_NEAR(accuracy(pred, dist), 0.53, 0.005);
}

TEST(ArgmaxLabel, TiesGoToLowerClass) {
  EXPECT_EQ(argmax_label({1.0, 1.0, 0.0}), L::Ungrammatical);
  EXPECT_EQ(argmax_label({0.0, 2.0, 2.0}), L::Ambiguous);
  EXPECT_EQ(argmax_label({0.0, 0.0, 0.1}), L::Grammatical);
}

TEST(Svm, SeparableClustersFitPerfectly) {
  std::vector<FeatureVector> x;
  std::vector<L> y;
  three_clusters(1, 300, x, y);
  const auto model = train_svm(x, y, 8, compute_class_weights(y));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += model.classify(x[i]) == y[i];
  EXPECT_EQ(correct, x.size());
}

TEST(Svm, SeparableTwoClassToy) {
  std::vector<FeatureVector> x{fv({0}, {1}), fv({0}, {2}), fv({1}, {1}), fv({1}, {3})};
  std::vector<L> y{L::Grammatical, L::Grammatical, L::Ungrammatical, L::Ungrammatical};
  const auto model = train_svm(x, y, 2, present_class_weights(y));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(model.classify(x[i]), y[i]);
}

TEST(Svm, DeterministicGivenSeed) {
  std::vector<FeatureVector> x;
  std::vector<L> y;
  noisy(2, 400, x, y);
  SvmConfig cfg;
  cfg.seed = 9;
  const auto a = train_svm(x, y, 6, compute_class_weights(y), cfg);
  const auto b = train_svm(x, y, 6, compute_class_weights(y), cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.epochs_run, b.epochs_run);
}

TEST(Svm, ScalingFeaturesWithInverseSquareCPreservesPredictions) {
  std::vector<FeatureVector> x;
  std::vector<L> y;
  noisy(3, 300, x, y);
  SvmConfig cfg;
  cfg.C = 0.5;
  const auto base = train_svm(x, y, 6, compute_class_weights(y), cfg);
  auto scaled_x = x;
  for (auto& f : scaled_x)
    for (auto& v : f.counts) v *= 2.0;
  SvmConfig scaled_cfg = cfg;
  scaled_cfg.C = cfg.C / 4.0;
  scaled_cfg.bias = cfg.bias * 2.0;
  const auto scaled = train_svm(scaled_x, y, 6, compute_class_weights(y), scaled_cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(base.classify(x[i]), scaled.classify(scaled_x[i]));
    const auto s0 = base.decision(x[i]), s1 = scaled.decision(scaled_x[i]);
    for (std::size_t c = 0; c < kNumLabels; ++c) EXPECT_NEAR(s0[c], s1[c], 1e-12);
  }
}

TEST(Svm, ClassWeightEqualsDuplication) {
  std::vector<FeatureVector> x;
  std::vector<L> y;
  noisy(4, 60, x, y);
  // Weight 3 on Ambiguous instances vs. three copies of each at weight 1.
  ClassWeights weighted;
  weighted.weight = {1.0, 3.0, 1.0};
  std::vector<FeatureVector> dx;
  std::vector<L> dy;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < (y[i] == L::Ambiguous ? 3 : 1); ++k) {
      dx.push_back(x[i]);
      dy.push_back(y[i]);
    }
  SvmConfig cfg;
  cfg.epsilon = 1e-6;
  cfg.max_iter = 200000;
  const auto a = train_svm(x, y, 6, weighted, cfg);
  const auto b = train_svm(dx, dy, 6, ClassWeights{}, cfg);

  for (int c = 0; c < 3; ++c) {
    const auto yy = binary_targets(y, c);
    std::vector<double> cost;
    for (L l : y) cost.push_back(cfg.C * weighted[l]);
    const double obj_a = oracle::primal_objective(a.weights[c], a.bias[c], cfg.bias, x, yy, cost);
    const double obj_b = oracle::primal_objective(b.weights[c], b.bias[c], cfg.bias, x, yy, cost);
    EXPECT_NEAR(obj_a, obj_b, 1e-4 * std::max(1.0, obj_a)) << "class " << c;
    // Both solutions sit at a minimum: no random perturbation improves them.
    Rng rng(static_cast<std::uint64_t>(c));
    for (int trial = 0; trial < 200; ++trial) {
      auto w = a.weights[c];
      for (auto& v : w) v += 1e-3 * rng.normal();
      const double b_pert = a.bias[c] + 1e-3 * rng.normal();
      EXPECT_GE(oracle::primal_objective(w, b_pert, cfg.bias, x, yy, cost), obj_a - 1e-4 * std::max(1.0, obj_a));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto sa = a.decision(x[i]), sb = b.decision(x[i]);
    for (std::size_t c = 0; c < kNumLabels; ++c) EXPECT_NEAR(sa[c], sb[c], 1e-2);
  }
}

TEST(Svm, Errors) {
  std::vector<FeatureVector> x{fv({0}, {1}), fv({1}, {1})};
  std::vector<L> same{L::Grammatical, L::Grammatical};
  try {
    train_svm(x, same, 2, ClassWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateData);
  }
  std::vector<L> two{L::Grammatical, L::Ungrammatical};
  try {
    train_svm(x, two, 1, ClassWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  const auto model = train_svm(x, two, 2, ClassWeights{});
  EXPECT_THROW(model.decision(fv({5}, {1})), Error);
  SvmConfig bad;
  bad.validation_fraction = 1.0;
  EXPECT_THROW(train_svm(x, two, 2, ClassWeights{}, bad), Error);
}

TEST(Svm, EarlyStoppingKeepsBestValidationEpoch) {
  std::vector<FeatureVector> x;
  std::vector<L> y;
  noisy(5, 500, x, y);
  SvmConfig cfg;
  cfg.early_stopping.enabled = true;
  cfg.early_stopping.max_epochs = 30;
  const auto a = train_svm(x, y, 6, compute_class_weights(y), cfg);
  const auto b = train_svm(x, y, 6, compute_class_weights(y), cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_GE(a.epochs_run, 1u);
  EXPECT_LE(a.epochs_run, 30u);
}

TEST(Predict, OnePerItemAndEmpty) {
  std::vector<FeatureVector> x{fv({0}, {1}), fv({1}, {1})};
  std::vector<L> y{L::Grammatical, L::Ungrammatical};
  const auto model = train_svm(x, y, 2, ClassWeights{});
  std::vector<std::string> ids{"a", "b"};
  const auto p = predict(model, x, ids);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].item_id, "a");
  EXPECT_EQ(p[0].label, argmax_label(p[0].scores));
  EXPECT_TRUE(predict(model, std::vector<FeatureVector>{}, std::vector<std::string>{}).empty());
}

TEST(ValidationSplit, DisjointAndSized) {
  const auto [fit, val] = validation_split(100, 0.2, 3);
  EXPECT_EQ(val.size(), 20u);
  EXPECT_EQ(fit.size(), 80u);
  std::set<std::size_t> all(fit.begin(), fit.end());
  all.insert(val.begin(), val.end());
  EXPECT_EQ(all.size(), 100u);
}

namespace {

std::vector<Prediction> single(const std::vector<L>& labels) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({"i" + std::to_string(i), labels[i], one_hot(labels[i])});
  return out;
}

std::vector<std::vector<Prediction>> models_from_votes(const std::vector<L>& votes) {
  std::vector<std::vector<Prediction>> out;
  for (L v : votes) out.push_back(single({v}));
  return out;
}

}  // namespace

TEST(Ensemble, ExampleCases) {
  EXPECT_EQ(ensemble_vote(models_from_votes({L::Grammatical, L::Grammatical, L::Ungrammatical, L::Ambiguous,
                                             L::Grammatical}))[0]
                .label,
            L::Grammatical);
  const auto tied = ensemble_vote(models_from_votes(
      {L::Grammatical, L::Grammatical, L::Ungrammatical, L::Ungrammatical, L::Ambiguous}));
  EXPECT_EQ(tied[0].label, L::Ambiguous);
  EXPECT_DOUBLE_EQ(tied[0].scores[0], 0.4);
  EXPECT_DOUBLE_EQ(tied[0].scores[1], 0.2);
  const auto one = single({L::Ungrammatical, L::Ambiguous, L::Grammatical});
  const auto id = ensemble_vote({one});
  ASSERT_EQ(id.size(), one.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(id[i].label, one[i].label);
}

TEST(Ensemble, PermutationInvariance) {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_models = 1 + rng.below(7), n_items = 1 + rng.below(5);
    std::vector<std::vector<Prediction>> models(n_models);
    for (auto& m : models) {
      std::vector<L> labels;
      for (std::size_t i = 0; i < n_items; ++i) labels.push_back(label_from_code(static_cast<int>(rng.below(3))));
      m = single(labels);
    }
    const auto base = ensemble_vote(models);
    auto shuffled = models;
    rng.shuffle(shuffled);
    for (auto& m : shuffled) rng.shuffle(m);  // item order within later lists is irrelevant
    std::map<std::string, Prediction> by_id;
    for (const auto& p : ensemble_vote(shuffled)) by_id[p.item_id] = p;
    for (const auto& p : base) {
      EXPECT_EQ(by_id.at(p.item_id).label, p.label);
      EXPECT_EQ(by_id.at(p.item_id).scores, p.scores);
    }
  }
}

TEST(Ensemble, Misaligned) {
  auto a = single({L::Grammatical, L::Grammatical});
  auto b = single({L::Grammatical});
  EXPECT_THROW(ensemble_vote({a, b}), Error);
  b = single({L::Grammatical, L::Grammatical});
  b[1].item_id = "other";
  try {
    ensemble_vote({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MisalignedItems);
  }
  EXPECT_THROW(ensemble_vote({}), Error);
}

TEST(ImportPredictions, ParsesAndNamesBadLine) {
  const auto path = fs::temp_directory_path() / "gramscope_preds.jsonl";
  write_file(path,
             "{\"item_id\":\"a\",\"label\":\"grammatical\"}\n"
             "{\"item_id\":\"b\",\"label\":\"ambiguous\",\"scores\":[0.1,0.7,0.2]}\n"
             "{\"item_id\":\"c\",\"label\":\"ungrammatical\"}\n");
  const auto p = import_external_predictions(path);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].scores, one_hot(L::Grammatical));
  EXPECT_DOUBLE_EQ(p[1].scores[1], 0.7);
  EXPECT_EQ(p[2].label, L::Ungrammatical);

  write_file(path, "{\"item_id\":\"a\",\"label\":\"grammatical\"}\n{\"item_id\":\"b\",\"label\":\"meh\"}\n");
  try {
    import_external_predictions(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  write_file(path, "");
  EXPECT_TRUE(import_external_predictions(path).empty());

  write_file(path, predictions_to_jsonl(p));
  EXPECT_EQ(import_external_predictions(path), p);
  fs::remove(path);
}
