#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fastprio/errors.hpp"
#include "fastprio/prioritizer.hpp"
#include "fastprio/tensor_io.hpp"
#include "test_support.hpp"

using namespace fastprio;
using fastprio::testing::random_conv;
using fastprio::testing::random_dense;
using fastprio::testing::random_tensor;
using fastprio::testing::TempDir;

namespace {

// Feature 0 votes for class 1, feature 1 is a spurious feature pushing class 0.
Model noisy_feature_model() {
  return Model({LayerSpec::dense(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros({2})), LayerSpec::relu(),
                LayerSpec::dense(Tensor::matrix(2, 2, {-1, 1, 5, 0}), Tensor::zeros({2})), LayerSpec::softmax()},
               2, {2});
}

FeatureMask mask_of(Tensor m, std::size_t layer, double rate) {
  FeatureMask out;
  out.mask = std::move(m);
  out.layer = layer;
  out.rate = rate;
  out.pruned = pruned_count(rate, out.features());
  return out;
}

FeatureMask ones_mask(const Model& model) {
  const FeatureView v = model.feature_view();
  return mask_of(Tensor::full({model.classes(), v.count}, 1.0f), v.layer, 0.0);
}

Tensor suite_of(const Model& m, std::size_t n, std::uint64_t seed) {
  Shape shape{n};
  shape.insert(shape.end(), m.input_shape().begin(), m.input_shape().end());
  return random_tensor(shape, seed, 0.0, 1.0);
}

}  // namespace

TEST(Metrics, GiniExamples) {
  EXPECT_DOUBLE_EQ(gini(Tensor::vector({0, 1, 0}).values()), 0.0);
  EXPECT_NEAR(gini(Tensor::full({4}, 0.25f).values()), 0.75, 1e-7);
  EXPECT_NEAR(gini(Tensor::vector({0.6f, 0.3f, 0.1f}).values()), 1 - (0.36 + 0.09 + 0.01), 1e-6);
}

TEST(Metrics, MaxpExamples) {
  EXPECT_DOUBLE_EQ(maxp(Tensor::vector({1, 0}).values()), 0.0);
  EXPECT_NEAR(maxp(Tensor::full({4}, 0.25f).values()), 0.75, 1e-7);
  EXPECT_NEAR(maxp(Tensor::vector({0.6f, 0.3f, 0.1f}).values()), 0.4, 1e-6);
}

TEST(Metrics, MarginExamples) {
  EXPECT_NEAR(margin(Tensor::vector({0.7f, 0.2f, 0.1f}).values()), 0.5, 1e-6);
  EXPECT_NEAR(margin(Tensor::full({5}, 0.2f).values()), 1.0, 1e-7);
  EXPECT_DOUBLE_EQ(margin(Tensor::vector({0, 0, 1}).values()), 0.0);
  EXPECT_THROW(margin(Tensor::vector({1}).values()), DomainError);
}

TEST(Metrics, RejectInvalidProbabilityVectors) {
  for (auto metric : {UncertaintyMetric::gini, UncertaintyMetric::maxp, UncertaintyMetric::margin}) {
    EXPECT_THROW(uncertainty(metric, Tensor::vector({0.5f, 0.6f}).values()), DomainError);
    EXPECT_THROW(uncertainty(metric, Tensor::vector({1.2f, -0.2f}).values()), DomainError);
  }
  EXPECT_NO_THROW(check_probability_vector(Tensor::vector({0.50004f, 0.5f}).values()));
  EXPECT_THROW(parse_metric("entropy"), ParameterError);
  EXPECT_EQ(parse_metric(to_string(UncertaintyMetric::margin)), UncertaintyMetric::margin);
}

TEST(Metrics, RangesAndExtremesOnRandomSimplexPoints) {
  RngStream rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t c = 2 + rng.uniform_index(8);
    std::vector<double> raw(c);
    double total = 0.0;
    for (auto& v : raw) total += (v = -std::log(1.0 - rng.uniform()));
    std::vector<float> p(c);
    for (std::size_t i = 0; i < c; ++i) p[i] = static_cast<float>(raw[i] / total);
    const double cap = 1.0 - 1.0 / static_cast<double>(c) + 1e-6;
    EXPECT_GE(gini(p), -1e-7);
    EXPECT_LE(gini(p), cap);
    EXPECT_GE(maxp(p), -1e-7);
    EXPECT_LE(maxp(p), cap);
    EXPECT_GE(margin(p), -1e-7);
    EXPECT_LE(margin(p), 1.0 + 1e-7);
  }
  const Tensor onehot = Tensor::vector({0, 0, 1});
  const Tensor uniform = Tensor::full({3}, 1.0f / 3.0f);
  for (auto metric : {UncertaintyMetric::gini, UncertaintyMetric::maxp, UncertaintyMetric::margin})
    EXPECT_LT(uncertainty(metric, onehot.values()), uncertainty(metric, uniform.values()));
}

TEST(RankByScore, DescendingWithIndexTieBreak) {
  const RankedSuite r = rank_by_score({0.2, 0.9, 0.2, std::numeric_limits<double>::infinity(), 0.5}, {}, "t");
  EXPECT_EQ(r.ordering, (std::vector<std::size_t>{3, 1, 4, 0, 2}));
  EXPECT_TRUE(is_permutation_of_range(r.ordering, 5));
  EXPECT_THROW(rank_by_score({}, {}, "t"), EmptyInputError);
  EXPECT_THROW(rank_by_score({0.1, std::nan("")}, {}, "t"), NumericError);
  EXPECT_FALSE(is_permutation_of_range(std::vector<std::size_t>{0, 0, 2}, 3));
}

TEST(FastScore, RateZeroEqualsPlainMetric) {
  const Model m = random_dense({4, 10, 6, 3}, 4);
  const FeatureMask ones = ones_mask(m);
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Tensor x = random_tensor({4}, s);
    const Tensor p = m.forward(x);
    for (auto metric : {UncertaintyMetric::gini, UncertaintyMetric::maxp, UncertaintyMetric::margin}) {
      const FastScore f = fast_score(m, ones, x, metric);
      EXPECT_EQ(f.score, uncertainty(metric, p.values()));
      EXPECT_EQ(f.original_label, argmax(p));
    }
  }
}

TEST(FastScore, AllZeroRowGivesHeadOnZeroFeatures) {
  const Model m = noisy_feature_model();
  const FeatureMask zero = mask_of(Tensor::zeros({2, 2}), 1, 0.5);
  const FastScore f = fast_score(m, zero, Tensor::vector({0.3f, 0.8f}), UncertaintyMetric::gini);
  EXPECT_NEAR(f.masked_probabilities[0], 0.5, 1e-7);
  EXPECT_NEAR(f.score, 0.5, 1e-7);
}

TEST(FastScore, MaskingSpuriousFeatureRaisesUncertainty) {
  const Model m = noisy_feature_model();
  // Class 0 drops the spurious feature; class 1 keeps everything.
  const FeatureMask masks = mask_of(Tensor({2, 2}, {1, 0, 1, 1}), 1, 0.5);
  const Tensor x = Tensor::vector({1, 1});  // truly class 1, pushed to class 0
  const Tensor p = m.forward(x);
  ASSERT_EQ(argmax(p), 0u);
  ASSERT_GT(p[0], 0.9f);
  const FastScore f = fast_score(m, masks, x, UncertaintyMetric::gini);
  EXPECT_EQ(f.original_label, 0u);
  EXPECT_GT(f.score, gini(p.values()));
  // direct oracle: logits without the spurious feature are (-1, 1)
  const double q1 = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(f.masked_probabilities[1], q1, 1e-6);
}

TEST(FastScore, MaskRowChosenByOriginalPrediction) {
  const Model m = noisy_feature_model();
  // Only the class-1 row prunes; x is predicted class 0 so nothing changes.
  const FeatureMask masks = mask_of(Tensor({2, 2}, {1, 1, 0, 0}), 1, 0.5);
  const Tensor x = Tensor::vector({1, 1});
  EXPECT_EQ(fast_score(m, masks, x, UncertaintyMetric::gini).score, gini(m.forward(x).values()));
}

TEST(FastScore, LayerMismatchIsConfigurationError) {
  const Model m = random_dense({4, 10, 6, 3}, 4);
  FeatureMask wrong = mask_of(Tensor::full({3, 10}, 1.0f), 1, 0.0);
  EXPECT_THROW(fast_score(m, wrong, random_tensor({4}, 0), UncertaintyMetric::gini), ConfigurationError);
}

TEST(Prioritize, NoMaskIsUncertaintyBaseline) {
  const Model m = random_conv(2, 4);
  const Tensor suite = suite_of(m, 40, 5);
  const RankedSuite r = prioritize(m, nullptr, suite, UncertaintyMetric::gini);
  EXPECT_EQ(r.method, "gini");
  std::vector<double> expected(40);
  for (std::size_t i = 0; i < 40; ++i) expected[i] = gini(m.forward(suite.item(i)).values());
  EXPECT_EQ(r.ordering, rank_by_score(expected, {}, "x").ordering);
}

TEST(Prioritize, RateZeroMasksMatchBaselineForEveryJobs) {
  for (const Model& m : {random_dense({4, 12, 8, 3}, 9), random_conv(3, 3)}) {
    const Tensor suite = suite_of(m, 50, 6);
    const FeatureMask ones = ones_mask(m);
    for (auto metric : {UncertaintyMetric::gini, UncertaintyMetric::maxp, UncertaintyMetric::margin}) {
      const RankedSuite base = prioritize(m, nullptr, suite, metric);
      for (std::size_t jobs : {1u, 3u}) {
        const RankedSuite fast = prioritize(m, &ones, suite, metric, jobs);
        EXPECT_EQ(fast.ordering, base.ordering);
        EXPECT_EQ(fast.scores, base.scores);
        EXPECT_TRUE(is_permutation_of_range(fast.ordering, 50));
      }
    }
  }
}

TEST(Prioritize, MethodTagAndErrors) {
  const Model m = random_dense({4, 12, 8, 3}, 9);
  FeatureMask masks = ones_mask(m);
  masks.rate = 0.05;
  EXPECT_EQ(prioritize(m, &masks, suite_of(m, 3, 1), UncertaintyMetric::gini).method, "fast-gini-r0.05");
  EXPECT_THROW(prioritize(m, nullptr, suite_of(m, 3, 1).item(0), UncertaintyMetric::gini), EmptyInputError);
  EXPECT_THROW(prioritize(m, nullptr, random_tensor({3, 5}, 0), UncertaintyMetric::gini), DimensionError);
}

TEST(Prioritize, EqualScoresKeepIndexOrder) {
  const Model m = random_dense({2, 4, 3}, 1);
  const Tensor suite = Tensor::matrix(3, 2, {0.5f, 0.5f, 0.1f, 0.9f, 0.5f, 0.5f});
  const RankedSuite r = prioritize(m, nullptr, suite, UncertaintyMetric::maxp);
  std::size_t pos0 = 0, pos2 = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (r.ordering[k] == 0) pos0 = k;
    if (r.ordering[k] == 2) pos2 = k;
  }
  EXPECT_EQ(pos2, pos0 + 1);
}

TEST(RankedSuiteFiles, CsvAndJsonRoundTrip) {
  TempDir dir;
  const RankedSuite r =
      rank_by_score({0.123456789012345, std::numeric_limits<double>::infinity(), 1e-300}, {2, 0, 1}, "dsa");
  const std::string csv = ranked_suite_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "index,score,method,original_prediction");
  for (const char* name : {"r.csv", "r.json"}) {
    write_ranked_suite(dir / name, r);
    const RankedSuite back = read_ranked_suite(dir / name);
    EXPECT_EQ(back.ordering, r.ordering);
    EXPECT_EQ(back.scores, r.scores);
    EXPECT_EQ(back.predictions, r.predictions);
    EXPECT_EQ(back.method, "dsa");
  }
  write_file_bytes(dir / "bad.csv", "index,score\n0,1\n");
  EXPECT_THROW(read_ranked_suite(dir / "bad.csv"), FormatError);
}
