#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "test_support.hpp"

using namespace fastprio;
using fastprio::testing::random_conv;
using fastprio::testing::random_dense;
using fastprio::testing::random_tensor;
using fastprio::testing::TempDir;

namespace {

Tensor suite_of(const Model& m, std::size_t n, std::uint64_t seed) {
  Shape shape{n};
  shape.insert(shape.end(), m.input_shape().begin(), m.input_shape().end());
  return random_tensor(shape, seed, 0.0, 1.0);
}

SurpriseProfile profile_1d(std::vector<std::vector<float>> per_class) {
  SurpriseProfile p;
  for (auto& pts : per_class) {
    const std::size_t n = pts.size();
    p.traces.emplace_back(Shape{n, 1}, std::move(pts));
  }
  return p;
}

double variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

// Single relu layer with identity weights: the hidden neurons equal the input.
Model identity_relu_model() {
  return Model({LayerSpec::dense(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros({2})), LayerSpec::relu(),
                LayerSpec::dense(random_tensor({2, 3}, 8), Tensor::zeros({3})), LayerSpec::softmax()},
               3, {2});
}

Dataset cyclic_labels(const Tensor& inputs, std::size_t classes) {
  std::vector<std::size_t> labels(inputs.dim(0));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % classes;
  return Dataset(inputs, std::move(labels), classes);
}

}  // namespace

TEST(Nns, HandInterpolation) {
  const Tensor p = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor e = Tensor::matrix(2, 1, {0, 1});
  const Tensor s = smooth_with_neighbors(p, e, 0.5, 1);
  EXPECT_TRUE(s.bit_equal(Tensor::matrix(2, 2, {0.5f, 0.5f, 0.5f, 0.5f})));
}

TEST(Nns, AlphaOneIsIdentityAndBaselineOrdering) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const Tensor suite = suite_of(m, 30, 1);
  const Tensor smoothed = nns_smooth(m, suite, {1.0, 10, std::nullopt});
  for (std::size_t i = 0; i < 30; ++i) EXPECT_TRUE(smoothed.item(i).bit_equal(m.forward(suite.item(i))));
  EXPECT_EQ(nns_rank(m, suite, {1.0, 10, std::nullopt}, UncertaintyMetric::gini).ordering,
            prioritize(m, nullptr, suite, UncertaintyMetric::gini).ordering);
}

TEST(Nns, NeighborsAreNearestOthers) {
  // rows 0..3 on a line; row 0's nearest other is row 1 (ties go to the lower index).
  const Tensor p = Tensor::matrix(4, 2, {1, 0, 0, 1, 0.5f, 0.5f, 0.2f, 0.8f});
  const Tensor e = Tensor::matrix(4, 1, {0, 1, 3, 7});
  const Tensor s = smooth_with_neighbors(p, e, 0.25, 2);
  // row 2 at 3: neighbors 1 (dist 2) and 0 (dist 3)
  EXPECT_NEAR(s.at(2, 0), 0.25 * 0.5 + 0.75 * (0.0 + 1.0) / 2, 1e-7);
  // row 1 at 1: neighbors 0 (dist 1) and 2 (dist 2)
  EXPECT_NEAR(s.at(1, 0), 0.25 * 0.0 + 0.75 * (1.0 + 0.5) / 2, 1e-7);
  const Tensor tie = smooth_with_neighbors(p, Tensor::matrix(4, 1, {0, -1, 1, 9}), 0.0, 1);
  EXPECT_NEAR(tie.at(0, 0), 0.0, 1e-7);  // row 1 and row 2 tie at distance 1: row 1 wins
}

TEST(Nns, DuplicatesAndValidity) {
  const Model m = random_conv(5, 4);
  const Tensor base = suite_of(m, 20, 3);
  std::vector<float> v;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto row = base.item_values(i == 12 ? 5 : i);
    v.insert(v.end(), row.begin(), row.end());
  }
  const Tensor suite({20, 1, 6, 6}, v);
  const Tensor s = nns_smooth(m, suite, {0.5, 4, std::nullopt}, 2);
  EXPECT_TRUE(s.item(5).bit_equal(s.item(12)));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NO_THROW(check_probability_vector(s.item_values(i)));
}

TEST(Nns, Errors) {
  const Tensor p = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor e = Tensor::matrix(2, 1, {0, 1});
  EXPECT_THROW(smooth_with_neighbors(p, e, 0.5, 2), ParameterError);
  EXPECT_THROW(smooth_with_neighbors(p, e, 1.5, 1), ParameterError);
  EXPECT_THROW(smooth_with_neighbors(p, e, 0.5, 0), ParameterError);
}

TEST(McDropout, RateZeroEqualsDeterministic) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor x = random_tensor({4}, s);
    const double expected = gini(m.forward(x).values());
    EXPECT_NEAR(mc_dropout_score(m, x, {1, 0.0}, UncertaintyMetric::gini, s), expected, 1e-6);
    EXPECT_NEAR(mc_dropout_score(m, x, {7, 0.0}, UncertaintyMetric::gini, s), expected, 1e-6);
  }
}

TEST(McDropout, SeededAndJobIndependent) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const Tensor x = random_tensor({4}, 1);
  EXPECT_EQ(mc_dropout_score(m, x, {}, UncertaintyMetric::gini, 9), mc_dropout_score(m, x, {}, UncertaintyMetric::gini, 9));
  const Tensor suite = suite_of(m, 12, 4);
  const RankedSuite a = mc_dropout_rank(m, suite, {10, 0.2}, UncertaintyMetric::maxp, 3, 1);
  const RankedSuite b = mc_dropout_rank(m, suite, {10, 0.2}, UncertaintyMetric::maxp, 3, 4);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.ordering, b.ordering);
  const Tensor mean = mc_dropout_probabilities(m, x, {20, 0.3}, 5);
  EXPECT_NO_THROW(check_probability_vector(mean.values()));
}

TEST(McDropout, ScoreVarianceShrinksWithRuns) {
  const Model m = random_dense({4, 16, 12, 3}, 6, 1.5);
  const Tensor x = random_tensor({4}, 2);
  std::vector<double> variances;
  for (std::size_t t : {1u, 10u, 50u}) {
    std::vector<double> scores;
    for (std::uint64_t seed = 0; seed < 200; ++seed)
      scores.push_back(mc_dropout_score(m, x, {t, 0.3}, UncertaintyMetric::gini, seed));
    variances.push_back(variance(scores));
  }
  EXPECT_GT(variances[0], 0.0);
  EXPECT_LE(variances[1], variances[0]);
  EXPECT_LE(variances[2], variances[1]);
}

TEST(Coverage, LayersAndChannelMeans) {
  const Model conv = random_conv(4, 3);
  EXPECT_EQ(coverage_layers(conv), (std::vector<std::size_t>{1}));
  const Tensor x = random_tensor({1, 6, 6}, 3);
  const std::vector<std::size_t> layers{1};
  const auto h = hidden_neurons(conv, x, layers);
  ASSERT_EQ(h.size(), 3u);
  const Tensor act = conv.forward_to_layer(x, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < 36; ++k) s += act[c * 36 + k];
    EXPECT_NEAR(h[c], s / 36.0, 1e-6);
  }
  EXPECT_EQ(coverage_layers(random_dense({3, 5, 4, 2}, 1)), (std::vector<std::size_t>{1, 3}));
}

TEST(Coverage, NacIsOneForStrictlyPositiveActivations) {
  const Model m({LayerSpec::dense(Tensor::full({3, 4}, 0.5f), Tensor::full({4}, 0.1f)), LayerSpec::relu(),
                 LayerSpec::dense(Tensor::full({4, 2}, 0.3f), Tensor::full({2}, 0.1f)), LayerSpec::relu(),
                 LayerSpec::dense(random_tensor({2, 2}, 1), Tensor::zeros({2})), LayerSpec::softmax()},
                2, {3});
  EXPECT_DOUBLE_EQ(nac_score(m, Tensor::vector({0.2f, 0.4f, 0.9f}), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(nac_score(identity_relu_model(), Tensor::vector({0.2f, -0.4f}), 0.0), 0.5);
}

TEST(Coverage, NbcZeroOnProfileInputsAndOneOverH) {
  const Model m = identity_relu_model();
  const Tensor train = Tensor::matrix(2, 2, {0.2f, 0.2f, 0.5f, 0.5f});
  const CoverageProfile prof = build_coverage_profile(m, train);
  ASSERT_EQ(prof.neurons(), 2u);
  for (std::size_t i = 0; i < prof.neurons(); ++i) EXPECT_LE(prof.low[i], prof.high[i]);
  EXPECT_DOUBLE_EQ(nbc_score(m, train.item(0), prof), 0.0);
  EXPECT_DOUBLE_EQ(nbc_score(m, train.item(1), prof), 0.0);
  EXPECT_DOUBLE_EQ(nbc_score(m, Tensor::vector({0.3f, 0.9f}), prof), 0.5);

  const Model big = random_dense({4, 10, 6, 3}, 2);
  const Tensor data = suite_of(big, 30, 1);
  const CoverageProfile bp = build_coverage_profile(big, data);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_DOUBLE_EQ(nbc_score(big, data.item(i), bp), 0.0);
  EXPECT_THROW(nbc_score(m, train.item(0), bp), ConfigurationError);
}

TEST(Coverage, RankingsArePermutations) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const Tensor suite = suite_of(m, 25, 7);
  const RankedSuite nac = nac_rank(m, suite, 0.0, 2);
  const RankedSuite nbc = nbc_rank(m, suite, build_coverage_profile(m, suite_of(m, 25, 8)));
  EXPECT_EQ(nac.method, "nac");
  EXPECT_EQ(nbc.method, "nbc");
  EXPECT_TRUE(is_permutation_of_range(nac.ordering, 25));
  EXPECT_TRUE(is_permutation_of_range(nbc.ordering, 25));
}

TEST(Dsa, HandGeometry) {
  const SurpriseProfile p = profile_1d({{0.0f}, {2.0f}});
  const std::vector<float> x{1.0f};
  EXPECT_DOUBLE_EQ(dsa_score(p, x, 0), 0.5);
  const std::vector<float> dup{0.0f};
  EXPECT_DOUBLE_EQ(dsa_score(p, dup, 0), 0.0);
}

TEST(Dsa, SharedReferencePointIsInfinite) {
  const SurpriseProfile p = profile_1d({{0.0f, 4.0f}, {0.0f}});
  const std::vector<float> x{-5.0f};
  EXPECT_EQ(dsa_score(p, x, 0), std::numeric_limits<double>::infinity());
}

TEST(Dsa, ScaleInvariant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SurpriseProfile p, q;
    for (std::size_t c = 0; c < 3; ++c) {
      const Tensor t = random_tensor({6, 4}, seed * 10 + c);
      p.traces.push_back(t);
      std::vector<float> scaled(t.values().begin(), t.values().end());
      for (auto& v : scaled) v *= 4.0f;
      q.traces.emplace_back(t.shape(), std::move(scaled));
    }
    const Tensor x = random_tensor({4}, seed + 99);
    std::vector<float> xs(x.values().begin(), x.values().end());
    for (auto& v : xs) v *= 4.0f;
    EXPECT_NEAR(dsa_score(p, x.values(), 1), dsa_score(q, xs, 1), 1e-5);
  }
}

TEST(Lsa, MatchesClosedFormTwoKernelDensity) {
  SurpriseProfile p;
  p.traces.emplace_back(Shape{2, 2}, std::vector<float>{-1, -1, 1, 1});
  p.traces.emplace_back(Shape{2, 2}, std::vector<float>{5, 5, 6, 7});
  const LsaScorer lsa(p);
  // Scott bandwidth per dimension: std (ddof 1) = sqrt(2), n = 2, d = 2.
  const double h = std::sqrt(2.0) * std::pow(2.0, -1.0 / 6.0);
  ASSERT_NEAR(lsa.bandwidths(0)[0], h, 1e-12);
  const double pi = std::acos(-1.0);
  double prev_best = std::numeric_limits<double>::infinity();
  double at_centroid = 0.0;
  for (double t : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
    const std::vector<float> x{static_cast<float>(t), static_cast<float>(-t)};
    double density = 0.0;
    for (double mu : {-1.0, 1.0}) {
      const double d2 = (t - mu) * (t - mu) + (-t - mu) * (-t - mu);
      density += std::exp(-d2 / (2 * h * h)) / (2 * pi * h * h);
    }
    density /= 2.0;
    const double s = lsa.score(x, 0);
    EXPECT_NEAR(s, -std::log(density), 1e-9);
    if (t == 0.0) at_centroid = s;
    prev_best = std::min(prev_best, s);
  }
  EXPECT_EQ(at_centroid, prev_best);
}

TEST(Lsa, GrowsWithDistanceAndPrefersDuplicates) {
  const Tensor traces = random_tensor({30, 3}, 4);
  SurpriseProfile p;
  p.traces = {traces, random_tensor({10, 3}, 5)};
  const LsaScorer lsa(p);
  double prev = -std::numeric_limits<double>::infinity();
  for (float r : {2.0f, 10.0f, 100.0f, 1000.0f}) {
    const std::vector<float> x{r, r, r};
    const double s = lsa.score(x, 0);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GT(s, prev);
    prev = s;
  }
  const std::vector<float> far{30, -30, 30};
  EXPECT_LT(lsa.score(traces.item_values(3), 0), lsa.score(far, 0));
}

TEST(Lsa, DropsLowVarianceDimensionsAndRejectsTinyClasses) {
  SurpriseProfile p;
  p.traces.emplace_back(Shape{3, 2}, std::vector<float>{0, 1, 1, 1, 2, 1});
  p.traces.emplace_back(Shape{1, 2}, std::vector<float>{4, 4});
  const LsaScorer lsa(p);
  EXPECT_EQ(lsa.bandwidths(0).size(), 1u);
  const std::vector<float> a{1, 1}, b{1, 50};
  EXPECT_DOUBLE_EQ(lsa.score(a, 0), lsa.score(b, 0));
  EXPECT_THROW(lsa.score(a, 1), ProfileError);
}

TEST(SurpriseProfile, GroupsByLabelAndRejectsEmptyClass) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const Dataset data(suite_of(m, 9, 2), {0, 1, 2, 0, 1, 2, 0, 1, 2}, 3);
  const SurpriseProfile p = build_surprise_profile(m, data);
  EXPECT_EQ(p.layer, m.feature_layer());
  ASSERT_EQ(p.classes(), 3u);
  EXPECT_EQ(p.traces[1].dim(0), 3u);
  const auto t4 = activation_trace(m, data.inputs().item(4), p.layer);
  for (std::size_t d = 0; d < p.dims(); ++d) EXPECT_EQ(p.traces[1].at(1, d), t4[d]);
  const Dataset missing(suite_of(m, 4, 2), {0, 1, 0, 1}, 3);
  EXPECT_THROW(build_surprise_profile(m, missing), ProfileError);
}

TEST(Surprise, RankingsUsePredictedClass) {
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const Dataset train = cyclic_labels(suite_of(m, 60, 3), 3);
  const SurpriseProfile p = build_surprise_profile(m, train);
  const Tensor suite = suite_of(m, 15, 9);
  const RankedSuite dsa = dsa_rank(m, suite, p);
  const RankedSuite lsa = lsa_rank(m, suite, p, 3);
  EXPECT_EQ(dsa.method, "dsa");
  EXPECT_EQ(lsa.method, "lsa");
  for (std::size_t i = 0; i < 15; ++i) {
    const Tensor x = suite.item(i);
    const std::size_t c = argmax(m.forward(x));
    EXPECT_EQ(dsa.predictions[i], c);
    EXPECT_EQ(dsa.scores[i], dsa_score(p, activation_trace(m, x, p.layer), c));
    EXPECT_EQ(lsa.scores[i], lsa_score(p, activation_trace(m, x, p.layer), c));
  }
}

TEST(ProfileFiles, RoundTrip) {
  TempDir dir;
  const Model m = random_dense({4, 10, 6, 3}, 2);
  const CoverageProfile cp = build_coverage_profile(m, suite_of(m, 20, 1), 0.25);
  write_coverage_profile(dir / "cov.fpt", cp);
  const CoverageProfile cb = read_coverage_profile(dir / "cov.fpt");
  EXPECT_EQ(cb.layers, cp.layers);
  EXPECT_EQ(cb.threshold, 0.25);
  ASSERT_EQ(cb.neurons(), cp.neurons());
  for (std::size_t i = 0; i < cp.neurons(); ++i) {
    EXPECT_FLOAT_EQ(static_cast<float>(cb.low[i]), static_cast<float>(cp.low[i]));
    EXPECT_FLOAT_EQ(static_cast<float>(cb.high[i]), static_cast<float>(cp.high[i]));
  }

  const SurpriseProfile sp = build_surprise_profile(m, cyclic_labels(suite_of(m, 40, 2), 3));
  write_surprise_profile(dir / "sa.fpt", sp);
  const SurpriseProfile sb = read_surprise_profile(dir / "sa.fpt");
  EXPECT_EQ(sb.layer, sp.layer);
  ASSERT_EQ(sb.classes(), sp.classes());
  for (std::size_t c = 0; c < sp.classes(); ++c) EXPECT_TRUE(sb.traces[c].bit_equal(sp.traces[c]));
}

TEST(RandomRank, SeededPermutation) {
  const RankedSuite a = random_rank(100, 7), b = random_rank(100, 7), c = random_rank(100, 8);
  EXPECT_EQ(a.ordering, b.ordering);
  EXPECT_NE(a.ordering, c.ordering);
  EXPECT_TRUE(is_permutation_of_range(a.ordering, 100));
  EXPECT_EQ(a.method, "random");
}
