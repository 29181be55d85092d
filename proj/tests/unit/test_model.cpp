#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/model.hpp"
#include "fastprio/model_io.hpp"
#include "fastprio/tensor_io.hpp"
#include "test_support.hpp"

using namespace fastprio;
using fastprio::testing::random_conv;
using fastprio::testing::random_dense;
using fastprio::testing::random_tensor;
using fastprio::testing::TempDir;

namespace {

double sum(const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0); }

Model identity_dense(std::size_t n) {
  std::vector<float> w(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0f;
  return Model({LayerSpec::dense(Tensor({n, n}, w), Tensor::zeros({n})), LayerSpec::softmax()}, n, {n});
}

}  // namespace

TEST(Forward, UniformSoftmaxOfEqualLogits) {
  const Tensor p = identity_dense(3).forward(Tensor::vector({0, 0, 0}));
  for (float v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Forward, HandSoftmax) {
  const Tensor p = identity_dense(2).forward(Tensor::vector({2, 0}));
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(p[0], e2 / (e2 + 1), 1e-6);
  EXPECT_NEAR(p[1], 1 / (e2 + 1), 1e-6);
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
}

TEST(Forward, OutputsAreProbabilityVectors) {
  const Model dense = random_dense({4, 8, 8, 5}, 3, 2.0);
  const Model conv = random_conv(4);
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (const Model* m : {&dense, &conv}) {
      Shape shape = m->input_shape();
      const Tensor p = m->forward(random_tensor(shape, s, -3, 3));
      EXPECT_NEAR(sum(p), 1.0, 1e-5);
      for (float v : p.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Forward, ShapeMismatchIsDimensionError) {
  const Model m = random_dense({4, 3, 2}, 1);
  EXPECT_THROW(m.forward(Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(Model, ValidatesChain) {
  EXPECT_THROW(Model({LayerSpec::dense(Tensor::zeros({2, 3}), Tensor::zeros({3})),
                      LayerSpec::dense(Tensor::zeros({4, 2}), Tensor::zeros({2})), LayerSpec::softmax()},
                     2, {2}),
               ShapeChainError);
  EXPECT_THROW(Model({LayerSpec::dense(Tensor::zeros({2, 3}), Tensor::zeros({3}))}, 3, {2}), ShapeChainError);
  EXPECT_THROW(Model({LayerSpec::dense(Tensor::zeros({2, 3}), Tensor::zeros({3})), LayerSpec::softmax()}, 4, {2}),
               ShapeChainError);
}

TEST(Model, DefaultFeatureLayerIsLastHidden) {
  EXPECT_EQ(random_dense({2, 8, 8, 3}, 1).feature_layer(), 3u);  // second relu
  const Model conv = random_conv(1);
  EXPECT_EQ(conv.feature_layer(), 2u);  // maxpool output feeding flatten + head
  const FeatureView v = conv.feature_view();
  EXPECT_EQ(v.granularity, FeatureGranularity::channel);
  EXPECT_EQ(v.count, 3u);
  const FeatureView d = random_dense({2, 8, 5, 3}, 1).feature_view();
  EXPECT_EQ(d.granularity, FeatureGranularity::neuron);
  EXPECT_EQ(d.count, 5u);
}

TEST(Model, FeatureLayerMustBeEligible) {
  const Model m = random_dense({2, 8, 3}, 1);
  EXPECT_THROW(m.with_feature_layer(m.layer_count() - 1), ConfigurationError);
  EXPECT_THROW(m.with_feature_layer(99), ConfigurationError);
  EXPECT_EQ(m.with_feature_layer(0).feature_layer(), 0u);
}

TEST(SplitForward, ComposesToFullForwardBitExactly) {
  const Model dense = random_dense({4, 8, 6, 3}, 5);
  const Model conv = random_conv(6);
  for (const Model* m : {&dense, &conv}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Tensor x = random_tensor(m->input_shape(), s, 0, 1);
      const Tensor full = m->forward(x);
      for (std::size_t l = 0; l + 1 < m->layer_count(); ++l) {
        const Tensor f = m->forward_to_layer(x, l);
        EXPECT_TRUE(m->forward_from_layer(f, l).bit_equal(full)) << "layer " << l;
      }
      EXPECT_TRUE(m->forward_to_layer(x, m->layer_count() - 1).bit_equal(full));
      const auto split = m->forward_split(x, m->feature_layer());
      EXPECT_TRUE(split.probabilities.bit_equal(full));
      EXPECT_TRUE(split.features.bit_equal(m->forward_to_layer(x, m->feature_layer())));
    }
  }
}

TEST(SplitForward, IdentityFirstLayerReturnsInput) {
  const Tensor x = Tensor::vector({0.25f, -1.5f, 3.0f});
  EXPECT_TRUE(identity_dense(3).forward_to_layer(x, 0).bit_equal(x));
}

TEST(SplitForward, ZeroFeaturesThroughZeroBiasGiveUniform) {
  const Model m({LayerSpec::dense(random_tensor({2, 4}, 1), Tensor::zeros({4})), LayerSpec::relu(),
                 LayerSpec::dense(random_tensor({4, 3}, 2), Tensor::zeros({3})), LayerSpec::softmax()},
                3, {2});
  const Tensor p = m.forward_from_layer(Tensor::zeros({4}), 1);
  for (float v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(SplitForward, Errors) {
  const Model m = random_dense({2, 4, 3}, 1);
  EXPECT_THROW(m.forward_to_layer(Tensor::vector({1, 2}), 7), IndexError);
  EXPECT_THROW(m.forward_from_layer(Tensor::vector({1, 2}), 1), DimensionError);
}

TEST(FeatureMask, DenseAndChannelRules) {
  const FeatureView dense{0, 3, FeatureGranularity::neuron, {3}};
  const Tensor f = Tensor::vector({1, 2, 3});
  const std::vector<float> ones(3, 1.0f), zeros(3, 0.0f);
  EXPECT_TRUE(apply_feature_mask(f, ones, dense).bit_equal(f));
  const Tensor dropped = apply_feature_mask(f, zeros, dense);
  for (float v : dropped.values()) EXPECT_EQ(v, 0.0f);

  const FeatureView conv{0, 2, FeatureGranularity::channel, {2, 2, 2}};
  const Tensor map({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<float> keep_first{1.0f, 0.0f};
  const Tensor out = apply_feature_mask(map, keep_first, conv);
  EXPECT_TRUE(out.bit_equal(Tensor({2, 2, 2}, {1, 2, 3, 4, 0, 0, 0, 0})));
  EXPECT_THROW(apply_feature_mask(map, ones, conv), DimensionError);
}

TEST(Layers, ConvMatchesHandComputation) {
  // 1 channel 3x3 input, 2x2 kernel of ones, no padding: sums of 2x2 windows.
  const LayerSpec conv = LayerSpec::conv2d(Tensor::full({1, 1, 2, 2}, 1.0f), Tensor::vector({0.5f}));
  const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = apply_layer(conv, x);
  EXPECT_TRUE(y.bit_equal(Tensor({1, 2, 2}, {12.5f, 16.5f, 24.5f, 28.5f})));
  const Tensor pooled = apply_layer(LayerSpec::maxpool2d(2, 1), x);
  EXPECT_TRUE(pooled.bit_equal(Tensor({1, 2, 2}, {5, 6, 8, 9})));
}

TEST(Layers, DropoutIsIdentityWithoutRng) {
  const Tensor x = random_tensor({10}, 3);
  EXPECT_TRUE(apply_layer(LayerSpec::dropout(0.5), x).bit_equal(x));
  RngStream rng(1);
  const Tensor y = apply_layer(LayerSpec::dropout(0.5), x, &rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_TRUE(y[i] == 0.0f || y[i] == 2.0f * x[i]);
}

TEST(ModelIo, RoundTripIsBitExact) {
  TempDir dir;
  for (const Model& m : {random_dense({3, 7, 4}, 2), random_conv(3)}) {
    save_model(m, dir / "m.json");
    const Model back = load_model(dir / "m.json");
    EXPECT_EQ(back.feature_layer(), m.feature_layer());
    EXPECT_EQ(model_fingerprint_bytes(back), model_fingerprint_bytes(m));
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor x = random_tensor(m.input_shape(), s);
      EXPECT_TRUE(back.forward(x).bit_equal(m.forward(x)));
    }
  }
}

TEST(ModelIo, DropoutAndFeatureLayerSurvive) {
  TempDir dir;
  const Model m({LayerSpec::dense(random_tensor({2, 4}, 1), random_tensor({4}, 2)), LayerSpec::relu(),
                 LayerSpec::dropout(0.25), LayerSpec::dense(random_tensor({4, 2}, 3), random_tensor({2}, 4)),
                 LayerSpec::softmax()},
                2, {2}, 0);
  save_model(m, dir / "m.json");
  const Model back = load_model(dir / "m.json");
  EXPECT_EQ(back.feature_layer(), 0u);
  EXPECT_TRUE(back.has_dropout());
  EXPECT_DOUBLE_EQ(back.layers()[2].rate, 0.25);
}

TEST(ModelIo, MissingBlobIsMissingFileError) {
  TempDir dir;
  save_model(random_dense({3, 4, 2}, 1), dir / "m.json");
  std::filesystem::remove(dir / "m.blobs/l0.weights.fpt");
  EXPECT_THROW(load_model(dir / "m.json"), MissingFileError);
  EXPECT_THROW(load_model(dir / "nothing.json"), MissingFileError);
}

TEST(ModelIo, ShapeChainBreakIsReported) {
  TempDir dir;
  // 784 -> 100 -> 12 declared in front of a 10-class softmax.
  nlohmann::json j{{"classes", 10},
                   {"input_shape", {784}},
                   {"layers",
                    {{{"kind", "dense"}, {"params", {{"in", 784}, {"out", 100}}}, {"weights", "w0.fpt"}, {"bias", "b0.fpt"}},
                     {{"kind", "relu"}},
                     {{"kind", "dense"}, {"params", {{"in", 100}, {"out", 12}}}, {"weights", "w1.fpt"}, {"bias", "b1.fpt"}},
                     {{"kind", "softmax"}}}}};
  write_tensor(dir / "w0.fpt", Tensor::zeros({784, 100}));
  write_tensor(dir / "b0.fpt", Tensor::zeros({100}));
  write_tensor(dir / "w1.fpt", Tensor::zeros({100, 12}));
  write_tensor(dir / "b1.fpt", Tensor::zeros({12}));
  write_file_bytes(dir / "m.json", j.dump());
  EXPECT_THROW(load_model(dir / "m.json"), ShapeChainError);
}

TEST(ModelIo, SchemaViolationsAreFormatErrors) {
  TempDir dir;
  write_file_bytes(dir / "a.json", "{not json");
  EXPECT_THROW(load_model(dir / "a.json"), FormatError);
  write_file_bytes(dir / "b.json", R"({"classes": 2, "input_shape": [2], "layers": [{"kind": "lstm"}]})");
  EXPECT_THROW(load_model(dir / "b.json"), FormatError);
}
