#include <algorithm>
#include <numeric>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/rng.hpp"

namespace fastprio {

Tensor smooth_with_neighbors(const Tensor& probabilities, const Tensor& embeddings, double alpha,
                             std::size_t neighbors, std::size_t jobs) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
  if (neighbors == 0) throw ParameterError("neighbor count must be positive");
  if (probabilities.rank() != 2 || embeddings.rank() != 2 || probabilities.dim(0) != embeddings.dim(0)) {
    throw DimensionError("smoothing needs probabilities [n, C] and embeddings [n, d] with equal n");
  }
  const std::size_t n = probabilities.dim(0);
  const std::size_t classes = probabilities.dim(1);
  const std::size_t dims = embeddings.dim(1);
  if (n <= neighbors) {
    throw ParameterError("suite of " + std::to_string(n) + " inputs is too small for " +
                         std::to_string(neighbors) + " neighbors");
  }
  const auto pv = probabilities.values();
  const auto ev = embeddings.values();
  const double self_weight = alpha;
  const double neighbor_weight = (1.0 - alpha) / static_cast<double>(neighbors);

  std::vector<float> out(n * classes);
  parallel_for(n, jobs, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = static_cast<double>(ev[i * dims + d]) - ev[j * dims + d];
        d2 += diff * diff;
      }
      dist.emplace_back(d2, j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbors), dist.end());
    std::vector<double> sum(classes, 0.0);
    for (std::size_t k = 0; k < neighbors; ++k) {
      const std::size_t j = dist[k].second;
      for (std::size_t c = 0; c < classes; ++c) sum[c] += pv[j * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out[i * classes + c] =
          static_cast<float>(self_weight * pv[i * classes + c] + neighbor_weight * sum[c]);
    }
  });
  return Tensor({n, classes}, std::move(out));
}

namespace {

Tensor embed_all(const Model& model, const Tensor& suite, std::size_t layer, std::size_t jobs,
                 Tensor* probabilities) {
  const std::size_t n = suite.dim(0);
  std::vector<Tensor> emb(n), probs(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    auto split = model.forward_split(suite.item(i), layer);
    emb[i] = split.features.reshaped({split.features.size()});
    probs[i] = std::move(split.probabilities);
  });
  *probabilities = stack(probs);
  return stack(emb);
}

void check_suite_shape(const Model& model, const Tensor& suite) {
  if (suite.empty() || suite.rank() < 2) throw EmptyInputError("test suite is empty");
  const Shape sample(suite.shape().begin() + 1, suite.shape().end());
  if (sample != model.input_shape()) {
    throw DimensionError("suite samples are " + shape_to_string(sample) + ", model expects " +
                         shape_to_string(model.input_shape()));
  }
}

}  // namespace

Tensor nns_smooth(const Model& model, const Tensor& suite, const NnsConfig& cfg, std::size_t jobs) {
  check_suite_shape(model, suite);
  const std::size_t layer = cfg.embedding_layer.value_or(model.feature_layer());
  model.output_shape(layer);
  if (layer + 1 >= model.layer_count()) throw ConfigurationError("embedding layer must precede the output");
  Tensor probs;
  const Tensor emb = embed_all(model, suite, layer, jobs, &probs);
  return smooth_with_neighbors(probs, emb, cfg.alpha, cfg.neighbors, jobs);
}

RankedSuite nns_rank(const Model& model, const Tensor& suite, const NnsConfig& cfg,
                     UncertaintyMetric metric, std::size_t jobs) {
  const Tensor smoothed = nns_smooth(model, suite, cfg, jobs);
  const std::size_t n = smoothed.dim(0);
  std::vector<double> scores(n);
  std::vector<std::size_t> predictions(n);
  const Tensor original = predict_all(model, suite, jobs);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = uncertainty(metric, smoothed.item_values(i));
    predictions[i] = argmax(original.item_values(i));
  }
  return rank_by_score(std::move(scores), std::move(predictions), "nns-" + std::string(to_string(metric)));
}

// ---- MC-Dropout ----

namespace {

Tensor mc_mean(const Model& model, const Tensor& x, const McDropoutConfig& cfg, RngStream& rng) {
  if (cfg.runs == 0) throw ParameterError("MC-Dropout needs at least one run");
  std::vector<double> sum(model.classes(), 0.0);
  const DropoutSampling sampling{&rng, cfg.rate};
  for (std::size_t t = 0; t < cfg.runs; ++t) {
    const Tensor p = model.forward_sampled(x, sampling);
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += p[c];
  }
  std::vector<float> mean(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) {
    mean[c] = static_cast<float>(sum[c] / static_cast<double>(cfg.runs));
  }
  return Tensor::vector(std::move(mean));
}

constexpr std::uint64_t kMcStream = 0x3c;

}  // namespace

Tensor mc_dropout_probabilities(const Model& model, const Tensor& x, const McDropoutConfig& cfg,
                                std::uint64_t seed) {
  RngStream rng(seed, kMcStream);
  return mc_mean(model, x, cfg, rng);
}

double mc_dropout_score(const Model& model, const Tensor& x, const McDropoutConfig& cfg,
                        UncertaintyMetric metric, std::uint64_t seed) {
  return uncertainty(metric, mc_dropout_probabilities(model, x, cfg, seed).values());
}

RankedSuite mc_dropout_rank(const Model& model, const Tensor& suite, const McDropoutConfig& cfg,
                            UncertaintyMetric metric, std::uint64_t seed, std::size_t jobs) {
  check_suite_shape(model, suite);
  const std::size_t n = suite.dim(0);
  const RngStream root(seed, kMcStream);
  std::vector<double> scores(n);
  std::vector<std::size_t> predictions(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const Tensor x = suite.item(i);
    RngStream rng = root.child(i);
    scores[i] = uncertainty(metric, mc_mean(model, x, cfg, rng).values());
    predictions[i] = argmax(model.forward(x));
  });
  return rank_by_score(std::move(scores), std::move(predictions),
                       "mc-dropout-" + std::string(to_string(metric)));
}

// ---- random ----

RankedSuite random_rank(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw EmptyInputError("cannot rank an empty suite");
  RngStream rng(seed, 0x7a4d);
  const auto perm = rng.permutation(n);
  std::vector<double> scores(n);
  for (std::size_t pos = 0; pos < n; ++pos) scores[perm[pos]] = static_cast<double>(n - pos);
  return rank_by_score(std::move(scores), {}, "random");
}

}  // namespace fastprio
