#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fastprio/dataset.hpp"
#include "fastprio/model.hpp"
#include "fastprio/prioritizer.hpp"

namespace fastprio {

// ---- nearest-neighbor smoothing ----

struct NnsConfig {
  double alpha = 0.5;
  std::size_t neighbors = 10;
  std::optional<std::size_t> embedding_layer;  // defaults to the model's feature layer
};

// p_hat(x) = alpha * p(x) + (1 - alpha) / k * sum of p over the k nearest
// other rows (Euclidean in `embeddings`, ties to the lower index).
// probabilities: [n, C]; embeddings: [n, d].
Tensor smooth_with_neighbors(const Tensor& probabilities, const Tensor& embeddings, double alpha,
                             std::size_t neighbors, std::size_t jobs = 1);

Tensor nns_smooth(const Model& model, const Tensor& suite, const NnsConfig& cfg, std::size_t jobs = 1);
RankedSuite nns_rank(const Model& model, const Tensor& suite, const NnsConfig& cfg,
                     UncertaintyMetric metric, std::size_t jobs = 1);

// ---- MC-Dropout ----

struct McDropoutConfig {
  std::size_t runs = 50;
  double rate = 0.1;  // virtual dropout rate, only for models without dropout layers
};

Tensor mc_dropout_probabilities(const Model& model, const Tensor& x, const McDropoutConfig& cfg,
                                std::uint64_t seed);
double mc_dropout_score(const Model& model, const Tensor& x, const McDropoutConfig& cfg,
                        UncertaintyMetric metric, std::uint64_t seed);
// Input i uses the child stream i of `seed`, so results do not depend on jobs.
RankedSuite mc_dropout_rank(const Model& model, const Tensor& suite, const McDropoutConfig& cfg,
                            UncertaintyMetric metric, std::uint64_t seed, std::size_t jobs = 1);

// ---- coverage ----

// Hidden neurons are the outputs of every relu layer (or, for a model with
// no relu, every dense/conv2d layer before the head). A conv channel counts
// as one neuron whose value is its spatial mean.
std::vector<std::size_t> coverage_layers(const Model& model);
std::vector<double> hidden_neurons(const Model& model, const Tensor& x,
                                   std::span<const std::size_t> layers);

struct CoverageProfile {
  std::vector<std::size_t> layers;
  std::vector<double> low;
  std::vector<double> high;
  double threshold = 0.0;

  std::size_t neurons() const noexcept { return low.size(); }
};

CoverageProfile build_coverage_profile(const Model& model, const Tensor& inputs, double threshold = 0.0,
                                       std::size_t jobs = 1);

// Fraction of hidden neurons with activation > threshold.
double nac_score(const Model& model, const Tensor& x, double threshold);
// Fraction of profiled neurons outside [low, high].
double nbc_score(const Model& model, const Tensor& x, const CoverageProfile& profile);

RankedSuite nac_rank(const Model& model, const Tensor& suite, double threshold, std::size_t jobs = 1);
RankedSuite nbc_rank(const Model& model, const Tensor& suite, const CoverageProfile& profile,
                     std::size_t jobs = 1);

// ---- surprise adequacy ----

struct SurpriseProfile {
  std::size_t layer = 0;
  std::vector<Tensor> traces;  // per ground-truth class, [n_c, d]

  std::size_t classes() const noexcept { return traces.size(); }
  std::size_t dims() const { return traces.front().dim(1); }
};

std::vector<float> activation_trace(const Model& model, const Tensor& x, std::size_t layer);
SurpriseProfile build_surprise_profile(const Model& model, const Dataset& train,
                                       std::optional<std::size_t> layer = std::nullopt,
                                       std::size_t jobs = 1);

// Nearest-neighbor distance ratio; +infinity when the reference point sits on
// another class's trace.
double dsa_score(const SurpriseProfile& profile, std::span<const float> trace, std::size_t cls);

inline constexpr double kLsaVarianceFloor = 1e-5;

// -log of a Gaussian KDE over the class traces. Dimensions whose variance
// across the class's traces falls below kLsaVarianceFloor are dropped;
// per-dimension bandwidth follows Scott's rule.
class LsaScorer {
 public:
  explicit LsaScorer(const SurpriseProfile& profile);
  double score(std::span<const float> trace, std::size_t cls) const;
  const std::vector<double>& bandwidths(std::size_t cls) const { return kde_.at(cls).bandwidth; }

 private:
  struct ClassKde {
    std::vector<std::size_t> kept;
    std::vector<double> bandwidth;
    std::vector<double> points;  // [n, kept.size()]
    std::size_t count = 0;
    double log_norm = 0.0;
    bool usable = false;
  };
  std::vector<ClassKde> kde_;
};

double lsa_score(const SurpriseProfile& profile, std::span<const float> trace, std::size_t cls);

RankedSuite dsa_rank(const Model& model, const Tensor& suite, const SurpriseProfile& profile,
                     std::size_t jobs = 1);
RankedSuite lsa_rank(const Model& model, const Tensor& suite, const SurpriseProfile& profile,
                     std::size_t jobs = 1);

// ---- random ----

RankedSuite random_rank(std::size_t n, std::uint64_t seed);

// ---- profile files (tensor + "<path>.json" sidecar) ----

void write_coverage_profile(const std::filesystem::path& path, const CoverageProfile& profile);
CoverageProfile read_coverage_profile(const std::filesystem::path& path);
void write_surprise_profile(const std::filesystem::path& path, const SurpriseProfile& profile);
SurpriseProfile read_surprise_profile(const std::filesystem::path& path);

}  // namespace fastprio
