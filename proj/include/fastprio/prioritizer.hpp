#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastprio/feature_selection.hpp"
#include "fastprio/model.hpp"
#include "fastprio/tensor.hpp"

namespace fastprio {

// Larger value == more uncertain for every metric.
enum class UncertaintyMetric { gini, maxp, margin };

UncertaintyMetric parse_metric(std::string_view name);
std::string_view to_string(UncertaintyMetric metric);

// 1 - sum p_i^2
double gini(std::span<const float> p);
// 1 - max p_i
double maxp(std::span<const float> p);
// 1 - (p_(1) - p_(2)); needs at least two classes.
double margin(std::span<const float> p);
double uncertainty(UncertaintyMetric metric, std::span<const float> p);

// Throws DomainError unless entries are >= 0 and sum to 1 within 1e-4.
void check_probability_vector(std::span<const float> p);

// Ordering of a test suite, most uncertain first. scores[i] and
// predictions[i] are indexed by the original test index.
struct RankedSuite {
  std::vector<std::size_t> ordering;
  std::vector<double> scores;
  std::vector<std::size_t> predictions;
  std::string method;

  std::size_t size() const noexcept { return ordering.size(); }
};

// Sort descending by score, ties broken by ascending index.
RankedSuite rank_by_score(std::vector<double> scores, std::vector<std::size_t> predictions,
                          std::string method);
bool is_permutation_of_range(std::span<const std::size_t> ordering, std::size_t n);

struct FastScore {
  double score = 0.0;
  std::size_t original_label = 0;
  Tensor masked_probabilities;
  Tensor original_probabilities;
};

// Masked re-inference for one input: predicted class from the unmasked
// forward selects the mask row, the row is applied at the feature layer and
// the remaining layers produce the probabilities that are scored.
FastScore fast_score(const Model& model, const FeatureMask& masks, const Tensor& x,
                     UncertaintyMetric metric);

// Ranks every item of `suite` ([n, ...input shape]). Without masks this is
// the plain uncertainty baseline (DeepGini for gini).
RankedSuite prioritize(const Model& model, const FeatureMask* masks, const Tensor& suite,
                       UncertaintyMetric metric, std::size_t jobs = 1);

// Probability vectors for every suite item, [n, classes].
Tensor predict_all(const Model& model, const Tensor& suite, std::size_t jobs = 1);

// CSV rows in ranked order: index,score,method,original_prediction.
std::string ranked_suite_csv(const RankedSuite& suite);
std::string ranked_suite_json(const RankedSuite& suite);
void write_ranked_suite(const std::filesystem::path& path, const RankedSuite& suite);
// Reads either format, chosen by extension (.csv or .json).
RankedSuite read_ranked_suite(const std::filesystem::path& path);

}  // namespace fastprio
