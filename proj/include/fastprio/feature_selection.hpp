#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastprio/dataset.hpp"
#include "fastprio/model.hpp"

namespace fastprio {

struct ReferenceSetConfig {
  double tau = 0.9;
  std::size_t max_per_class = 200;
};

// D_c per class: correctly predicted training examples of class c whose
// class-c probability reaches tau.
struct ReferenceSets {
  std::vector<Dataset> per_class;

  std::size_t classes() const noexcept { return per_class.size(); }
  std::size_t total() const noexcept;
};

// Throws EmptyReferenceSetError naming the first class with no qualifying
// example. Classes over the cap are subsampled with the seeded stream and
// keep their original relative order.
ReferenceSets build_reference_sets(const Model& model, const Dataset& train,
                                   const ReferenceSetConfig& cfg, std::uint64_t seed,
                                   std::size_t jobs = 1);

// Per-class, per-feature scores for the model's feature layer. Lower score
// means the feature is pruned earlier.
struct ContributionMatrix {
  Tensor values;  // [classes, features]
  std::size_t layer = 0;
  std::vector<std::size_t> reference_sizes;
  std::string strategy = "contribution";

  std::size_t classes() const { return values.dim(0); }
  std::size_t features() const { return values.dim(1); }
  std::span<const float> row(std::size_t cls) const { return values.item_values(cls); }
};

// Instrumentation for the linear-cost contract: every masked partial forward
// (forward_from_layer) issued while assessing is counted here.
struct AssessStats {
  std::atomic<std::size_t> partial_forwards{0};
  std::atomic<std::size_t> full_forwards{0};
};

// Mean p_c over D_c minus mean p_c with feature `feature` zeroed at the
// model's feature layer. One forward per example plus one partial forward
// per (example, feature).
double measure_contribution(const Model& model, const Dataset& reference, std::size_t cls,
                            std::size_t feature, AssessStats* stats = nullptr);

// Full C x N_l contribution matrix. Work is spread over (class, feature)
// pairs; the result is bit-identical for every `jobs`.
ContributionMatrix assess_all(const Model& model, const ReferenceSets& refs, std::size_t jobs = 1,
                              AssessStats* stats = nullptr);

// Binary keep/drop matrix. Row c zeroes the k = round(rate * N_l) features
// with the smallest scores in row c of V (ties: lower index pruned first).
struct FeatureMask {
  Tensor mask;  // [classes, features], entries 0 or 1
  double rate = 0.0;
  std::size_t pruned = 0;
  std::size_t layer = 0;

  std::size_t classes() const { return mask.dim(0); }
  std::size_t features() const { return mask.dim(1); }
  std::span<const float> row(std::size_t cls) const { return mask.item_values(cls); }
};

FeatureMask build_masks(const ContributionMatrix& scores, double rate);
std::size_t pruned_count(double rate, std::size_t features);

// Alternative scoring rules for ablation studies. `contribution` is the
// ablation measurement above; the rest are static statistics over D_c.
enum class SelectionStrategy { contribution, output, frequency, variance, gradient, random };

SelectionStrategy parse_strategy(std::string_view name);
std::string_view to_string(SelectionStrategy s);

inline constexpr double kGradientStep = 1e-3;

ContributionMatrix strategy_scores(const Model& model, const ReferenceSets& refs,
                                   SelectionStrategy strategy, std::uint64_t seed,
                                   std::size_t jobs = 1);

// Tensor file plus a JSON sidecar at "<path>.json".
void write_scores(const std::filesystem::path& path, const ContributionMatrix& scores);
ContributionMatrix read_scores(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const FeatureMask& mask);
FeatureMask read_mask(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace fastprio
