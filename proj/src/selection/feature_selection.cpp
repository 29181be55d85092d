#include "fastprio/feature_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/rng.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t ReferenceSets::total() const noexcept {
  std::size_t n = 0;
  for (const auto& d : per_class) n += d.size();
  return n;
}

ReferenceSets build_reference_sets(const Model& model, const Dataset& train,
                                   const ReferenceSetConfig& cfg, std::uint64_t seed,
                                   std::size_t jobs) {
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw ParameterError("tau must lie in (0, 1]");
  if (cfg.max_per_class == 0) throw ParameterError("max-per-class must be positive");
  if (train.size() == 0) throw EmptyInputError("reference sets need a non-empty training set");
  if (train.classes() > model.classes()) {
    throw ConfigurationError("training set has " + std::to_string(train.classes()) +
                             " classes, model has " + std::to_string(model.classes()));
  }

  std::vector<char> qualifies(train.size(), 0);
  parallel_for(train.size(), jobs, [&](std::size_t i) {
    const Tensor p = model.forward(train.sample(i));
    const std::size_t label = train.label(i);
    qualifies[i] = argmax(p) == label && static_cast<double>(p[label]) >= cfg.tau;
  });

  std::vector<std::vector<std::size_t>> members(model.classes());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (qualifies[i]) members[train.label(i)].push_back(i);
  }

  const RngStream root(seed, 0x0d5e7);
  ReferenceSets out;
  for (std::size_t c = 0; c < model.classes(); ++c) {
    auto& idx = members[c];
    if (idx.empty()) {
      throw EmptyReferenceSetError("class " + std::to_string(c) +
                                       " has no correctly predicted training example with confidence >= " +
                                       std::to_string(cfg.tau) + "; consider lowering tau",
                                   c);
    }
    if (idx.size() > cfg.max_per_class) {
      RngStream rng = root.child(c);
      auto picks = rng.sample_without_replacement(idx.size(), cfg.max_per_class);
      std::sort(picks.begin(), picks.end());
      std::vector<std::size_t> kept;
      kept.reserve(picks.size());
      for (auto p : picks) kept.push_back(idx[p]);
      idx = std::move(kept);
    }
    out.per_class.push_back(train.subset(idx));
  }
  return out;
}

namespace {

Tensor without_feature(const Tensor& features, const FeatureView& view, std::size_t feature) {
  std::vector<float> row(view.count, 1.0f);
  row[feature] = 0.0f;
  return apply_feature_mask(features, row, view);
}

// Feature-layer activations and summed class-c confidence for one D_c.
struct ClassCache {
  std::vector<Tensor> features;
  double confidence_sum = 0.0;
};

ClassCache cache_class(const Model& model, const Dataset& reference, std::size_t cls,
                       AssessStats* stats) {
  ClassCache cache;
  cache.features.reserve(reference.size());
  for (std::size_t j = 0; j < reference.size(); ++j) {
    auto split = model.forward_split(reference.sample(j), model.feature_layer());
    if (stats) ++stats->full_forwards;
    cache.confidence_sum += split.probabilities[cls];
    cache.features.push_back(std::move(split.features));
  }
  return cache;
}

double ablate(const Model& model, const ClassCache& cache, const FeatureView& view, std::size_t cls,
              std::size_t feature, AssessStats* stats) {
  double masked_sum = 0.0;
  for (const auto& f : cache.features) {
    const Tensor p = model.forward_from_layer(without_feature(f, view, feature), view.layer);
    if (stats) ++stats->partial_forwards;
    masked_sum += p[cls];
  }
  const auto n = static_cast<double>(cache.features.size());
  return cache.confidence_sum / n - masked_sum / n;
}

void check_reference(const Model& model, const Dataset& reference, std::size_t cls) {
  if (reference.size() == 0) {
    throw EmptyReferenceSetError("reference set for class " + std::to_string(cls) + " is empty", cls);
  }
  if (cls >= model.classes()) throw IndexError("class " + std::to_string(cls) + " out of range");
}

}  // namespace

double measure_contribution(const Model& model, const Dataset& reference, std::size_t cls,
                            std::size_t feature, AssessStats* stats) {
  check_reference(model, reference, cls);
  const FeatureView view = model.feature_view();
  if (feature >= view.count) {
    throw IndexError("feature " + std::to_string(feature) + " out of range for " +
                     std::to_string(view.count) + " features");
  }
  const ClassCache cache = cache_class(model, reference, cls, stats);
  return ablate(model, cache, view, cls, feature, stats);
}

ContributionMatrix assess_all(const Model& model, const ReferenceSets& refs, std::size_t jobs,
                              AssessStats* stats) {
  if (refs.classes() != model.classes()) {
    throw ConfigurationError("reference sets cover " + std::to_string(refs.classes()) +
                             " classes, model has " + std::to_string(model.classes()));
  }
  const FeatureView view = model.feature_view();
  const std::size_t classes = model.classes();
  for (std::size_t c = 0; c < classes; ++c) check_reference(model, refs.per_class[c], c);

  std::vector<ClassCache> caches(classes);
  parallel_for(classes, jobs, [&](std::size_t c) {
    caches[c] = cache_class(model, refs.per_class[c], c, stats);
  });

  std::vector<double> values(classes * view.count);
  parallel_for(values.size(), jobs, [&](std::size_t k) {
    const std::size_t c = k / view.count;
    const std::size_t i = k % view.count;
    values[k] = ablate(model, caches[c], view, c, i, stats);
  });

  ContributionMatrix out;
  out.values = Tensor({classes, view.count}, std::vector<float>(values.begin(), values.end()));
  out.layer = view.layer;
  for (const auto& d : refs.per_class) out.reference_sizes.push_back(d.size());
  return out;
}

std::size_t pruned_count(double rate, std::size_t features) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("pruning rate must lie in [0, 1), got " + std::to_string(rate));
  }
  return std::min(features, round_count(rate * static_cast<double>(features)));
}

FeatureMask build_masks(const ContributionMatrix& scores, double rate) {
  const std::size_t classes = scores.classes();
  const std::size_t n = scores.features();
  const std::size_t k = pruned_count(rate, n);
  std::vector<float> mask(classes * n, 1.0f);
  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto row = scores.row(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    for (std::size_t j = 0; j < k; ++j) mask[c * n + order[j]] = 0.0f;
  }
  FeatureMask out;
  out.mask = Tensor({classes, n}, std::move(mask));
  out.rate = rate;
  out.pruned = k;
  out.layer = scores.layer;
  return out;
}

SelectionStrategy parse_strategy(std::string_view name) {
  if (name == "contribution") return SelectionStrategy::contribution;
  if (name == "output") return SelectionStrategy::output;
  if (name == "activation-frequency" || name == "frequency") return SelectionStrategy::frequency;
  if (name == "variance") return SelectionStrategy::variance;
  if (name == "gradient") return SelectionStrategy::gradient;
  if (name == "random") return SelectionStrategy::random;
  throw ParameterError("unknown selection strategy '" + std::string(name) + "'");
}

std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::contribution: return "contribution";
    case SelectionStrategy::output: return "output";
    case SelectionStrategy::frequency: return "activation-frequency";
    case SelectionStrategy::variance: return "variance";
    case SelectionStrategy::gradient: return "gradient";
    case SelectionStrategy::random: return "random";
  }
  return "?";
}

namespace {

Tensor shifted_feature(const Tensor& features, const FeatureView& view, std::size_t feature,
                       double delta) {
  std::vector<float> v(features.storage());
  const std::size_t plane = v.size() / view.count;
  for (std::size_t j = 0; j < plane; ++j) {
    v[feature * plane + j] = static_cast<float>(v[feature * plane + j] + delta);
  }
  return Tensor(features.shape(), std::move(v));
}

double statistic(const Model& model, const Dataset& reference, const FeatureView& view,
                 SelectionStrategy strategy, std::size_t cls, std::size_t feature,
                 const std::vector<std::vector<double>>& activations,
                 const std::vector<Tensor>& features) {
  const auto n = static_cast<double>(reference.size());
  switch (strategy) {
    case SelectionStrategy::output: {
      double s = 0.0;
      for (const auto& a : activations) s += a[feature];
      return s / n;
    }
    case SelectionStrategy::frequency: {
      double s = 0.0;
      for (const auto& a : activations) s += a[feature] > 0.0 ? 1.0 : 0.0;
      return s / n;
    }
    case SelectionStrategy::variance: {
      double mean = 0.0;
      for (const auto& a : activations) mean += a[feature];
      mean /= n;
      double var = 0.0;
      for (const auto& a : activations) var += (a[feature] - mean) * (a[feature] - mean);
      return var / n;
    }
    case SelectionStrategy::gradient: {
      double s = 0.0;
      for (const auto& f : features) {
        const double up = model.forward_from_layer(shifted_feature(f, view, feature, kGradientStep), view.layer)[cls];
        const double down = model.forward_from_layer(shifted_feature(f, view, feature, -kGradientStep), view.layer)[cls];
        s += std::abs((up - down) / (2.0 * kGradientStep));
      }
      return s / n;
    }
    default:
      break;
  }
  throw ParameterError("statistic() called with a non-statistical strategy");
}

}  // namespace

ContributionMatrix strategy_scores(const Model& model, const ReferenceSets& refs,
                                   SelectionStrategy strategy, std::uint64_t seed, std::size_t jobs) {
  if (strategy == SelectionStrategy::contribution) {
    auto m = assess_all(model, refs, jobs);
    return m;
  }
  const FeatureView view = model.feature_view();
  const std::size_t classes = model.classes();
  if (refs.classes() != classes) throw ConfigurationError("reference sets do not match model classes");

  std::vector<double> values(classes * view.count);
  if (strategy == SelectionStrategy::random) {
    RngStream rng(seed, 0x4a4d);
    for (auto& v : values) v = rng.uniform();
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      const Dataset& d = refs.per_class[c];
      check_reference(model, d, c);
      std::vector<Tensor> features(d.size());
      std::vector<std::vector<double>> activations(d.size());
      parallel_for(d.size(), jobs, [&](std::size_t j) {
        features[j] = model.forward_to_layer(d.sample(j), view.layer);
        activations[j] = feature_activations(features[j], view);
      });
      parallel_for(view.count, jobs, [&](std::size_t i) {
        values[c * view.count + i] = statistic(model, d, view, strategy, c, i, activations, features);
      });
    }
  }

  ContributionMatrix out;
  out.values = Tensor({classes, view.count}, std::vector<float>(values.begin(), values.end()));
  out.layer = view.layer;
  for (const auto& d : refs.per_class) out.reference_sizes.push_back(d.size());
  out.strategy = std::string(to_string(strategy));
  return out;
}

// ---- serialization ----

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

namespace {

json read_sidecar(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  try {
    return json::parse(read_file_bytes(side));
  } catch (const json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
}

std::size_t sidecar_count(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw FormatError(sidecar_path(path).string() + ": missing integer \"" + key + "\"");
  }
  return j[key].get<std::size_t>();
}

}  // namespace

void write_scores(const fs::path& path, const ContributionMatrix& scores) {
  write_tensor(path, scores.values);
  json j{{"layer", scores.layer},
         {"classes", scores.classes()},
         {"features", scores.features()},
         {"strategy", scores.strategy},
         {"reference_sizes", scores.reference_sizes}};
  write_file_bytes(sidecar_path(path), j.dump(2) + "\n");
}

ContributionMatrix read_scores(const fs::path& path) {
  ContributionMatrix m;
  m.values = read_tensor(path);
  const json j = read_sidecar(path);
  m.layer = sidecar_count(j, "layer", path);
  if (m.values.rank() != 2 || m.values.dim(0) != sidecar_count(j, "classes", path) ||
      m.values.dim(1) != sidecar_count(j, "features", path)) {
    throw FormatError(path.string() + ": score tensor shape disagrees with its sidecar");
  }
  m.strategy = j.value("strategy", std::string("contribution"));
  if (j.contains("reference_sizes")) m.reference_sizes = j["reference_sizes"].get<std::vector<std::size_t>>();
  return m;
}

void write_mask(const fs::path& path, const FeatureMask& mask) {
  write_tensor(path, mask.mask);
  json j{{"layer", mask.layer},
         {"rate", mask.rate},
         {"classes", mask.classes()},
         {"features", mask.features()},
         {"pruned", mask.pruned}};
  write_file_bytes(sidecar_path(path), j.dump(2) + "\n");
}

FeatureMask read_mask(const fs::path& path) {
  FeatureMask m;
  m.mask = read_tensor(path);
  const json j = read_sidecar(path);
  m.layer = sidecar_count(j, "layer", path);
  if (!j.contains("rate") || !j["rate"].is_number()) throw FormatError(sidecar_path(path).string() + ": missing \"rate\"");
  m.rate = j["rate"].get<double>();
  if (m.mask.rank() != 2 || m.mask.dim(0) != sidecar_count(j, "classes", path) ||
      m.mask.dim(1) != sidecar_count(j, "features", path)) {
    throw FormatError(path.string() + ": mask tensor shape disagrees with its sidecar");
  }
  m.pruned = pruned_count(m.rate, m.features());
  for (std::size_t c = 0; c < m.classes(); ++c) {
    std::size_t zeros = 0;
    for (float v : m.row(c)) {
      if (v != 0.0f && v != 1.0f) throw FormatError(path.string() + ": mask entries must be 0 or 1");
      zeros += v == 0.0f;
    }
    if (zeros != m.pruned) {
      throw FormatError(path.string() + ": class " + std::to_string(c) + " row prunes " +
                        std::to_string(zeros) + " features, rate implies " + std::to_string(m.pruned));
    }
  }
  return m;
}

}  // namespace fastprio
