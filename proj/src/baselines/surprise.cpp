#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/feature_selection.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

using nlohmann::json;

std::vector<float> activation_trace(const Model& model, const Tensor& x, std::size_t layer) {
  const Tensor t = model.forward_to_layer(x, layer);
  return {t.values().begin(), t.values().end()};
}

SurpriseProfile build_surprise_profile(const Model& model, const Dataset& train,
                                       std::optional<std::size_t> layer, std::size_t jobs) {
  SurpriseProfile profile;
  profile.layer = layer.value_or(model.feature_layer());
  model.output_shape(profile.layer);
  if (train.classes() != model.classes()) {
    throw ConfigurationError("training data has " + std::to_string(train.classes()) + " classes, model has " +
                             std::to_string(model.classes()));
  }
  const std::size_t n = train.size();
  std::vector<std::vector<float>> traces(n);
  parallel_for(n, jobs, [&](std::size_t i) { traces[i] = activation_trace(model, train.sample(i), profile.layer); });
  const std::size_t d = shape_size(model.output_shape(profile.layer));
  for (std::size_t c = 0; c < train.classes(); ++c) {
    std::vector<float> rows;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (train.label(i) != c) continue;
      rows.insert(rows.end(), traces[i].begin(), traces[i].end());
      ++count;
    }
    if (count == 0) throw ProfileError("no training traces for class " + std::to_string(c));
    profile.traces.emplace_back(Shape{count, d}, std::move(rows));
  }
  return profile;
}

namespace {

double distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

void check_trace(const SurpriseProfile& profile, std::span<const float> trace, std::size_t cls) {
  if (profile.classes() == 0) throw ProfileError("surprise profile is empty");
  if (cls >= profile.classes()) {
    throw IndexError("class " + std::to_string(cls) + " outside profile with " +
                     std::to_string(profile.classes()) + " classes");
  }
  if (trace.size() != profile.dims()) {
    throw DimensionError("trace has " + std::to_string(trace.size()) + " values, profile stores " +
                         std::to_string(profile.dims()));
  }
}

}  // namespace

double dsa_score(const SurpriseProfile& profile, std::span<const float> trace, std::size_t cls) {
  check_trace(profile, trace, cls);
  const Tensor& own = profile.traces[cls];
  std::size_t nearest = 0;
  double dist_a = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < own.dim(0); ++j) {
    const double d = distance(trace, own.item_values(j));
    if (d < dist_a) {
      dist_a = d;
      nearest = j;
    }
  }
  const auto reference = own.item_values(nearest);
  double dist_b = std::numeric_limits<double>::infinity();
  bool any_other = false;
  for (std::size_t c = 0; c < profile.classes(); ++c) {
    if (c == cls || profile.traces[c].empty()) continue;
    any_other = true;
    for (std::size_t j = 0; j < profile.traces[c].dim(0); ++j) {
      dist_b = std::min(dist_b, distance(reference, profile.traces[c].item_values(j)));
    }
  }
  if (!any_other) throw ProfileError("DSA needs traces of at least one other class");
  if (dist_b == 0.0) return std::numeric_limits<double>::infinity();
  return dist_a / dist_b;
}

LsaScorer::LsaScorer(const SurpriseProfile& profile) {
  if (profile.classes() == 0) throw ProfileError("surprise profile is empty");
  const std::size_t dims = profile.dims();
  kde_.resize(profile.classes());
  for (std::size_t c = 0; c < profile.classes(); ++c) {
    const Tensor& t = profile.traces[c];
    ClassKde& kde = kde_[c];
    kde.count = t.empty() ? 0 : t.dim(0);
    if (kde.count < 2) continue;
    const double n = static_cast<double>(kde.count);
    std::vector<double> sd;
    for (std::size_t d = 0; d < dims; ++d) {
      double mean = 0.0;
      for (std::size_t j = 0; j < kde.count; ++j) mean += t[j * dims + d];
      mean /= n;
      double var = 0.0;
      for (std::size_t j = 0; j < kde.count; ++j) {
        const double diff = t[j * dims + d] - mean;
        var += diff * diff;
      }
      var /= n - 1.0;
      if (var < kLsaVarianceFloor) continue;
      kde.kept.push_back(d);
      sd.push_back(std::sqrt(var));
    }
    if (kde.kept.empty()) continue;
    const double k = static_cast<double>(kde.kept.size());
    const double scott = std::pow(n, -1.0 / (k + 4.0));
    kde.log_norm = std::log(n);
    for (double s : sd) {
      kde.bandwidth.push_back(s * scott);
      kde.log_norm += std::log(s * scott * std::sqrt(2.0 * std::numbers::pi));
    }
    kde.points.reserve(kde.count * kde.kept.size());
    for (std::size_t j = 0; j < kde.count; ++j) {
      for (auto d : kde.kept) kde.points.push_back(t[j * dims + d]);
    }
    kde.usable = true;
  }
}

double LsaScorer::score(std::span<const float> trace, std::size_t cls) const {
  if (cls >= kde_.size()) throw IndexError("class " + std::to_string(cls) + " outside the LSA profile");
  const ClassKde& kde = kde_[cls];
  if (!kde.usable) {
    throw ProfileError("class " + std::to_string(cls) + " has too few varying traces for LSA (" +
                       std::to_string(kde.count) + " traces, " + std::to_string(kde.kept.size()) +
                       " dimensions kept)");
  }
  const std::size_t k = kde.kept.size();
  for (auto d : kde.kept) {
    if (d >= trace.size()) throw DimensionError("trace is shorter than the LSA profile");
  }
  std::vector<double> exponents(kde.count);
  for (std::size_t j = 0; j < kde.count; ++j) {
    double q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double z = (trace[kde.kept[i]] - kde.points[j * k + i]) / kde.bandwidth[i];
      q += z * z;
    }
    exponents[j] = -0.5 * q;
  }
  const double top = *std::max_element(exponents.begin(), exponents.end());
  double sum = 0.0;
  for (double e : exponents) sum += std::exp(e - top);
  const double log_density = top + std::log(sum) - kde.log_norm;
  return -log_density;
}

double lsa_score(const SurpriseProfile& profile, std::span<const float> trace, std::size_t cls) {
  check_trace(profile, trace, cls);
  return LsaScorer(profile).score(trace, cls);
}

namespace {

template <typename ScoreFn>
RankedSuite rank_traces(const Model& model, const Tensor& suite, const SurpriseProfile& profile,
                        std::size_t jobs, std::string tag, ScoreFn&& score) {
  if (suite.empty() || suite.rank() < 2) throw EmptyInputError("test suite is empty");
  if (profile.classes() != model.classes()) {
    throw ConfigurationError("surprise profile has " + std::to_string(profile.classes()) +
                             " classes, model has " + std::to_string(model.classes()));
  }
  const std::size_t n = suite.dim(0);
  std::vector<double> scores(n);
  std::vector<std::size_t> predictions(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    auto split = model.forward_split(suite.item(i), profile.layer);
    predictions[i] = argmax(split.probabilities);
    scores[i] = score(split.features.values(), predictions[i]);
  });
  return rank_by_score(std::move(scores), std::move(predictions), std::move(tag));
}

}  // namespace

RankedSuite dsa_rank(const Model& model, const Tensor& suite, const SurpriseProfile& profile,
                     std::size_t jobs) {
  return rank_traces(model, suite, profile, jobs, "dsa", [&](std::span<const float> t, std::size_t c) {
    return dsa_score(profile, t, c);
  });
}

RankedSuite lsa_rank(const Model& model, const Tensor& suite, const SurpriseProfile& profile,
                     std::size_t jobs) {
  const LsaScorer scorer(profile);
  return rank_traces(model, suite, profile, jobs, "lsa", [&](std::span<const float> t, std::size_t c) {
    check_trace(profile, t, c);
    return scorer.score(t, c);
  });
}

void write_surprise_profile(const std::filesystem::path& path, const SurpriseProfile& profile) {
  if (profile.classes() == 0) throw ProfileError("surprise profile is empty");
  std::vector<float> rows;
  std::vector<std::size_t> counts;
  for (const auto& t : profile.traces) {
    rows.insert(rows.end(), t.values().begin(), t.values().end());
    counts.push_back(t.dim(0));
  }
  const std::size_t total = rows.size() / profile.dims();
  write_tensor(path, Tensor({total, profile.dims()}, std::move(rows)));
  const LsaScorer scorer(profile);
  json bandwidth = json::array();
  for (std::size_t c = 0; c < profile.classes(); ++c) bandwidth.push_back(scorer.bandwidths(c));
  json j{{"kind", "surprise"},
         {"layer", profile.layer},
         {"class_counts", counts},
         {"variance_floor", kLsaVarianceFloor},
         {"bandwidth", bandwidth}};
  write_file_bytes(sidecar_path(path), j.dump(2) + "\n");
}

SurpriseProfile read_surprise_profile(const std::filesystem::path& path) {
  const Tensor all = read_tensor(path);
  json j;
  try {
    j = json::parse(read_file_bytes(sidecar_path(path)));
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  }
  if (j.value("kind", "") != "surprise" || all.rank() != 2) {
    throw FormatError(path.string() + ": not a surprise profile");
  }
  SurpriseProfile p;
  std::vector<std::size_t> counts;
  try {
    p.layer = j.at("layer").get<std::size_t>();
    counts = j.at("class_counts").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  }
  std::size_t start = 0;
  for (auto count : counts) {
    if (count == 0 || start + count > all.dim(0)) throw FormatError(path.string() + ": class counts do not match");
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    p.traces.push_back(all.gather(idx));
    start += count;
  }
  if (start != all.dim(0)) throw FormatError(path.string() + ": class counts do not match");
  return p;
}

}  // namespace fastprio
