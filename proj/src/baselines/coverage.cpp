#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/feature_selection.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

using nlohmann::json;

std::vector<std::size_t> coverage_layers(const Model& model) {
  std::vector<std::size_t> layers;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layers()[i].kind == LayerKind::relu) layers.push_back(i);
  }
  if (!layers.empty()) return layers;
  std::size_t head = model.layer_count();
  for (std::size_t i = model.layer_count(); i-- > 0;) {
    if (model.layers()[i].has_parameters()) {
      head = i;
      break;
    }
  }
  for (std::size_t i = 0; i < head; ++i) {
    if (model.layers()[i].has_parameters()) layers.push_back(i);
  }
  if (layers.empty()) throw ConfigurationError("model has no hidden layer to measure coverage on");
  return layers;
}

std::vector<double> hidden_neurons(const Model& model, const Tensor& x,
                                   std::span<const std::size_t> layers) {
  const auto trace = model.forward_trace(x);
  std::vector<double> out;
  for (auto l : layers) {
    if (l >= trace.size()) throw ConfigurationError("coverage layer " + std::to_string(l) + " out of range");
    const Tensor& t = trace[l];
    if (t.rank() == 3) {
      const std::size_t plane = t.dim(1) * t.dim(2);
      for (std::size_t c = 0; c < t.dim(0); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += t[c * plane + j];
        out.push_back(s / static_cast<double>(plane));
      }
    } else {
      for (float v : t.values()) out.push_back(v);
    }
  }
  return out;
}

CoverageProfile build_coverage_profile(const Model& model, const Tensor& inputs, double threshold,
                                       std::size_t jobs) {
  if (inputs.empty() || inputs.rank() < 2) throw EmptyInputError("coverage profile needs inputs");
  CoverageProfile profile;
  profile.layers = coverage_layers(model);
  profile.threshold = threshold;
  const std::size_t n = inputs.dim(0);
  std::vector<std::vector<double>> acts(n);
  parallel_for(n, jobs, [&](std::size_t i) { acts[i] = hidden_neurons(model, inputs.item(i), profile.layers); });
  const std::size_t h = acts.front().size();
  profile.low.assign(h, std::numeric_limits<double>::infinity());
  profile.high.assign(h, -std::numeric_limits<double>::infinity());
  for (const auto& a : acts) {
    for (std::size_t j = 0; j < h; ++j) {
      profile.low[j] = std::min(profile.low[j], a[j]);
      profile.high[j] = std::max(profile.high[j], a[j]);
    }
  }
  return profile;
}

double nac_score(const Model& model, const Tensor& x, double threshold) {
  const auto layers = coverage_layers(model);
  const auto acts = hidden_neurons(model, x, layers);
  const auto covered = std::count_if(acts.begin(), acts.end(), [&](double v) { return v > threshold; });
  return static_cast<double>(covered) / static_cast<double>(acts.size());
}

double nbc_score(const Model& model, const Tensor& x, const CoverageProfile& profile) {
  if (profile.neurons() == 0 || profile.high.size() != profile.neurons()) {
    throw ConfigurationError("coverage profile is empty or malformed");
  }
  const auto acts = hidden_neurons(model, x, profile.layers);
  if (acts.size() != profile.neurons()) {
    throw ConfigurationError("coverage profile tracks " + std::to_string(profile.neurons()) +
                             " neurons, model exposes " + std::to_string(acts.size()));
  }
  std::size_t outside = 0;
  for (std::size_t j = 0; j < acts.size(); ++j) {
    outside += acts[j] < profile.low[j] || acts[j] > profile.high[j];
  }
  return static_cast<double>(outside) / static_cast<double>(acts.size());
}

namespace {

template <typename ScoreFn>
RankedSuite rank_inputs(const Model& model, const Tensor& suite, std::size_t jobs, std::string tag,
                        ScoreFn&& score) {
  if (suite.empty() || suite.rank() < 2) throw EmptyInputError("test suite is empty");
  const std::size_t n = suite.dim(0);
  std::vector<double> scores(n);
  std::vector<std::size_t> predictions(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const Tensor x = suite.item(i);
    scores[i] = score(x);
    predictions[i] = argmax(model.forward(x));
  });
  return rank_by_score(std::move(scores), std::move(predictions), std::move(tag));
}

}  // namespace

RankedSuite nac_rank(const Model& model, const Tensor& suite, double threshold, std::size_t jobs) {
  return rank_inputs(model, suite, jobs, "nac", [&](const Tensor& x) { return nac_score(model, x, threshold); });
}

RankedSuite nbc_rank(const Model& model, const Tensor& suite, const CoverageProfile& profile,
                     std::size_t jobs) {
  return rank_inputs(model, suite, jobs, "nbc", [&](const Tensor& x) { return nbc_score(model, x, profile); });
}

void write_coverage_profile(const std::filesystem::path& path, const CoverageProfile& profile) {
  std::vector<float> bounds;
  bounds.reserve(2 * profile.neurons());
  for (double v : profile.low) bounds.push_back(static_cast<float>(v));
  for (double v : profile.high) bounds.push_back(static_cast<float>(v));
  write_tensor(path, Tensor({2, profile.neurons()}, std::move(bounds)));
  json j{{"kind", "coverage"}, {"layers", profile.layers}, {"threshold", profile.threshold},
         {"neurons", profile.neurons()}};
  write_file_bytes(sidecar_path(path), j.dump(2) + "\n");
}

CoverageProfile read_coverage_profile(const std::filesystem::path& path) {
  const Tensor bounds = read_tensor(path);
  json j;
  try {
    j = json::parse(read_file_bytes(sidecar_path(path)));
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  }
  if (j.value("kind", "") != "coverage" || bounds.rank() != 2 || bounds.dim(0) != 2) {
    throw FormatError(path.string() + ": not a coverage profile");
  }
  CoverageProfile p;
  p.layers = j.at("layers").get<std::vector<std::size_t>>();
  p.threshold = j.value("threshold", 0.0);
  const std::size_t h = bounds.dim(1);
  for (std::size_t i = 0; i < h; ++i) {
    p.low.push_back(bounds[i]);
    p.high.push_back(bounds[h + i]);
  }
  return p;
}

}  // namespace fastprio
