#include "fastprio/prioritizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

namespace fs = std::filesystem;
using nlohmann::json;

RankedSuite rank_by_score(std::vector<double> scores, std::vector<std::size_t> predictions,
                          std::string method) {
  if (scores.empty()) throw EmptyInputError("cannot rank an empty suite");
  if (!predictions.empty() && predictions.size() != scores.size()) {
    throw ConsistencyError("rank_by_score: " + std::to_string(scores.size()) + " scores but " +
                           std::to_string(predictions.size()) + " predictions");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("NaN score in ranking '" + method + "'");
  }
  RankedSuite out;
  out.ordering.resize(scores.size());
  std::iota(out.ordering.begin(), out.ordering.end(), std::size_t{0});
  std::stable_sort(out.ordering.begin(), out.ordering.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  out.scores = std::move(scores);
  out.predictions = std::move(predictions);
  out.method = std::move(method);
  return out;
}

bool is_permutation_of_range(std::span<const std::size_t> ordering, std::size_t n) {
  if (ordering.size() != n) return false;
  std::vector<char> seen(n, 0);
  for (auto i : ordering) {
    if (i >= n || seen[i]) return false;
    seen[i] = 1;
  }
  return true;
}

FastScore fast_score(const Model& model, const FeatureMask& masks, const Tensor& x,
                     UncertaintyMetric metric) {
  const FeatureView view = model.feature_view();
  if (masks.layer != view.layer || masks.features() != view.count || masks.classes() != model.classes()) {
    throw ConfigurationError("mask built for layer " + std::to_string(masks.layer) + " (" +
                             std::to_string(masks.classes()) + "x" + std::to_string(masks.features()) +
                             ") does not fit feature layer " + std::to_string(view.layer) + " (" +
                             std::to_string(model.classes()) + "x" + std::to_string(view.count) + ")");
  }
  auto split = model.forward_split(x, view.layer);
  FastScore out;
  out.original_label = argmax(split.probabilities);
  const Tensor purified = apply_feature_mask(split.features, masks.row(out.original_label), view);
  out.masked_probabilities = model.forward_from_layer(purified, view.layer);
  out.score = uncertainty(metric, out.masked_probabilities.values());
  out.original_probabilities = std::move(split.probabilities);
  return out;
}

namespace {

void check_suite(const Model& model, const Tensor& suite) {
  if (suite.empty() || suite.rank() < 2) throw EmptyInputError("test suite is empty");
  const Shape sample(suite.shape().begin() + 1, suite.shape().end());
  if (sample != model.input_shape()) {
    throw DimensionError("suite samples are " + shape_to_string(sample) + ", model expects " +
                         shape_to_string(model.input_shape()));
  }
}

std::string format_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", r);
  return buf;
}

}  // namespace

Tensor predict_all(const Model& model, const Tensor& suite, std::size_t jobs) {
  check_suite(model, suite);
  const std::size_t n = suite.dim(0);
  std::vector<Tensor> probs(n);
  parallel_for(n, jobs, [&](std::size_t i) { probs[i] = model.forward(suite.item(i)); });
  return stack(probs);
}

RankedSuite prioritize(const Model& model, const FeatureMask* masks, const Tensor& suite,
                       UncertaintyMetric metric, std::size_t jobs) {
  check_suite(model, suite);
  const std::size_t n = suite.dim(0);
  std::vector<double> scores(n);
  std::vector<std::size_t> predictions(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const Tensor x = suite.item(i);
    if (masks) {
      const auto s = fast_score(model, *masks, x, metric);
      scores[i] = s.score;
      predictions[i] = s.original_label;
    } else {
      const Tensor p = model.forward(x);
      scores[i] = uncertainty(metric, p.values());
      predictions[i] = argmax(p);
    }
  });
  std::string tag = masks ? "fast-" + std::string(to_string(metric)) + "-r" + format_rate(masks->rate)
                          : std::string(to_string(metric));
  return rank_by_score(std::move(scores), std::move(predictions), std::move(tag));
}

// ---- serialization ----

namespace {

std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json score_to_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double score_from_json(const json& j, const std::string& origin) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw FormatError(origin + ": bad score value " + j.dump());
}

void check_tag(const std::string& method) {
  if (method.find_first_of(",\"\n\r") != std::string::npos) {
    throw ParameterError("method tag '" + method + "' may not contain commas, quotes or newlines");
  }
}

}  // namespace

std::string ranked_suite_csv(const RankedSuite& suite) {
  check_tag(suite.method);
  std::string out = "index,score,method,original_prediction\n";
  for (auto idx : suite.ordering) {
    out += std::to_string(idx);
    out += ',';
    out += format_score(suite.scores.at(idx));
    out += ',';
    out += suite.method;
    out += ',';
    out += suite.predictions.empty() ? "" : std::to_string(suite.predictions.at(idx));
    out += '\n';
  }
  return out;
}

std::string ranked_suite_json(const RankedSuite& suite) {
  json scores = json::array();
  for (double s : suite.scores) scores.push_back(score_to_json(s));
  json j{{"method", suite.method},
         {"ordering", suite.ordering},
         {"scores", scores},
         {"predictions", suite.predictions}};
  return j.dump(2) + "\n";
}

void write_ranked_suite(const fs::path& path, const RankedSuite& suite) {
  if (path.extension() == ".csv") {
    write_file_bytes(path, ranked_suite_csv(suite));
  } else {
    write_file_bytes(path, ranked_suite_json(suite));
  }
}

RankedSuite read_ranked_suite(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  const std::string origin = path.string();
  RankedSuite out;
  if (path.extension() == ".csv") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "index,score,method,original_prediction") {
      throw FormatError(origin + ": missing ranked-suite CSV header");
    }
    std::vector<std::pair<std::size_t, double>> rows;
    std::vector<std::pair<std::size_t, std::size_t>> preds;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cols.push_back(cell);
      if (line.back() == ',') cols.emplace_back();
      if (cols.size() != 4) throw FormatError(origin + ": malformed row '" + line + "'");
      try {
        const std::size_t idx = std::stoull(cols[0]);
        rows.emplace_back(idx, std::stod(cols[1]));
        out.method = cols[2];
        if (!cols[3].empty()) preds.emplace_back(idx, std::stoull(cols[3]));
      } catch (const std::exception&) {
        throw FormatError(origin + ": malformed row '" + line + "'");
      }
    }
    const std::size_t n = rows.size();
    out.scores.assign(n, 0.0);
    for (const auto& [idx, s] : rows) {
      if (idx >= n) throw FormatError(origin + ": index " + std::to_string(idx) + " out of range");
      out.ordering.push_back(idx);
      out.scores[idx] = s;
    }
    if (!preds.empty()) {
      out.predictions.assign(n, 0);
      for (const auto& [idx, p] : preds) out.predictions[idx] = p;
    }
  } else {
    json j;
    try {
      j = json::parse(text);
      out.method = j.at("method").get<std::string>();
      out.ordering = j.at("ordering").get<std::vector<std::size_t>>();
      for (const auto& s : j.at("scores")) out.scores.push_back(score_from_json(s, origin));
      out.predictions = j.value("predictions", std::vector<std::size_t>{});
    } catch (const json::exception& e) {
      throw FormatError(origin + ": " + e.what());
    }
  }
  if (!is_permutation_of_range(out.ordering, out.scores.size())) {
    throw FormatError(origin + ": ordering is not a permutation of the suite indices");
  }
  return out;
}

}  // namespace fastprio
