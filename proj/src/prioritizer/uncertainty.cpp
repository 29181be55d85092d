#include <algorithm>
#include <cmath>

#include "fastprio/errors.hpp"
#include "fastprio/prioritizer.hpp"

namespace fastprio {

UncertaintyMetric parse_metric(std::string_view name) {
  if (name == "gini" || name == "deepgini") return UncertaintyMetric::gini;
  if (name == "maxp") return UncertaintyMetric::maxp;
  if (name == "margin") return UncertaintyMetric::margin;
  throw ParameterError("unknown uncertainty metric '" + std::string(name) + "'");
}

std::string_view to_string(UncertaintyMetric metric) {
  switch (metric) {
    case UncertaintyMetric::gini: return "gini";
    case UncertaintyMetric::maxp: return "maxp";
    case UncertaintyMetric::margin: return "margin";
  }
  return "?";
}

void check_probability_vector(std::span<const float> p) {
  if (p.empty()) throw DomainError("empty probability vector");
  double sum = 0.0;
  for (float v : p) {
    if (!(v >= 0.0f)) throw DomainError("probability vector has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4) {
    throw DomainError("probability vector sums to " + std::to_string(sum));
  }
}

double gini(std::span<const float> p) {
  check_probability_vector(p);
  double sq = 0.0;
  for (float v : p) sq += static_cast<double>(v) * v;
  return 1.0 - sq;
}

double maxp(std::span<const float> p) {
  check_probability_vector(p);
  return 1.0 - static_cast<double>(*std::max_element(p.begin(), p.end()));
}

double margin(std::span<const float> p) {
  if (p.size() < 2) throw DomainError("margin needs at least two classes");
  check_probability_vector(p);
  float first = -1.0f, second = -1.0f;
  for (float v : p) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return 1.0 - (static_cast<double>(first) - static_cast<double>(second));
}

double uncertainty(UncertaintyMetric metric, std::span<const float> p) {
  switch (metric) {
    case UncertaintyMetric::gini: return gini(p);
    case UncertaintyMetric::maxp: return maxp(p);
    case UncertaintyMetric::margin: return margin(p);
  }
  throw ParameterError("unknown metric");
}

}  // namespace fastprio
