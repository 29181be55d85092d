#include "fastprio/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/tensor.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

using nlohmann::json;

FaultVector::FaultVector(std::vector<bool> is_fault) : is_fault_(std::move(is_fault)) {
  m_ = static_cast<std::size_t>(std::count(is_fault_.begin(), is_fault_.end(), true));
}

FaultVector FaultVector::from_predictions(std::span<const std::size_t> predictions,
                                          std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ConsistencyError(std::to_string(predictions.size()) + " predictions but " +
                           std::to_string(labels.size()) + " labels");
  }
  std::vector<bool> flags(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = predictions[i] != labels[i];
  return FaultVector(std::move(flags));
}

namespace {

void check_ordering(std::span<const std::size_t> ordering, const FaultVector& faults) {
  if (faults.n() == 0) throw EmptyInputError("empty fault vector");
  if (!is_permutation_of_range(ordering, faults.n())) {
    throw ConsistencyError("ordering of length " + std::to_string(ordering.size()) +
                           " is not a permutation of the " + std::to_string(faults.n()) + " suite indices");
  }
  if (faults.m() == 0) throw NotApplicableError("suite has no faults; APFD/TRC are not applicable");
}

}  // namespace

double apfd(std::span<const std::size_t> ordering, const FaultVector& faults) {
  check_ordering(ordering, faults);
  double positions = 0.0;
  for (std::size_t rank = 0; rank < ordering.size(); ++rank) {
    if (faults[ordering[rank]]) positions += static_cast<double>(rank + 1);
  }
  const double n = static_cast<double>(faults.n());
  const double m = static_cast<double>(faults.m());
  return 1.0 - positions / (n * m) + 1.0 / (2.0 * n);
}

double apfd(const RankedSuite& suite, const FaultVector& faults) { return apfd(suite.ordering, faults); }

double trc(std::span<const std::size_t> ordering, const FaultVector& faults, std::size_t budget) {
  check_ordering(ordering, faults);
  if (budget < 1 || budget > faults.n()) {
    throw ParameterError("budget " + std::to_string(budget) + " outside [1, " + std::to_string(faults.n()) + "]");
  }
  std::size_t found = 0;
  for (std::size_t rank = 0; rank < budget; ++rank) found += faults[ordering[rank]];
  return static_cast<double>(found) / static_cast<double>(std::min(budget, faults.m()));
}

double trc(const RankedSuite& suite, const FaultVector& faults, std::size_t budget) {
  return trc(suite.ordering, faults, budget);
}

std::size_t budget_for(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("budget fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
  const auto b = static_cast<std::size_t>(round_count(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(b, 1, n);
}

std::vector<TrcPoint> trc_curve(std::span<const std::size_t> ordering, const FaultVector& faults,
                                std::span<const double> grid) {
  check_ordering(ordering, faults);
  // cumulative[b] = faults among the first b ranked inputs
  std::vector<std::size_t> cumulative(ordering.size() + 1, 0);
  for (std::size_t rank = 0; rank < ordering.size(); ++rank) {
    cumulative[rank + 1] = cumulative[rank] + faults[ordering[rank]];
  }
  std::vector<TrcPoint> out;
  out.reserve(grid.size());
  for (double f : grid) {
    const std::size_t b = budget_for(f, faults.n());
    out.push_back({f, b, static_cast<double>(cumulative[b]) / static_cast<double>(std::min(b, faults.m()))});
  }
  return out;
}

std::vector<double> default_budget_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(k / 100.0);
  return grid;
}

const MethodResult& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw IndexError("report has no method '" + name + "'");
}

EvalReport compare(std::span<const RankedSuite> methods, const FaultVector& faults,
                   std::span<const double> grid, ReportMetadata metadata) {
  if (methods.empty()) throw EmptyInputError("no methods to compare");
  if (grid.empty()) throw ParameterError("empty budget grid");
  EvalReport report;
  report.n = faults.n();
  report.m = faults.m();
  report.grid.assign(grid.begin(), grid.end());
  report.metadata = std::move(metadata);
  std::set<std::string> seen;
  for (const auto& suite : methods) {
    if (suite.ordering.size() != faults.n()) {
      throw ConsistencyError("method '" + suite.method + "' ranks " + std::to_string(suite.ordering.size()) +
                             " inputs, suite has " + std::to_string(faults.n()));
    }
    if (!seen.insert(suite.method).second) throw ConsistencyError("method '" + suite.method + "' listed twice");
    MethodResult r;
    r.method = suite.method;
    if (faults.m() > 0) {
      r.apfd = apfd(suite, faults);
      r.trc = trc_curve(suite.ordering, faults, grid);
    } else if (!is_permutation_of_range(suite.ordering, faults.n())) {
      throw ConsistencyError("method '" + suite.method + "' ordering is not a permutation");
    }
    report.methods.push_back(std::move(r));
  }
  return report;
}

// ---- serialization ----

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json metadata_json(const ReportMetadata& md) {
  json j{{"seed", md.seed}, {"model_hash", md.model_hash}};
  j["rate"] = md.rate ? json(*md.rate) : json(nullptr);
  j["layer"] = md.layer ? json(*md.layer) : json(nullptr);
  j["extra"] = md.extra;
  return j;
}

}  // namespace

std::string report_json(const EvalReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json trc = json::array();
    for (const auto& p : m.trc) trc.push_back({{"fraction", p.fraction}, {"budget", p.budget}, {"trc", p.value}});
    methods.push_back({{"method", m.method}, {"apfd", m.apfd ? json(*m.apfd) : json(nullptr)}, {"trc", trc}});
  }
  json j{{"suite_size", report.n},
         {"faults", report.m},
         {"grid", report.grid},
         {"methods", methods},
         {"metadata", metadata_json(report.metadata)}};
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text, const std::string& origin) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.n = j.at("suite_size").get<std::size_t>();
    r.m = j.at("faults").get<std::size_t>();
    r.grid = j.at("grid").get<std::vector<double>>();
    for (const auto& jm : j.at("methods")) {
      MethodResult m;
      m.method = jm.at("method").get<std::string>();
      if (!jm.at("apfd").is_null()) m.apfd = jm.at("apfd").get<double>();
      for (const auto& p : jm.at("trc")) {
        m.trc.push_back({p.at("fraction").get<double>(), p.at("budget").get<std::size_t>(), p.at("trc").get<double>()});
      }
      r.methods.push_back(std::move(m));
    }
    const json& md = j.at("metadata");
    r.metadata.seed = md.at("seed").get<std::uint64_t>();
    r.metadata.model_hash = md.at("model_hash").get<std::string>();
    if (!md.at("rate").is_null()) r.metadata.rate = md.at("rate").get<double>();
    if (!md.at("layer").is_null()) r.metadata.layer = md.at("layer").get<std::size_t>();
    r.metadata.extra = md.value("extra", std::map<std::string, std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

std::string report_csv(const EvalReport& report) {
  std::string out = "method,apfd";
  for (double f : report.grid) out += ",trc@" + fmt(f);
  out += '\n';
  for (const auto& m : report.methods) {
    out += m.method;
    out += ',';
    out += m.apfd ? fmt(*m.apfd) : "NA";
    for (std::size_t i = 0; i < report.grid.size(); ++i) {
      out += ',';
      out += i < m.trc.size() ? fmt(m.trc[i].value) : "NA";
    }
    out += '\n';
  }
  return out;
}

std::string report_curves_tsv(const EvalReport& report) {
  std::string out = "fraction";
  for (const auto& m : report.methods) out += "\t" + m.method;
  out += '\n';
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    out += fmt(report.grid[i]);
    for (const auto& m : report.methods) {
      out += '\t';
      out += i < m.trc.size() ? fmt(m.trc[i].value) : "NA";
    }
    out += '\n';
  }
  return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  const auto ext = path.extension();
  if (ext == ".csv") {
    write_file_bytes(path, report_csv(report));
  } else if (ext == ".tsv") {
    write_file_bytes(path, report_curves_tsv(report));
  } else {
    write_file_bytes(path, report_json(report));
  }
}

EvalReport read_report(const std::filesystem::path& path) {
  return parse_report_json(read_file_bytes(path), path.string());
}

std::string comparison_csv(std::span<const EvalReport> reports, std::span<const std::string> names) {
  if (reports.size() != names.size()) throw ConsistencyError("one name per report expected");
  if (reports.empty()) throw EmptyInputError("no reports to aggregate");
  const auto& grid = reports.front().grid;
  for (const auto& r : reports) {
    if (r.grid != grid) throw ConsistencyError("reports use different budget grids");
  }
  std::string out = "report,method,apfd";
  for (double f : grid) out += ",trc@" + fmt(f);
  out += '\n';

  struct Acc {
    double apfd = 0.0;
    std::size_t apfd_count = 0;
    std::vector<double> trc;
    std::size_t trc_count = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    for (const auto& m : reports[k].methods) {
      out += names[k] + "," + m.method + "," + (m.apfd ? fmt(*m.apfd) : "NA");
      for (std::size_t i = 0; i < grid.size(); ++i) out += "," + (i < m.trc.size() ? fmt(m.trc[i].value) : "NA");
      out += '\n';
      auto [it, inserted] = acc.try_emplace(m.method);
      if (inserted) order.push_back(m.method);
      Acc& a = it->second;
      if (m.apfd) {
        a.apfd += *m.apfd;
        ++a.apfd_count;
      }
      if (m.trc.size() == grid.size()) {
        a.trc.resize(grid.size(), 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i) a.trc[i] += m.trc[i].value;
        ++a.trc_count;
      }
    }
  }
  for (const auto& name : order) {
    const Acc& a = acc.at(name);
    out += "mean," + name + "," + (a.apfd_count ? fmt(a.apfd / static_cast<double>(a.apfd_count)) : "NA");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out += "," + (a.trc_count ? fmt(a.trc[i] / static_cast<double>(a.trc_count)) : std::string("NA"));
    }
    out += '\n';
  }
  return out;
}

}  // namespace fastprio
