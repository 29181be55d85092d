#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastprio/prioritizer.hpp"

namespace fastprio {

class FaultVector {
 public:
  FaultVector() = default;
  explicit FaultVector(std::vector<bool> is_fault);
  // fault = prediction differs from label
  static FaultVector from_predictions(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels);

  std::size_t n() const noexcept { return is_fault_.size(); }
  std::size_t m() const noexcept { return m_; }
  bool operator[](std::size_t i) const { return is_fault_.at(i); }
  const std::vector<bool>& flags() const noexcept { return is_fault_; }

 private:
  std::vector<bool> is_fault_;
  std::size_t m_ = 0;
};

// 1 - sum(TF_i) / (n m) + 1 / (2n), TF_i the 1-based rank of fault i.
double apfd(std::span<const std::size_t> ordering, const FaultVector& faults);
double apfd(const RankedSuite& suite, const FaultVector& faults);

// faults among the first `budget` ranked inputs / min(budget, m)
double trc(std::span<const std::size_t> ordering, const FaultVector& faults, std::size_t budget);
double trc(const RankedSuite& suite, const FaultVector& faults, std::size_t budget);

// round-half-away-from-zero of fraction * n, at least 1
std::size_t budget_for(double fraction, std::size_t n);

struct TrcPoint {
  double fraction = 0.0;
  std::size_t budget = 0;
  double value = 0.0;
};

std::vector<TrcPoint> trc_curve(std::span<const std::size_t> ordering, const FaultVector& faults,
                                std::span<const double> grid);

std::vector<double> default_budget_grid();  // 0.01 .. 1.00 in steps of 0.01

struct MethodResult {
  std::string method;
  std::optional<double> apfd;  // empty when the suite has no faults
  std::vector<TrcPoint> trc;
};

struct ReportMetadata {
  std::uint64_t seed = 0;
  std::string model_hash;
  std::optional<double> rate;
  std::optional<std::size_t> layer;
  std::map<std::string, std::string> extra;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> grid;
  std::vector<MethodResult> methods;
  ReportMetadata metadata;

  const MethodResult& method(const std::string& name) const;
};

EvalReport compare(std::span<const RankedSuite> methods, const FaultVector& faults,
                   std::span<const double> grid, ReportMetadata metadata = {});

// Canonical JSON: sorted keys, two-space indent, trailing newline.
std::string report_json(const EvalReport& report);
EvalReport parse_report_json(const std::string& text, const std::string& origin = "<report>");
// method,apfd,trc@<fraction>...; "NA" for a not-applicable APFD.
std::string report_csv(const EvalReport& report);
// fraction column then one TRC column per method.
std::string report_curves_tsv(const EvalReport& report);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

// One row per (report, method) plus a mean row per method across reports.
std::string comparison_csv(std::span<const EvalReport> reports, std::span<const std::string> names);

}  // namespace fastprio
