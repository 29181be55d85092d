#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/evaluation.hpp"
#include "test_support.hpp"

using namespace fastprio;
using fastprio::testing::TempDir;

namespace {

// Direct transcription of the APFD definition, independent of the library.
double apfd_oracle(const std::vector<std::size_t>& ordering, const std::vector<bool>& faults) {
  const double n = static_cast<double>(ordering.size());
  double m = 0.0, tf = 0.0;
  for (std::size_t pos = 0; pos < ordering.size(); ++pos) {
    if (faults[ordering[pos]]) {
      m += 1.0;
      tf += static_cast<double>(pos + 1);
    }
  }
  return 1.0 - tf / (n * m) + 1.0 / (2.0 * n);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

FaultVector first_m_faults(std::size_t n, std::size_t m) {
  std::vector<bool> f(n, false);
  for (std::size_t i = 0; i < m; ++i) f[i] = true;
  return FaultVector(f);
}

}  // namespace

TEST(FaultVector, CountsAndFromPredictions) {
  const std::vector<std::size_t> pred{0, 1, 2, 2}, label{0, 2, 2, 1};
  const FaultVector f = FaultVector::from_predictions(pred, label);
  EXPECT_EQ(f.n(), 4u);
  EXPECT_EQ(f.m(), 2u);
  EXPECT_TRUE(f[1]);
  EXPECT_FALSE(f[2]);
  EXPECT_THROW(FaultVector::from_predictions(pred, std::vector<std::size_t>{0}), ConsistencyError);
}

TEST(Apfd, IdealAndWorstExamples) {
  const FaultVector f(std::vector<bool>{true, true, false, false});
  EXPECT_DOUBLE_EQ(apfd(std::vector<std::size_t>{0, 1, 2, 3}, f), 0.75);
  EXPECT_DOUBLE_EQ(apfd(std::vector<std::size_t>{2, 3, 0, 1}, f), 0.25);
}

TEST(Apfd, NoFaultsIsNotApplicable) {
  const FaultVector f(std::vector<bool>{false, false});
  EXPECT_THROW(apfd(std::vector<std::size_t>{0, 1}, f), NotApplicableError);
  EXPECT_THROW(trc(std::vector<std::size_t>{0, 1}, f, 1), NotApplicableError);
}

TEST(Apfd, RejectsNonPermutations) {
  const FaultVector f(std::vector<bool>{true, false, false});
  EXPECT_THROW(apfd(std::vector<std::size_t>{0, 0, 2}, f), ValidationError);
  EXPECT_THROW(apfd(std::vector<std::size_t>{0, 1}, f), ValidationError);
}

TEST(Apfd, ExhaustiveBoundsAndOracleUpToSeven) {
  for (std::size_t n = 1; n <= 7; ++n) {
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<bool> flags(n);
      std::size_t m = 0;
      for (std::size_t i = 0; i < n; ++i) m += (flags[i] = (mask >> i) & 1u);
      const FaultVector f(flags);
      const double lo = static_cast<double>(m) / (2.0 * n);
      const double hi = 1.0 - lo;
      double best = 0.0, worst = 1.0;
      std::vector<std::size_t> perm = iota(n);
      do {
        const double a = apfd(perm, f);
        ASSERT_NEAR(a, apfd_oracle(perm, flags), 1e-12);
        ASSERT_GE(a, lo - 1e-12);
        ASSERT_LE(a, hi + 1e-12);
        best = std::max(best, a);
        worst = std::min(worst, a);
      } while (std::next_permutation(perm.begin(), perm.end()));
      EXPECT_NEAR(best, hi, 1e-12);
      EXPECT_NEAR(worst, lo, 1e-12);
    }
  }
}

TEST(Apfd, MovingAFaultEarlierNeverDecreases) {
  RngStream rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(9);
    std::vector<bool> flags(n);
    for (std::size_t i = 0; i < n; ++i) flags[i] = rng.uniform() < 0.4;
    flags[rng.uniform_index(n)] = true;
    const FaultVector f(flags);
    std::vector<std::size_t> perm = rng.permutation(n);
    const std::size_t j = rng.uniform_index(n);
    const std::size_t i = rng.uniform_index(j + 1);
    if (!flags[perm[j]] || flags[perm[i]]) continue;
    const double before = apfd(perm, f);
    std::swap(perm[i], perm[j]);
    EXPECT_GE(apfd(perm, f), before);
  }
}

TEST(Apfd, RandomOrderingsAverageOneHalf) {
  const FaultVector f = first_m_faults(200, 50);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) total += apfd(random_rank(200, seed), f);
  EXPECT_NEAR(total / 1000.0, 0.5, 0.02);
}

TEST(Trc, Examples) {
  // 20 faults; only 5 of the first 10 ranked inputs are faults.
  std::vector<bool> flags(40, false);
  for (std::size_t i : {0u, 2u, 4u, 6u, 8u}) flags[i] = true;
  for (std::size_t i = 20; i < 35; ++i) flags[i] = true;
  const FaultVector f(flags);
  const std::vector<std::size_t> order = iota(40);
  EXPECT_DOUBLE_EQ(trc(order, f, 10), 0.5);
  EXPECT_DOUBLE_EQ(trc(order, f, 40), 1.0);
  EXPECT_THROW(trc(order, f, 0), ParameterError);
  EXPECT_THROW(trc(order, f, 41), ParameterError);

  std::vector<std::size_t> ideal;
  for (std::size_t i = 0; i < 40; ++i)
    if (flags[i]) ideal.push_back(i);
  for (std::size_t i = 0; i < 40; ++i)
    if (!flags[i]) ideal.push_back(i);
  for (std::size_t b = 1; b <= 40; ++b) EXPECT_DOUBLE_EQ(trc(ideal, f, b), 1.0);
}

TEST(Trc, RangeAndFaultCountMonotone) {
  RngStream rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    std::vector<bool> flags(n);
    for (std::size_t i = 0; i < n; ++i) flags[i] = rng.uniform() < 0.3;
    flags[rng.uniform_index(n)] = true;
    const FaultVector f(flags);
    const auto perm = rng.permutation(n);
    double prev_found = 0.0;
    for (std::size_t b = 1; b <= n; ++b) {
      const double v = trc(perm, f, b);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      const double found = v * static_cast<double>(std::min(b, f.m()));
      EXPECT_GE(found + 1e-9, prev_found);
      prev_found = found;
    }
    EXPECT_DOUBLE_EQ(trc(perm, f, n), 1.0);
  }
}

TEST(Trc, BudgetRounding) {
  EXPECT_EQ(budget_for(0.05, 300), 15u);
  EXPECT_EQ(budget_for(0.5, 5), 3u);
  EXPECT_EQ(budget_for(0.001, 100), 1u);
  EXPECT_EQ(budget_for(1.0, 17), 17u);
  EXPECT_THROW(budget_for(0.0, 10), ParameterError);
  EXPECT_THROW(budget_for(1.5, 10), ParameterError);
  const auto grid = default_budget_grid();
  ASSERT_EQ(grid.size(), 100u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.01);
  EXPECT_DOUBLE_EQ(grid.back(), 1.0);
}

TEST(TrcCurve, MatchesDirectCalls) {
  const FaultVector f = first_m_faults(150, 37);
  const RankedSuite r = random_rank(150, 42);
  const auto grid = default_budget_grid();
  const auto curve = trc_curve(r.ordering, f, grid);
  ASSERT_EQ(curve.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(curve[i].budget, budget_for(grid[i], 150));
    EXPECT_DOUBLE_EQ(curve[i].value, trc(r.ordering, f, curve[i].budget));
  }
  const std::vector<double> one{1.0};
  const auto full = trc_curve(r.ordering, f, one);
  ASSERT_EQ(full.size(), 1u);
  EXPECT_DOUBLE_EQ(full[0].value, 1.0);
}

TEST(Compare, IdenticalOrderingsAndBounds) {
  const FaultVector f = first_m_faults(50, 12);
  std::vector<RankedSuite> methods{random_rank(50, 1), random_rank(50, 1), random_rank(50, 2)};
  methods[1].method = "copy";
  methods[2].method = "other";
  const auto grid = default_budget_grid();
  const EvalReport rep = compare(methods, f, grid);
  EXPECT_EQ(rep.n, 50u);
  EXPECT_EQ(rep.m, 12u);
  EXPECT_EQ(*rep.method("random").apfd, *rep.method("copy").apfd);
  for (const auto& m : rep.methods) {
    EXPECT_GE(*m.apfd, 12.0 / 100.0);
    EXPECT_LE(*m.apfd, 1.0 - 12.0 / 100.0);
  }
  EXPECT_THROW(rep.method("absent"), IndexError);
}

TEST(Compare, Errors) {
  const FaultVector f = first_m_faults(50, 12);
  const auto grid = default_budget_grid();
  std::vector<RankedSuite> mismatch{random_rank(50, 1), random_rank(40, 1)};
  mismatch[1].method = "short";
  EXPECT_THROW(compare(mismatch, f, grid), ConsistencyError);
  std::vector<RankedSuite> dup{random_rank(50, 1), random_rank(50, 2)};
  EXPECT_THROW(compare(dup, f, grid), ConsistencyError);
}

TEST(Compare, NoFaultsReportsNotApplicable) {
  const FaultVector f(std::vector<bool>(10, false));
  const std::vector<RankedSuite> methods{random_rank(10, 1)};
  const std::vector<double> grid{0.5, 1.0};
  const EvalReport rep = compare(methods, f, grid);
  EXPECT_FALSE(rep.methods[0].apfd.has_value());
  const std::string csv = report_csv(rep);
  EXPECT_NE(csv.find("random,NA,NA,NA"), std::string::npos) << csv;
  const EvalReport back = parse_report_json(report_json(rep));
  EXPECT_FALSE(back.methods[0].apfd.has_value());
}

TEST(Report, JsonIsCanonicalAndRoundTrips) {
  TempDir dir;
  const FaultVector f = first_m_faults(60, 9);
  std::vector<RankedSuite> methods{random_rank(60, 3), random_rank(60, 4)};
  methods[1].method = "fast-gini-r0.05";
  const auto grid = default_budget_grid();
  ReportMetadata meta;
  meta.seed = 42;
  meta.model_hash = "abc";
  meta.rate = 0.05;
  meta.layer = 3;
  meta.extra["tau"] = "0.9";
  const EvalReport a = compare(methods, f, grid, meta);
  const EvalReport b = compare(methods, f, grid, meta);
  EXPECT_EQ(report_json(a), report_json(b));
  const std::string json = report_json(a);
  EXPECT_EQ(json.back(), '\n');
  EXPECT_LT(json.find("\"faults\""), json.find("\"grid\""));
  EXPECT_LT(json.find("\"metadata\""), json.find("\"methods\""));

  write_report(dir / "r.json", a);
  const EvalReport back = read_report(dir / "r.json");
  EXPECT_EQ(report_json(back), json);
  EXPECT_EQ(*back.metadata.rate, 0.05);
  EXPECT_EQ(back.metadata.extra.at("tau"), "0.9");

  const std::string csv = report_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find(',', csv.find(',') + 1)), "method,apfd");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const std::string tsv = report_curves_tsv(a);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 101);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "fraction\trandom\tfast-gini-r0.05");
}

TEST(Report, ComparisonTableHasMeanRows) {
  const FaultVector f = first_m_faults(30, 5);
  const std::vector<double> grid{0.1, 1.0};
  std::vector<RankedSuite> m1{random_rank(30, 1)}, m2{random_rank(30, 2)};
  const std::vector<EvalReport> reps{compare(m1, f, grid), compare(m2, f, grid)};
  const std::vector<std::string> names{"clean", "noisy"};
  const std::string csv = comparison_csv(reps, names);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "report,method,apfd,trc@0.1,trc@1");
  EXPECT_NE(csv.find("\nclean,random,"), std::string::npos);
  EXPECT_NE(csv.find("\nmean,random,"), std::string::npos);
}
