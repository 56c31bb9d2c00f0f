#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "ipa/builtins.hpp"
#include "ipa/campaign.hpp"
#include "ipa/error.hpp"

using namespace ipa;

namespace {

// Textbook Wilson score interval.
std::pair<double, double> wilson_oracle(double k, double n) {
  const double z = 1.959963984540054;
  const double p = k / n;
  const double den = 1 + z * z / n;
  const double mid = (p + z * z / (2 * n)) / den;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den;
  return {mid - half, mid + half};
}

// Spearman rho via the sum of squared rank differences (no ties).
double rho_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      r[i] = 1 + static_cast<double>(std::count_if(v.begin(), v.end(), [&](double w) { return w < v[i]; }));
    }
    return r;
  };
  auto rx = ranks(x);
  auto ry = ranks(y);
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  const double n = static_cast<double>(x.size());
  return 1 - 6 * d2 / (n * (n * n - 1));
}

// Two-sided permutation p-value by full enumeration.
double perm_p(const std::vector<double>& x, const std::vector<double>& y) {
  const double obs = std::abs(rho_no_ties(x, y));
  std::vector<double> perm = y;
  std::sort(perm.begin(), perm.end());
  std::size_t hit = 0, total = 0;
  do {
    ++total;
    if (std::abs(rho_no_ties(x, perm)) >= obs - 1e-12) ++hit;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("wilson interval") {
  auto c = wilson(80, 100);
  auto [lo, hi] = wilson_oracle(80, 100);
  CHECK(c.ratio == 0.8);
  CHECK(c.ci_low == doctest::Approx(lo).epsilon(1e-12));
  CHECK(c.ci_high == doctest::Approx(hi).epsilon(1e-12));
  CHECK(c.ci_low == doctest::Approx(0.7111).epsilon(1e-3));
  CHECK(c.ci_high == doctest::Approx(0.8666).epsilon(1e-3));
  for (std::size_t n : {1, 7, 200}) {
    for (std::size_t k = 0; k <= n; ++k) {
      auto w = wilson(k, n);
      CHECK(w.ci_low <= w.ratio);
      CHECK(w.ratio <= w.ci_high);
      CHECK(w.ci_low >= 0.0);
      CHECK(w.ci_high <= 1.0);
    }
  }
  CHECK(wilson(0, 10).ci_low == 0.0);
  CHECK(wilson(10, 10).ci_high == 1.0);
  CHECK_THROWS_AS(wilson(0, 0), Error);
}

TEST_CASE("overhead ratios from printed timings") {
  struct Row {
    const char* name;
    double i1, i2, i3, e1, e3, s;
  };
  // I1 I2 I3 E1 E3 and the printed S column; ">300" read as 300.
  const Row rows[] = {
      {"Quicksort", 5.5, 5.4, 0.4, 1.1, 1.4, 0.1},      {"Blackscholes", 5.5, 8, 0.5, 4.1, 72, 0.29},
      {"Streamcluster", 5.5, 7.3, 0.7, 4.1, 52.2, 0.31}, {"Swaptions", 9.5, 8.9, 1.1, 18.1, 300, 0.96},
      {"Nullhttpd", 5.6, 4.9, 0.3, 3.6, 22.1, 0.32},     {"Nbds", 32, 18.3, 7.4, 49.2, 28.3, 0.98},
  };
  for (const auto& r : rows) {
    CAPTURE(r.name);
    auto o = overhead_ratios({r.i1, r.i2, r.i3, r.e1, r.e3});
    CHECK(o.s == doctest::Approx(r.e1 / (r.i1 + r.i2)));
    CHECK(std::abs(o.s - r.s) <= 0.03);
    CHECK(o.d == doctest::Approx((r.e1 + r.e3) / (r.i1 / 5 + r.i3)));
  }
  // Quicksort D by the formula is 2.5 / 1.5, not the printed 2.7.
  CHECK(overhead_ratios({5.5, 5.4, 0.4, 1.1, 1.4}).d == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("spearman against rank-difference oracle") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 1, 4, 3, 5};
  auto s = spearman(x, y);
  REQUIRE(s.rho);
  CHECK(*s.rho == doctest::Approx(rho_no_ties(x, y)).epsilon(1e-12));
  CHECK(*s.rho == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(s.exact);
  REQUIRE(s.p_value);
  CHECK(*s.p_value == doctest::Approx(perm_p(x, y)).epsilon(1e-12));
  CHECK_FALSE(s.significant);

  CHECK(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}).rho == doctest::Approx(1.0));
  CHECK(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}).rho == doctest::Approx(-1.0));
  CHECK_FALSE(spearman({1, 1, 1}, {1, 2, 3}).rho.has_value());
  CHECK_THROWS_AS(spearman({1, 2}, {1, 2}), Error);
  CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2}), Error);
}

TEST_CASE("spearman with ties uses average ranks") {
  // ranks x: 1.5 1.5 3 4 ; y: 1 2 3 4 -> Pearson on ranks
  auto s = spearman({1, 1, 2, 3}, {1, 2, 3, 4});
  const std::vector<double> rx{1.5, 1.5, 3, 4}, ry{1, 2, 3, 4};
  const double mx = 2.5, my = 2.5;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  CHECK(*s.rho == doctest::Approx(sxy / std::sqrt(sxx * syy)));
}

TEST_CASE("large-n spearman uses the normal approximation") {
  std::vector<double> x(30), y(30);
  std::iota(x.begin(), x.end(), 0.0);
  for (int i = 0; i < 30; ++i) y[i] = i % 2 ? i : 29 - i;
  auto s = spearman(x, y);
  CHECK_FALSE(s.exact);
  REQUIRE(s.p_value);
  CHECK(*s.p_value > 0.0);
  CHECK(*s.p_value <= 1.0);
}

TEST_CASE("outcome classification") {
  RunResult r;
  std::vector<Value> golden{Value(std::int64_t{1}), Value(std::int64_t{2})};
  r.output = {Value(std::int64_t{2}), Value(std::int64_t{1})};
  CHECK(classify_outcome(r, golden, true) == Outcome3::Benign);
  CHECK(classify_outcome(r, golden, false) == Outcome3::SDC);
  r.outcome.kind = Outcome::Kind::Timeout;
  CHECK(classify_outcome(r, golden, true) == Outcome3::CrashHang);
  r.outcome.kind = Outcome::Kind::Trap;
  CHECK(classify_outcome(r, golden, true) == Outcome3::CrashHang);
}

TEST_CASE("config parsing is strict") {
  auto c = config_from_json(nlohmann::json::parse(
      R"({"version":1,"program":"racer","data":30,"threads":2,"granularity":"block","injections":10,
          "fault_types":["RaceCondition"]})"));
  CHECK(c.program_name == "racer");
  CHECK(c.data == Value(std::int64_t{30}));
  CHECK(c.granularity == Granularity::BasicBlock);
  CHECK(c.fault_types == std::vector<FaultType>{FaultType::RaceCondition});
  CHECK(config_from_json(config_to_json(c)).injections == 10);
  auto bad = [](const char* text) { CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(text)), Error); };
  bad(R"({"program":"racer"})");
  bad(R"({"version":2,"program":"racer"})");
  bad(R"({"version":1})");
  bad(R"({"version":1,"program":"racer","colour":"red"})");
  bad(R"({"version":1,"program":"racer","fault_types":["Meteor"]})");
  bad(R"({"version":1,"program":"racer","granularity":"line"})");
}

TEST_CASE("small campaign accounting") {
  CampaignConfig cfg;
  cfg.program_name = "workqueue";
  cfg.injections = 30;
  auto r = run_campaign(cfg, 2);
  CHECK(r.invariants.size() > 0);
  CHECK(r.density == doctest::Approx(100.0 * r.invariants.size() / r.metrics.lines_of_code));
  for (const auto& ft : r.fault_types) {
    CAPTURE(fault_type_name(ft.type));
    if (ft.skipped) {
      CHECK(ft.sites == 0);
      continue;
    }
    CHECK(ft.activated == ft.records.size());
    std::size_t sum = 0;
    for (const auto& o : ft.outcomes) sum += o.runs;
    CHECK(sum == ft.activated);
    REQUIRE(ft.coverage);
    CHECK(ft.coverage->hits <= ft.activated);
    for (const auto& c : ft.classes) {
      if (c.ratio) CHECK(*c.ratio <= ft.coverage->ratio + 1e-12);
    }
    for (std::size_t i = 1; i < ft.records.size(); ++i) CHECK(ft.records[i - 1].plan.seed < ft.records[i].plan.seed);
  }
  auto again = run_campaign(cfg, 5);
  CHECK(campaign_json(again) == campaign_json(r));
  CHECK(coverage_csv(again) == coverage_csv(r));
}
