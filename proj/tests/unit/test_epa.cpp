#include "doctest.h"

#include "ipa/builtins.hpp"
#include "ipa/epa.hpp"
#include "ipa/error.hpp"

using namespace ipa;

namespace {

// n samples of g:::ENTER with v = values[k].
TraceFile seq(const std::vector<std::int64_t>& values) {
  std::string text = "IPATRACE 1\nDECL g:::ENTER v:i64\nDECL h:::ENTER v:i64\n\nSAMPLES\n";
  std::uint64_t nonce = 0;
  for (auto v : values) {
    text += "S g:::ENTER nonce=" + std::to_string(nonce++) + " tid=1\nv = " + std::to_string(v) + "\nEND\n";
  }
  return parse_trace(text);
}

}  // namespace

TEST_CASE("identical traces have no deviations") {
  auto t = seq({1, 2, 3});
  CHECK(diff_traces(t, t).empty());
  CHECK(variance(t, t) == 0.0);
}

TEST_CASE("data and control-flow deviations") {
  auto g = seq({1, 2, 3, 4});
  auto f = seq({1, 9, 3});
  auto d = diff_traces(g, f);
  REQUIRE(d.size() == 2);
  CHECK(d[0].kind == DeviationKind::DataViolation);
  CHECK(d[0].golden_seq == 1u);
  CHECK(d[1].kind == DeviationKind::ControlFlowViolation);
  CHECK(d[1].golden_seq == 3u);
  CHECK_FALSE(d[1].faulty_seq.has_value());
  // One mismatch plus one missing tail record over four lines.
  CHECK(variance(g, f) == 0.5);
}

TEST_CASE("truncated trace: tail conflicts") {
  auto g = seq({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  auto f = seq({1, 2, 3, 4, 5, 6, 7});
  CHECK(variance(g, f) == doctest::Approx(0.3));
  // Relative to the shorter trace the ratio caps at 1.
  CHECK(variance(seq({1}), seq({2, 3, 4})) == 1.0);
  CHECK_THROWS_AS(variance(seq({}), g), Error);
}

TEST_CASE("mean pairwise variance") {
  auto a = seq({1, 2});
  auto b = seq({1, 3});
  auto c = seq({1, 2});
  // pairs: (a,b)=0.5 (a,c)=0 (b,c)=0.5
  CHECK(mean_pairwise_variance({a, b, c}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(mean_pairwise_variance({a}), Error);
}

TEST_CASE("thread ids and nonces are ignored by the diff") {
  auto a = parse_trace("IPATRACE 1\nDECL g:::ENTER v:i64\n\nSAMPLES\nS g:::ENTER nonce=0 tid=1\nv = 1\nEND\n");
  auto b = parse_trace("IPATRACE 1\nDECL g:::ENTER v:i64\n\nSAMPLES\nS g:::ENTER nonce=7 tid=3\nv = 1\nEND\n");
  CHECK(diff_traces(a, b).empty());
}

TEST_CASE("deviation JSON") {
  auto d = diff_traces(seq({1}), seq({1, 2}));
  REQUIRE(d.size() == 1);
  auto j = deviation_json(d[0]);
  CHECK(j["kind"] == "ControlFlowViolation");
  CHECK(j["golden_seq"].is_null());
  CHECK(j["faulty_seq"] == 1);
}

namespace {

InvariantSet one_function_set() {
  return parse_invariants(
      "# ipa invariants\n"
      "f:::ENTER\tG\tx == 4\tn=10\tconf=0.9990234375\n"
      "f:::EXIT\tH\treturn == 1\tn=10\tconf=0.9990234375\n"
      "f:::EXIT\tD\ty == orig(y)\tn=10\tconf=0.9990234375\n");
}

TraceFile call(std::int64_t x, std::int64_t y_in, std::int64_t y_out, std::int64_t ret) {
  return parse_trace(
      "IPATRACE 1\nDECL f:::ENTER x:i64 y:i64\nDECL f:::EXIT x:i64 y:i64 return:i64\nDECL k:::ENTER\n\nSAMPLES\n"
      "S k:::ENTER nonce=0 tid=0\nEND\n"
      "S f:::ENTER nonce=1 tid=0\nx = " + std::to_string(x) + "\ny = " + std::to_string(y_in) + "\nEND\n"
      "S f:::EXIT nonce=1 tid=0\nx = " + std::to_string(x) + "\ny = " + std::to_string(y_out) +
      "\nreturn = " + std::to_string(ret) + "\nEND\n");
}

}  // namespace

TEST_CASE("detection on a clean trace") {
  auto r = detect(one_function_set(), call(4, 2, 2, 1));
  CHECK_FALSE(r.detected());
  CHECK(r.samples == 3);
  CHECK(r.skipped == 1);
  CHECK(r.checks == 3);
}

TEST_CASE("exit-only violation is localized") {
  auto set = one_function_set();
  auto r = detect(set, call(4, 2, 3, 0));
  REQUIRE(r.violations.size() == 2);
  for (const auto& v : r.violations) {
    CHECK(v.boundary == Boundary::Exit);
    CHECK(v.localized);
    CHECK(v.line == 13);  // header of the f:::EXIT sample
  }
  CHECK(r.violated == std::vector<std::size_t>{1, 2});
  auto jsonl = violation_jsonl(set, r);
  CHECK(jsonl.find("\"invariant\":\"return == 1\"") != std::string::npos);
  CHECK(jsonl.find("\"summary\":true") != std::string::npos);
}

TEST_CASE("an entry violation makes the exit violation non-local") {
  auto r = detect(one_function_set(), call(5, 2, 2, 0));
  REQUIRE(r.violations.size() == 2);
  CHECK(r.violations[0].boundary == Boundary::Entry);
  CHECK_FALSE(r.violations[0].localized);
  CHECK(r.violations[1].boundary == Boundary::Exit);
  CHECK_FALSE(r.violations[1].localized);
}

TEST_CASE("golden traces pass their own invariants") {
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    auto p = builtin(name);
    auto traces = golden_runs(p, make_input(p, 4), {0, 1, 2, 3, 4}, Granularity::Function);
    auto set = infer(traces, {});
    for (const auto& t : traces) CHECK_FALSE(detect(set, t).detected());
  }
}
