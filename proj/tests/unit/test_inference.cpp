#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "ipa/builtins.hpp"
#include "ipa/error.hpp"
#include "ipa/inference.hpp"

using namespace ipa;

namespace {

Predicate pred(std::string_view text) {
  auto p = parse_predicate(text);
  REQUIRE_MESSAGE(p, "unparsable predicate ", text);
  return *p;
}

// Builds a trace whose function f is entered and left once per (x, y, r) row.
TraceFile make_trace(const std::vector<std::array<std::int64_t, 3>>& rows) {
  std::string text =
      "IPATRACE 1\nDECL f:::ENTER x:i64 y:i64\nDECL f:::EXIT x:i64 y:i64 return:i64\n\nSAMPLES\n";
  std::uint64_t nonce = 0;
  for (const auto& [x, y, r] : rows) {
    auto n = std::to_string(nonce++);
    text += "S f:::ENTER nonce=" + n + " tid=1\nx = " + std::to_string(x) + "\ny = " + std::to_string(y) + "\nEND\n";
    text += "S f:::EXIT nonce=" + n + " tid=1\nx = " + std::to_string(x) + "\ny = " + std::to_string(y + 1) +
            "\nreturn = " + std::to_string(r) + "\nEND\n";
  }
  return parse_trace(text);
}

std::set<std::string> lines_at(const InvariantSet& s, const ProgramPoint& p) {
  std::set<std::string> out;
  for (const auto& inv : s.invariants) {
    if (inv.point == p) out.insert(std::string(1, class_letter(inv.cls())) + " " + inv.predicate.text());
  }
  return out;
}

std::set<std::string> all_lines(const InvariantSet& s) {
  std::set<std::string> out;
  for (const auto& inv : s.invariants) out.insert(inv.point.name() + " " + inv.predicate.text());
  return out;
}

}  // namespace

TEST_CASE("confidence of an unfalsified comparison") {
  CHECK(confidence(pred("x >= 0"), 7) == 0.9921875);
  CHECK(confidence(pred("x < y"), 1) == 0.5);
  CHECK(confidence(pred("x == orig(x)"), 10) == 1.0 - std::ldexp(1.0, -10));
  // Single-constant forms commit to one value.
  CHECK(confidence(pred("x == 4"), 7) == 0.9921875);
  // one-of commits to k values.
  CHECK(confidence(pred("x one of {1, 2, 3}"), 7) == 1.0 - 3.0 / 128.0);
  CHECK_THROWS_AS(confidence(pred("x >= 0"), 0), Error);
}

TEST_CASE("candidate confidence drops to zero once falsified") {
  auto t = make_trace({{1, 5, 0}, {2, 6, 0}, {3, 7, 0}, {4, 8, 0}, {5, 9, 0}, {6, 10, 0}, {7, 11, 0}});
  std::vector<TraceSample> entries;
  for (const auto& s : t.samples) {
    if (s.point == ProgramPoint::entry("f")) entries.push_back(s);
  }
  REQUIRE(entries.size() == 7);
  CHECK(candidate_confidence(pred("x >= 1"), entries) == 0.9921875);
  CHECK(candidate_confidence(pred("x < y"), entries) == 0.9921875);
  CHECK(candidate_confidence(pred("x >= 2"), entries) == 0.0);
  CHECK(candidate_confidence(pred("x == 1"), entries) == 0.0);
}

TEST_CASE("a falsified candidate never reaches the invariant set") {
  // Values 1..40 rule out every equality and one-of candidate for x.
  std::vector<std::array<std::int64_t, 3>> rows;
  for (std::int64_t i = 1; i <= 40; ++i) rows.push_back({i, 100 - i, 7});
  auto s = infer({make_trace(rows)}, {});
  auto entry = lines_at(s, ProgramPoint::entry("f"));
  CHECK(entry.count("G x >= 1"));
  CHECK(entry.count("G x <= 40"));
  CHECK(entry.count("G x < y"));  // x <= 40 < 60 <= y throughout
  for (const auto& l : entry) CHECK(l.find("x ==") == std::string::npos);
}

TEST_CASE("worked inference on a constructed trace") {
  std::vector<std::array<std::int64_t, 3>> rows;
  for (int k = 0; k < 10; ++k) rows.push_back({4, 10 + k % 5, 1});
  auto s = infer({make_trace(rows)}, {});
  auto entry = lines_at(s, ProgramPoint::entry("f"));
  auto exit = lines_at(s, ProgramPoint::exit("f"));
  CHECK(entry.count("G x == 4"));
  CHECK(entry.count("G y >= 10"));
  CHECK(entry.count("G y <= 14"));
  // No relations with a constant: x == 4 already pins x.
  CHECK(entry.count("G x < y") == 0);
  CHECK(exit.count("H return == 1"));
  CHECK(exit.count("D y == orig(y) + 1"));
  // x is constant, so its preservation is implied by x == 4.
  CHECK(exit.count("D x == orig(x)") == 0);
  for (const auto& inv : s.invariants) {
    CHECK(inv.confidence >= 0.99);
    CHECK(inv.confidence == confidence(inv.predicate, inv.support));
  }
}

TEST_CASE("classification precedence") {
  CHECK(classify(pred("return == 1")) == InvariantClass::H);
  CHECK(classify(pred("return >= x")) == InvariantClass::H);
  CHECK(classify(pred("a[] == [1,2]")) == InvariantClass::B);
  CHECK(classify(pred("a[] == 3")) == InvariantClass::A);
  CHECK(classify(pred("a[] sorted <=")) == InvariantClass::F);
  CHECK(classify(pred("a[] < b[]")) == InvariantClass::C);
  CHECK(classify(pred("a[] == orig(a[])")) == InvariantClass::D);
  CHECK(classify(pred("x == orig(x) - 3")) == InvariantClass::D);
  CHECK(classify(pred("x one of {1, 2}")) == InvariantClass::E);
  CHECK(classify(pred("x != 0")) == InvariantClass::G);
  CHECK(classify(pred("x <= y")) == InvariantClass::G);
}

TEST_CASE("predicate text round-trips") {
  for (std::string_view t : {"x == 4", "x >= -2", "x <= 1.5", "x != 0", "x one of {1, 2, 3}", "x < y",
                             "a[] == 3", "a[] == [1,2]", "a[] sorted >=", "a[] <= b[]", "x == orig(x)",
                             "x == orig(x) + 3", "a[] == orig(a[])", "flag == true"}) {
    CAPTURE(t);
    CHECK(pred(t).text() == t);
  }
  CHECK_FALSE(parse_predicate("x ~ y"));
  CHECK_FALSE(parse_predicate(""));
}

TEST_CASE("checks against samples") {
  auto t = parse_trace(
      "IPATRACE 1\nDECL f:::ENTER x:i64 a:i64[]\nDECL f:::EXIT x:i64 a:i64[]\n\nSAMPLES\n"
      "S f:::ENTER nonce=0 tid=0\nx = 2\na = [1,2,2]\nEND\n"
      "S f:::EXIT nonce=0 tid=0\nx = 5\na = [1,2,2]\nEND\n");
  const auto& in = t.samples[0];
  const auto& out = t.samples[1];
  CHECK(check(pred("x == 2"), in).ok);
  CHECK_FALSE(check(pred("x == 3"), in).ok);
  CHECK(check(pred("a[] sorted <="), in).ok);
  CHECK_FALSE(check(pred("a[] sorted >="), in).ok);
  CHECK_FALSE(check(pred("a[] == 2"), in).ok);
  CHECK(check(pred("x == orig(x) + 3"), out, &in).ok);
  CHECK_FALSE(check(pred("x == orig(x)"), out, &in).ok);
  CHECK(check(pred("x == orig(x)"), out, nullptr).ok);
  auto miss = check(pred("z >= 0"), in);
  CHECK_FALSE(miss.ok);
  CHECK(miss.reason == "missing z");
}

TEST_CASE("invariant files round-trip") {
  auto p = builtin("qsortmt");
  auto traces = golden_runs(p, make_input(p, 4), {0, 1, 2, 3, 4}, Granularity::Function);
  auto s = infer(traces, {});
  REQUIRE(s.size() > 0);
  auto text = write_invariants(s);
  auto back = parse_invariants(text);
  CHECK(write_invariants(back) == text);
  CHECK(back.fingerprint() == s.fingerprint());
  CHECK(back.run_count == 5);
  CHECK_THROWS_AS(parse_invariants("# ipa invariants\nf:::ENTER\tH\tx == 1\tn=3\tconf=0.875\n"), Error);
}

TEST_CASE("lower thresholds only add invariants") {
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    auto p = builtin(name);
    auto traces = golden_runs(p, make_input(p, 4), {0, 1, 2, 3, 4}, Granularity::Function);
    auto hi = all_lines(infer(traces, {0.99, Granularity::Function}));
    auto mid = all_lines(infer(traces, {0.80, Granularity::Function}));
    auto lo = all_lines(infer(traces, {0.60, Granularity::Function}));
    CHECK(std::includes(mid.begin(), mid.end(), hi.begin(), hi.end()));
    CHECK(std::includes(lo.begin(), lo.end(), mid.begin(), mid.end()));
  }
}

TEST_CASE("pooling is order independent") {
  auto p = builtin("workqueue");
  auto traces = golden_runs(p, make_input(p, 4), {0, 1, 2}, Granularity::Function);
  auto a = infer(traces, {});
  std::reverse(traces.begin(), traces.end());
  CHECK(infer(traces, {}).fingerprint() == a.fingerprint());
}

TEST_CASE("stability curve over a single n leaves convergence undefined") {
  auto p = builtin("workqueue");
  auto in = make_input(p, 4);
  auto gen = [&](std::size_t k) {
    ExecOptions o;
    o.seed = k;
    return execute(p, in, o).trace;
  };
  auto one = stability_curve(gen, {5}, {});
  CHECK(one.rows.size() == 1);
  CHECK_FALSE(one.converged.has_value());
  auto many = stability_curve(gen, {5, 10, 15}, {});
  REQUIRE(many.converged.has_value());
  CHECK(*many.converged);
}

TEST_CASE("invariant density") {
  auto p = builtin("workqueue");
  InvariantSet s;
  s.invariants.resize(p.metrics.lines_of_code);
  CHECK(invariant_density(s, p) == doctest::Approx(100.0));
}
