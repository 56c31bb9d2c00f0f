#include <set>

#include "doctest.h"

#include "ipa/builtins.hpp"
#include "ipa/error.hpp"
#include "ipa/program.hpp"
#include "ipa/rng.hpp"
#include "ipa/vm.hpp"

using namespace ipa;

namespace {

const char* kSquare = R"(; squares the second element
entry main

func sq(x:i64) -> i64 {
entry:
  y = mul x, x
  ret y
}

func main(threads:i64, data:i64[]) {
entry:
  v = load data, 1
  r = call sq(v)
  output r
  ret
}
)";

std::vector<Value> square_input(std::vector<std::int64_t> data) {
  return {Value(std::int64_t{1}), Value(std::move(data))};
}

}  // namespace

TEST_CASE("splitmix64 reference stream") {
  // Published reference outputs for seed 0.
  SplitMix64 r(0);
  CHECK(r.next() == 0xe220a8397b1dcdafULL);
  CHECK(r.next() == 0x6e789e6aa1b965f4ULL);
  CHECK(r.next() == 0x06c45d188009454fULL);
  SplitMix64 b(99);
  for (int i = 0; i < 1000; ++i) CHECK(b.below(7) < 7);
}

TEST_CASE("call traced at entry and exit, entry function not instrumented") {
  auto p = load_program(kSquare);
  auto r = execute(p, square_input({2, 3}), {});
  REQUIRE(r.outcome.kind == Outcome::Kind::Normal);
  REQUIRE(r.output.size() == 1);
  CHECK(r.output[0] == Value(std::int64_t{9}));
  REQUIRE(r.trace.samples.size() == 2);
  CHECK(r.trace.samples[0].point == ProgramPoint::entry("sq"));
  CHECK(r.trace.samples[1].point == ProgramPoint::exit("sq"));
  CHECK(*r.trace.samples[1].find("return") == Value(std::int64_t{9}));
  CHECK(r.trace.samples[0].nonce == r.trace.samples[1].nonce);
  for (const auto& d : r.trace.declarations) CHECK(d.point.function != "main");
}

TEST_CASE("block granularity adds block-entry points") {
  auto p = load_program(kSquare);
  ExecOptions o;
  o.granularity = Granularity::BasicBlock;
  auto r = execute(p, square_input({2, 3}), o);
  bool saw_block = false;
  for (const auto& s : r.trace.samples) saw_block |= s.point.kind == PointKind::BasicBlockEntry;
  CHECK(saw_block);
}

TEST_CASE("traps") {
  auto p = load_program(kSquare);
  auto r = execute(p, square_input({2}), {});
  CHECK(r.outcome.kind == Outcome::Kind::Trap);
  CHECK(r.outcome.reason == "out_of_bounds");
}

TEST_CASE("step budget turns into a timeout") {
  auto p = load_program(R"(entry main
func main(threads:i64, data:i64) {
entry:
  br entry
}
)");
  ExecOptions o;
  o.step_budget = 500;
  auto r = execute(p, {Value(std::int64_t{1}), Value(std::int64_t{0})}, o);
  CHECK(r.outcome.kind == Outcome::Kind::Timeout);
  CHECK(r.steps == 500);
}

TEST_CASE("deadlock is a trap") {
  auto p = load_program(R"(entry main
mutex m
func main(threads:i64, data:i64) {
entry:
  lock m
  lock m
  ret
}
)");
  auto r = execute(p, {Value(std::int64_t{1}), Value(std::int64_t{0})}, {});
  CHECK(r.outcome.kind == Outcome::Kind::Trap);
  CHECK(r.outcome.reason == "deadlock");
}

TEST_CASE("schedules are a pure function of the seed") {
  auto p = builtin("workqueue");
  auto in = make_input(p, 4);
  for (std::uint64_t seed : {0, 1, 17}) {
    ExecOptions o;
    o.seed = seed;
    auto a = execute(p, in, o);
    auto b = execute(p, in, o);
    CHECK(a.trace == b.trace);
    CHECK(a.output == b.output);
    CHECK(a.steps == b.steps);
  }
  std::set<std::string> orders;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExecOptions o;
    o.seed = seed;
    orders.insert(write_trace(execute(p, in, o).trace));
  }
  CHECK(orders.size() > 1);
}

TEST_CASE("single thread has one interleaving") {
  auto p = builtin("workqueue");
  auto in = make_input(p, 1);
  ExecOptions o;
  auto base = execute(p, in, o);
  for (std::uint64_t seed = 1; seed < 6; ++seed) {
    o.seed = seed;
    CHECK(execute(p, in, o).trace == base.trace);
  }
}

TEST_CASE("every built-in runs cleanly on its default input") {
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    auto p = builtin(name);
    for (std::int64_t threads : {1, 4}) {
      ExecOptions o;
      o.seed = 3;
      auto r = execute(p, make_input(p, threads), o);
      CHECK(r.outcome.kind == Outcome::Kind::Normal);
      CHECK_FALSE(r.output.empty());
    }
  }
}

TEST_CASE("racer counts every increment under the lock") {
  auto p = builtin("racer");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ExecOptions o;
    o.seed = seed;
    auto r = execute(p, make_input(p, 4, Value(std::int64_t{10})), o);
    REQUIRE(r.outcome.kind == Outcome::Kind::Normal);
    CHECK(r.output.back() == Value(std::int64_t{40}));
  }
}

TEST_CASE("program loader errors") {
  CHECK_THROWS_AS(load_program("entry main\nfunc main(threads:i64, d:i64) {\nentry:\n  x = frob 1\n  ret\n}\n"), ParseError);
  CHECK_THROWS_AS(load_program("entry nope\nfunc main(threads:i64, d:i64) {\nentry:\n  ret\n}\n"), ParseError);
  CHECK_THROWS_AS(load_program("entry main\nfunc main(threads:i64, d:i64) {\nentry:\n  br gone\n}\n"), ParseError);
  CHECK_THROWS_AS(load_program("entry main\nfunc main(threads:i64, d:i64) {\nentry:\n  x = call f(1)\n  ret\n}\n"), ParseError);
}

TEST_CASE("data lists") {
  CHECK(parse_data_list("1, 2,3", ValueType::I64Array) == Value(std::vector<std::int64_t>{1, 2, 3}));
  CHECK(parse_data_list("0.5", ValueType::F64Array) == Value(std::vector<double>{0.5}));
  CHECK(parse_data_list("25", ValueType::I64) == Value(std::int64_t{25}));
  CHECK_FALSE(parse_data_list("1,2", ValueType::I64));
  CHECK_FALSE(parse_data_list("1,,2", ValueType::I64Array));
}

TEST_CASE("multiple returns are normalised to one exit") {
  auto p = load_program(R"(entry main
func pick(x:i64) -> i64 {
entry:
  neg = cmp lt x, 0
  br_cond neg, a, b
a:
  ret 0
b:
  ret x
}
func main(threads:i64, data:i64) {
entry:
  r = call pick(data)
  output r
  ret
}
)");
  int rets = 0;
  for (const auto& b : p.functions[p.function_index("pick")].blocks) {
    for (const auto& in : b.code) rets += in.op == Opcode::Ret;
  }
  CHECK(rets == 1);
  auto r = execute(p, {Value(std::int64_t{1}), Value(std::int64_t{-5})}, {});
  CHECK(r.output[0] == Value(std::int64_t{0}));
}
