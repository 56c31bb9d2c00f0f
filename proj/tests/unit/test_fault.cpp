#include <set>

#include "doctest.h"

#include "ipa/builtins.hpp"
#include "ipa/error.hpp"
#include "ipa/fault.hpp"
#include "ipa/vm.hpp"

using namespace ipa;

TEST_CASE("fault type names round-trip") {
  for (auto t : kAllFaultTypes) CHECK(parse_fault_type(fault_type_name(t)) == t);
  CHECK_FALSE(parse_fault_type("StackSmash"));
}

TEST_CASE("bit flips") {
  CHECK(flip_bit(std::int64_t{0}, 0) == 1);
  CHECK(flip_bit(std::int64_t{5}, 2) == 1);
  CHECK(flip_bit(std::int64_t{0}, 63) == std::numeric_limits<std::int64_t>::min());
  // Bit 63 of a double is the sign.
  CHECK(std::get<double>(flip_bit(Scalar{2.0}, 63)) == -2.0);
  // Bit 52 is the lowest exponent bit: 1.0 (exp 1023) becomes 0.5 (exp 1022).
  CHECK(std::get<double>(flip_bit(Scalar{1.0}, 52)) == 0.5);
  CHECK(std::get<std::int64_t>(flip_bit(Scalar{std::int64_t{8}}, 3)) == 0);
}

TEST_CASE("size perturbations saturate") {
  CHECK(grow_size(10, 3) == 13);
  CHECK(grow_size(std::numeric_limits<std::int64_t>::max() - 1, 5) == std::numeric_limits<std::int64_t>::max());
  CHECK(shrink_size(10, 3) == 7);
  CHECK(shrink_size(2, 8) == 0);
}

TEST_CASE("site enumeration follows the instruction kind") {
  auto wq = builtin("workqueue");
  auto allocs = enumerate_sites(wq, FaultType::InvalidPointer);
  CHECK(allocs.size() == 3);  // queue, next, tids in main
  auto locks = enumerate_sites(wq, FaultType::RaceCondition);
  REQUIRE(locks.size() == 1);
  CHECK(locks[0].function == "addChunk");
  CHECK(enumerate_sites(wq, FaultType::FileIoBufferOverflow).empty());
  CHECK_FALSE(enumerate_sites(builtin("httpish"), FaultType::FileIoBufferOverflow).empty());
  // Parameterless handler calls are not FunctionCallCorruption candidates.
  for (const auto& s : enumerate_sites(builtin("httpish"), FaultType::FunctionCallCorruption)) {
    CHECK(s.function != "dispatch");
  }
}

TEST_CASE("plans are deterministic, in range, and survive JSON") {
  auto p = builtin("qsortmt");
  for (auto t : kAllFaultTypes) {
    auto sites = enumerate_sites(p, t);
    if (sites.empty()) {
      CHECK_THROWS_AS(make_plan(p, t, sites, 1), Error);
      continue;
    }
    for (auto& s : sites) s.observed = 5;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto plan = make_plan(p, t, sites, seed);
      CHECK(plan == make_plan(p, t, sites, seed));
      CHECK(plan.site.occurrence >= 1);
      CHECK(plan.site.occurrence <= 5);
      if (plan.bit) CHECK((*plan.bit >= 0 && *plan.bit < 64));
      if (plan.delta) CHECK(*plan.delta >= 1);
      validate_plan(p, plan);
      auto back = plan_from_json(plan_to_json(plan));
      CHECK(back.type == plan.type);
      CHECK(back.site == plan.site);
      CHECK(back.bit == plan.bit);
      CHECK(back.delta == plan.delta);
      CHECK(back.arg == plan.arg);
      CHECK(back.seed == plan.seed);
    }
  }
}

TEST_CASE("validate_plan rejects mismatched sites and parameters") {
  auto p = builtin("workqueue");
  auto lock = enumerate_sites(p, FaultType::RaceCondition).at(0);
  FaultPlan plan;
  plan.type = FaultType::InvalidPointer;
  plan.site = lock;
  plan.bit = 3;
  CHECK_THROWS_AS(validate_plan(p, plan), Error);
  plan.type = FaultType::RaceCondition;
  CHECK_THROWS_AS(validate_plan(p, plan), Error);  // stray bit
  plan.bit.reset();
  validate_plan(p, plan);
  plan.site.block = "nowhere";
  CHECK_THROWS_AS(validate_plan(p, plan), Error);
}

TEST_CASE("a fault only activates when its occurrence executes") {
  auto p = builtin("workqueue");
  auto in = make_input(p, 1);
  auto sites = enumerate_sites(p, FaultType::DataCorruption);
  REQUIRE_FALSE(sites.empty());
  FaultPlan plan;
  plan.type = FaultType::DataCorruption;
  plan.bit = 0;
  // addChunk runs four times; occurrence 4 fires, occurrence 5 never does.
  Site s = sites[0];
  for (const auto& c : sites) {
    if (c.function == "addChunk") {
      s = c;
      break;
    }
  }
  REQUIRE(s.function == "addChunk");
  plan.site = s;
  plan.site.occurrence = 4;
  ExecOptions o;
  o.plan = &plan;
  CHECK(execute(p, in, o).activated);
  plan.site.occurrence = 5;
  auto r = execute(p, in, o);
  CHECK_FALSE(r.activated);
  CHECK(r.trace == execute(p, in, {}).trace);
}

TEST_CASE("fake mutex loses updates on some schedule") {
  auto p = builtin("racer");
  auto in = make_input(p, 4, Value(std::int64_t{25}));
  FaultPlan plan;
  plan.type = FaultType::RaceCondition;
  plan.site = enumerate_sites(p, FaultType::RaceCondition).at(0);
  bool lost = false;
  for (std::uint64_t seed = 0; seed < 50 && !lost; ++seed) {
    ExecOptions o;
    o.seed = seed;
    o.plan = &plan;
    auto r = execute(p, in, o);
    CHECK(r.activated);
    lost = r.outcome.kind == Outcome::Kind::Normal && r.output.back().as_i64() < 100;
  }
  CHECK(lost);
}
