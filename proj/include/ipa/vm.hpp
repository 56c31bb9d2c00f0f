#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipa/fault.hpp"
#include "ipa/program.hpp"
#include "ipa/trace.hpp"

namespace ipa {

enum class Granularity { Function, BasicBlock };

std::string_view granularity_name(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view s);

struct Outcome {
  enum class Kind { Normal, Trap, Timeout };
  Kind kind = Kind::Normal;
  std::string reason;  // trap reason: out_of_bounds, invalid_address, deadlock, ...

  std::string describe() const;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

// Executions of every static instruction, indexed [function][block][index].
using ExecutionCounts = std::vector<std::vector<std::vector<std::uint64_t>>>;

struct RunResult {
  TraceFile trace;
  std::vector<Value> output;
  Outcome outcome;
  std::uint64_t steps = 0;
  bool activated = false;
  ExecutionCounts counts;  // filled only when ExecOptions::count_executions
};

struct ExecOptions {
  std::uint64_t seed = 0;
  Granularity granularity = Granularity::Function;
  const FaultPlan* plan = nullptr;
  std::uint64_t step_budget = 0;  // 0 selects kMaxSteps
  bool count_executions = false;
};

inline constexpr std::uint64_t kMaxSteps = 50'000'000;
inline constexpr std::uint64_t kDefaultBudgetMultiplier = 10;

// Runs the program to completion, a trap, or the step budget. Scheduling is a
// pure function of the seed: at every instruction boundary the next thread
// is drawn uniformly from the runnable ones.
RunResult execute(const Program& p, const std::vector<Value>& input, const ExecOptions& opts);

// Trace declarations for every instrumented point of the program.
std::vector<Declaration> trace_declarations(const Program& p, Granularity g);

// Input for programs following the (threads, data) entry convention.
std::vector<Value> make_input(const Program& p, std::int64_t threads, std::optional<Value> data = std::nullopt);

// multiplier x steps of the fault-free run with seed 0.
std::uint64_t default_step_budget(const Program& p, const std::vector<Value>& input,
                                  std::uint64_t multiplier = kDefaultBudgetMultiplier);

// Fault-free profiling runs, one per seed. A run that does not finish
// normally is a program defect and raises an Error.
std::vector<TraceFile> golden_runs(const Program& p, const std::vector<Value>& input,
                                   const std::vector<std::uint64_t>& seeds, Granularity g,
                                   std::uint64_t step_budget = 0);

}  // namespace ipa
