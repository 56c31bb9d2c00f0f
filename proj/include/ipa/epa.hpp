#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipa/inference.hpp"
#include "ipa/trace.hpp"

namespace ipa {

// Golden-run comparison works on sample records: record k of one trace is
// compared with record k of the other, ignoring thread ids and nonces.

enum class DeviationKind { DataViolation, ControlFlowViolation };

std::string_view deviation_kind_name(DeviationKind k);

struct Deviation {
  DeviationKind kind = DeviationKind::DataViolation;
  std::optional<std::size_t> golden_seq;  // absent for surplus faulty records
  std::optional<std::size_t> faulty_seq;  // absent for surplus golden records
  std::string detail;
};

std::vector<Deviation> diff_traces(const TraceFile& golden, const TraceFile& faulty);

// Line conflicts relative to the length of t1, capped at 1.
double variance(const TraceFile& t1, const TraceFile& t2);

// Mean of variance(t_i, t_j) over all i < j. Needs at least two traces.
double mean_pairwise_variance(const std::vector<TraceFile>& traces);

nlohmann::json deviation_json(const Deviation& d);

enum class Boundary { Entry, Exit, Block };

std::string_view boundary_name(Boundary b);

struct Violation {
  std::size_t line = 0;  // 1-based header line of the sample in the trace file
  std::size_t seq = 0;
  std::string function;
  Boundary boundary = Boundary::Entry;
  std::size_t invariant_id = 0;  // index into InvariantSet::invariants
  std::string reason;
  // Exit violation whose paired entry sample violated nothing: the error
  // arose inside this invocation's dynamic extent.
  bool localized = false;
};

struct DetectionReport {
  std::vector<Violation> violations;
  std::size_t samples = 0;
  std::size_t skipped = 0;  // samples at points without invariants
  std::uint64_t checks = 0;
  std::vector<std::size_t> violated;  // distinct invariant ids, ascending

  bool detected() const { return !violated.empty(); }
};

DetectionReport detect(const InvariantSet& set, const TraceFile& faulty);

// One JSON object per violation followed by a summary object.
std::string violation_jsonl(const InvariantSet& set, const DetectionReport& r);

}  // namespace ipa
