#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipa/error.hpp"
#include "ipa/fault.hpp"
#include "ipa/inference.hpp"
#include "ipa/program.hpp"
#include "ipa/vm.hpp"

namespace ipa {

// Raised when the profiling runs do not yield a stable invariant set.
class NotConvergedError : public Error {
 public:
  using Error::Error;
};

enum class Outcome3 { Benign, CrashHang, SDC };

inline constexpr std::array<Outcome3, 3> kAllOutcomes{Outcome3::Benign, Outcome3::CrashHang, Outcome3::SDC};

std::string_view outcome3_name(Outcome3 o);

// Trap or Timeout is a crash or hang; a normal run is benign iff its output
// matches the golden output (as a multiset for order-free programs).
Outcome3 classify_outcome(const RunResult& r, const std::vector<Value>& golden_output, bool unordered);

struct Coverage {
  std::size_t hits = 0;
  std::size_t total = 0;
  double ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// 95% Wilson score interval around hits / total. Throws for total == 0.
Coverage wilson(std::size_t hits, std::size_t total, double z = 1.959963984540054);

struct CampaignConfig {
  std::string program_name;  // built-in name, or a label for program_source
  std::string program_source;  // VM assembly; empty selects the built-in
  std::optional<Value> data;
  std::int64_t threads = 4;
  Granularity granularity = Granularity::Function;
  std::size_t profiling_runs = 5;
  std::size_t injections = 200;
  double threshold = 0.99;
  std::uint64_t golden_seed = 0;
  std::uint64_t injection_seed = 1000;
  std::uint64_t budget_multiplier = kDefaultBudgetMultiplier;
  std::vector<FaultType> fault_types{kAllFaultTypes.begin(), kAllFaultTypes.end()};
  // Cap on plans drawn per fault type, as a multiple of injections.
  std::size_t attempt_factor = 20;
};

// Reads the JSON config format ({"version": 1, "program": ..., ...}).
CampaignConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const CampaignConfig& c);

Program load_campaign_program(const CampaignConfig& c);
std::vector<Value> campaign_input(const Program& p, const CampaignConfig& c);

struct RunRecord {
  FaultPlan plan;
  bool activated = false;
  Outcome outcome;
  Outcome3 outcome3 = Outcome3::Benign;
  std::vector<std::size_t> violated;  // invariant ids
  std::uint64_t steps = 0;
  std::uint64_t checks = 0;         // invariant evaluations by the detector
  std::uint64_t diff_records = 0;   // records compared by golden-run diffing
};

struct ClassCoverage {
  InvariantClass cls = InvariantClass::A;
  std::optional<double> ratio;  // nullopt when the class has no invariants
};

struct OutcomeRow {
  Outcome3 outcome = Outcome3::Benign;
  std::size_t runs = 0;
  std::optional<Coverage> coverage;  // among runs with this outcome
  std::vector<ClassCoverage> classes;  // |runs of this outcome violating the class| / activated
};

struct FaultTypeResult {
  FaultType type = FaultType::DataCorruption;
  bool skipped = false;
  std::string note;
  std::size_t sites = 0;
  std::size_t attempts = 0;
  std::size_t activated = 0;
  std::optional<Coverage> coverage;
  std::vector<ClassCoverage> classes;  // over all activated runs
  std::vector<OutcomeRow> outcomes;
  std::vector<RunRecord> records;  // activated runs, in plan seed order
};

// Deterministic cost accounting in abstract work units: VM steps for trace
// generation, value observations for inference, invariant evaluations for
// detection and record comparisons for golden-run diffing.
struct Timings {
  double i1 = 0;  // profiling runs
  double i2 = 0;  // inference
  double i3 = 0;  // detection, mean per faulty run
  double e1 = 0;  // one golden run
  double e3 = 0;  // golden-run diffing, mean per faulty run
};

struct Overheads {
  double s = 0;
  double d = 0;
};

// S = E1 / (I1 + I2), D = (E1 + E3) / (I1 / runs + I3). runs defaults to the
// five profiling runs of the formula.
Overheads overhead_ratios(const Timings& t, double profiling_runs = 5);

struct CampaignResult {
  CampaignConfig config;
  std::string program;
  ProgramMetrics metrics;
  InvariantSet invariants;
  std::vector<Value> golden_output;
  std::uint64_t step_budget = 0;
  double density = 0;
  Timings timings;
  Overheads overheads;
  std::vector<FaultTypeResult> fault_types;
};

// jobs only changes how many runs execute concurrently; the result is
// identical for every value.
CampaignResult run_campaign(const CampaignConfig& cfg, unsigned jobs = 1);

double fault_coverage_ratio(const std::vector<RunRecord>& records);
Coverage fault_coverage(const std::vector<RunRecord>& records);
// Fraction of the records violating at least one of the given invariant ids.
double class_coverage(const std::vector<RunRecord>& records, const std::vector<std::size_t>& class_ids,
                      std::size_t denominator);

nlohmann::json campaign_json(const CampaignResult& r);
std::string coverage_csv(const CampaignResult& r);      // per fault type tallies and coverage
std::string class_coverage_csv(const CampaignResult& r);  // fault type x failure x class
std::string overhead_csv(const CampaignResult& r);      // program row with S and D
std::string runs_jsonl(const CampaignResult& r);

struct SpearmanResult {
  std::optional<double> rho;  // undefined for a constant series
  std::optional<double> p_value;
  bool significant = false;  // p < 0.05
  bool exact = false;        // permutation p-value
};

// Average ranks for ties; exact two-sided permutation p-value for n <= 8,
// normal approximation beyond.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace ipa
