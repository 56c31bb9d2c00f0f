#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ipa/program.hpp"

namespace ipa {

enum class FaultType {
  DataCorruption,
  FileIoBufferOverflow,
  BufferOverflowMalloc,
  FunctionCallCorruption,
  InvalidPointer,
  RaceCondition,
};

inline constexpr std::array<FaultType, 6> kAllFaultTypes{
    FaultType::DataCorruption,         FaultType::FileIoBufferOverflow,
    FaultType::BufferOverflowMalloc,   FaultType::FunctionCallCorruption,
    FaultType::InvalidPointer,         FaultType::RaceCondition,
};

std::string_view fault_type_name(FaultType t);
std::optional<FaultType> parse_fault_type(std::string_view s);

// A static instruction plus which dynamic execution of it to perturb.
struct Site {
  std::string function;
  std::string block;
  std::size_t index = 0;
  std::uint64_t occurrence = 1;  // 1-based
  // Executions of this instruction in the seed-0 golden run. Filled by the
  // campaign before planning; 0 means "not profiled".
  std::uint64_t observed = 0;

  friend bool operator==(const Site& a, const Site& b) {
    return a.function == b.function && a.block == b.block && a.index == b.index &&
           a.occurrence == b.occurrence;
  }
};

struct FaultPlan {
  FaultType type = FaultType::DataCorruption;
  Site site;
  std::uint64_t seed = 0;
  std::optional<int> bit;            // DataCorruption, FunctionCallCorruption, InvalidPointer
  std::optional<std::int64_t> delta;  // FileIoBufferOverflow, BufferOverflowMalloc
  std::optional<std::size_t> arg;     // FunctionCallCorruption

  friend bool operator==(const FaultPlan&, const FaultPlan&) = default;
};

// Static candidate sites for a fault type, in program order. An empty list
// means the fault type does not apply to the program.
std::vector<Site> enumerate_sites(const Program& p, FaultType t);

// Draws a site uniformly, a dynamic occurrence uniformly in 1..observed, and
// the fault parameters uniformly over their legal ranges. Throws on an empty
// site list.
FaultPlan make_plan(const Program& p, FaultType t, const std::vector<Site>& sites, std::uint64_t seed);

// Checks that the plan names an instruction compatible with its fault type
// and carries exactly the parameters the type requires.
void validate_plan(const Program& p, const FaultPlan& plan);

// Perturbations applied by the VM when the plan's site fires.
std::int64_t flip_bit(std::int64_t v, int bit);
Scalar flip_bit(const Scalar& v, int bit);
std::int64_t grow_size(std::int64_t size, std::int64_t delta);
std::int64_t shrink_size(std::int64_t size, std::int64_t delta);

nlohmann::json plan_to_json(const FaultPlan& plan);
FaultPlan plan_from_json(const nlohmann::json& j);

}  // namespace ipa
