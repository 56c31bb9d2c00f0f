#include "ipa/fault.hpp"

#include <bit>
#include <limits>

#include "ipa/error.hpp"
#include "ipa/rng.hpp"

namespace ipa {

std::string_view fault_type_name(FaultType t) {
  switch (t) {
    case FaultType::DataCorruption: return "DataCorruption";
    case FaultType::FileIoBufferOverflow: return "FileIoBufferOverflow";
    case FaultType::BufferOverflowMalloc: return "BufferOverflowMalloc";
    case FaultType::FunctionCallCorruption: return "FunctionCallCorruption";
    case FaultType::InvalidPointer: return "InvalidPointer";
    case FaultType::RaceCondition: return "RaceCondition";
  }
  return "?";
}

std::optional<FaultType> parse_fault_type(std::string_view s) {
  for (auto t : kAllFaultTypes) {
    if (fault_type_name(t) == s) return t;
  }
  return std::nullopt;
}

namespace {

// A lock qualifies for RaceCondition only if some store happens before the
// matching unlock, scanning the function body in block order.
bool lock_guards_store(const Function& fn, std::size_t block, std::size_t index) {
  const int mutex = fn.blocks[block].code[index].target_index;
  std::size_t i = index + 1;
  for (std::size_t b = block; b < fn.blocks.size(); ++b, i = 0) {
    const auto& code = fn.blocks[b].code;
    for (; i < code.size(); ++i) {
      if (code[i].op == Opcode::Unlock && code[i].target_index == mutex) return false;
      if (code[i].op == Opcode::Store) return true;
    }
  }
  return false;
}

bool compatible(const Function& fn, std::size_t block, std::size_t index, FaultType t) {
  const auto& in = fn.blocks[block].code[index];
  switch (t) {
    case FaultType::DataCorruption: return in.produces_value();
    case FaultType::FileIoBufferOverflow: return in.op == Opcode::IoRead || in.op == Opcode::IoWrite;
    case FaultType::BufferOverflowMalloc:
    case FaultType::InvalidPointer: return in.op == Opcode::Alloc;
    case FaultType::FunctionCallCorruption: return in.op == Opcode::Call && !in.args.empty();
    case FaultType::RaceCondition: return in.op == Opcode::Lock && lock_guards_store(fn, block, index);
  }
  return false;
}

const Instruction* find_instruction(const Program& p, const Site& s, const Function** fn_out = nullptr) {
  int f = p.function_index(s.function);
  if (f < 0) return nullptr;
  const auto& fn = p.functions[f];
  int b = fn.block_index(s.block);
  if (b < 0 || s.index >= fn.blocks[b].code.size()) return nullptr;
  if (fn_out) *fn_out = &fn;
  return &fn.blocks[b].code[s.index];
}

}  // namespace

std::vector<Site> enumerate_sites(const Program& p, FaultType t) {
  std::vector<Site> sites;
  for (const auto& fn : p.functions) {
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      for (std::size_t i = 0; i < fn.blocks[b].code.size(); ++i) {
        if (compatible(fn, b, i, t)) sites.push_back({fn.name, fn.blocks[b].label, i, 1, 0});
      }
    }
  }
  return sites;
}

FaultPlan make_plan(const Program& p, FaultType t, const std::vector<Site>& sites, std::uint64_t seed) {
  if (sites.empty()) {
    throw Error(std::string("no injection sites for ") + std::string(fault_type_name(t)));
  }
  SplitMix64 rng(seed);
  FaultPlan plan;
  plan.type = t;
  plan.seed = seed;
  plan.site = sites[rng.below(sites.size())];
  plan.site.occurrence = plan.site.observed > 0 ? 1 + rng.below(plan.site.observed) : 1;
  switch (t) {
    case FaultType::DataCorruption:
    case FaultType::InvalidPointer:
      plan.bit = static_cast<int>(rng.below(64));
      break;
    case FaultType::FileIoBufferOverflow:
    case FaultType::BufferOverflowMalloc:
      plan.delta = static_cast<std::int64_t>(1 + rng.below(8));
      break;
    case FaultType::FunctionCallCorruption: {
      const auto* in = find_instruction(p, plan.site);
      if (!in) throw Error("site does not name an instruction");
      plan.arg = rng.below(in->args.size());
      plan.bit = static_cast<int>(rng.below(64));
      break;
    }
    case FaultType::RaceCondition:
      break;
  }
  return plan;
}

void validate_plan(const Program& p, const FaultPlan& plan) {
  const Function* fn = nullptr;
  const auto* in = find_instruction(p, plan.site, &fn);
  if (!in) {
    throw Error("fault site " + plan.site.function + ":" + plan.site.block + ":" +
                std::to_string(plan.site.index) + " does not exist");
  }
  const auto b = static_cast<std::size_t>(fn->block_index(plan.site.block));
  if (!compatible(*fn, b, plan.site.index, plan.type)) {
    throw Error("instruction at fault site is not compatible with " + std::string(fault_type_name(plan.type)));
  }
  if (plan.site.occurrence == 0) throw Error("fault occurrence is 1-based");
  const bool needs_bit = plan.type == FaultType::DataCorruption || plan.type == FaultType::InvalidPointer ||
                         plan.type == FaultType::FunctionCallCorruption;
  const bool needs_delta =
      plan.type == FaultType::FileIoBufferOverflow || plan.type == FaultType::BufferOverflowMalloc;
  const bool needs_arg = plan.type == FaultType::FunctionCallCorruption;
  if (needs_bit != plan.bit.has_value() || needs_delta != plan.delta.has_value() ||
      needs_arg != plan.arg.has_value()) {
    throw Error("fault parameters do not match " + std::string(fault_type_name(plan.type)));
  }
  if (plan.bit && (*plan.bit < 0 || *plan.bit > 63)) throw Error("bit index must be in 0..63");
  if (plan.delta && *plan.delta < 1) throw Error("size delta must be >= 1");
  if (plan.arg && *plan.arg >= in->args.size()) throw Error("argument index out of range");
}

std::int64_t flip_bit(std::int64_t v, int bit) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(v) ^ (std::uint64_t{1} << bit));
}

Scalar flip_bit(const Scalar& v, int bit) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return flip_bit(*i, bit);
  auto raw = std::bit_cast<std::uint64_t>(std::get<double>(v)) ^ (std::uint64_t{1} << bit);
  return std::bit_cast<double>(raw);
}

std::int64_t grow_size(std::int64_t size, std::int64_t delta) {
  if (size > std::numeric_limits<std::int64_t>::max() - delta) return std::numeric_limits<std::int64_t>::max();
  return size + delta;
}

std::int64_t shrink_size(std::int64_t size, std::int64_t delta) {
  return size - delta < 0 ? 0 : size - delta;
}

nlohmann::json plan_to_json(const FaultPlan& plan) {
  nlohmann::json params = nlohmann::json::object();
  if (plan.bit) params["bit"] = *plan.bit;
  if (plan.delta) params["delta"] = *plan.delta;
  if (plan.arg) params["arg"] = *plan.arg;
  return {
      {"fault_type", fault_type_name(plan.type)},
      {"site",
       {{"function", plan.site.function},
        {"block", plan.site.block},
        {"index", plan.site.index},
        {"occurrence", plan.site.occurrence}}},
      {"seed", plan.seed},
      {"parameters", params},
  };
}

FaultPlan plan_from_json(const nlohmann::json& j) {
  try {
    FaultPlan plan;
    auto type = parse_fault_type(j.at("fault_type").get<std::string>());
    if (!type) throw Error("unknown fault_type " + j.at("fault_type").dump());
    plan.type = *type;
    const auto& s = j.at("site");
    plan.site.function = s.at("function").get<std::string>();
    plan.site.block = s.at("block").get<std::string>();
    plan.site.index = s.at("index").get<std::size_t>();
    plan.site.occurrence = s.value("occurrence", std::uint64_t{1});
    plan.seed = j.value("seed", std::uint64_t{0});
    const auto params = j.value("parameters", nlohmann::json::object());
    if (params.contains("bit")) plan.bit = params.at("bit").get<int>();
    if (params.contains("delta")) plan.delta = params.at("delta").get<std::int64_t>();
    if (params.contains("arg")) plan.arg = params.at("arg").get<std::size_t>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed fault plan: ") + e.what());
  }
}

}  // namespace ipa
