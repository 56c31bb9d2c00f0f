#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ipa/value.hpp"

namespace ipa {

// Register contents. Handles, thread ids and booleans are all integers.
using Scalar = std::variant<std::int64_t, double>;

enum class Opcode {
  Const, Mov, Add, Sub, Mul, Div, Cmp,
  Br, BrCond, Call, Ret,
  Alloc, Load, Store, Len,
  Lock, Unlock, SemWait, SemPost,
  Spawn, Join,
  IoRead, IoWrite, Output,
};

enum class CmpOp { Lt, Le, Eq, Ne, Gt, Ge };

std::string_view opcode_name(Opcode op);
std::string_view cmp_name(CmpOp op);

struct Operand {
  int reg = -1;  // register index, or -1 for an immediate
  Scalar imm = std::int64_t{0};

  bool is_reg() const { return reg >= 0; }
};

struct Instruction {
  Opcode op = Opcode::Const;
  CmpOp cmp = CmpOp::Eq;
  int dst = -1;
  std::vector<Operand> args;
  std::string target;       // callee, mutex, semaphore or branch label
  std::string else_target;  // br_cond false label
  int target_index = -1;    // resolved function / mutex / semaphore / block
  int else_index = -1;
  ValueType elem = ValueType::I64;  // alloc element type
  std::size_t line = 0;

  bool produces_value() const { return dst >= 0; }
  bool is_terminator() const { return op == Opcode::Br || op == Opcode::BrCond || op == Opcode::Ret; }
};

struct Block {
  std::string label;
  std::vector<Instruction> code;
};

struct Param {
  std::string name;
  ValueType type = ValueType::I64;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  std::optional<ValueType> return_type;
  std::vector<Block> blocks;
  std::vector<std::string> registers;  // params occupy the first slots

  int block_index(std::string_view label) const;
};

struct ProgramMetrics {
  std::size_t lines_of_code = 0;
  std::size_t statements = 0;
  std::size_t declarations = 0;
  std::size_t array_declarations = 0;
  std::size_t branches = 0;
  std::size_t functions = 0;
};

struct Semaphore {
  std::string name;
  std::int64_t initial = 0;
};

struct Program {
  std::string name;
  std::string source;
  std::vector<Function> functions;
  int entry = -1;
  std::vector<std::string> mutexes;
  std::vector<Semaphore> semaphores;
  // Functional specification of the output: order-free programs compare
  // outputs as multisets.
  bool output_unordered = false;
  // Default value for the entry function's last parameter (`default_input`).
  std::optional<Value> default_data;
  ProgramMetrics metrics;

  int function_index(std::string_view name) const;
  const Function& entry_function() const { return functions.at(entry); }
  // The entry function is the run harness and is not sampled.
  bool instrumented(int fn) const { return fn != entry; }
};

struct LoadOptions {
  // Rewrite functions with several `ret` into a single exit block.
  bool normalize = true;
};

// Throws ParseError for syntax, undefined names and arity errors.
Program load_program(std::string_view source, const LoadOptions& opts = {});

// Comma-separated input data for a parameter of the given type ("1, 2, 3").
std::optional<Value> parse_data_list(std::string_view text, ValueType type);

}  // namespace ipa
