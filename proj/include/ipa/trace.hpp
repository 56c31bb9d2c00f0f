#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ipa/value.hpp"

namespace ipa {

enum class PointKind { FunctionEntry, FunctionExit, BasicBlockEntry };

struct ProgramPoint {
  PointKind kind = PointKind::FunctionEntry;
  std::string function;
  std::string block;  // non-empty iff kind == BasicBlockEntry

  static ProgramPoint entry(std::string fn) { return {PointKind::FunctionEntry, std::move(fn), {}}; }
  static ProgramPoint exit(std::string fn) { return {PointKind::FunctionExit, std::move(fn), {}}; }
  static ProgramPoint block_entry(std::string fn, std::string label) {
    return {PointKind::BasicBlockEntry, std::move(fn), std::move(label)};
  }

  // "fn:::ENTER", "fn:::EXIT" or "fn:::BB:label".
  std::string name() const;

  friend bool operator==(const ProgramPoint&, const ProgramPoint&) = default;
  // Canonical order: function, kind, block.
  friend std::strong_ordering operator<=>(const ProgramPoint& a, const ProgramPoint& b);
};

bool parse_point_name(std::string_view text, ProgramPoint& out);

struct VarSig {
  std::string name;
  ValueType type = ValueType::I64;
  friend bool operator==(const VarSig&, const VarSig&) = default;
};

struct Declaration {
  ProgramPoint point;
  std::vector<VarSig> vars;
  friend bool operator==(const Declaration&, const Declaration&) = default;
};

struct Binding {
  std::string name;
  Value value;
  friend bool operator==(const Binding&, const Binding&) = default;
};

struct TraceSample {
  ProgramPoint point;
  std::uint64_t nonce = 0;
  std::uint64_t thread_id = 0;
  std::vector<Binding> bindings;
  std::size_t seq = 0;

  const Value* find(std::string_view var) const;
  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

struct TraceFile {
  std::vector<Declaration> declarations;
  std::vector<TraceSample> samples;

  const Declaration* declaration(const ProgramPoint& p) const;
  friend bool operator==(const TraceFile&, const TraceFile&) = default;
};

// Throws ParseError on malformed input, undeclared points, signature
// mismatches and broken nonce pairing (duplicate ENTER/EXIT, orphan EXIT).
TraceFile parse_trace(std::string_view text);
std::string write_trace(const TraceFile& t);

std::map<ProgramPoint, std::vector<TraceSample>> group_samples(const TraceFile& t);

// 1-based text line of each sample's header line in write_trace(t).
std::vector<std::size_t> sample_line_numbers(const TraceFile& t);

TraceFile read_trace_file(const std::string& path);
void write_trace_file(const std::string& path, const TraceFile& t);

}  // namespace ipa
