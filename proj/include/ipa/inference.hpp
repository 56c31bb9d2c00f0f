#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ipa/program.hpp"
#include "ipa/trace.hpp"
#include "ipa/value.hpp"
#include "ipa/vm.hpp"

namespace ipa {

// A ArrayEquality, B ElementwiseInitialization, C Elementwise, D Initialization,
// E MultiValue, F Order, G Relational, H ReturnValue.
enum class InvariantClass { A, B, C, D, E, F, G, H };

inline constexpr InvariantClass kAllClasses[] = {
    InvariantClass::A, InvariantClass::B, InvariantClass::C, InvariantClass::D,
    InvariantClass::E, InvariantClass::F, InvariantClass::G, InvariantClass::H,
};

char class_letter(InvariantClass c);
std::optional<InvariantClass> parse_class_letter(std::string_view s);
std::string_view class_description(InvariantClass c);

enum class Relation { Lt, Le, Eq, Gt, Ge };

std::string_view relation_symbol(Relation r);

enum class PredicateKind {
  EqualConst,     // x == c
  LowerBound,     // x >= c
  UpperBound,     // x <= c
  NonZero,        // x != 0
  OneOf,          // x one of {c1, c2[, c3]}
  Compare,        // x < y, x <= y, x == y, x > y, x >= y
  ArrayAllEqual,  // a[] == c         (every element)
  ArrayInit,      // a[] == [c0,c1..] (per-index constants)
  Sorted,         // a[] sorted <=    (Le ascending, Ge descending)
  Elementwise,    // a[] < b[]
  Orig,           // x == orig(x) [+ c]
};

struct Predicate {
  PredicateKind kind = PredicateKind::EqualConst;
  std::string var;
  std::string other;  // Compare / Elementwise right-hand variable
  Relation rel = Relation::Eq;
  std::vector<Value> constants;  // Orig keeps its optional i64 offset here

  std::string text() const;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

std::optional<Predicate> parse_predicate(std::string_view text);

struct Invariant {
  ProgramPoint point;
  Predicate predicate;
  std::uint64_t support = 0;
  double confidence = 0.0;

  InvariantClass cls() const;
};

// Exclusive structural classification, precedence H > B > A > F > C > D > E > G.
InvariantClass classify(const Predicate& p);

// Confidence of an unfalsified candidate over n samples. Comparison forms use
// 1 - (1/2)^n; constant and one-of forms use 1 - k (1/2)^n where k counts the
// values the predicate commits to. Throws for n == 0.
double confidence(const Predicate& p, std::uint64_t n);

struct CheckResult {
  bool ok = true;
  std::string reason;  // empty when ok
};

// Evaluates the predicate on one sample. Orig predicates additionally need the
// nonce-paired ENTER sample; without it the check is vacuously true.
CheckResult check(const Predicate& p, const TraceSample& s, const TraceSample* orig = nullptr);

// Confidence of a candidate over the given samples: 0 once any sample
// falsifies it, confidence(p, n) otherwise. Orig forms see no entry values.
double candidate_confidence(const Predicate& p, const std::vector<TraceSample>& samples);

struct InvariantSet {
  std::vector<Invariant> invariants;  // canonical order
  std::uint64_t run_count = 0;
  double threshold = 0.99;
  Granularity granularity = Granularity::Function;

  std::size_t size() const { return invariants.size(); }
  // Hash over (point, class, predicate) lines; support and confidence excluded.
  std::string fingerprint() const;
  std::vector<std::size_t> count_by_class() const;  // indexed by InvariantClass
};

struct InferenceOptions {
  double threshold = 0.99;
  Granularity granularity = Granularity::Function;
};

// Pools all samples, instantiates the candidate catalogue at every declared
// point, keeps unfalsified candidates whose confidence reaches the threshold.
InvariantSet infer(const std::vector<TraceFile>& traces, const InferenceOptions& opts);

std::string write_invariants(const InvariantSet& s);
InvariantSet parse_invariants(std::string_view text);
InvariantSet read_invariant_file(const std::string& path);
void write_invariant_file(const std::string& path, const InvariantSet& s);

// 100 * |invariants| / lines of code.
double invariant_density(const InvariantSet& s, const Program& p);

struct StabilityRow {
  std::size_t runs = 0;
  std::size_t invariant_count = 0;
  std::string fingerprint;
};

struct StabilityCurve {
  std::vector<StabilityRow> rows;
  std::optional<bool> converged;  // undefined for a single row
};

inline const std::vector<std::size_t> kDefaultStabilityNs = {1, 2, 3, 4, 5, 10, 15};

// generator(k) yields the k-th golden trace (0-based). Each n uses the first n
// traces, so larger n strictly extend smaller ones.
StabilityCurve stability_curve(const std::function<TraceFile(std::size_t)>& generator,
                               const std::vector<std::size_t>& ns, const InferenceOptions& opts);

}  // namespace ipa
