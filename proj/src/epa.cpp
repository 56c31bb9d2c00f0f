#include "ipa/epa.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "ipa/error.hpp"

namespace ipa {

std::string_view deviation_kind_name(DeviationKind k) {
  return k == DeviationKind::DataViolation ? "DataViolation" : "ControlFlowViolation";
}

std::string_view boundary_name(Boundary b) {
  switch (b) {
    case Boundary::Entry: return "entry";
    case Boundary::Exit: return "exit";
    case Boundary::Block: return "block";
  }
  return "?";
}

namespace {

bool same_record(const TraceSample& a, const TraceSample& b) {
  return a.point == b.point && a.bindings == b.bindings;
}

std::string first_difference(const TraceSample& g, const TraceSample& f) {
  for (std::size_t i = 0; i < g.bindings.size() && i < f.bindings.size(); ++i) {
    if (!(g.bindings[i] == f.bindings[i])) {
      return g.bindings[i].name + ": " + format_value(g.bindings[i].value) + " vs " +
             format_value(f.bindings[i].value);
    }
  }
  return "binding count differs";
}

}  // namespace

std::vector<Deviation> diff_traces(const TraceFile& golden, const TraceFile& faulty) {
  std::vector<Deviation> out;
  const auto& g = golden.samples;
  const auto& f = faulty.samples;
  const std::size_t common = std::min(g.size(), f.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (g[i].point != f[i].point) {
      out.push_back({DeviationKind::ControlFlowViolation, i, i, g[i].point.name() + " vs " + f[i].point.name()});
    } else if (g[i].bindings != f[i].bindings) {
      out.push_back({DeviationKind::DataViolation, i, i, g[i].point.name() + " " + first_difference(g[i], f[i])});
    }
  }
  for (std::size_t i = common; i < g.size(); ++i) {
    out.push_back({DeviationKind::ControlFlowViolation, i, std::nullopt, "missing " + g[i].point.name()});
  }
  for (std::size_t i = common; i < f.size(); ++i) {
    out.push_back({DeviationKind::ControlFlowViolation, std::nullopt, i, "surplus " + f[i].point.name()});
  }
  return out;
}

double variance(const TraceFile& t1, const TraceFile& t2) {
  if (t1.samples.empty()) throw Error("variance is undefined for an empty reference trace");
  const auto& a = t1.samples;
  const auto& b = t2.samples;
  const std::size_t common = std::min(a.size(), b.size());
  std::size_t conflicts = std::max(a.size(), b.size()) - common;
  for (std::size_t i = 0; i < common; ++i) {
    if (!same_record(a[i], b[i])) ++conflicts;
  }
  return std::min(1.0, static_cast<double>(conflicts) / static_cast<double>(a.size()));
}

double mean_pairwise_variance(const std::vector<TraceFile>& traces) {
  if (traces.size() < 2) throw Error("pairwise variance needs at least two traces");
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (std::size_t j = i + 1; j < traces.size(); ++j) {
      sum += variance(traces[i], traces[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

nlohmann::json deviation_json(const Deviation& d) {
  nlohmann::json j;
  j["kind"] = deviation_kind_name(d.kind);
  j["golden_seq"] = d.golden_seq ? nlohmann::json(*d.golden_seq) : nlohmann::json(nullptr);
  j["faulty_seq"] = d.faulty_seq ? nlohmann::json(*d.faulty_seq) : nlohmann::json(nullptr);
  j["detail"] = d.detail;
  return j;
}

DetectionReport detect(const InvariantSet& set, const TraceFile& faulty) {
  std::map<ProgramPoint, std::vector<std::size_t>> index;
  for (std::size_t i = 0; i < set.invariants.size(); ++i) index[set.invariants[i].point].push_back(i);

  DetectionReport r;
  r.samples = faulty.samples.size();
  const auto lines = sample_line_numbers(faulty);

  using Key = std::tuple<std::string, std::uint64_t, std::uint64_t>;
  std::map<Key, std::pair<const TraceSample*, bool>> open;  // entry sample, entry violated
  for (std::size_t k = 0; k < faulty.samples.size(); ++k) {
    const auto& s = faulty.samples[k];
    const Key key{s.point.function, s.thread_id, s.nonce};
    const TraceSample* orig = nullptr;
    bool entry_violated = false;
    if (s.point.kind == PointKind::FunctionExit) {
      if (auto it = open.find(key); it != open.end()) {
        orig = it->second.first;
        entry_violated = it->second.second;
        open.erase(it);
      }
    }

    bool violated_here = false;
    auto it = index.find(s.point);
    if (it == index.end()) {
      ++r.skipped;
    } else {
      for (auto id : it->second) {
        const auto& inv = set.invariants[id];
        // Initialization invariants need the entry values of the same invocation.
        if (inv.predicate.kind == PredicateKind::Orig && !orig) continue;
        ++r.checks;
        auto res = check(inv.predicate, s, orig);
        if (res.ok) continue;
        violated_here = true;
        Violation v;
        v.line = lines[k];
        v.seq = k;
        v.function = s.point.function;
        v.boundary = s.point.kind == PointKind::FunctionEntry  ? Boundary::Entry
                     : s.point.kind == PointKind::FunctionExit ? Boundary::Exit
                                                               : Boundary::Block;
        v.invariant_id = id;
        v.reason = std::move(res.reason);
        v.localized = v.boundary == Boundary::Exit && orig && !entry_violated;
        r.violations.push_back(std::move(v));
        r.violated.push_back(id);
      }
    }
    if (s.point.kind == PointKind::FunctionEntry) open[key] = {&s, violated_here};
  }
  std::sort(r.violated.begin(), r.violated.end());
  r.violated.erase(std::unique(r.violated.begin(), r.violated.end()), r.violated.end());
  return r;
}

std::string violation_jsonl(const InvariantSet& set, const DetectionReport& r) {
  std::string out;
  for (const auto& v : r.violations) {
    const auto& inv = set.invariants.at(v.invariant_id);
    nlohmann::json j = {
        {"line", v.line},
        {"seq", v.seq},
        {"function", v.function},
        {"boundary", boundary_name(v.boundary)},
        {"point", inv.point.name()},
        {"class", std::string(1, class_letter(inv.cls()))},
        {"invariant", inv.predicate.text()},
        {"reason", v.reason},
        {"localized", v.localized},
    };
    out += j.dump() + "\n";
  }
  nlohmann::json summary = {
      {"summary", true},
      {"samples", r.samples},
      {"violations", r.violations.size()},
      {"distinct_invariants", r.violated.size()},
      {"skipped_samples", r.skipped},
      {"detected", r.detected()},
  };
  out += summary.dump() + "\n";
  return out;
}

}  // namespace ipa
