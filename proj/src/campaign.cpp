#include "ipa/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ipa/builtins.hpp"
#include "ipa/epa.hpp"

namespace ipa {

std::string_view outcome3_name(Outcome3 o) {
  switch (o) {
    case Outcome3::Benign: return "Benign";
    case Outcome3::CrashHang: return "CrashHang";
    case Outcome3::SDC: return "SDC";
  }
  return "?";
}

Outcome3 classify_outcome(const RunResult& r, const std::vector<Value>& golden_output, bool unordered) {
  if (r.outcome.kind != Outcome::Kind::Normal) return Outcome3::CrashHang;
  if (r.output.size() != golden_output.size()) return Outcome3::SDC;
  if (!unordered) return r.output == golden_output ? Outcome3::Benign : Outcome3::SDC;
  std::vector<std::string> a, b;
  for (const auto& v : r.output) a.push_back(format_value(v));
  for (const auto& v : golden_output) b.push_back(format_value(v));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b ? Outcome3::Benign : Outcome3::SDC;
}

Coverage wilson(std::size_t hits, std::size_t total, double z) {
  if (total == 0) throw Error("coverage over zero runs is undefined");
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(hits) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  Coverage c;
  c.hits = hits;
  c.total = total;
  c.ratio = p;
  c.ci_low = std::max(0.0, centre - half);
  c.ci_high = std::min(1.0, centre + half);
  // Guard the endpoints against rounding so the interval always holds p.
  c.ci_low = std::min(c.ci_low, p);
  c.ci_high = std::max(c.ci_high, p);
  return c;
}

namespace {

const std::set<std::string> kConfigKeys = {
    "version", "program", "program_file", "data", "threads", "granularity", "profiling_runs",
    "injections", "threshold", "golden_seed", "injection_seed", "budget_multiplier", "fault_types",
    "attempt_factor",
};

Value data_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number()) return Value(j.get<double>());
  if (!j.is_array()) throw Error("config field 'data' must be a number or an array of numbers");
  bool integral = true;
  for (const auto& x : j) {
    if (!x.is_number()) throw Error("config field 'data' must contain only numbers");
    integral = integral && x.is_number_integer();
  }
  if (integral) return Value(j.get<std::vector<std::int64_t>>());
  return Value(j.get<std::vector<double>>());
}

nlohmann::json value_json(const Value& v) {
  switch (v.type()) {
    case ValueType::I64: return v.as_i64();
    case ValueType::F64: return v.as_f64();
    case ValueType::Bool: return v.as_bool();
    case ValueType::I64Array: return v.as_i64_array();
    case ValueType::F64Array: return v.as_f64_array();
  }
  return nullptr;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

CampaignConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("campaign config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kConfigKeys.count(key)) throw Error("unknown config field '" + key + "'");
  }
  if (!j.contains("version") || j.at("version") != 1) throw Error("campaign config needs \"version\": 1");
  CampaignConfig c;
  try {
    if (j.contains("program") == j.contains("program_file")) {
      throw Error("campaign config needs exactly one of 'program' and 'program_file'");
    }
    if (j.contains("program")) {
      c.program_name = j.at("program").get<std::string>();
    } else {
      std::filesystem::path path = j.at("program_file").get<std::string>();
      c.program_source = read_text(path);
      c.program_name = path.stem().string();
    }
    if (j.contains("data")) c.data = data_from_json(j.at("data"));
    c.threads = j.value("threads", c.threads);
    if (j.contains("granularity")) {
      auto g = parse_granularity(j.at("granularity").get<std::string>());
      if (!g) throw Error("granularity must be 'function' or 'block'");
      c.granularity = *g;
    }
    c.profiling_runs = j.value("profiling_runs", c.profiling_runs);
    c.injections = j.value("injections", c.injections);
    c.threshold = j.value("threshold", c.threshold);
    c.golden_seed = j.value("golden_seed", c.golden_seed);
    c.injection_seed = j.value("injection_seed", c.injection_seed);
    c.budget_multiplier = j.value("budget_multiplier", c.budget_multiplier);
    c.attempt_factor = j.value("attempt_factor", c.attempt_factor);
    if (j.contains("fault_types")) {
      c.fault_types.clear();
      for (const auto& t : j.at("fault_types")) {
        auto ft = parse_fault_type(t.get<std::string>());
        if (!ft) throw Error("unknown fault type " + t.dump());
        c.fault_types.push_back(*ft);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed campaign config: ") + e.what());
  }
  return c;
}

nlohmann::json config_to_json(const CampaignConfig& c) {
  nlohmann::json j;
  j["version"] = 1;
  j["program"] = c.program_name;
  if (c.data) j["data"] = value_json(*c.data);
  j["threads"] = c.threads;
  j["granularity"] = granularity_name(c.granularity);
  j["profiling_runs"] = c.profiling_runs;
  j["injections"] = c.injections;
  j["threshold"] = c.threshold;
  j["golden_seed"] = c.golden_seed;
  j["injection_seed"] = c.injection_seed;
  j["budget_multiplier"] = c.budget_multiplier;
  j["attempt_factor"] = c.attempt_factor;
  nlohmann::json types = nlohmann::json::array();
  for (auto t : c.fault_types) types.push_back(fault_type_name(t));
  j["fault_types"] = types;
  return j;
}

Program load_campaign_program(const CampaignConfig& c) {
  if (c.program_source.empty()) return builtin(c.program_name);
  Program p = load_program(c.program_source);
  p.name = c.program_name;
  return p;
}

std::vector<Value> campaign_input(const Program& p, const CampaignConfig& c) {
  std::optional<Value> data = c.data;
  const auto& params = p.entry_function().params;
  // JSON has no separate float syntax for 1 vs 1.0; widen integers for f64 inputs.
  if (data && !params.empty()) {
    const auto want = params.back().type;
    if (want == ValueType::F64Array && data->type() == ValueType::I64Array) {
      std::vector<double> xs(data->as_i64_array().begin(), data->as_i64_array().end());
      data = Value(std::move(xs));
    } else if (want == ValueType::F64 && data->type() == ValueType::I64) {
      data = Value(static_cast<double>(data->as_i64()));
    } else if (want == ValueType::I64Array && data->type() == ValueType::F64Array) {
      throw Error("program " + p.name + " expects integer data");
    }
  }
  return make_input(p, c.threads, data);
}

Overheads overhead_ratios(const Timings& t, double profiling_runs) {
  if (t.i1 + t.i2 <= 0) throw Error("setup overhead needs I1 + I2 > 0");
  if (profiling_runs <= 0 || t.i1 / profiling_runs + t.i3 <= 0) throw Error("detection overhead needs I1/n + I3 > 0");
  return {t.e1 / (t.i1 + t.i2), (t.e1 + t.e3) / (t.i1 / profiling_runs + t.i3)};
}

double fault_coverage_ratio(const std::vector<RunRecord>& records) { return fault_coverage(records).ratio; }

Coverage fault_coverage(const std::vector<RunRecord>& records) {
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.violated.empty() ? 0 : 1;
  return wilson(hits, records.size());
}

double class_coverage(const std::vector<RunRecord>& records, const std::vector<std::size_t>& class_ids,
                      std::size_t denominator) {
  if (denominator == 0) throw Error("class coverage over zero runs is undefined");
  std::size_t hits = 0;
  for (const auto& r : records) {
    bool any = std::any_of(r.violated.begin(), r.violated.end(), [&](std::size_t id) {
      return std::binary_search(class_ids.begin(), class_ids.end(), id);
    });
    hits += any ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

namespace {

template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& f) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Context {
  const Program& program;
  const std::vector<Value>& input;
  const CampaignConfig& cfg;
  const InvariantSet& set;
  const TraceFile& golden_trace;
  const std::vector<Value>& golden_output;
  std::uint64_t budget;
};

RunRecord inject(const Context& ctx, FaultType type, const std::vector<Site>& sites, std::uint64_t seed) {
  RunRecord rec;
  rec.plan = make_plan(ctx.program, type, sites, seed);
  ExecOptions opts;
  opts.seed = seed;
  opts.granularity = ctx.cfg.granularity;
  opts.plan = &rec.plan;
  opts.step_budget = ctx.budget;
  auto run = execute(ctx.program, ctx.input, opts);
  rec.activated = run.activated;
  rec.outcome = run.outcome;
  rec.steps = run.steps;
  if (!rec.activated) return rec;
  rec.outcome3 = classify_outcome(run, ctx.golden_output, ctx.program.output_unordered);
  auto report = detect(ctx.set, run.trace);
  rec.violated = std::move(report.violated);
  rec.checks = report.checks;
  rec.diff_records = std::max(ctx.golden_trace.samples.size(), run.trace.samples.size());
  return rec;
}

std::vector<ClassCoverage> classes_for(const std::vector<RunRecord>& records,
                                       const std::vector<std::vector<std::size_t>>& ids, std::size_t denominator) {
  std::vector<ClassCoverage> out;
  for (auto c : kAllClasses) {
    const auto& cls_ids = ids[static_cast<std::size_t>(c)];
    ClassCoverage cc{c, std::nullopt};
    if (!cls_ids.empty() && denominator > 0) cc.ratio = class_coverage(records, cls_ids, denominator);
    out.push_back(cc);
  }
  return out;
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg, unsigned jobs) {
  if (cfg.injections < 1) throw Error("injections per fault type must be >= 1");
  if (cfg.profiling_runs < 1) throw Error("profiling runs must be >= 1");
  if (cfg.threads < 1) throw Error("thread count must be >= 1");

  CampaignResult res;
  res.config = cfg;
  Program p = load_campaign_program(cfg);
  const auto input = campaign_input(p, cfg);
  res.program = p.name;
  res.metrics = p.metrics;
  res.step_budget = default_step_budget(p, input, cfg.budget_multiplier);

  // Profiling: 3n fault-free runs so that the set from n runs can be checked
  // against 2n and 3n before it is trusted.
  const std::size_t n = cfg.profiling_runs;
  std::vector<RunResult> golden(3 * n);
  parallel_for(golden.size(), jobs, [&](std::size_t k) {
    ExecOptions opts;
    opts.seed = cfg.golden_seed + k;
    opts.granularity = cfg.granularity;
    opts.step_budget = res.step_budget;
    opts.count_executions = k == 0;
    golden[k] = execute(p, input, opts);
  });
  for (std::size_t k = 0; k < golden.size(); ++k) {
    if (golden[k].outcome.kind != Outcome::Kind::Normal) {
      throw Error("fault-free run with seed " + std::to_string(cfg.golden_seed + k) + " ended with " +
                  golden[k].outcome.describe());
    }
  }
  std::vector<TraceFile> traces;
  for (const auto& g : golden) traces.push_back(g.trace);
  const InferenceOptions iopts{cfg.threshold, cfg.granularity};
  std::vector<InvariantSet> sets;
  for (std::size_t m = 1; m <= 3; ++m) {
    sets.push_back(infer({traces.begin(), traces.begin() + static_cast<std::ptrdiff_t>(m * n)}, iopts));
  }
  if (sets[0].fingerprint() != sets[1].fingerprint() || sets[1].fingerprint() != sets[2].fingerprint()) {
    throw NotConvergedError("invariants of " + p.name + " at " + std::string(granularity_name(cfg.granularity)) +
                            " granularity did not converge: " + std::to_string(sets[0].size()) + "/" +
                            std::to_string(sets[1].size()) + "/" + std::to_string(sets[2].size()) +
                            " invariants from " + std::to_string(n) + "/" + std::to_string(2 * n) + "/" +
                            std::to_string(3 * n) + " runs with differing sets");
  }
  res.invariants = std::move(sets[0]);
  res.density = invariant_density(res.invariants, p);
  res.golden_output = golden[0].output;

  for (std::size_t k = 0; k < n; ++k) {
    res.timings.i1 += static_cast<double>(golden[k].steps);
    for (const auto& s : traces[k].samples) res.timings.i2 += static_cast<double>(s.bindings.size());
  }
  res.timings.e1 = static_cast<double>(golden[0].steps);

  std::vector<std::vector<std::size_t>> class_ids(std::size(kAllClasses));
  for (std::size_t i = 0; i < res.invariants.size(); ++i) {
    class_ids[static_cast<std::size_t>(res.invariants.invariants[i].cls())].push_back(i);
  }

  const Context ctx{p, input, cfg, res.invariants, traces[0], res.golden_output, res.step_budget};
  const auto& counts = golden[0].counts;
  double checks = 0, compared = 0;
  std::size_t faulty_runs = 0;

  for (auto type : cfg.fault_types) {
    FaultTypeResult ft;
    ft.type = type;
    auto sites = enumerate_sites(p, type);
    ft.sites = sites.size();
    if (sites.empty()) {
      ft.skipped = true;
      ft.note = "no injection sites";
      res.fault_types.push_back(std::move(ft));
      continue;
    }
    for (auto& s : sites) {
      int f = p.function_index(s.function);
      int b = p.functions[f].block_index(s.block);
      s.observed = counts[f][b][s.index];
    }

    const std::size_t cap = cfg.injections * cfg.attempt_factor;
    std::uint64_t next_seed = cfg.injection_seed;
    while (ft.activated < cfg.injections && ft.attempts < cap) {
      const std::size_t want = cfg.injections - ft.activated;
      const std::size_t batch = std::min(cap - ft.attempts, std::max<std::size_t>(want, jobs));
      std::vector<RunRecord> recs(batch);
      parallel_for(batch, jobs, [&](std::size_t i) { recs[i] = inject(ctx, type, sites, next_seed + i); });
      // Consume strictly in seed order so the batch size never shows.
      for (auto& r : recs) {
        if (ft.activated == cfg.injections) break;
        ++ft.attempts;
        if (!r.activated) continue;
        ++ft.activated;
        ft.records.push_back(std::move(r));
      }
      next_seed += batch;
    }
    if (ft.activated < cfg.injections) {
      ft.note = "only " + std::to_string(ft.activated) + " of " + std::to_string(cfg.injections) +
                " plans activated within " + std::to_string(cap) + " attempts";
    }
    if (ft.activated == 0) {
      ft.skipped = true;
      res.fault_types.push_back(std::move(ft));
      continue;
    }

    ft.coverage = fault_coverage(ft.records);
    ft.classes = classes_for(ft.records, class_ids, ft.activated);
    for (auto o : kAllOutcomes) {
      OutcomeRow row;
      row.outcome = o;
      std::vector<RunRecord> subset;
      for (const auto& r : ft.records) {
        if (r.outcome3 == o) subset.push_back(r);
      }
      row.runs = subset.size();
      if (!subset.empty()) row.coverage = fault_coverage(subset);
      row.classes = classes_for(subset, class_ids, ft.activated);
      ft.outcomes.push_back(std::move(row));
    }
    for (const auto& r : ft.records) {
      checks += static_cast<double>(r.checks);
      compared += static_cast<double>(r.diff_records);
      ++faulty_runs;
    }
    res.fault_types.push_back(std::move(ft));
  }

  if (faulty_runs > 0) {
    res.timings.i3 = checks / static_cast<double>(faulty_runs);
    res.timings.e3 = compared / static_cast<double>(faulty_runs);
  }
  res.overheads = overhead_ratios(res.timings, static_cast<double>(n));
  return res;
}

namespace {

nlohmann::json coverage_json(const std::optional<Coverage>& c) {
  if (!c) return nullptr;
  return {{"hits", c->hits}, {"total", c->total}, {"ratio", c->ratio}, {"ci_low", c->ci_low}, {"ci_high", c->ci_high}};
}

nlohmann::json classes_json(const std::vector<ClassCoverage>& cs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& c : cs) {
    j[std::string(1, class_letter(c.cls))] = c.ratio ? nlohmann::json(*c.ratio) : nlohmann::json(nullptr);
  }
  return j;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

nlohmann::json campaign_json(const CampaignResult& r) {
  nlohmann::json j;
  j["config"] = config_to_json(r.config);
  j["program"] = r.program;
  j["metrics"] = {
      {"lines_of_code", r.metrics.lines_of_code}, {"statements", r.metrics.statements},
      {"declarations", r.metrics.declarations},   {"array_declarations", r.metrics.array_declarations},
      {"branches", r.metrics.branches},           {"functions", r.metrics.functions},
  };
  nlohmann::json per_class = nlohmann::json::object();
  auto counts = r.invariants.count_by_class();
  for (auto c : kAllClasses) per_class[std::string(1, class_letter(c))] = counts[static_cast<std::size_t>(c)];
  j["invariants"] = {
      {"count", r.invariants.size()},
      {"by_class", per_class},
      {"fingerprint", r.invariants.fingerprint()},
      {"density", r.density},
  };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : r.golden_output) out.push_back(value_json(v));
  j["golden_output"] = out;
  j["step_budget"] = r.step_budget;
  j["timings"] = {{"unit", "work"},    {"I1", r.timings.i1}, {"I2", r.timings.i2},
                  {"I3", r.timings.i3}, {"E1", r.timings.e1}, {"E3", r.timings.e3}};
  j["overheads"] = {{"S", r.overheads.s}, {"D", r.overheads.d}};
  nlohmann::json fts = nlohmann::json::array();
  for (const auto& ft : r.fault_types) {
    nlohmann::json f;
    f["fault_type"] = fault_type_name(ft.type);
    f["skipped"] = ft.skipped;
    if (!ft.note.empty()) f["note"] = ft.note;
    f["sites"] = ft.sites;
    f["attempts"] = ft.attempts;
    f["activated"] = ft.activated;
    nlohmann::json tallies = nlohmann::json::object();
    for (auto o : kAllOutcomes) {
      tallies[std::string(outcome3_name(o))] =
          std::count_if(ft.records.begin(), ft.records.end(), [&](const RunRecord& x) { return x.outcome3 == o; });
    }
    f["outcomes"] = tallies;
    f["coverage"] = coverage_json(ft.coverage);
    f["class_coverage"] = classes_json(ft.classes);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : ft.outcomes) {
      rows.push_back({{"outcome", outcome3_name(row.outcome)},
                      {"runs", row.runs},
                      {"coverage", coverage_json(row.coverage)},
                      {"class_coverage", classes_json(row.classes)}});
    }
    f["by_outcome"] = rows;
    fts.push_back(f);
  }
  j["fault_types"] = fts;
  return j;
}

std::string coverage_csv(const CampaignResult& r) {
  std::ostringstream out;
  out << "program,fault_type,sites,attempts,activated,benign,crash_hang,sdc,coverage,ci_low,ci_high,"
         "coverage_benign,coverage_crash_hang,coverage_sdc\n";
  for (const auto& ft : r.fault_types) {
    out << r.program << ',' << fault_type_name(ft.type) << ',' << ft.sites << ',' << ft.attempts << ','
        << ft.activated;
    if (ft.skipped) {
      out << ",,,,,,,,,\n";
      continue;
    }
    for (const auto& row : ft.outcomes) out << ',' << row.runs;
    out << ',' << fixed(ft.coverage->ratio) << ',' << fixed(ft.coverage->ci_low) << ','
        << fixed(ft.coverage->ci_high);
    for (const auto& row : ft.outcomes) out << ',' << (row.coverage ? fixed(row.coverage->ratio) : "-");
    out << '\n';
  }
  return out.str();
}

std::string class_coverage_csv(const CampaignResult& r) {
  std::ostringstream out;
  out << "fault_type,failure";
  for (auto c : kAllClasses) out << ',' << class_letter(c);
  out << '\n';
  auto emit = [&](const FaultTypeResult& ft, std::string_view failure, const std::vector<ClassCoverage>& cs) {
    out << fault_type_name(ft.type) << ',' << failure;
    for (const auto& c : cs) out << ',' << (c.ratio ? fixed(100.0 * *c.ratio, 1) : "-");
    out << '\n';
  };
  for (const auto& ft : r.fault_types) {
    if (ft.skipped) continue;
    for (const auto& row : ft.outcomes) emit(ft, outcome3_name(row.outcome), row.classes);
    emit(ft, "All", ft.classes);
  }
  return out.str();
}

std::string overhead_csv(const CampaignResult& r) {
  std::ostringstream out;
  out << "program,threads,granularity,loc,invariants,density,I1,I2,I3,E1,E3,S,D\n";
  out << r.program << ',' << r.config.threads << ',' << granularity_name(r.config.granularity) << ','
      << r.metrics.lines_of_code << ',' << r.invariants.size() << ',' << fixed(r.density, 2) << ','
      << fixed(r.timings.i1, 1) << ',' << fixed(r.timings.i2, 1) << ',' << fixed(r.timings.i3, 1) << ','
      << fixed(r.timings.e1, 1) << ',' << fixed(r.timings.e3, 1) << ',' << fixed(r.overheads.s) << ','
      << fixed(r.overheads.d) << '\n';
  return out.str();
}

std::string runs_jsonl(const CampaignResult& r) {
  std::string out;
  for (const auto& ft : r.fault_types) {
    for (const auto& rec : ft.records) {
      nlohmann::json j = {
          {"plan", plan_to_json(rec.plan)},
          {"outcome", rec.outcome.describe()},
          {"failure", outcome3_name(rec.outcome3)},
          {"steps", rec.steps},
          {"violated", rec.violated},
      };
      out += j.dump() + "\n";
    }
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error("spearman needs series of equal length");
  if (xs.size() < 3) throw Error("spearman needs at least 3 observations");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  SpearmanResult res;
  res.rho = pearson(rx, ry);
  if (!res.rho) return res;
  const double observed = std::abs(*res.rho);
  const std::size_t n = xs.size();
  if (n <= 8) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t extreme = 0, total = 0;
    std::vector<double> shuffled(n);
    do {
      for (std::size_t i = 0; i < n; ++i) shuffled[i] = ry[perm[i]];
      auto r = pearson(rx, shuffled);
      if (r && std::abs(*r) >= observed - 1e-12) ++extreme;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    res.exact = true;
  } else {
    const double z = observed * std::sqrt(static_cast<double>(n) - 1.0);
    res.p_value = std::erfc(z / std::sqrt(2.0));
  }
  res.significant = *res.p_value < 0.05;
  return res;
}

}  // namespace ipa
