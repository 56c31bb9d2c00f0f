// ipa: command-line front end for the trace / inference / detection pipeline.
//
// Exit codes: 0 ok, 1 usage or parse error, 2 trap, 3 timeout,
// 4 invariants did not converge.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipa/builtins.hpp"
#include "ipa/campaign.hpp"
#include "ipa/epa.hpp"
#include "ipa/error.hpp"
#include "ipa/fault.hpp"
#include "ipa/inference.hpp"
#include "ipa/trace.hpp"
#include "ipa/vm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTrap = 2;
constexpr int kExitTimeout = 3;
constexpr int kExitNotConverged = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ipa::Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ipa::Error("cannot write " + path.string());
  out << text;
}

// Writes to the file, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ipa::Error(path + ": " + e.what());
  }
}

ipa::Granularity granularity_flag(const std::string& s) {
  auto g = ipa::parse_granularity(s);
  if (!g) throw ipa::Error("granularity must be 'function' or 'block'");
  return *g;
}

struct ProgramFlags {
  std::string builtin;
  std::string file;
  std::string data;
  std::int64_t threads = 1;

  void add(CLI::App* cmd) {
    auto* b = cmd->add_option("--builtin", builtin, "built-in program name");
    auto* f = cmd->add_option("--program", file, "VM assembly file");
    b->excludes(f);
    cmd->add_option("--data", data, "comma-separated input data (default: the program's default_input)");
    cmd->add_option("--threads", threads, "logical threads")->check(CLI::PositiveNumber);
  }

  ipa::Program load() const {
    if (builtin.empty() == file.empty()) throw ipa::Error("give exactly one of --builtin and --program");
    if (!builtin.empty()) return ipa::builtin(builtin);
    auto p = ipa::load_program(read_file(file));
    p.name = fs::path(file).stem().string();
    return p;
  }

  std::vector<ipa::Value> input(const ipa::Program& p) const {
    std::optional<ipa::Value> v;
    if (!data.empty()) {
      const auto& params = p.entry_function().params;
      if (params.empty()) throw ipa::Error("entry function takes no data");
      v = ipa::parse_data_list(data, params.back().type);
      if (!v) throw ipa::Error("cannot parse --data '" + data + "' as " + std::string(ipa::type_name(params.back().type)));
    }
    return ipa::make_input(p, threads, v);
  }
};

std::vector<std::size_t> parse_ns(const std::string& text) {
  std::vector<std::size_t> ns;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    auto v = ipa::parse_i64(item);
    if (!v || *v < 1) throw ipa::Error("--ns expects positive integers, got '" + item + "'");
    ns.push_back(static_cast<std::size_t>(*v));
  }
  if (ns.empty()) throw ipa::Error("--ns is empty");
  return ns;
}

int cmd_run(const ProgramFlags& pf, std::optional<std::uint64_t> seed, const std::string& gran,
            const std::string& fault, std::uint64_t budget, const std::string& out, bool as_json) {
  auto p = pf.load();
  auto input = pf.input(p);
  std::optional<ipa::FaultPlan> plan;
  if (!fault.empty()) plan = ipa::plan_from_json(read_json(fault));
  ipa::ExecOptions opts;
  opts.seed = seed ? *seed : plan ? plan->seed : 0;
  opts.granularity = granularity_flag(gran);
  opts.plan = plan ? &*plan : nullptr;
  if (budget) {
    opts.step_budget = budget;
  } else {
    // A program that traps without any fault has no reference length; fall
    // back to the global step cap.
    try {
      opts.step_budget = ipa::default_step_budget(p, input);
    } catch (const ipa::Error&) {
      opts.step_budget = 0;
    }
  }
  auto r = ipa::execute(p, input, opts);
  ipa::write_trace_file(out, r.trace);

  if (as_json) {
    json j = {{"outcome", r.outcome.describe()}, {"steps", r.steps}, {"samples", r.trace.samples.size()}};
    json output = json::array();
    for (const auto& v : r.output) output.push_back(ipa::format_value(v));
    j["output"] = output;
    if (plan) j["activated"] = r.activated;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << r.outcome.describe() << " steps=" << r.steps << " samples=" << r.trace.samples.size() << "\n";
    std::cout << "output:";
    for (const auto& v : r.output) std::cout << ' ' << ipa::format_value(v);
    std::cout << "\n";
    if (plan) std::cout << "fault " << ipa::fault_type_name(plan->type) << (r.activated ? " activated" : " not activated") << "\n";
  }
  switch (r.outcome.kind) {
    case ipa::Outcome::Kind::Normal: return kExitOk;
    case ipa::Outcome::Kind::Trap: return kExitTrap;
    case ipa::Outcome::Kind::Timeout: return kExitTimeout;
  }
  return kExitOk;
}

int cmd_plan(const ProgramFlags& pf, const std::string& type_name, std::uint64_t seed, const std::string& out) {
  auto type = ipa::parse_fault_type(type_name);
  if (!type) throw ipa::Error("unknown fault type '" + type_name + "'");
  auto p = pf.load();
  auto input = pf.input(p);
  auto sites = ipa::enumerate_sites(p, *type);
  if (sites.empty()) throw ipa::Error(type_name + " has no injection sites in " + p.name);
  ipa::ExecOptions opts;
  opts.count_executions = true;
  auto golden = ipa::execute(p, input, opts);
  for (auto& s : sites) {
    int f = p.function_index(s.function);
    s.observed = golden.counts[f][p.functions[f].block_index(s.block)][s.index];
  }
  emit(out, ipa::plan_to_json(ipa::make_plan(p, *type, sites, seed)).dump(2) + "\n");
  return kExitOk;
}

int cmd_infer(const std::vector<std::string>& files, double threshold, const std::string& gran,
              const std::string& out, bool as_json) {
  std::vector<ipa::TraceFile> traces;
  for (const auto& f : files) traces.push_back(ipa::read_trace_file(f));
  auto set = ipa::infer(traces, {threshold, granularity_flag(gran)});
  ipa::write_invariant_file(out, set);
  if (as_json) {
    json by_class = json::object();
    auto counts = set.count_by_class();
    for (auto c : ipa::kAllClasses) by_class[std::string(1, ipa::class_letter(c))] = counts[static_cast<std::size_t>(c)];
    std::cout << json{{"invariants", set.size()}, {"by_class", by_class}, {"fingerprint", set.fingerprint()}}.dump()
              << "\n";
  } else {
    std::cout << set.size() << " invariants from " << traces.size() << " trace(s), fingerprint " << set.fingerprint()
              << "\n";
  }
  return kExitOk;
}

int cmd_detect(const std::string& inv_file, const std::string& trace_file, const std::string& out, bool as_json) {
  auto set = ipa::read_invariant_file(inv_file);
  auto trace = ipa::read_trace_file(trace_file);
  auto report = ipa::detect(set, trace);
  const auto jsonl = ipa::violation_jsonl(set, report);
  if (!out.empty()) write_file(out, jsonl);
  if (as_json || out.empty()) {
    std::cout << jsonl;
  } else {
    std::cout << report.violations.size() << " violation(s) of " << report.violated.size()
              << " distinct invariant(s) in " << report.samples << " samples\n";
  }
  return kExitOk;
}

int cmd_diff(const std::string& golden, const std::string& faulty, const std::string& out, bool as_json) {
  auto g = ipa::read_trace_file(golden);
  auto f = ipa::read_trace_file(faulty);
  auto devs = ipa::diff_traces(g, f);
  std::string text;
  for (const auto& d : devs) text += ipa::deviation_json(d).dump() + "\n";
  if (!out.empty()) write_file(out, text);
  std::size_t data = 0;
  for (const auto& d : devs) data += d.kind == ipa::DeviationKind::DataViolation ? 1 : 0;
  if (as_json) {
    std::cout << json{{"deviations", devs.size()}, {"data", data}, {"control_flow", devs.size() - data}}.dump() << "\n";
  } else {
    std::cout << devs.size() << " deviation(s): " << data << " data, " << devs.size() - data << " control flow\n";
  }
  return kExitOk;
}

int cmd_variance(const std::vector<std::string>& files, bool as_json) {
  std::vector<ipa::TraceFile> traces;
  for (const auto& f : files) traces.push_back(ipa::read_trace_file(f));
  double v = ipa::mean_pairwise_variance(traces);
  if (as_json) {
    std::cout << json{{"traces", traces.size()}, {"mean_pairwise_variance", v}}.dump() << "\n";
  } else {
    std::cout << "mean pairwise variance over " << traces.size() << " traces: " << ipa::format_double(v) << "\n";
  }
  return kExitOk;
}

ipa::CampaignConfig load_config(const std::string& path) {
  auto j = read_json(path);
  // Program files are resolved relative to the config file.
  if (j.is_object() && j.contains("program_file") && j["program_file"].is_string()) {
    fs::path pf = j["program_file"].get<std::string>();
    if (pf.is_relative()) j["program_file"] = (fs::path(path).parent_path() / pf).string();
  }
  return ipa::config_from_json(j);
}

int cmd_campaign(const std::string& config, const std::string& out_dir, unsigned jobs, bool as_json) {
  auto cfg = load_config(config);
  ipa::CampaignResult r;
  try {
    r = ipa::run_campaign(cfg, jobs);
  } catch (const ipa::NotConvergedError& e) {
    std::cerr << "ipa: " << e.what() << "\n";
    std::cerr << "ipa: refusing to inject with unstable invariants\n";
    return kExitNotConverged;
  }
  fs::create_directories(out_dir);
  const fs::path dir = out_dir;
  write_file(dir / "result.json", ipa::campaign_json(r).dump(2) + "\n");
  write_file(dir / "coverage.csv", ipa::coverage_csv(r));
  write_file(dir / "class_coverage.csv", ipa::class_coverage_csv(r));
  write_file(dir / "overhead.csv", ipa::overhead_csv(r));
  write_file(dir / "runs.jsonl", ipa::runs_jsonl(r));
  write_file(dir / "invariants.txt", ipa::write_invariants(r.invariants));
  if (as_json) {
    std::cout << ipa::campaign_json(r).dump() << "\n";
    return kExitOk;
  }
  std::cout << r.program << ": " << r.invariants.size() << " invariants, density "
            << ipa::format_double(r.density) << "%\n";
  for (const auto& ft : r.fault_types) {
    std::cout << "  " << ipa::fault_type_name(ft.type) << ": ";
    if (ft.skipped) {
      std::cout << "skipped (" << ft.note << ")\n";
      continue;
    }
    std::cout << ft.activated << " activated, coverage " << ipa::format_double(ft.coverage->ratio) << " ["
              << ipa::format_double(ft.coverage->ci_low) << ", " << ipa::format_double(ft.coverage->ci_high) << "]\n";
  }
  std::cout << "  S=" << ipa::format_double(r.overheads.s) << " D=" << ipa::format_double(r.overheads.d)
            << "\nreport written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_stability(const std::string& config, const std::string& ns_text, const std::string& gran_override,
                  const std::string& out, bool as_json) {
  auto cfg = load_config(config);
  if (!gran_override.empty()) cfg.granularity = granularity_flag(gran_override);
  auto p = ipa::load_campaign_program(cfg);
  auto input = ipa::campaign_input(p, cfg);
  auto budget = ipa::default_step_budget(p, input, cfg.budget_multiplier);
  auto gen = [&](std::size_t k) {
    ipa::ExecOptions opts;
    opts.seed = cfg.golden_seed + k;
    opts.granularity = cfg.granularity;
    opts.step_budget = budget;
    auto r = ipa::execute(p, input, opts);
    if (r.outcome.kind != ipa::Outcome::Kind::Normal) {
      throw ipa::Error("fault-free run with seed " + std::to_string(opts.seed) + " ended with " + r.outcome.describe());
    }
    return r.trace;
  };
  auto curve = ipa::stability_curve(gen, parse_ns(ns_text), {cfg.threshold, cfg.granularity});

  // Smallest n from which every later fingerprint matches.
  std::optional<std::size_t> converged_at;
  if (curve.converged && *curve.converged) {
    std::size_t i = curve.rows.size() - 1;
    while (i > 0 && curve.rows[i - 1].fingerprint == curve.rows.back().fingerprint) --i;
    converged_at = curve.rows[i].runs;
  }

  std::string csv = "n,invariants,fingerprint\n";
  for (const auto& row : curve.rows) csv += std::to_string(row.runs) + "," + std::to_string(row.invariant_count) + "," + row.fingerprint + "\n";
  if (!out.empty()) write_file(out, csv);

  if (as_json) {
    json rows = json::array();
    for (const auto& row : curve.rows) rows.push_back({{"n", row.runs}, {"invariants", row.invariant_count}, {"fingerprint", row.fingerprint}});
    json j = {{"program", p.name}, {"granularity", ipa::granularity_name(cfg.granularity)}, {"rows", rows}};
    j["converged"] = curve.converged ? json(*curve.converged) : json(nullptr);
    j["converged_at"] = converged_at ? json(*converged_at) : json(nullptr);
    std::cout << j.dump() << "\n";
  } else {
    std::cout << p.name << " (" << ipa::granularity_name(cfg.granularity) << ")\n";
    for (const auto& row : curve.rows) {
      std::cout << "  n=" << row.runs << " invariants=" << row.invariant_count << " fingerprint=" << row.fingerprint << "\n";
    }
    if (!curve.converged) {
      std::cout << "convergence undefined for a single n\n";
    } else if (*curve.converged) {
      std::cout << "converged at n=" << *converged_at << "\n";
    } else {
      std::cout << "not converged by n=" << curve.rows.back().runs << "\n";
    }
  }
  return curve.converged && !*curve.converged ? kExitNotConverged : kExitOk;
}

int cmd_correlate(const std::vector<std::string>& reports, bool as_json) {
  // Rows: one campaign report per program. Columns: VM metrics vs coverage.
  std::vector<json> docs;
  for (const auto& r : reports) docs.push_back(read_json(r));
  const std::vector<std::string> metrics = {"lines_of_code", "statements", "declarations",
                                            "array_declarations", "branches", "functions"};
  json out = json::array();
  for (auto type : ipa::kAllFaultTypes) {
    const std::string name(ipa::fault_type_name(type));
    std::vector<double> cov;
    std::vector<const json*> used;
    for (const auto& d : docs) {
      for (const auto& ft : d.at("fault_types")) {
        if (ft.at("fault_type") == name && !ft.at("coverage").is_null()) {
          cov.push_back(ft.at("coverage").at("ratio").get<double>());
          used.push_back(&d);
        }
      }
    }
    if (cov.size() < 3) continue;
    for (const auto& m : metrics) {
      std::vector<double> xs;
      for (const auto* d : used) xs.push_back(d->at("metrics").at(m).get<double>());
      auto s = ipa::spearman(xs, cov);
      json row = {{"fault_type", name}, {"metric", m}, {"n", cov.size()}};
      row["rho"] = s.rho ? json(*s.rho) : json(nullptr);
      row["p_value"] = s.p_value ? json(*s.p_value) : json(nullptr);
      row["significant"] = s.significant;
      out.push_back(row);
    }
  }
  if (as_json) {
    std::cout << out.dump() << "\n";
  } else {
    std::cout << "fault_type,metric,n,rho,p_value,significant\n";
    for (const auto& row : out) {
      std::cout << row["fault_type"].get<std::string>() << ',' << row["metric"].get<std::string>() << ','
                << row["n"].get<std::size_t>() << ','
                << (row["rho"].is_null() ? "undefined" : ipa::format_double(row["rho"].get<double>())) << ','
                << (row["p_value"].is_null() ? "-" : ipa::format_double(row["p_value"].get<double>())) << ','
                << (row["significant"].get<bool>() ? "yes" : "no") << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant-based error propagation analysis workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output");

  ProgramFlags run_pf;
  std::optional<std::uint64_t> run_seed;
  std::string run_gran = "function", run_fault, run_out;
  std::uint64_t run_budget = 0;
  auto* run = app.add_subcommand("run", "execute a program and write its trace");
  run_pf.add(run);
  run->add_option("--seed", run_seed, "scheduler seed (default: the fault plan's seed, else 0)");
  run->add_option("--granularity", run_gran, "function or block");
  run->add_option("--fault", run_fault, "fault plan JSON file");
  run->add_option("--budget", run_budget, "step budget (default: 10x the seed-0 fault-free run)");
  run->add_option("-o,--out", run_out, "trace file to write")->required();

  ProgramFlags plan_pf;
  std::string plan_type, plan_out;
  std::uint64_t plan_seed = 0;
  auto* plan = app.add_subcommand("plan", "draw a fault plan");
  plan_pf.add(plan);
  plan->add_option("--type", plan_type, "fault type")->required();
  plan->add_option("--seed", plan_seed, "plan seed");
  plan->add_option("-o,--out", plan_out, "plan file (default: stdout)");

  std::vector<std::string> infer_files;
  double infer_threshold = 0.99;
  std::string infer_gran = "function", infer_out;
  auto* infer = app.add_subcommand("infer", "infer likely invariants from traces");
  infer->add_option("traces", infer_files, "trace files")->required();
  infer->add_option("--threshold", infer_threshold, "confidence threshold")->check(CLI::Range(0.0, 1.0));
  infer->add_option("--granularity", infer_gran, "function or block");
  infer->add_option("-o,--out", infer_out, "invariant file to write")->required();

  std::string det_inv, det_trace, det_out;
  auto* det = app.add_subcommand("detect", "check a trace against an invariant file");
  det->add_option("invariants", det_inv, "invariant file")->required();
  det->add_option("trace", det_trace, "faulty trace")->required();
  det->add_option("-o,--out", det_out, "violation report (JSON lines)");

  std::string diff_g, diff_f, diff_out;
  auto* diff = app.add_subcommand("diff", "positional golden-run comparison");
  diff->add_option("golden", diff_g, "golden trace")->required();
  diff->add_option("faulty", diff_f, "faulty trace")->required();
  diff->add_option("-o,--out", diff_out, "deviation report (JSON lines)");

  std::vector<std::string> var_files;
  auto* var = app.add_subcommand("variance", "mean pairwise variance between traces");
  var->add_option("traces", var_files, "trace files")->required()->expected(2, -1);

  std::string camp_cfg, camp_out = "report";
  unsigned camp_jobs = 1;
  auto* camp = app.add_subcommand("campaign", "profile, infer, inject and report");
  camp->add_option("config", camp_cfg, "campaign config (JSON)")->required();
  camp->add_option("-o,--out", camp_out, "report directory");
  camp->add_option("--jobs", camp_jobs, "parallel runs")->check(CLI::PositiveNumber);

  std::string stab_cfg, stab_ns = "1,2,3,4,5,10,15", stab_gran, stab_out;
  auto* stab = app.add_subcommand("stability", "invariant counts over growing numbers of runs");
  stab->add_option("config", stab_cfg, "campaign config (JSON)")->required();
  stab->add_option("--ns", stab_ns, "comma-separated run counts");
  stab->add_option("--granularity", stab_gran, "override the config's granularity");
  stab->add_option("-o,--out", stab_out, "CSV table");

  std::vector<std::string> corr_reports;
  auto* corr = app.add_subcommand("correlate", "Spearman correlation of program metrics with coverage");
  corr->add_option("reports", corr_reports, "campaign result.json files")->required()->expected(3, -1);

  std::string dump_name;
  bool dump_list = false;
  auto* dump = app.add_subcommand("dump-builtin", "print a built-in program's source");
  dump->add_option("name", dump_name, "built-in name");
  dump->add_flag("--list", dump_list, "list built-in names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_pf, run_seed, run_gran, run_fault, run_budget, run_out, as_json);
    if (*plan) return cmd_plan(plan_pf, plan_type, plan_seed, plan_out);
    if (*infer) return cmd_infer(infer_files, infer_threshold, infer_gran, infer_out, as_json);
    if (*det) return cmd_detect(det_inv, det_trace, det_out, as_json);
    if (*diff) return cmd_diff(diff_g, diff_f, diff_out, as_json);
    if (*var) return cmd_variance(var_files, as_json);
    if (*camp) return cmd_campaign(camp_cfg, camp_out, camp_jobs, as_json);
    if (*stab) return cmd_stability(stab_cfg, stab_ns, stab_gran, stab_out, as_json);
    if (*corr) return cmd_correlate(corr_reports, as_json);
    if (*dump) {
      if (dump_list || dump_name.empty()) {
        for (const auto& n : ipa::builtin_names()) std::cout << n << "\n";
      } else {
        std::cout << ipa::builtin_source(dump_name);
      }
      return kExitOk;
    }
  } catch (const ipa::Error& e) {
    std::cerr << "ipa: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
