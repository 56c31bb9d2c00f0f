// Replays a campaign by hand: run/infer/detect with the campaign's seeds must
// reproduce its invariant file and every per-run verdict.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> lines(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(slurp(p));
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(json::parse(l));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: cli_composition IPA\n";
    return 2;
  }
  const std::string ipa = argv[1];
  const auto dir = fs::temp_directory_path() / ("ipa_composition_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string() + "/";

  std::ofstream(dir / "cfg.json") << R"({"version": 1, "program": "workqueue", "threads": 4,
    "profiling_runs": 5, "injections": 25, "golden_seed": 0, "injection_seed": 500,
    "fault_types": ["DataCorruption", "FunctionCallCorruption", "RaceCondition"]})";
  int failures = 0;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) {
      std::cout << "FAIL: " << what << "\n";
      ++failures;
    }
  };

  expect(sh(ipa + " campaign " + d + "cfg.json -o " + d + "report > /dev/null") == 0, "campaign ran");

  std::string traces;
  for (int s = 0; s < 5; ++s) {
    const auto t = d + "g" + std::to_string(s) + ".trace";
    expect(sh(ipa + " run --builtin workqueue --threads 4 --seed " + std::to_string(s) + " -o " + t + " > /dev/null") == 0,
           "golden run " + std::to_string(s));
    traces += " " + t;
  }
  expect(sh(ipa + " infer" + traces + " -o " + d + "inv.txt > /dev/null") == 0, "infer");
  expect(slurp(dir / "inv.txt") == slurp(dir / "report" / "invariants.txt"), "invariant file matches the campaign's");

  // Invariant ids are line positions in the invariant file.
  std::map<std::string, std::size_t> ids;
  {
    std::istringstream in(slurp(dir / "inv.txt"));
    std::size_t id = 0;
    for (std::string l; std::getline(in, l);) {
      if (l.empty() || l[0] == '#') continue;
      std::istringstream fields(l);
      std::string point, cls, pred;
      std::getline(fields, point, '\t');
      std::getline(fields, cls, '\t');
      std::getline(fields, pred, '\t');
      ids[point + "\t" + pred] = id++;
    }
  }

  std::size_t replayed = 0;
  for (const auto& rec : lines(dir / "report" / "runs.jsonl")) {
    std::ofstream(dir / "plan.json") << rec.at("plan").dump();
    const int rc = sh(ipa + " run --builtin workqueue --threads 4 --fault " + d + "plan.json -o " + d +
                      "f.trace > /dev/null");
    const std::string outcome = rec.at("outcome").get<std::string>();
    const int want_rc = outcome == "Normal" ? 0 : outcome.rfind("Trap", 0) == 0 ? 2 : 3;
    expect(rc == want_rc, "exit status of plan seed " + rec.at("plan").at("seed").dump());

    sh(ipa + " detect " + d + "inv.txt " + d + "f.trace -o " + d + "v.jsonl > /dev/null");
    std::set<std::size_t> got;
    for (const auto& v : lines(dir / "v.jsonl")) {
      if (v.contains("summary")) continue;
      got.insert(ids.at(v.at("point").get<std::string>() + "\t" + v.at("invariant").get<std::string>()));
    }
    const auto want = rec.at("violated").get<std::set<std::size_t>>();
    expect(got == want, "violations of plan seed " + rec.at("plan").at("seed").dump());
    ++replayed;
  }
  expect(replayed >= 60, "replayed " + std::to_string(replayed) + " runs");
  fs::remove_all(dir);
  std::cout << (failures ? "FAIL" : "PASS") << " composition: " << replayed << " campaign runs replayed\n";
  return failures ? 1 : 0;
}
