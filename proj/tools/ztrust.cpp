// Batch front end: run, validate, compare, export-policy.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ztrust/runner.hpp"

namespace fs = std::filesystem;
using namespace ztrust;

namespace {

constexpr int kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitGuard = 3;

// A path, or the name of a shipped scenario.
std::string resolve_scenario(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  const fs::path shipped = fs::path(ZTRUST_SCENARIO_DIR) / (arg + ".json");
  if (fs::exists(shipped)) return shipped.string();
  throw ValidationError("--scenario", "no file or shipped scenario named '" + arg + "'");
}

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + out);
  f << text;
}

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number()) return format_number(v.get<double>());
  return v.is_string() ? v.get<std::string>() : v.dump();
}

void print_summary(const json& report, const std::string& out) {
  const json& res = report["results"];
  std::cout << report["scenario"]["name"].get<std::string>() << " (" << report["scenario"]["mode"].get<std::string>()
            << ") -> " << out << "\n";
  if (res.contains("access_time_comparison")) {
    std::cout << "mean time to success by policy\n";
    for (const auto& row : res["access_time_comparison"]) {
      std::cout << "  " << row["session"].get<std::string>() << ":";
      for (auto it = row["mean_time"].begin(); it != row["mean_time"].end(); ++it)
        std::cout << "  " << it.key() << "=" << cell(it.value());
      std::cout << "\n";
    }
    std::cout << "median detection stage\n";
    for (const auto& p : res["policies"])
      for (const auto& s : p["sessions"])
        std::cout << "  " << s["group"].get<std::string>() << ": " << cell(s["detection"]["median_stage"]) << "\n";
  } else if (res.contains("epsilon")) {
    std::cout << "epsilon " << cell(res["epsilon"]) << " of payoff range " << cell(res["payoff_range"]) << "\n";
    for (const auto& g : res["groups"])
      std::cout << "  " << g["group"].get<std::string>() << ": defender " << cell(g["mean_payoff_defender"])
                << ", agent " << cell(g["mean_payoff_agent"]) << "\n";
  } else if (res.contains("ts0")) {
    std::cout << "TS0 " << cell(res["ts0"]) << ", p " << cell(res["flipit"]["p"]) << ", converged "
              << (res["converged"].get<bool>() ? "yes" : "no") << " after " << res["iterations"] << " iterations\n";
  } else if (res.contains("entities")) {
    for (const auto& e : res["entities"])
      std::cout << "  " << e["entity_id"].get<std::string>() << ": final TS " << cell(e["final_ts"]) << "\n";
  }
}

// Accepts a report file or a run directory holding report.json.
std::string report_path(const std::string& arg) {
  return fs::is_directory(arg) ? (fs::path(arg) / "report.json").string() : arg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-trust game engine: trust evaluation, equilibrium solving and session simulation"};
  app.require_subcommand(1);

  std::string scenario, seeds, out, metric = "elapsed";
  std::size_t grid = 0, window = 0, threads = 1;
  std::vector<std::string> reports;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--scenario", scenario, "scenario file or shipped scenario name")->required();
    c->add_option("--grid", grid, "belief grid resolution")->check(CLI::PositiveNumber);
    c->add_option("--window", window, "moving-horizon window length")->check(CLI::PositiveNumber);
    c->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* run = app.add_subcommand("run", "run a scenario and write traces plus report.json");
  add_common(run);
  run->add_option("--seeds", seeds, "seed range a..b, overrides the scenario");
  run->add_option("--out", out, "output directory, overrides the scenario");

  auto* validate = app.add_subcommand("validate", "load and check a scenario");
  validate->add_option("--scenario", scenario, "scenario file or shipped scenario name")->required();

  auto* compare = app.add_subcommand("compare", "align per-seed metrics across run reports");
  compare->add_option("reports", reports, "report.json files or run directories")->required();
  compare->add_option("--metric", metric, "per-seed field, e.g. elapsed, challenges, detection_stage");
  compare->add_option("--out", out, "write the table here instead of stdout");

  auto* exportp = app.add_subcommand("export-policy", "solve and write the equilibrium policy as JSON");
  add_common(exportp);
  exportp->add_option("--out", out, "write the policy here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    RunOptions opt;
    if (grid) opt.grid = grid;
    if (window) opt.window = window;
    opt.threads = threads;

    if (*run) {
      const Scenario s = load_scenario(resolve_scenario(scenario));
      if (!seeds.empty()) opt.seeds = parse_seeds(json(seeds), "--seeds");
      if (!out.empty()) opt.out = out;
      const json report = run_scenario(s, opt);
      print_summary(report, opt.out.value_or(s.output));
    } else if (*validate) {
      const Scenario s = load_scenario(resolve_scenario(scenario));
      std::cout << "ok " << s.name << " (" << to_string(s.mode) << ") sha256 " << s.digest << "\n";
    } else if (*compare) {
      std::vector<json> loaded;
      for (const auto& r : reports) loaded.push_back(load_report(report_path(r)));
      emit(compare_reports(loaded, reports, metric), out);
    } else if (*exportp) {
      const Scenario s = load_scenario(resolve_scenario(scenario));
      emit(export_policy(s, opt), out);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InconsistentObservation& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const GuardError& e) {
    std::cerr << "solver guard: " << e.what() << "\n";
    return kExitGuard;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
