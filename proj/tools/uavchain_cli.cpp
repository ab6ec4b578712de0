// uavchain: run hurricane-relief consensus experiments from the command line.

#include "uavchain/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace uavchain;

namespace {

int fail(std::string_view kind, const std::string& message, int code = 1) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

/// Built-in scenario names, or a scenario file.
Scenario scenario_from_arg(const std::string& arg) {
  if (arg == "hurricane") return build_hurricane_scenario();
  if (arg == "desk") return build_desk_scenario();
  return load_scenario(arg);
}

void apply_attacks_arg(Scenario& s, const std::string& arg) {
  if (arg.empty()) return;
  if (arg == "none") {
    s.attacks = {};
  } else if (arg == "canonical") {
    s.attacks = {AttackSpec::Mode::Canonical, {}};
  } else {
    const json j = read_json_file(arg);
    s.attacks = read_attacks(j.contains("attacks") && j.size() == 1 ? j.at("attacks") : j, ScenarioError::Kind::UnknownKey);
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw ScenarioError(ScenarioError::Kind::InvalidValue, "bad seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ScenarioError(ScenarioError::Kind::InvalidValue, "no seeds given");
  return out;
}

struct EventsSink {
  std::ofstream file;
  RunOptions options;

  EventsSink(const fs::path& out_dir, const std::string& level) {
    if (level == "none") return;
    fs::create_directories(out_dir);
    file.open(out_dir / "events.jsonl", std::ios::binary);
    if (!file) throw HarnessError(HarnessError::Kind::Io, "cannot write " + (out_dir / "events.jsonl").string());
    options.jsonl = &file;
    options.jsonl_messages = level == "full";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV swarm DPoS-PBFT consensus simulator"};
  app.require_subcommand(1);

  std::string scenario_arg = "hurricane";
  std::string protocol_arg = "hybrid";
  std::uint64_t seed = 1;
  double duration = -1.0;
  std::string attacks_arg;
  std::string out_dir = "out";
  std::string events_level = "full";

  auto* sim = app.add_subcommand("simulate", "run one protocol on one seed");
  sim->add_option("--scenario", scenario_arg, "scenario file, or 'hurricane' / 'desk'");
  sim->add_option("--protocol", protocol_arg, "hybrid | dpos | pbft")->check(CLI::IsMember({"hybrid", "dpos", "pbft"}));
  sim->add_option("--seed", seed, "run seed");
  sim->add_option("--duration", duration, "simulated seconds (default: scenario value)")->check(CLI::NonNegativeNumber);
  sim->add_option("--attacks", attacks_arg, "none | canonical | path to an attack file");
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--events", events_level, "events.jsonl detail: full | blocks | none")
      ->check(CLI::IsMember({"full", "blocks", "none"}));

  std::string seeds_arg = "1,2,3,4,5";
  std::string compare_events = "blocks";
  auto* cmp = app.add_subcommand("compare", "run every protocol on every seed");
  cmp->add_option("--scenario", scenario_arg, "scenario file, or 'hurricane' / 'desk'");
  cmp->add_option("--seeds", seeds_arg, "comma-separated seeds");
  cmp->add_option("--duration", duration, "simulated seconds (default: scenario value)")->check(CLI::NonNegativeNumber);
  cmp->add_option("--attacks", attacks_arg, "none | canonical | path to an attack file");
  cmp->add_option("--out", out_dir, "output directory");
  cmp->add_option("--events", compare_events, "events.jsonl detail: full | blocks | none")
      ->check(CLI::IsMember({"full", "blocks", "none"}));

  std::string summary_arg;
  auto* rep = app.add_subcommand("replay", "re-run a summary.json and verify its trace hashes");
  rep->add_option("--summary", summary_arg, "path to summary.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) {
      Scenario s = scenario_from_arg(scenario_arg);
      if (duration >= 0) s.duration_s = duration;
      apply_attacks_arg(s, attacks_arg);
      validate(s);
      const auto protocol = parse_protocol(protocol_arg);
      const auto faults = resolve_faults(s, protocol, seed);
      EventsSink sink(out_dir, events_level);
      auto e = run_experiment(s, protocol, faults, seed, sink.options);
      if (sink.file.is_open()) {
        sink.file.close();
        if (!sink.file) throw HarnessError(HarnessError::Kind::Io, "write failed: " + (fs::path(out_dir) / "events.jsonl").string());
      }
      export_results(out_dir, "simulate", s, {{e.report, e.faults}});
      std::cout << metrics_json(e.report).dump(2) << '\n';
      return 0;
    }
    if (*cmp) {
      Scenario s = scenario_from_arg(scenario_arg);
      if (duration >= 0) s.duration_s = duration;
      apply_attacks_arg(s, attacks_arg);
      validate(s);
      const auto seeds = parse_seeds(seeds_arg);
      EventsSink sink(out_dir, compare_events);
      std::vector<RunRecord> runs;
      for (auto protocol : kProtocols) {
        for (auto sd : seeds) {
          const auto faults = resolve_faults(s, protocol, sd);
          auto e = run_experiment(s, protocol, faults, sd, sink.options);
          runs.push_back({std::move(e.report), faults});
        }
      }
      std::stable_sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
        return a.report.protocol != b.report.protocol ? a.report.protocol < b.report.protocol : a.report.seed < b.report.seed;
      });
      export_results(out_dir, "compare", s, runs);
      std::cout << "protocol,seed,median_latency_s,iqr_s,throughput_tps\n";
      for (const auto& r : runs) {
        std::cout << consensus::to_string(r.report.protocol) << ',' << r.report.seed << ','
                  << format_double(r.report.latency.median) << ',' << format_double(r.report.latency.iqr()) << ','
                  << format_double(r.report.throughput_tps) << '\n';
      }
      return 0;
    }
    if (*rep) {
      const auto checks = replay_summary(fs::path(summary_arg));
      bool ok = true;
      for (const auto& c : checks) {
        ok = ok && c.match();
        std::cout << json{{"protocol", consensus::to_string(c.protocol)},
                          {"seed", c.seed},
                          {"expected", c.expected.hex()},
                          {"actual", c.actual.hex()},
                          {"match", c.match()}}
                         .dump()
                  << '\n';
      }
      if (!ok) return fail("replay_mismatch", "trace hash differs from the recorded run");
      return 0;
    }
  } catch (const ScenarioError& e) {
    return fail(to_string(e.kind()), e.what());
  } catch (const HarnessError& e) {
    return fail(to_string(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
