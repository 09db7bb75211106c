#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "optleach/io.hpp"
#include "optleach/simulation.hpp"

namespace fs = std::filesystem;
using namespace optleach;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSetup = 3;

std::string run_stem(Protocol p, std::uint64_t seed) {
  return std::string(to_string(p)) + "_seed" + std::to_string(seed);
}

ScenarioConfig base_config(const std::string& path) {
  return path.empty() ? ScenarioConfig{} : load_config(path);
}

// Runs one scenario and writes <stem>.csv and <stem>.json into `out`.
RunSummary run_and_write(const ScenarioConfig& cfg, const fs::path& out, bool snapshots) {
  fs::create_directories(out);
  const std::string stem = run_stem(cfg.protocol, cfg.seed);
  RunResult result;
  if (!snapshots) {
    result = run_simulation(cfg);
  } else {
    SimState s = init_scenario(cfg);
    std::ofstream layouts(out / (stem + "_layout.jsonl"));
    std::ofstream trees(out / (stem + "_tree.jsonl"));
    std::ofstream branches(out / (stem + "_branches.jsonl"));
    auto snap = [&] {
      layouts << layout_to_json(s.round, s.layout);
      trees << tree_to_json(s.round, s.ch_graph, s.tree);
    };
    if (cfg.protocol == Protocol::Optimized) snap();
    while (s.round < cfg.rounds_max && !is_network_dead(s) && s.net.alive_count() > 0) {
      const int campaigns = s.campaigns;
      result.series.push_back(run_round(s));
      if (cfg.protocol == Protocol::Optimized) {
        if (s.campaigns != campaigns) snap();
        branches << branches_to_json(s.round, s.layout, s.selected_branch);
      }
    }
    RunSummary& sum = result.summary;
    if (s.first_dead_round >= 0) sum.first_dead_round = s.first_dead_round;
    if (is_network_dead(s)) sum.death_round = s.round;
    sum.total_packets = s.packets_delivered;
    sum.rounds_run = s.round;
    sum.seed = cfg.seed;
    sum.protocol = cfg.protocol;
    sum.final_energy = s.net.total_energy();
  }
  std::ofstream csv(out / (stem + ".csv"), std::ios::binary);
  write_metrics_csv(csv, result.series);
  write_text((out / (stem + ".json")).string(), summary_to_json(result.summary));
  return result.summary;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoull(text);
      return {v, v};
    }
    const auto a = std::stoull(text.substr(0, dots));
    const auto b = std::stoull(text.substr(dots + 2));
    if (b < a) throw ConfigError("seed range is empty: " + text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw ConfigError("seed range must look like a..b, got '" + text + "'");
  }
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

struct ProtocolStats {
  std::vector<double> first_dead;
  std::vector<double> death;
  std::vector<double> packets;
  std::vector<double> decay50;
  int runs = 0;
};

int compare(const std::string& runs_dir, const std::string& report) {
  std::map<std::string, ProtocolStats> stats;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.path().extension() == ".json" && fs::exists(fs::path(entry.path()).replace_extension(".csv"))) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "compare: no runs found in " << runs_dir << "\n";
    return kExitFailure;
  }
  for (const auto& path : files) {
    const RunSummary s = summary_from_json(read_text(path.string()));
    std::ifstream csv(fs::path(path).replace_extension(".csv"));
    const auto series = read_metrics_csv(csv);
    auto& st = stats[to_string(s.protocol)];
    ++st.runs;
    st.first_dead.push_back(s.first_dead_round.value_or(series.empty() ? 0 : series.back().round));
    st.death.push_back(s.death_round.value_or(series.empty() ? 0 : series.back().round));
    st.packets.push_back(static_cast<double>(s.total_packets));
    if (series.size() >= 50) {
      st.decay50.push_back((series[0].total_energy - series[49].total_energy) / 49.0);
    }
  }
  std::ostringstream out;
  out << "# Protocol comparison\n\n";
  out << "Runs read from `" << runs_dir << "`. Medians over seeds; energy decay is J/round between rounds 1 and 50.\n\n";
  out << "| protocol | runs | first dead | network death | packets | energy decay |\n";
  out << "|---|---|---|---|---|---|\n";
  char line[256];
  for (const auto& [name, st] : stats) {
    std::snprintf(line, sizeof line, "| %s | %d | %.1f | %.1f | %.0f | %.5f |\n", name.c_str(), st.runs,
                  median(st.first_dead), median(st.death), median(st.packets), median(st.decay50));
    out << line;
  }
  const auto opt = stats.find("optimized");
  if (opt != stats.end()) {
    out << "\nRatios of optimized to each baseline (medians):\n\n";
    for (const auto& [name, st] : stats) {
      if (name == "optimized") continue;
      const double decay_opt = median(opt->second.decay50);
      std::snprintf(line, sizeof line,
                    "- %s: first dead x%.2f, packets x%.2f, baseline energy decay / optimized x%.2f\n",
                    name.c_str(), median(opt->second.first_dead) / std::max(1.0, median(st.first_dead)),
                    median(opt->second.packets) / std::max(1.0, median(st.packets)),
                    decay_opt > 0 ? median(st.decay50) / decay_opt : 0.0);
      out << line;
    }
  }
  write_text(report, out.str());
  std::cout << out.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered WSN simulator: optimized LEACH, LEACH and LEACH-EEE"};
  app.require_subcommand(1);

  std::string config_path;
  std::string protocol = "optimized";
  std::uint64_t seed = 1;
  int rounds = -1;
  std::string out_dir = "runs";
  bool snapshots = false;

  auto* sim = app.add_subcommand("simulate", "Run one scenario");
  sim->add_option("--config", config_path, "Scenario JSON")->check(CLI::ExistingFile);
  sim->add_option("--protocol", protocol, "leach | leach-eee | optimized");
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--rounds", rounds, "Round cap (overrides rounds_max)");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_flag("--snapshots", snapshots, "Also write layout, routing tree and branch JSON lines");

  std::string seeds = "1..20";
  std::vector<std::string> protocols{"leach", "leach-eee", "optimized"};
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* sweep = app.add_subcommand("sweep", "Run every protocol over a seed range");
  sweep->add_option("--config", config_path, "Scenario JSON")->check(CLI::ExistingFile);
  sweep->add_option("--seeds", seeds, "Seed range a..b");
  sweep->add_option("--protocols", protocols, "Protocols to run");
  sweep->add_option("--rounds", rounds, "Round cap (overrides rounds_max)");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--jobs", jobs, "Parallel runs");

  std::string runs_dir = "runs";
  std::string report = "report.md";
  auto* cmp = app.add_subcommand("compare", "Summarise a directory of runs");
  cmp->add_option("--runs", runs_dir, "Directory written by simulate or sweep")->check(CLI::ExistingDirectory);
  cmp->add_option("--report", report, "Markdown report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      ScenarioConfig cfg = base_config(config_path);
      cfg.protocol = protocol_from_string(protocol);
      cfg.seed = seed;
      if (rounds >= 0) cfg.rounds_max = rounds;
      cfg.validate();
      const RunSummary s = run_and_write(cfg, out_dir, snapshots);
      std::cout << summary_to_json(s);
      return kExitOk;
    }
    if (*sweep) {
      ScenarioConfig base = base_config(config_path);
      if (rounds >= 0) base.rounds_max = rounds;
      const auto [lo, hi] = parse_seed_range(seeds);
      std::vector<ScenarioConfig> work;
      for (std::uint64_t s = lo; s <= hi; ++s) {
        for (const auto& name : protocols) {
          ScenarioConfig cfg = base;
          cfg.protocol = protocol_from_string(name);
          cfg.seed = s;
          cfg.validate();
          work.push_back(cfg);
        }
      }
      std::atomic<std::size_t> next{0};
      std::mutex io;
      int status = kExitOk;
      auto worker = [&] {
        for (std::size_t k = next++; k < work.size(); k = next++) {
          try {
            const RunSummary s = run_and_write(work[k], out_dir, false);
            std::lock_guard lock(io);
            std::cout << run_stem(s.protocol, s.seed) << ": first_dead="
                      << (s.first_dead_round ? std::to_string(*s.first_dead_round) : "none")
                      << " death=" << (s.death_round ? std::to_string(*s.death_round) : "none")
                      << " packets=" << s.total_packets << "\n";
          } catch (const SetupError& e) {
            std::lock_guard lock(io);
            std::cerr << run_stem(work[k].protocol, work[k].seed) << ": setup error: " << e.what() << "\n";
            status = kExitSetup;
          }
        }
      };
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < std::max(1u, jobs); ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      return status;
    }
    if (*cmp) {
      return compare(runs_dir, report);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SetupError& e) {
    std::cerr << "setup error: " << e.what() << "\n";
    return kExitSetup;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
