/* Copyright 2026 The tdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end: run, compare, sweep, gen-workload, list-presets.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdsim/tdsim.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigSource {
  std::string preset;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string policy;
  int devices = 0;
  int64_t seed = -1;
};

void add_source_options(CLI::App* cmd, ConfigSource& src) {
  cmd->add_option("--preset", src.preset, "named run preset (see list-presets)");
  cmd->add_option("--config", src.config_path, "TOML run config");
  cmd->add_option("--set", src.overrides, "override a config key, e.g. tdpipe.kv_ratio=0.7");
  cmd->add_option("--policy", src.policy, "shorthand for --set run.policy=...");
  cmd->add_option("--devices", src.devices, "shorthand for --set run.devices=...");
  cmd->add_option("--seed", src.seed, "shorthand for --set run.seed=...");
}

// Parses "section.key=value". Bare words are taken as strings.
void apply_override(tdsim::ConfigDoc& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw UsageError("--set key must be section.key, got '" + key + "'");
  const std::string header = "[" + key.substr(0, dot) + "]\n" + key.substr(dot + 1) + " = ";
  tdsim::ConfigDoc parsed;
  try {
    parsed = tdsim::parse_config_string(header + value + "\n");
  } catch (const tdsim::ParseError&) {
    parsed = tdsim::parse_config_string(header + tdsim::quote_toml(value) + "\n");
  }
  for (auto [k, v] : parsed.values()) {
    v.line = 0;
    doc.assign(k, v);
  }
}

tdsim::RunConfig resolve(const ConfigSource& src) {
  if (!src.preset.empty() && !src.config_path.empty()) {
    throw UsageError("--preset and --config are mutually exclusive");
  }
  tdsim::ConfigDoc doc;
  if (!src.config_path.empty()) {
    doc = tdsim::load_config(src.config_path);
  } else if (!src.preset.empty()) {
    doc = tdsim::parse_config_string(tdsim::run_config_text(tdsim::run_preset(src.preset)));
  } else {
    throw UsageError("one of --preset or --config is required");
  }
  // A new model or hardware preset replaces that whole section, so apply
  // those first and drop the explicit fields they would otherwise lose to.
  auto is_preset = [](const std::string& o) {
    return o.rfind("model.preset=", 0) == 0 || o.rfind("hardware.preset=", 0) == 0;
  };
  for (const auto& o : src.overrides) {
    if (!is_preset(o)) continue;
    const std::string section = o.substr(0, o.find('.') + 1);
    std::vector<std::string> stale;
    for (const auto& [k, v] : doc.values()) {
      if (k.rfind(section, 0) == 0) stale.push_back(k);
    }
    for (const auto& k : stale) doc.erase(k);
    apply_override(doc, o);
  }
  for (const auto& o : src.overrides) {
    if (!is_preset(o)) apply_override(doc, o);
  }
  if (!src.policy.empty()) apply_override(doc, "run.policy=" + src.policy);
  if (src.devices > 0) apply_override(doc, "run.devices=" + std::to_string(src.devices));
  if (src.seed >= 0) apply_override(doc, "run.seed=" + std::to_string(src.seed));
  return tdsim::run_config_from(doc);
}

// --out wins, then TDSIM_OUTPUT_DIR, then the config, then out/<name>.
fs::path output_dir(const std::string& flag, const std::string& from_config,
                    const std::string& name) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TDSIM_OUTPUT_DIR"); env && *env) return env;
  if (!from_config.empty()) return from_config;
  return fs::path("out") / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_run_dir(const fs::path& dir, const tdsim::RunConfig& cfg, const tdsim::RunResult& r,
                   bool full) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "config.toml");
    tdsim::write_run_config(cfg, out);
  }
  {
    auto out = open_out(dir / "summary.txt");
    tdsim::write_summary(r, out);
  }
  if (!full) return;
  {
    auto out = open_out(dir / "trace.json");
    tdsim::export_trace(r, out);
  }
  {
    auto out = open_out(dir / "timeline.csv");
    tdsim::write_timeline_csv(tdsim::kv_timeline(r), out);
  }
}

std::string cell_name(const tdsim::RunConfig& c) {
  return std::string(tdsim::to_string(c.policy)) + "-" + std::to_string(c.devices);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

int cmd_run(const ConfigSource& src, const std::string& out_flag, bool print_config) {
  const tdsim::RunConfig cfg = resolve(src);
  if (print_config) {
    tdsim::write_run_config(cfg, std::cout);
    return 0;
  }
  const tdsim::RunResult r = tdsim::execute(cfg);
  const fs::path dir = output_dir(out_flag, cfg.output_dir, cfg.name);
  write_run_dir(dir, cfg, r, true);
  tdsim::write_summary(r, std::cout);
  std::cerr << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_compare(const std::string& scenario, const ConfigSource& src,
                const std::string& policies, bool filter_policies, const std::string& devices,
                int jobs,
                const std::string& out_flag) {
  std::vector<tdsim::RunConfig> grid;
  std::string name;
  if (!scenario.empty()) {
    name = scenario;
    if (!filter_policies) {
      grid = tdsim::compare_scenario(scenario);
    } else {
      const auto pol = split_list(policies);
      if (pol.empty()) throw UsageError("--policies must name at least one policy");
      for (auto& c : tdsim::compare_scenario(scenario)) {
        for (const auto& p : pol) {
          if (tdsim::parse_policy(p) == c.policy) grid.push_back(c);
        }
      }
    }
  } else {
    const tdsim::RunConfig base = resolve(src);
    name = base.name;
    const auto pol = split_list(policies);
    const auto dev = split_list(devices);
    if (pol.empty()) throw UsageError("--policies must name at least one policy");
    if (dev.empty()) throw UsageError("--devices must name at least one device count");
    for (const auto& p : pol) {
      for (const auto& d : dev) {
        tdsim::RunConfig c = base;
        c.policy = tdsim::parse_policy(p);
        try {
          c.devices = std::stoi(d);
        } catch (const std::exception&) {
          throw UsageError("--devices: not an integer: '" + d + "'");
        }
        c.record_trace = false;
        c.validate();
        grid.push_back(c);
      }
    }
  }
  const auto results = tdsim::execute_all(grid, jobs);
  const fs::path dir = output_dir(out_flag, grid.front().output_dir, name);
  for (size_t i = 0; i < grid.size(); ++i) {
    write_run_dir(dir / "cells" / cell_name(grid[i]), grid[i], results[i], false);
  }
  const auto table = tdsim::make_comparison(results);
  {
    auto out = open_out(dir / "comparison.csv");
    tdsim::write_comparison_csv(table, out);
  }
  tdsim::write_comparison_csv(table, std::cout);
  std::cerr << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_sweep(const std::string& scenario, int jobs, const std::string& out_flag) {
  const auto points = tdsim::sweep_scenario(scenario);
  std::vector<tdsim::RunConfig> configs;
  for (const auto& p : points) configs.push_back(p.config);
  const auto results = tdsim::execute_all(configs, jobs);
  const fs::path dir = output_dir(out_flag, "", scenario);
  for (size_t i = 0; i < points.size(); ++i) {
    write_run_dir(dir / "cells" / points[i].label, points[i].config, results[i], false);
  }
  const auto rows = tdsim::make_sweep_rows(points, results);
  {
    auto out = open_out(dir / "sweep.csv");
    tdsim::write_sweep_csv(rows, out);
  }
  tdsim::write_sweep_csv(rows, std::cout);
  std::cerr << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_gen_workload(int64_t count, const std::string& input, const std::string& output,
                     int max_len, uint64_t seed, const std::string& path) {
  const auto set = tdsim::generate_workload(count, tdsim::LengthDist::parse(input, max_len),
                                            tdsim::LengthDist::parse(output, max_len), seed);
  if (path.empty() || path == "-") {
    tdsim::write_trace(set, std::cout);
  } else {
    tdsim::save_trace(set, path);
  }
  return 0;
}

int cmd_list_presets() {
  std::cout << "run presets:\n";
  for (const auto& s : tdsim::run_presets()) std::cout << "  " << s.name << "  " << s.description << '\n';
  std::cout << "compare scenarios:\n";
  for (const auto& s : tdsim::compare_scenarios()) {
    std::cout << "  " << s.name << "  " << s.description << '\n';
  }
  std::cout << "sweep scenarios:\n";
  for (const auto& s : tdsim::sweep_scenarios()) {
    std::cout << "  " << s.name << "  " << s.description << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdsim: pipeline-parallel LLM inference scheduling simulator"};
  app.require_subcommand(1);

  ConfigSource run_src;
  std::string run_out;
  auto* run = app.add_subcommand("run", "simulate one configuration");
  add_source_options(run, run_src);
  run->add_option("--out", run_out, "output directory (overrides TDSIM_OUTPUT_DIR)");
  bool run_print = false;
  run->add_flag("--print-config", run_print, "print the resolved config and exit");

  ConfigSource cmp_src;
  std::string cmp_scenario;
  std::string cmp_policies = "tdpipe,pp-sb,pp-hb,tp-sb,tp-hb";
  std::string cmp_devices = "1,2,4";
  std::string cmp_out;
  int cmp_jobs = 1;
  auto* compare = app.add_subcommand("compare", "policy x device-count grid on one workload");
  compare->add_option("--scenario", cmp_scenario, "named compare scenario");
  add_source_options(compare, cmp_src);
  compare->add_option("--policies", cmp_policies, "comma-separated policies")->capture_default_str();
  compare->add_option("--device-counts", cmp_devices, "comma-separated device counts")
      ->capture_default_str();
  compare->add_option("--jobs,-j", cmp_jobs, "worker threads")->check(CLI::PositiveNumber);
  compare->add_option("--out", cmp_out, "output directory (overrides TDSIM_OUTPUT_DIR)");

  std::string sweep_scenario;
  std::string sweep_out;
  int sweep_jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "run a named parameter sweep");
  sweep->add_option("--scenario", sweep_scenario, "named sweep scenario")->required();
  sweep->add_option("--jobs,-j", sweep_jobs, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "output directory (overrides TDSIM_OUTPUT_DIR)");

  int64_t gen_count = 5000;
  std::string gen_input = "lognormal(5.0,1.0)";
  std::string gen_output = "lognormal(4.5,1.0)";
  int gen_max_len = 1024;
  uint64_t gen_seed = 42;
  std::string gen_path;
  auto* gen = app.add_subcommand("gen-workload", "write a synthetic request trace");
  gen->add_option("--count", gen_count, "number of requests")->capture_default_str();
  gen->add_option("--input", gen_input, "prompt length distribution")->capture_default_str();
  gen->add_option("--output", gen_output, "output length distribution")->capture_default_str();
  gen->add_option("--max-len", gen_max_len, "length clamp")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--out,-o", gen_path, "trace path, '-' for stdout");

  auto* list = app.add_subcommand("list-presets", "list named presets and scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(run_src, run_out, run_print);
    if (*compare) {
      return cmd_compare(cmp_scenario, cmp_src, cmp_policies, compare->count("--policies") > 0,
                         cmp_devices, cmp_jobs, cmp_out);
    }
    if (*sweep) return cmd_sweep(sweep_scenario, sweep_jobs, sweep_out);
    if (*gen) {
      return cmd_gen_workload(gen_count, gen_input, gen_output, gen_max_len, gen_seed, gen_path);
    }
    if (*list) return cmd_list_presets();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}
