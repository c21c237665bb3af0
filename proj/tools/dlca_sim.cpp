#include <cstdio>
#include <exception>
#include <iostream>
#include <regex>
#include <string>

#include <CLI11.hpp>

#include "dlca/dlca.hpp"

namespace {

// "N=8..56:8" -> key N, values 8, 16, ..., 56. "N=8,16" also works.
void apply_sweep(dlca::ScenarioConfig& cfg, const std::string& param) {
  static const std::regex range(R"(^(N|F)=(\d+)\.\.(\d+)(?::(\d+))?$)");
  static const std::regex list(R"(^(N|F)=(\d+(?:,\d+)*)$)");
  std::smatch m;
  std::vector<int> values;
  std::string key;
  if (std::regex_match(param, m, range)) {
    key = m[1];
    const int lo = std::stoi(m[2]);
    const int hi = std::stoi(m[3]);
    const int step = m[4].matched ? std::stoi(m[4]) : 1;
    if (step < 1 || hi < lo) throw dlca::ConfigError("--param: empty range '" + param + "'");
    for (int v = lo; v <= hi; v += step) values.push_back(v);
  } else if (std::regex_match(param, m, list)) {
    key = m[1];
    std::stringstream ss(m[2].str());
    for (std::string item; std::getline(ss, item, ',');) values.push_back(std::stoi(item));
  } else {
    throw dlca::ConfigError("--param must look like N=8..56:8 or F=4,8,16, got '" + param + "'");
  }
  (key == "N" ? cfg.aps : cfg.channels) = values;
  cfg.validate();
}

int run(const std::string& path, const std::string& out, const std::vector<std::string>& sweeps) {
  auto cfg = dlca::load_config(path);
  for (const auto& s : sweeps) apply_sweep(cfg, s);
  const auto report = dlca::run_scenario(cfg);
  dlca::emit_csv(report, out);
  std::fprintf(stderr, "%zu point(s) x %d trial(s) in %.1f s, wrote %s/summary.csv and trace.csv\n",
               report.points.size(), cfg.trials, report.wall_seconds, out.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-AP Wi-Fi channel-access simulator"};
  app.require_subcommand(1);

  std::string config, out = "results";
  std::vector<std::string> params;

  auto* run_cmd = app.add_subcommand("run", "run a scenario and write CSV results");
  run_cmd->add_option("config", config, "JSON scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "output directory")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "run a scenario over a range of N or F");
  sweep_cmd->add_option("config", config, "JSON scenario file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--param", params, "N=lo..hi:step or F=a,b,c")->required();
  sweep_cmd->add_option("--out", out, "output directory")->capture_default_str();

  auto* presets_cmd = app.add_subcommand("presets", "list built-in scenario presets");
  presets_cmd->add_subcommand("list", "print preset names")->required(false);

  auto* validate_cmd = app.add_subcommand("validate", "check a scenario file without running it");
  validate_cmd->add_option("config", config, "JSON scenario file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(config, out, {});
    if (*sweep_cmd) return run(config, out, params);
    if (*presets_cmd) {
      for (const auto& p : dlca::kPresets) std::printf("%-8s %s\n", p.name, p.summary);
      return 0;
    }
    if (*validate_cmd) {
      const auto cfg = dlca::load_config(config);
      std::printf("ok: %zu point(s), %d trial(s) each, config_hash=%llx\n", cfg.points(), cfg.trials,
                  static_cast<unsigned long long>(dlca::config_hash(cfg)));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
