// hkq: config-driven runner for the stochastic-quantization pipeline of the
// time-dependent harmonic oscillator. Exit codes: 0 all gates pass,
// 1 a scientific gate failed, 2 usage or configuration error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hkq/errors.hpp"
#include "hkq/io.hpp"
#include "hkq/runner.hpp"

namespace {

using nlohmann::json;

hkq::ExperimentConfig load_config(const std::string& config_path,
                                  const std::optional<uint64_t>& seed,
                                  const std::optional<std::string>& out_dir,
                                  const std::optional<int>& threads) {
  json j = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw hkq::ConfigError("cannot open config file: " + config_path);
    in >> j;
  }
  if (seed) j["seed"] = *seed;
  if (out_dir) j["out_dir"] = *out_dir;
  if (threads) {
    j["threads"] = *threads;
  } else if (!j.contains("threads")) {
    if (const char* env = std::getenv("HKQ_THREADS")) j["threads"] = std::atoi(env);
  }
  return hkq::ExperimentConfig::from_json(j);
}

void print_stage(const hkq::StageResult& st) {
  std::cout << (st.passed ? "[PASS] " : "[FAIL] ") << st.name << "  (" << st.wall_ms << " ms)\n";
  for (const auto& f : st.files) std::cout << "  wrote " << f.string() << "\n";
}

int finish(const hkq::ExperimentConfig& cfg, const std::vector<hkq::StageResult>& stages) {
  hkq::write_manifest(cfg, stages);
  bool all = true;
  for (const auto& st : stages) all = all && st.passed;
  std::cout << (all ? "all gates passed" : "one or more gates FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic quantization of the time-dependent harmonic oscillator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool dry_run = false;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "master seed (overrides config)");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--threads", threads, "worker threads (0 = hardware; HKQ_THREADS as fallback)");
  app.add_flag("--dry-run", dry_run, "validate config, print the plan, write nothing");

  const std::vector<std::string> names = {"pinney",       "noise-check", "dynamics",
                                          "mother-field", "quantize",    "all"};
  for (const auto& n : names) app.add_subcommand(n);

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const hkq::ExperimentConfig cfg = load_config(config_path, seed, out_dir, threads);
    if (dry_run) {
      json plan = cfg.to_json();
      plan["command"] = cmd;
      plan["config_hash"] = hkq::io::hex64(cfg.hash());
      std::cout << plan.dump(2) << "\n";
      return 0;
    }

    std::vector<hkq::StageResult> stages;
    if (cmd == "pinney") {
      stages.push_back(hkq::run_pinney(cfg));
      std::cout << "max residual: " << stages.back().report.at("max_residual").get<double>()
                << "\n";
    } else if (cmd == "noise-check") {
      stages.push_back(hkq::run_noise_check(cfg));
    } else if (cmd == "dynamics") {
      stages.push_back(hkq::run_dynamics(cfg));
    } else if (cmd == "mother-field") {
      stages.push_back(hkq::run_mother_field(cfg));
    } else if (cmd == "quantize") {
      stages.push_back(hkq::run_quantize(cfg));
    } else {
      stages = hkq::run_all(cfg);
    }
    for (const auto& st : stages) print_stage(st);
    return finish(cfg, stages);
  } catch (const hkq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
