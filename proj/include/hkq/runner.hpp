#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hkq/constants.hpp"
#include "hkq/frequency_profile.hpp"

namespace hkq {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoiseStageConfig {
  double dt = 1e-3;
  std::size_t steps = 256;
  std::size_t paths = 20000;
  std::size_t max_lag = 12;
  double rescaled_dt = 1e-2;
  std::size_t rescaled_steps = 200;
  std::size_t rescaled_paths = 20000;
};

struct DynamicsStageConfig {
  std::size_t invariant_realizations = 100;
  std::size_t invariant_steps = 512;
  double horizon = 1.0;
  std::vector<double> order_steps = {1e-2, 1e-3, 1e-4};
  std::size_t order_realizations = 8;
  double short_time_dT = 1e-3;
  std::size_t short_time_paths = 20000;
};

struct MotherFieldStageConfig {
  double T = 0.1;
  std::size_t paths = 2000;
  double extent = 1.0;
  std::size_t grid_n = 5;
  double gen_delta_T = 0.05;
  std::size_t check_paths = 20000;
};

struct QuantizeStageConfig {
  double extent_X = 12.0;
  std::size_t grid_count = 512;
  std::size_t spectrum_eigs = 6;
  double residual_t0 = 0.4;
  double residual_dt = 0.04;
  std::size_t residual_levels = 5;
  double cn_substep = 0.02;
};

/// Master seed is mandatory: reproducibility has no entropy-source fallback.
struct ExperimentConfig {
  PhysicalConstants constants{1.0};
  double omega_cap = 1.0;
  FrequencyProfile profile = FrequencyProfile::modulated(1.0, 0.2, 1.3);
  double rho0 = 0.0;  // 0 -> equilibrium-style default sqrt(Omega/omega(t0))
  double rho_dot0 = 0.0;
  double t_begin = 0.0;
  double t_end = 20.0;
  double pinney_tol = 1e-9;
  uint64_t seed = 0;
  int threads = 0;
  std::filesystem::path out_dir = "out";
  NoiseStageConfig noise;
  DynamicsStageConfig dynamics;
  MotherFieldStageConfig mother_field;
  QuantizeStageConfig quantize;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// FNV-1a over the canonical JSON dump, excluding threads and out_dir
  /// (neither affects the scientific outputs).
  uint64_t hash() const;
};

struct StageResult {
  std::string name;
  bool passed = true;
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
  double wall_ms = 0.0;
};

StageResult run_pinney(const ExperimentConfig& cfg);
StageResult run_noise_check(const ExperimentConfig& cfg);
StageResult run_dynamics(const ExperimentConfig& cfg);
StageResult run_mother_field(const ExperimentConfig& cfg);
StageResult run_quantize(const ExperimentConfig& cfg);
std::vector<StageResult> run_all(const ExperimentConfig& cfg);

nlohmann::json build_manifest(const ExperimentConfig& cfg,
                              const std::vector<StageResult>& stages);
std::filesystem::path write_manifest(const ExperimentConfig& cfg,
                                     const std::vector<StageResult>& stages);

inline const char* artifact_version() { return "0.1.0"; }

}  // namespace hkq
