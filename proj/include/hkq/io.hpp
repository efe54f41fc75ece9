#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hkq/frequency_profile.hpp"
#include "hkq/mother_field.hpp"
#include "hkq/noise.hpp"
#include "hkq/quantization.hpp"

namespace hkq::io {

/// Writes content to `<path>.tmp.<pid>` and renames onto path.
void atomic_write(const std::filesystem::path& path, const std::string& content);
void atomic_write_binary(const std::filesystem::path& path, const std::string& bytes);

uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(uint64_t value);

/// Shortest round-trip double formatting shared by every CSV writer.
std::string format_double(double v);

// --- frequency profiles --------------------------------------------------
// {"kind":"constant","omega0":w} | {"kind":"modulated","omega0":w,"eps":e,"gamma":g}
// | {"kind":"tabulated","t":[...],"omega2":[...]}
FrequencyProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const FrequencyProfile& profile);

// --- CSV exports ----------------------------------------------------------
std::string pinney_csv(const PinneySolution& sol, const TimeWarp& warp,
                       const FrequencyProfile& profile);  // t,rho,rho_dot,T,residual
std::string noise_csv(const NoisePath& path);             // k,time,increment
std::string trajectory_csv(const Trajectory& traj, const NoisePath& path);
std::string averaged_field_csv(const AveragedField& avg);
std::string wavefunction_csv(const WaveFunction& wf);

nlohmann::json wavefunction_meta(const WaveFunction& wf, double omega_cap);
nlohmann::json spectrum_json(const SpectralResult& spec);
nlohmann::json field_to_json(const HolomorphicField& field);     // [[re,im],...]
HolomorphicField field_from_json(const nlohmann::json& j);

// --- compact binary noise layout -------------------------------------------
// magic "HKNZ" | u32 version=1 | u32 frame | f64 hbar | u64 seed | u64 stream
// | u64 steps n | (n+1) f64 node times | n f64 increments, all little-endian.
std::string noise_binary(const NoisePath& path);
NoisePath noise_from_binary(const std::string& bytes);

}  // namespace hkq::io
