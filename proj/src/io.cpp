#include "hkq/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <unistd.h>

namespace hkq::io {

namespace fs = std::filesystem;

void atomic_write_binary(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void atomic_write(const fs::path& path, const std::string& content) {
  atomic_write_binary(path, content);
}

uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

std::string hex64(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- frequency profiles -----------------------------------------------------

FrequencyProfile profile_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return FrequencyProfile::constant(j.at("omega0").get<double>());
  if (kind == "modulated")
    return FrequencyProfile::modulated(j.at("omega0").get<double>(), j.at("eps").get<double>(),
                                       j.at("gamma").get<double>());
  if (kind == "tabulated")
    return FrequencyProfile::tabulated(j.at("t").get<std::vector<double>>(),
                                       j.at("omega2").get<std::vector<double>>());
  throw std::invalid_argument("unknown profile kind: " + kind);
}

nlohmann::json profile_to_json(const FrequencyProfile& profile) {
  nlohmann::json j;
  j["kind"] = profile.kind();
  if (const auto* c = profile.as_constant()) {
    j["omega0"] = c->omega0;
  } else if (const auto* m = profile.as_modulated()) {
    j["omega0"] = m->omega0;
    j["eps"] = m->eps;
    j["gamma"] = m->gamma;
  } else if (const auto* t = profile.as_tabulated()) {
    j["t"] = t->t;
    j["omega2"] = t->omega2;
  }
  return j;
}

// --- CSV exports --------------------------------------------------------------

std::string pinney_csv(const PinneySolution& sol, const TimeWarp& warp,
                       const FrequencyProfile& profile) {
  std::string out = "t,rho,rho_dot,T,residual\n";
  const auto grid = sol.grid();
  const auto T = warp.node_T();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out += format_double(grid[k]);
    out += ',';
    out += format_double(sol.rho_nodes()[k]);
    out += ',';
    out += format_double(sol.rho_dot_nodes()[k]);
    out += ',';
    out += format_double(T[k]);
    out += ',';
    out += format_double(pinney_residual(sol, profile, grid[k]));
    out += '\n';
  }
  return out;
}

std::string noise_csv(const NoisePath& path) {
  std::string out = "k,time,increment\n";
  for (std::size_t k = 0; k < path.steps(); ++k) {
    out += std::to_string(k);
    out += ',';
    out += format_double(path.times[k]);
    out += ',';
    out += format_double(path.dw[k]);
    out += '\n';
  }
  return out;
}

std::string trajectory_csv(const Trajectory& traj, const NoisePath& path) {
  const std::vector<LinearInvariants> inv = invariants_series(traj, path);
  std::string out = "k,time,X,Y,X0_recomputed,Y0_recomputed\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out += std::to_string(k);
    out += ',';
    out += format_double(traj.times[k]);
    out += ',';
    out += format_double(traj.x[k]);
    out += ',';
    out += format_double(traj.y[k]);
    out += ',';
    out += format_double(inv[k].x0);
    out += ',';
    out += format_double(inv[k].y0);
    out += '\n';
  }
  return out;
}

std::string averaged_field_csv(const AveragedField& avg) {
  std::string out = "X,Y,U1_mean,U1_se,U2_mean,U2_se\n";
  for (std::size_t j = 0; j < avg.grid.ny; ++j)
    for (std::size_t i = 0; i < avg.grid.nx; ++i) {
      const std::size_t p = avg.grid.idx(i, j);
      out += format_double(avg.grid.x(i));
      out += ',';
      out += format_double(avg.grid.y(j));
      out += ',';
      out += format_double(avg.u1_mean[p]);
      out += ',';
      out += format_double(avg.u1_se[p]);
      out += ',';
      out += format_double(avg.u2_mean[p]);
      out += ',';
      out += format_double(avg.u2_se[p]);
      out += '\n';
    }
  return out;
}

std::string wavefunction_csv(const WaveFunction& wf) {
  std::string out = wf.frame == Frame::Physical ? "x" : "X";
  out += ",re_psi,im_psi,abs2\n";
  for (std::size_t i = 0; i < wf.grid.count; ++i) {
    out += format_double(wf.grid.x(i));
    out += ',';
    out += format_double(wf.amp[i].real());
    out += ',';
    out += format_double(wf.amp[i].imag());
    out += ',';
    out += format_double(std::norm(wf.amp[i]));
    out += '\n';
  }
  return out;
}

nlohmann::json wavefunction_meta(const WaveFunction& wf, double omega_cap) {
  return nlohmann::json{{"frame", frame_name(wf.frame)},
                        {"time", wf.time},
                        {"hbar", wf.constants.hbar},
                        {"omega_cap", omega_cap},
                        {"grid", {{"min", wf.grid.min}, {"max", wf.grid.max}, {"count", wf.grid.count}}},
                        {"norm", wf.norm()}};
}

nlohmann::json spectrum_json(const SpectralResult& spec) {
  nlohmann::json j;
  j["eigenvalues"] = spec.eigenvalues;
  j["hbar"] = spec.hbar;
  j["omega_cap"] = spec.omega_cap;
  j["grid"] = {{"min", spec.grid.min}, {"max", spec.grid.max}, {"count", spec.grid.count}};
  j["boundary_amplitude"] = spec.boundary_amplitude;
  if (!spec.warning.empty()) j["warning"] = spec.warning;
  return j;
}

nlohmann::json field_to_json(const HolomorphicField& field) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : field.coeffs()) arr.push_back({c.real(), c.imag()});
  return arr;
}

HolomorphicField field_from_json(const nlohmann::json& j) {
  std::vector<std::complex<double>> c;
  for (const auto& pair : j) c.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  return HolomorphicField(std::move(c));
}

// --- binary noise layout --------------------------------------------------

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("noise binary: truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string noise_binary(const NoisePath& path) {
  std::string out;
  out.reserve(40 + 8 * (2 * path.steps() + 1));
  out += "HKNZ";
  put<uint32_t>(out, 1);
  put<uint32_t>(out, path.frame == Frame::Physical ? 0u : 1u);
  put<double>(out, path.constants.hbar);
  put<uint64_t>(out, path.seed);
  put<uint64_t>(out, path.stream);
  put<uint64_t>(out, path.steps());
  for (double t : path.times) put<double>(out, t);
  for (double w : path.dw) put<double>(out, w);
  return out;
}

NoisePath noise_from_binary(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "HKNZ") != 0)
    throw std::runtime_error("noise binary: bad magic");
  std::size_t pos = 4;
  const uint32_t version = get<uint32_t>(bytes, pos);
  if (version != 1) throw std::runtime_error("noise binary: unsupported version");
  NoisePath p;
  p.frame = get<uint32_t>(bytes, pos) == 0 ? Frame::Physical : Frame::Rescaled;
  p.constants.hbar = get<double>(bytes, pos);
  p.seed = get<uint64_t>(bytes, pos);
  p.stream = get<uint64_t>(bytes, pos);
  const uint64_t n = get<uint64_t>(bytes, pos);
  p.times.resize(n + 1);
  p.dw.resize(n);
  for (auto& t : p.times) t = get<double>(bytes, pos);
  for (auto& w : p.dw) w = get<double>(bytes, pos);
  return p;
}

}  // namespace hkq::io
