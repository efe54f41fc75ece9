#include "hkq/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hkq/parallel.hpp"

namespace hkq {

namespace {

constexpr std::size_t kBlock = 1024;  // fixed reduction block, independent of threads

void validate_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw std::invalid_argument("noise grid needs at least 2 nodes");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw std::invalid_argument("noise grid must be strictly increasing");
}

}  // namespace

std::vector<double> uniform_grid(double t0, double dt, std::size_t steps) {
  if (!(dt > 0.0)) throw std::invalid_argument("uniform_grid: dt must be > 0");
  std::vector<double> g(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) g[i] = t0 + dt * static_cast<double>(i);
  return g;
}

NoisePath sample_noise(const PhysicalConstants& constants, std::vector<double> grid,
                       uint64_t seed, uint64_t stream, Frame frame) {
  constants.validate();
  validate_grid(grid);
  NoisePath p;
  p.frame = frame;
  p.constants = constants;
  p.seed = seed;
  p.stream = stream;
  p.times = std::move(grid);
  p.dw.resize(p.times.size() - 1);
  if (constants.hbar == 0.0) return p;  // exactly zero increments
  NormalStream rng(seed, stream);
  for (std::size_t k = 0; k < p.dw.size(); ++k)
    p.dw[k] = std::sqrt(constants.hbar * p.dt(k)) * rng.next();
  return p;
}

NoisePath rescale_noise(const NoisePath& path, const TimeWarp& warp) {
  if (path.frame != Frame::Physical)
    throw std::invalid_argument("rescale_noise: path must be in the physical frame");
  if (path.times.front() < warp.t_begin() || path.times.back() > warp.t_end())
    throw std::invalid_argument("rescale_noise: path grid outside warp span");
  NoisePath out;
  out.frame = Frame::Rescaled;
  out.constants = path.constants;
  out.seed = path.seed;
  out.stream = path.stream;
  out.times.resize(path.times.size());
  out.dw.resize(path.dw.size());
  for (std::size_t i = 0; i < path.times.size(); ++i) out.times[i] = warp.warp(path.times[i]);
  for (std::size_t k = 0; k < path.dw.size(); ++k)
    out.dw[k] = path.dw[k] / warp.pinney().rho(path.times[k]);
  return out;
}

namespace {

struct BinLayout {
  double width = 0.0;
  std::size_t n_bins = 0;
  std::size_t max_index_gap = 0;
  // bin index per (k, gap) pair, SIZE_MAX when beyond the last bin
  std::vector<std::size_t> bin_of;  // [k * max_index_gap + (gap-1)]

  std::size_t bin(std::size_t k, std::size_t gap) const {
    return bin_of[k * max_index_gap + gap - 1];
  }
};

BinLayout make_bins(const std::vector<double>& times, std::size_t max_lag) {
  BinLayout layout;
  const std::size_t n = times.size() - 1;
  std::vector<double> steps(n);
  for (std::size_t k = 0; k < n; ++k) steps[k] = times[k + 1] - times[k];
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  layout.width = sorted[n / 2];
  layout.n_bins = max_lag;
  const double min_step = *std::min_element(steps.begin(), steps.end());
  layout.max_index_gap = std::min<std::size_t>(
      n - 1, static_cast<std::size_t>(std::ceil(static_cast<double>(max_lag) * layout.width /
                                                min_step)) + 1);
  layout.bin_of.assign(n * layout.max_index_gap, SIZE_MAX);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t gap = 1; gap <= layout.max_index_gap && k + gap < n; ++gap) {
      const double lag = times[k + gap] - times[k];
      const std::size_t b = static_cast<std::size_t>(std::ceil(lag / layout.width - 1e-12));
      if (b >= 1 && b <= layout.n_bins) layout.bin_of[k * layout.max_index_gap + gap - 1] = b - 1;
    }
  return layout;
}

struct CorrPartials {
  std::vector<double> sum_f2, sum_f2_sq;      // per step: f_k^2 and its square
  std::vector<double> sum_bin, sum_bin_sq;    // per bin: per-path bin mean and square
  double sum_mass = 0.0, sum_mass_sq = 0.0;   // per path: QV / span
  std::size_t count = 0;
};

CorrelationEstimate estimate_correlation_impl(const PathFactory& path_at, std::size_t m,
                                              std::size_t max_lag, int threads) {
  if (m < 2) throw std::invalid_argument("estimate_correlation: need at least 2 paths");
  const NoisePath first = path_at(0);
  const std::size_t n = first.steps();
  const BinLayout layout = make_bins(first.times, max_lag);

  std::vector<std::size_t> pairs_in_bin(layout.n_bins, 0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t gap = 1; gap <= layout.max_index_gap && k + gap < n; ++gap) {
      const std::size_t b = layout.bin(k, gap);
      if (b != SIZE_MAX) ++pairs_in_bin[b];
    }

  const std::size_t n_blocks = (m + kBlock - 1) / kBlock;
  std::vector<CorrPartials> partials(n_blocks);

  parallel_blocks(m, kBlock, threads, [&](std::size_t b, std::size_t i0, std::size_t i1) {
    CorrPartials acc;
    acc.sum_f2.assign(n, 0.0);
    acc.sum_f2_sq.assign(n, 0.0);
    acc.sum_bin.assign(layout.n_bins, 0.0);
    acc.sum_bin_sq.assign(layout.n_bins, 0.0);
    std::vector<double> f(n);
    std::vector<double> bin_sum(layout.n_bins);
    for (std::size_t p = i0; p < i1; ++p) {
      const NoisePath path = path_at(p);
      if (path.steps() != n || path.times != first.times)
        throw std::invalid_argument("estimate_correlation: heterogeneous grids");
      double qv = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        f[k] = path.f(k);
        const double f2 = f[k] * f[k];
        acc.sum_f2[k] += f2;
        acc.sum_f2_sq[k] += f2 * f2;
        qv += path.dw[k] * path.dw[k];
      }
      std::fill(bin_sum.begin(), bin_sum.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t gap = 1; gap <= layout.max_index_gap && k + gap < n; ++gap) {
          const std::size_t bi = layout.bin(k, gap);
          if (bi != SIZE_MAX) bin_sum[bi] += f[k] * f[k + gap];
        }
      for (std::size_t bi = 0; bi < layout.n_bins; ++bi) {
        if (pairs_in_bin[bi] == 0) continue;
        const double s = bin_sum[bi] / static_cast<double>(pairs_in_bin[bi]);
        acc.sum_bin[bi] += s;
        acc.sum_bin_sq[bi] += s * s;
      }
      const double mass = qv / path.span();
      acc.sum_mass += mass;
      acc.sum_mass_sq += mass * mass;
      ++acc.count;
    }
    partials[b] = std::move(acc);
  });

  // combine in block order (thread-count independent)
  CorrPartials total;
  total.sum_f2.assign(n, 0.0);
  total.sum_f2_sq.assign(n, 0.0);
  total.sum_bin.assign(layout.n_bins, 0.0);
  total.sum_bin_sq.assign(layout.n_bins, 0.0);
  for (const auto& part : partials) {
    for (std::size_t k = 0; k < n; ++k) {
      total.sum_f2[k] += part.sum_f2[k];
      total.sum_f2_sq[k] += part.sum_f2_sq[k];
    }
    for (std::size_t bi = 0; bi < layout.n_bins; ++bi) {
      total.sum_bin[bi] += part.sum_bin[bi];
      total.sum_bin_sq[bi] += part.sum_bin_sq[bi];
    }
    total.sum_mass += part.sum_mass;
    total.sum_mass_sq += part.sum_mass_sq;
    total.count += part.count;
  }

  const double M = static_cast<double>(total.count);
  auto mean_se = [M](double s, double s2) {
    const double mean = s / M;
    const double var = std::max(0.0, (s2 - M * mean * mean) / (M - 1.0));
    return std::pair<double, double>{mean, std::sqrt(var / M)};
  };

  CorrelationEstimate est;
  est.sample_count = total.count;
  est.bin_width = layout.width;
  est.diag.resize(n);
  est.diag_se.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    std::tie(est.diag[k], est.diag_se[k]) = mean_se(total.sum_f2[k], total.sum_f2_sq[k]);
  std::tie(est.diag_mass, est.diag_mass_se) = mean_se(total.sum_mass, total.sum_mass_sq);
  est.lag_center.resize(layout.n_bins);
  est.offdiag.resize(layout.n_bins);
  est.offdiag_se.resize(layout.n_bins);
  est.pair_count = pairs_in_bin;
  for (std::size_t bi = 0; bi < layout.n_bins; ++bi) {
    est.lag_center[bi] = (static_cast<double>(bi) + 0.5) * layout.width;
    if (pairs_in_bin[bi] == 0) {
      est.offdiag[bi] = est.offdiag_se[bi] = 0.0;
      continue;
    }
    std::tie(est.offdiag[bi], est.offdiag_se[bi]) =
        mean_se(total.sum_bin[bi], total.sum_bin_sq[bi]);
  }
  return est;
}

}  // namespace

CorrelationEstimate estimate_correlation(std::span<const NoisePath> paths, std::size_t max_lag) {
  if (paths.size() < 2) throw std::invalid_argument("estimate_correlation: need at least 2 paths");
  for (const auto& p : paths)
    if (p.frame != paths[0].frame)
      throw std::invalid_argument("estimate_correlation: mixed frames");
  return estimate_correlation_impl([&](std::size_t i) { return paths[i]; }, paths.size(),
                                   max_lag, 1);
}

CorrelationEstimate estimate_correlation(const PathFactory& path_at, std::size_t m,
                                         std::size_t max_lag, int threads) {
  return estimate_correlation_impl(path_at, m, max_lag, threads);
}

CumsumVariance cumulative_sum_variance(const PathFactory& path_at, std::size_t m, int threads) {
  if (m < 2) throw std::invalid_argument("cumulative_sum_variance: need at least 2 paths");
  const NoisePath first = path_at(0);
  const std::size_t n = first.steps();

  struct Partial {
    std::vector<double> sum_w, sum_w2;
    std::size_t count = 0;
  };
  const std::size_t n_blocks = (m + kBlock - 1) / kBlock;
  std::vector<Partial> partials(n_blocks);

  parallel_blocks(m, kBlock, threads, [&](std::size_t b, std::size_t i0, std::size_t i1) {
    Partial acc;
    acc.sum_w.assign(n, 0.0);
    acc.sum_w2.assign(n, 0.0);
    for (std::size_t p = i0; p < i1; ++p) {
      const NoisePath path = path_at(p);
      double w = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        w += path.dw[k];
        acc.sum_w[k] += w;
        acc.sum_w2[k] += w * w;
      }
      ++acc.count;
    }
    partials[b] = std::move(acc);
  });

  Partial total;
  total.sum_w.assign(n, 0.0);
  total.sum_w2.assign(n, 0.0);
  for (const auto& part : partials) {
    for (std::size_t k = 0; k < n; ++k) {
      total.sum_w[k] += part.sum_w[k];
      total.sum_w2[k] += part.sum_w2[k];
    }
    total.count += part.count;
  }

  const double M = static_cast<double>(total.count);
  CumsumVariance out;
  out.sample_count = total.count;
  out.t.resize(n);
  out.var.resize(n);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out.t[k] = first.times[k + 1] - first.times[0];
    const double mean = total.sum_w[k] / M;
    out.var[k] = std::max(0.0, (total.sum_w2[k] - M * mean * mean) / (M - 1.0));
    num += out.var[k] * out.t[k];
    den += out.t[k] * out.t[k];
  }
  out.slope = num / den;
  return out;
}

NoisePath coarsen_path(const NoisePath& fine, std::size_t ratio) {
  if (ratio == 0 || fine.steps() % ratio != 0)
    throw std::invalid_argument("coarsen_path: step count not divisible by ratio");
  NoisePath out;
  out.frame = fine.frame;
  out.constants = fine.constants;
  out.seed = fine.seed;
  out.stream = fine.stream;
  const std::size_t n = fine.steps() / ratio;
  out.times.resize(n + 1);
  out.dw.resize(n);
  for (std::size_t k = 0; k <= n; ++k) out.times[k] = fine.times[k * ratio];
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < ratio; ++j) acc += fine.dw[k * ratio + j];
    out.dw[k] = acc;
  }
  return out;
}

StepMoments step_moments(const PathFactory& path_at, std::size_t m, int threads) {
  if (m < 2) throw std::invalid_argument("step_moments: need at least 2 paths");
  const NoisePath first = path_at(0);
  const std::size_t n = first.steps();

  struct Partial {
    std::vector<double> sum_f, sum_f2;
    std::size_t count = 0;
  };
  const std::size_t n_blocks = (m + kBlock - 1) / kBlock;
  std::vector<Partial> partials(n_blocks);

  parallel_blocks(m, kBlock, threads, [&](std::size_t b, std::size_t i0, std::size_t i1) {
    Partial acc;
    acc.sum_f.assign(n, 0.0);
    acc.sum_f2.assign(n, 0.0);
    for (std::size_t p = i0; p < i1; ++p) {
      const NoisePath path = path_at(p);
      for (std::size_t k = 0; k < n; ++k) {
        const double f = path.f(k);
        acc.sum_f[k] += f;
        acc.sum_f2[k] += f * f;
      }
      ++acc.count;
    }
    partials[b] = std::move(acc);
  });

  Partial total;
  total.sum_f.assign(n, 0.0);
  total.sum_f2.assign(n, 0.0);
  for (const auto& part : partials) {
    for (std::size_t k = 0; k < n; ++k) {
      total.sum_f[k] += part.sum_f[k];
      total.sum_f2[k] += part.sum_f2[k];
    }
    total.count += part.count;
  }

  const double M = static_cast<double>(total.count);
  StepMoments out;
  out.sample_count = total.count;
  out.mean_f.resize(n);
  out.se_f.resize(n);
  out.var_f.resize(n);
  out.var_f_se.resize(n);
  double pooled = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double mean = total.sum_f[k] / M;
    const double var = std::max(0.0, (total.sum_f2[k] - M * mean * mean) / (M - 1.0));
    out.mean_f[k] = mean;
    out.se_f[k] = std::sqrt(var / M);
    out.var_f[k] = var;
    out.var_f_se[k] = var * std::sqrt(2.0 / (M - 1.0));
    pooled += var;
  }
  out.pooled_var_f = pooled / static_cast<double>(n);
  return out;
}

}  // namespace hkq
