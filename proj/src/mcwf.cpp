#include "cavlat/mcwf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace cavlat {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double norm_sq(std::span<const cplx> v) {
  double s = 0.0;
  for (const cplx& c : v) s += std::norm(c);
  return s;
}

// Uniform on (0, 1] from the top 53 bits; portable across standard libraries.
double uniform_open_closed(std::mt19937_64& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

std::size_t nearest_sample(const std::vector<double>& times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  std::size_t i = static_cast<std::size_t>(it - times.begin());
  if (i > 0 && std::abs(times[i - 1] - t) <= std::abs(times[i] - t)) --i;
  return i;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(splitmix64(base_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

void TrajectoryConfig::validate() const {
  geometry.validate();
  params.validate();
  if (!(sample_dt > 0.0)) throw DomainError("sample_dt must be positive");
  if (!(t_final >= sample_dt)) throw DomainError("t_final must be at least sample_dt");
  if (initial_n < 0 || initial_n > geometry.n_ph_max || geometry.momentum_index(initial_j) < 0)
    throw DomainError("initial state lies outside the truncated basis");
  if (!(tolerance.rtol > 0.0) && !(tolerance.atol > 0.0))
    throw DomainError("integrator tolerance must be positive");
  if (fixed_step < 0.0) throw DomainError("fixed_step must be >= 0");
  if (!(jump_time_resolution > 0.0)) throw DomainError("jump_time_resolution must be positive");
  for (double t : snapshot_times)
    if (t < 0.0 || t > t_final) throw DomainError("snapshot time outside [0, t_final]");
}

std::vector<double> TrajectoryConfig::sample_times() const {
  const long steps = static_cast<long>(std::floor(t_final / sample_dt + 1e-9));
  std::vector<double> t(static_cast<std::size_t>(steps + 1));
  for (long k = 0; k <= steps; ++k) t[static_cast<std::size_t>(k)] = static_cast<double>(k) * sample_dt;
  return t;
}

TrajectoryRecord run_trajectory(const TrajectoryConfig& cfg) {
  cfg.validate();
  const HilbertGeometry& g = cfg.geometry;
  const std::size_t dim = g.dim();
  const HamiltonianStencil heff(g, cfg.params, true, cplx(0.0, -1.0));
  const ode::Rhs f = [&heff](double, std::span<const cplx> in, std::span<cplx> out) {
    heff.apply(in, out);
  };

  TrajectoryRecord rec;
  rec.seed = cfg.seed;
  rec.geometry = g;
  rec.times = cfg.sample_times();
  const std::size_t ns = rec.times.size();
  rec.n_mean.reserve(ns);
  rec.kinetic_energy.reserve(ns);
  rec.bunching.reserve(ns);
  rec.odd_weight.reserve(ns);
  rec.norm_deviation.reserve(ns);

  std::vector<std::size_t> snap_index;
  for (double t : cfg.snapshot_times) snap_index.push_back(nearest_sample(rec.times, t));
  rec.snapshot_times.resize(snap_index.size());
  rec.joint_snapshots.resize(snap_index.size());

  std::mt19937_64 rng(cfg.seed);
  const QuantumState start = QuantumState::basis(g, cfg.initial_n, cfg.initial_j);
  std::vector<cplx> psi(start.amplitudes().begin(), start.amplitudes().end());
  std::vector<cplx> y_new(dim), y_try(dim), y_hi(dim), scratch(dim);
  double r = uniform_open_closed(rng);

  auto record = [&](std::size_t k) {
    const double nrm = std::sqrt(norm_sq(psi));
    bool want_joint = false;
    for (std::size_t s : snap_index) want_joint = want_joint || s == k;
    const ObservableSet obs = observables_of(g, psi, want_joint);
    rec.n_mean.push_back(obs.n_mean);
    rec.kinetic_energy.push_back(obs.kinetic_energy);
    rec.bunching.push_back(obs.bunching);
    rec.odd_weight.push_back(obs.odd_weight);
    double tot = 0.0;
    for (const cplx& c : psi) tot += std::norm(c / nrm);
    rec.norm_deviation.push_back(std::abs(std::sqrt(tot) - 1.0));
    if (cfg.record_distributions) {
      rec.photon_distribution.push_back(obs.photon_distribution);
      rec.momentum_distribution.push_back(obs.momentum_distribution);
    }
    for (std::size_t s = 0; s < snap_index.size(); ++s) {
      if (snap_index[s] == k) {
        rec.snapshot_times[s] = rec.times[k];
        rec.joint_snapshots[s] = obs.joint;
      }
    }
    const double edge = boundary_population(g, psi);
    rec.max_boundary_population = std::max(rec.max_boundary_population, edge);
  };

  ode::DormandPrince dp(dim, cfg.tolerance);
  const bool fixed = cfg.fixed_step > 0.0;
  record(0);
  double t = 0.0;
  double h = fixed ? cfg.fixed_step : dp.initial_step(f, 0.0, psi);
  const double resolution = cfg.jump_time_resolution / cfg.params.kappa;

  std::size_t k = 1;
  while (k < ns) {
    const double target = rec.times[k];
    double step = h;
    bool hits = false;
    if (t + step >= target - 1e-12 * std::max(1.0, target)) {
      step = target - t;
      hits = true;
    }
    const ode::StepOutcome o = dp.attempt(f, t, psi, step, y_new);
    if (!fixed && !o.accepted) {
      ++rec.steps_rejected;
      h = o.h_next;
      if (h < 1e-14 * std::max(1.0, t))
        throw ode::IntegrationError("step size collapsed at t = " + std::to_string(t), t, psi);
      continue;
    }
    ++rec.steps_accepted;
    const double n_end = norm_sq(y_new);
    if (!std::isfinite(n_end))
      throw ode::IntegrationError("non-finite state at t = " + std::to_string(t + step), t, psi);

    if (n_end < r) {
      // Locate the crossing ||psi(t + s)||^2 = r inside (0, step] by
      // Illinois-modified false position on trial steps from the same (t, psi).
      double lo = 0.0, hi = step;
      double g_lo = norm_sq(psi) - r, g_hi = n_end - r;
      double residual = -g_hi;  // unscaled r - ||psi(t + hi)||^2
      std::copy(y_new.begin(), y_new.end(), y_hi.begin());
      int side = 0;
      for (int it = 0; it < 100; ++it) {
        if (hi - lo <= resolution && residual <= 1e-3 * r) break;
        if (residual <= 1e-10 * r) break;
        double s = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
        dp.attempt(f, t, psi, s, y_try);
        const double gs = norm_sq(y_try) - r;
        if (gs < 0.0) {
          hi = s;
          g_hi = gs;
          residual = -gs;
          std::swap(y_hi, y_try);
          if (side == -1) g_lo *= 0.5;
          side = -1;
        } else {
          lo = s;
          g_lo = gs;
          if (side == +1) g_hi *= 0.5;
          side = +1;
        }
      }
      t += hi;
      apply_annihilation(g, y_hi, scratch);
      const double nj = norm_sq(scratch);
      if (nj == 0.0) throw NoJumpPossible("jump requested on a photon vacuum state");
      const double inv = 1.0 / std::sqrt(nj);
      for (std::size_t i = 0; i < dim; ++i) psi[i] = scratch[i] * inv;
      rec.jump_times.push_back(t);
      r = uniform_open_closed(rng);
      dp.invalidate();
      if (hits && hi == step) {
        t = target;
        record(k);
        ++k;
      }
      continue;
    }

    dp.commit();
    std::swap(psi, y_new);
    if (hits) {
      t = target;
      record(k);
      ++k;
      // A step shortened to land on the sample grid says little about the next one.
      if (!fixed && (step >= h || o.h_next > h)) h = o.h_next;
    } else {
      t += step;
      if (!fixed) h = o.h_next;
    }
  }

  const double nrm = std::sqrt(norm_sq(psi));
  rec.final_state.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) rec.final_state[i] = psi[i] / nrm;
  rec.truncation_warning = rec.max_boundary_population > kTruncationWarningLevel;
  rec.rhs_evaluations = dp.rhs_evaluations();
  return rec;
}

// ---------------------------------------------------------------- ensemble

void EnsembleAccumulator::add(const TrajectoryRecord& rec) {
  EnsembleStats& s = stats_;
  const std::size_t ns = rec.times.size();
  if (s.count == 0) {
    s.geometry = rec.geometry;
    s.times = rec.times;
    s.n_mean.assign(ns, 0.0);
    s.kinetic_mean.assign(ns, 0.0);
    s.bunching_mean.assign(ns, 0.0);
    s.odd_weight_max.assign(ns, 0.0);
    n_m2_.assign(ns, 0.0);
    k_m2_.assign(ns, 0.0);
    b_m2_.assign(ns, 0.0);
    s.snapshot_times = rec.snapshot_times;
    s.joint.assign(rec.joint_snapshots.size(), std::vector<double>(rec.geometry.dim(), 0.0));
  } else if (rec.times.size() != s.times.size() || !(rec.geometry == s.geometry)) {
    throw DimensionError("trajectory record does not match the ensemble layout");
  }
  ++s.count;
  const double c = static_cast<double>(s.count);
  auto welford = [&](std::vector<double>& mean, std::vector<double>& m2,
                     const std::vector<double>& x) {
    for (std::size_t i = 0; i < ns; ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / c;
      m2[i] += d * (x[i] - mean[i]);
    }
  };
  welford(s.n_mean, n_m2_, rec.n_mean);
  welford(s.kinetic_mean, k_m2_, rec.kinetic_energy);
  welford(s.bunching_mean, b_m2_, rec.bunching);
  for (std::size_t i = 0; i < ns; ++i)
    s.odd_weight_max[i] = std::max(s.odd_weight_max[i], rec.odd_weight[i]);
  for (std::size_t q = 0; q < s.joint.size(); ++q) {
    auto& acc = s.joint[q];
    const auto& x = rec.joint_snapshots[q];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (x[i] - acc[i]) / c;
  }
  s.jump_counts.push_back(rec.jump_times.size());
  s.seeds.push_back(rec.seed);
  if (rec.truncation_warning) ++s.truncated_trajectories;
  s.max_boundary_population = std::max(s.max_boundary_population, rec.max_boundary_population);
  if (keep_series_) {
    s.n_series.push_back(rec.n_mean);
    s.kinetic_series.push_back(rec.kinetic_energy);
    s.bunching_series.push_back(rec.bunching);
  }
}

EnsembleStats EnsembleAccumulator::finish() const {
  EnsembleStats s = stats_;
  const std::size_t ns = s.times.size();
  auto se = [&](const std::vector<double>& m2) {
    std::vector<double> out(ns, 0.0);
    if (s.count < 2) return out;
    const double c = static_cast<double>(s.count);
    for (std::size_t i = 0; i < ns; ++i) out[i] = std::sqrt(std::max(0.0, m2[i]) / (c - 1.0) / c);
    return out;
  };
  s.n_se = se(n_m2_);
  s.kinetic_se = se(k_m2_);
  s.bunching_se = se(b_m2_);
  return s;
}

EnsembleStats run_ensemble(const TrajectoryConfig& config, const EnsembleOptions& options) {
  config.validate();
  if (options.count < 1) throw DomainError("ensemble needs at least one trajectory");
  const std::size_t total = options.count;
  EnsembleAccumulator acc(options.keep_series);
  auto make = [&](std::size_t i) {
    TrajectoryConfig c = config;
    c.seed = derive_seed(options.base_seed, i);
    return c;
  };

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(total)));
  if (threads == 1) {
    for (std::size_t i = 0; i < total; ++i) {
      acc.add(run_trajectory(make(i)));
      if (options.progress) options.progress(i + 1, total);
    }
  } else {
    std::vector<std::optional<TrajectoryRecord>> slots(total);
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    // Workers stay at most this far ahead of the in-order reduction.
    const std::size_t window = static_cast<std::size_t>(threads) * 4;
    std::size_t reduced = 0;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= total || abort) return;
        {
          std::unique_lock lk(mu);
          cv.wait(lk, [&] { return i < reduced + window || abort; });
          if (abort) return;
        }
        try {
          TrajectoryRecord rec = run_trajectory(make(i));
          std::lock_guard lk(mu);
          slots[i] = std::move(rec);
        } catch (...) {
          std::lock_guard lk(mu);
          if (!failure) failure = std::current_exception();
          abort = true;
        }
        cv.notify_all();
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (std::size_t i = 0; i < total; ++i) {
      std::optional<TrajectoryRecord> rec;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return slots[i].has_value() || abort; });
        if (abort && !slots[i]) break;
        rec = std::move(slots[i]);
        slots[i].reset();
        reduced = i + 1;
      }
      cv.notify_all();
      acc.add(*rec);
      if (options.progress) options.progress(i + 1, total);
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  EnsembleStats s = acc.finish();
  s.base_seed = options.base_seed;
  return s;
}

// ---------------------------------------------------------------- analysis

const char* to_string(Observable o) {
  switch (o) {
    case Observable::kPhotonNumber: return "n";
    case Observable::kKineticEnergy: return "E_kin";
    case Observable::kBunching: return "b";
  }
  return "?";
}

Observable observable_from_string(const std::string& name) {
  if (name == "n" || name == "photon_number") return Observable::kPhotonNumber;
  if (name == "E_kin" || name == "kinetic_energy") return Observable::kKineticEnergy;
  if (name == "b" || name == "bunching") return Observable::kBunching;
  throw DomainError("unknown observable '" + name + "'");
}

JointDistribution joint_distribution(const EnsembleStats& stats, double t, bool fold) {
  if (stats.snapshot_times.empty()) throw DomainError("ensemble holds no joint snapshots");
  std::size_t best = 0;
  for (std::size_t i = 1; i < stats.snapshot_times.size(); ++i)
    if (std::abs(stats.snapshot_times[i] - t) < std::abs(stats.snapshot_times[best] - t)) best = i;
  JointDistribution out;
  out.t = stats.snapshot_times[best];
  out.folded = fold;
  if (std::abs(out.t - t) > 1e-9 * std::max(1.0, std::abs(t)))
    out.warning = "requested t=" + std::to_string(t) + " is not a snapshot time; using t=" +
                  std::to_string(out.t);
  const HilbertGeometry& g = stats.geometry;
  const auto& joint = stats.joint[best];
  const int np = g.num_photon(), nk = g.num_momentum();
  if (!fold) {
    for (int k = 0; k < nk; ++k) out.momenta.push_back(g.momentum(k));
    out.p.assign(static_cast<std::size_t>(np), std::vector<double>(static_cast<std::size_t>(nk), 0.0));
    for (int n = 0; n < np; ++n)
      for (int k = 0; k < nk; ++k)
        out.p[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] = joint[g.index(n, k)];
  } else {
    const int step = g.even_parity_only ? 2 : 1;
    for (int j = g.j_max % step; j <= g.j_max; j += step) out.momenta.push_back(j);
    out.p.assign(static_cast<std::size_t>(np),
                 std::vector<double>(out.momenta.size(), 0.0));
    for (int n = 0; n < np; ++n)
      for (int k = 0; k < nk; ++k) {
        const int col = std::abs(g.momentum(k)) / step;
        out.p[static_cast<std::size_t>(n)][static_cast<std::size_t>(col)] += joint[g.index(n, k)];
      }
  }
  return out;
}

WindowAverage time_window_average(const std::vector<double>& times,
                                  const std::vector<double>& values, double t1, double t2) {
  if (times.size() != values.size()) throw DimensionError("times and values differ in length");
  WindowAverage w;
  double sum = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > t1 && times[i] <= t2) {
      sum += values[i];
      ++w.samples;
    }
  }
  if (w.samples < 2)
    throw DomainError("time window (" + std::to_string(t1) + ", " + std::to_string(t2) +
                      "] contains fewer than 2 samples");
  w.mean = sum / static_cast<double>(w.samples);
  return w;
}

WindowAverage time_window_average(const TrajectoryRecord& rec, double t1, double t2, Observable o) {
  const auto& v = o == Observable::kPhotonNumber    ? rec.n_mean
                  : o == Observable::kKineticEnergy ? rec.kinetic_energy
                                                    : rec.bunching;
  return time_window_average(rec.times, v, t1, t2);
}

WindowAverage time_window_average(const EnsembleStats& s, double t1, double t2, Observable o) {
  const auto& mean = o == Observable::kPhotonNumber    ? s.n_mean
                     : o == Observable::kKineticEnergy ? s.kinetic_mean
                                                       : s.bunching_mean;
  const auto& series = o == Observable::kPhotonNumber    ? s.n_series
                       : o == Observable::kKineticEnergy ? s.kinetic_series
                                                         : s.bunching_series;
  WindowAverage w = time_window_average(s.times, mean, t1, t2);
  w.trajectories = s.count;
  if (s.count >= 2 && series.size() == s.count) {
    double m = 0.0, m2 = 0.0;
    std::size_t c = 0;
    for (const auto& x : series) {
      const double v = time_window_average(s.times, x, t1, t2).mean;
      ++c;
      const double d = v - m;
      m += d / static_cast<double>(c);
      m2 += d * (v - m);
    }
    w.standard_error = std::sqrt(m2 / static_cast<double>(c - 1) / static_cast<double>(c));
  } else if (s.count >= 2) {
    w.standard_error = std::numeric_limits<double>::quiet_NaN();
  }
  return w;
}

BranchOccupancy branch_occupancy(const std::vector<double>& n_series,
                                 const std::vector<SelfConsistentBranch>& branches,
                                 const ToleranceBand& band) {
  BranchOccupancy out;
  for (const auto& b : branches)
    if (b.stable) out.branch_n.push_back(b.n_mean);
  std::sort(out.branch_n.begin(), out.branch_n.end());
  for (double n : out.branch_n) out.half_width.push_back(std::max(band.absolute, band.relative * n));
  for (std::size_t i = 0; i + 1 < out.branch_n.size(); ++i) {
    const double gap = out.branch_n[i + 1] - out.branch_n[i];
    if (out.half_width[i] + out.half_width[i + 1] > gap) {
      out.half_width[i] = std::min(out.half_width[i], 0.5 * gap);
      out.half_width[i + 1] = std::min(out.half_width[i + 1], 0.5 * gap);
      out.warnings.push_back("tolerance bands of branches at n=" + std::to_string(out.branch_n[i]) +
                             " and n=" + std::to_string(out.branch_n[i + 1]) +
                             " overlapped and were shrunk");
    }
  }
  out.fraction.assign(out.branch_n.size(), 0.0);
  if (n_series.empty()) return out;
  std::size_t transit = 0;
  for (double n : n_series) {
    bool hit = false;
    for (std::size_t i = 0; i < out.branch_n.size(); ++i) {
      if (std::abs(n - out.branch_n[i]) <= out.half_width[i]) {
        out.fraction[i] += 1.0;
        hit = true;
        break;
      }
    }
    if (!hit) ++transit;
  }
  const double total = static_cast<double>(n_series.size());
  for (double& f : out.fraction) f /= total;
  out.transit = static_cast<double>(transit) / total;
  return out;
}

BranchOccupancy branch_occupancy(const TrajectoryRecord& record,
                                 const std::vector<SelfConsistentBranch>& branches,
                                 const ToleranceBand& band) {
  return branch_occupancy(record.n_mean, branches, band);
}

}  // namespace cavlat
