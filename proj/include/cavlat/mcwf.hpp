#pragma once
// Monte Carlo wave-function unraveling of the cavity-damped master equation,
// ensemble statistics over trajectories, and a dense density-matrix oracle for
// small truncations.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cavlat/meanfield.hpp"
#include "cavlat/model.hpp"
#include "cavlat/ode.hpp"

namespace cavlat {

// Per-trajectory stream seed from (base, index); SplitMix64 finalizer.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

struct TrajectoryConfig {
  HilbertGeometry geometry{60, 30, false};
  ModelParams params;
  int initial_n = 1;
  int initial_j = 0;
  double t_final = 10.0;
  double sample_dt = 0.1;
  std::uint64_t seed = 1;
  ode::Tolerance tolerance{};
  double fixed_step = 0.0;            // > 0 switches to uniform steps of this size
  double jump_time_resolution = 1e-3; // in units of 1/kappa
  bool record_distributions = false;  // per-sample P(n) and P(j)
  std::vector<double> snapshot_times; // joint P(n, j) at these sample times

  void validate() const;
  // Sample grid t_k = k * sample_dt, k = 0..floor(t_final / sample_dt).
  std::vector<double> sample_times() const;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  HilbertGeometry geometry;
  std::vector<double> times;
  std::vector<double> n_mean;
  std::vector<double> kinetic_energy;
  std::vector<double> bunching;
  std::vector<double> odd_weight;
  std::vector<double> norm_deviation;  // | ||psi|| - 1 | of the emitted (renormalized) state
  std::vector<std::vector<double>> photon_distribution;
  std::vector<std::vector<double>> momentum_distribution;
  std::vector<double> snapshot_times;
  std::vector<std::vector<double>> joint_snapshots;
  std::vector<double> jump_times;
  std::vector<cplx> final_state;
  double max_boundary_population = 0.0;
  bool truncation_warning = false;
  long rhs_evaluations = 0;
  long steps_accepted = 0;
  long steps_rejected = 0;
};

// Runs one trajectory. Deterministic for a given config (including seed).
TrajectoryRecord run_trajectory(const TrajectoryConfig& config);

struct EnsembleOptions {
  std::size_t count = 100;
  std::uint64_t base_seed = 1;
  int threads = 1;
  bool keep_series = true;  // keep per-trajectory n, E_kin, b series (needed for window errors)
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct EnsembleStats {
  std::size_t count = 0;
  std::uint64_t base_seed = 0;
  HilbertGeometry geometry;
  std::vector<double> times;
  std::vector<double> n_mean, n_se;
  std::vector<double> kinetic_mean, kinetic_se;
  std::vector<double> bunching_mean, bunching_se;
  std::vector<double> odd_weight_max;  // worst trajectory at each sample
  std::vector<double> snapshot_times;
  std::vector<std::vector<double>> joint;  // ensemble mean P(n, j) per snapshot
  std::vector<std::size_t> jump_counts;    // per trajectory
  std::vector<std::uint64_t> seeds;
  std::size_t truncated_trajectories = 0;
  double max_boundary_population = 0.0;
  // Per-trajectory series, present when EnsembleOptions::keep_series.
  std::vector<std::vector<double>> n_series, kinetic_series, bunching_series;
};

// Trajectory i uses seed derive_seed(base_seed, i). Statistics are reduced in
// index order, so the result does not depend on the thread count.
EnsembleStats run_ensemble(const TrajectoryConfig& config, const EnsembleOptions& options);

// Folds a record into statistics; exposed for streaming reductions.
class EnsembleAccumulator {
public:
  explicit EnsembleAccumulator(bool keep_series = true) : keep_series_(keep_series) {}
  void add(const TrajectoryRecord& record);
  EnsembleStats finish() const;

private:
  bool keep_series_;
  EnsembleStats stats_;
  std::vector<double> n_m2_, k_m2_, b_m2_;
};

enum class Observable { kPhotonNumber, kKineticEnergy, kBunching };
const char* to_string(Observable o);
Observable observable_from_string(const std::string& name);

struct JointDistribution {
  double t = 0.0;
  bool folded = false;
  std::vector<int> momenta;               // column labels (j, or |j| when folded)
  std::vector<std::vector<double>> p;     // p[n][column]
  std::optional<std::string> warning;     // set when t was not a snapshot time
};

// Ensemble P(n, j) at time t (nearest snapshot, with warning when off-grid).
JointDistribution joint_distribution(const EnsembleStats& stats, double t, bool fold = false);

struct WindowAverage {
  double mean = 0.0;
  double standard_error = 0.0;  // across trajectories; 0 for a single record
  std::size_t samples = 0;
  std::size_t trajectories = 1;
};

// Mean over samples with t1 < t <= t2. Throws DomainError when the window holds
// fewer than 2 samples.
WindowAverage time_window_average(const TrajectoryRecord& record, double t1, double t2,
                                  Observable o);
WindowAverage time_window_average(const EnsembleStats& stats, double t1, double t2, Observable o);
WindowAverage time_window_average(const std::vector<double>& times,
                                  const std::vector<double>& values, double t1, double t2);

struct ToleranceBand {
  double absolute = 0.0;
  double relative = 0.25;  // half-width = max(absolute, relative * n_branch)
};

struct BranchOccupancy {
  std::vector<double> branch_n;      // stable branches considered, by increasing n
  std::vector<double> half_width;    // after overlap shrinking
  std::vector<double> fraction;      // fraction of samples inside each band
  double transit = 0.0;
  std::vector<std::string> warnings;
};

// Classifies each sampled <n>(t) against the stable branches.
BranchOccupancy branch_occupancy(const std::vector<double>& n_series,
                                 const std::vector<SelfConsistentBranch>& branches,
                                 const ToleranceBand& band = {});
BranchOccupancy branch_occupancy(const TrajectoryRecord& record,
                                 const std::vector<SelfConsistentBranch>& branches,
                                 const ToleranceBand& band = {});

// ---------------------------------------------------------------- oracle

inline constexpr std::size_t kOracleMaxDim = 400;

struct OracleConfig {
  HilbertGeometry geometry{3, 4, false};
  ModelParams params;
  int initial_n = 1;
  int initial_j = 0;
  std::vector<cplx> initial_state;  // overrides (initial_n, initial_j) when non-empty
  double t_final = 10.0;
  double sample_dt = 0.1;
  ode::Tolerance tolerance{1e-10, 0.0};
  std::vector<double> snapshot_times;
};

struct OracleSeries {
  std::vector<double> times;
  std::vector<double> n_mean, kinetic_energy, bunching, odd_weight;
  std::vector<cplx> alpha;
  std::vector<double> trace_deviation;     // |tr rho - 1|
  std::vector<double> hermiticity_error;   // max |rho - rho^dag|
  std::vector<double> snapshot_times;
  std::vector<std::vector<double>> joint_snapshots;  // diagonal of rho
  std::vector<cplx> final_rho;  // column-major
  double min_eigenvalue = 0.0;  // of the final rho
};

// Integrates rho' = -i(H_eff rho - rho H_eff^dag) + 2 kappa a rho a^dag.
// Throws DomainError when the dimension exceeds kOracleMaxDim.
OracleSeries integrate_master_equation(const OracleConfig& config);

}  // namespace cavlat
