#pragma once
// Factorized (mean-field) particle-field model: the self-consistency condition
//   n = eta^2 / (kappa^2 + (Delta_C - U0 b(n))^2),
// its roots for oscillator and Wannier particle states, contour tracing,
// linear stability of the roots, and coupled field/wavefunction dynamics.

#include <Eigen/Core>

#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cavlat/bandstructure.hpp"
#include "cavlat/model.hpp"

namespace cavlat {

// Memoized band summaries keyed by lattice depth. Concurrent readers, exclusive insertion.
class BandCache {
public:
  explicit BandCache(int max_band = 16, int plane_wave_cutoff = 32, int q_grid_size = 128);

  BandSummary summary(double depth_v0);
  double bunching(int m, double depth_v0);
  int max_band() const { return max_band_; }
  std::size_t size() const;

private:
  int max_band_;
  int cutoff_;
  int q_grid_;
  mutable std::shared_mutex mutex_;
  std::map<double, BandSummary> entries_;
};

enum class BranchModel { kHarmonic, kWannier };
const char* to_string(BranchModel model);

// b as a function of the mean photon number for a fixed particle state.
struct BunchingModel {
  BranchModel model = BranchModel::kHarmonic;
  int level = 0;   // n_ho or band index m
  double u0 = 0.0;
  BandCache* cache = nullptr;  // required for kWannier

  double operator()(double n) const;
  // Only the Wannier model distinguishes bound and free states.
  bool bound(double n) const;
  bool valid(double n) const;
};

struct SelfConsistentBranch {
  int band = 0;
  BranchModel model = BranchModel::kHarmonic;
  double delta_c = 0.0;
  double n_mean = 0.0;
  double b = 0.0;
  double delta_eff = 0.0;  // Delta_C - U0 b
  bool stable = false;
  double slope = 0.0;      // d/dn of eta^2/(kappa^2 + Delta_eff(n)^2) at the root
  bool marginal = false;   // tangent root or |slope - 1| within the marginal band
  bool bound = true;       // Wannier: band-averaged energy below the lattice top
  bool valid = true;       // harmonic: oscillator approximation holds at the root
};

// alpha_ss = -eta / (i Delta_eff - kappa), Delta_eff = Delta_C - U0 b.
std::complex<double> field_steady_state(const ModelParams& params, double b);

// Root grid on n in (n_min, n_max]; n_max defaults to eta^2/kappa^2, the
// largest photon number the Lorentzian allows.
struct NGridSpec {
  double n_min = 1e-6;
  std::optional<double> n_max;
  int points = 400;
  bool log_spacing = true;

  std::vector<double> build(double eta, double kappa) const;
};

struct RootSearch {
  std::vector<SelfConsistentBranch> branches;  // sorted by n
  std::vector<std::string> warnings;
};

// Roots of the oscillator self-consistency equation on a log grid over
// (1e-6, eta^2/kappa^2]. b is clamped to [0, 1]; roots where the oscillator
// picture fails (|U0| n < omega_R or negative unclamped b) carry valid = false.
RootSearch solve_selfconsistent_harmonic(int n_ho, const ModelParams& params, int grid_points = 4000);

// Roots for Wannier band m: grid tabulation with monotone interpolation,
// bracketing, then bisection with exact band solves.
RootSearch solve_selfconsistent_wannier(int m, const ModelParams& params, BandCache& cache,
                                        const NGridSpec& grid = {});

// Generic root search for any b(n) on the given n grid.
RootSearch solve_selfconsistent(const BunchingModel& b_of_n, const ModelParams& params,
                                const std::vector<double>& n_grid);

struct ContourPoint {
  double delta_c = 0.0;
  double n = 0.0;
  double b = 0.0;
  int sign = +1;       // branch of the square root: Delta_C = U0 b +- sqrt(eta^2/n - kappa^2)
  double slope = 0.0;
  bool stable = false;
};

// Explicit contour Delta_C(n) of the self-consistency condition for fixed eta.
// Points with n > eta^2/kappa^2 have no real Delta_C and are skipped.
std::vector<ContourPoint> trace_contour(const BunchingModel& b_of_n, double eta, double kappa,
                                        const NGridSpec& grid);

struct StabilityMatrix {
  Eigen::Matrix2cd a;
  double n_ss = 0.0;
  std::complex<double> alpha_ss;
  double delta_eff = 0.0;
  double d_delta_eff_dn = 0.0;  // Richardson-extrapolated central difference
  double fd_discrepancy = 0.0;  // |D(h) - D(h/2)|
};

// A = diag(i Delta_eff - kappa, -i Delta_eff - kappa)
//     + i dDelta_eff/dn [[n, alpha^2], [-(alpha*)^2, -n]].
StabilityMatrix stability_matrix(const ModelParams& params, const SelfConsistentBranch& branch,
                                 const std::function<double(double)>& b_of_n);

struct StabilityReport {
  bool stable = false;
  bool marginal = false;      // |slope - 1| <= kMarginalBand or verdicts disagree
  bool consistent = true;     // the three tests agree
  bool eigen_verdict = false; // all Re(lambda) < 0
  bool det_verdict = false;   // det(A) > 0 (trace is -2 kappa)
  bool slope_verdict = false; // slope < 1
  std::complex<double> lambda1, lambda2;
  double trace = 0.0;
  double determinant = 0.0;
  double det_imag = 0.0;
  double slope = 0.0;
};

inline constexpr double kMarginalBand = 1e-6;

StabilityReport classify_stability(const StabilityMatrix& a, const ModelParams& params);

// Slope of the Lorentzian right-hand side at photon number n for a given dDelta_eff/dn.
double lorentzian_slope(const ModelParams& params, double delta_eff, double d_delta_eff_dn);

// Fills stable/slope/marginal of every branch from its stability matrix.
void classify_branches(std::vector<SelfConsistentBranch>& branches, const ModelParams& params,
                       const BunchingModel& b_of_n);

struct HeatingCheck {
  bool heats = false;           // Delta_eff,m > -Delta_eff,m+2
  bool marginal = false;
  double delta_eff_m = 0.0;
  double delta_eff_m2 = 0.0;
  bool upper_band_bound = true;
  bool free_limit_used = false; // depth 0: b = 1/2 substituted
};

HeatingCheck heating_condition(int m, const ModelParams& params, double n, BandCache& cache);

struct MeanFieldState {
  std::complex<double> alpha{0.0, 0.0};
  int j_max = 8;
  std::vector<std::complex<double>> psi;  // j = -j_max..j_max
  double time = 0.0;
};

struct MeanFieldSample {
  double t = 0.0;
  std::complex<double> alpha;
  double n = 0.0;
  double b = 0.0;
  double kinetic_energy = 0.0;
  double norm = 0.0;
};

struct MeanFieldOptions {
  double rtol = 1e-8;
  double sample_dt = 0.1;
  // When set, the particle follows the field adiabatically: b = adiabatic_b(|alpha|^2)
  // and only alpha is integrated.
  std::function<double(double)> adiabatic_b;
};

// Co-integrates the field amplitude and the particle wavefunction under
// H_p = p^2/2m + U0 |alpha|^2 cos^2(k_R x).
std::vector<MeanFieldSample> integrate_meanfield(const MeanFieldState& initial,
                                                 const ModelParams& params, double t_final,
                                                 const MeanFieldOptions& options = {});

// Lowest-lying q = 0 Bloch state of band m at depth V0 in the plane-wave basis
// j = -j_max..j_max (even j only carry weight).
std::vector<std::complex<double>> bloch_state_q0(int m, double depth_v0, int j_max);

}  // namespace cavlat
