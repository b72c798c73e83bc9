#pragma once
// Bloch bands, Wannier functions and bunching parameters of the lattice
// V(x) = V0 cos^2(k_R x), V0 <= 0. Energies are measured from the potential
// maximum, so a band with negative Brillouin-zone-averaged energy is bound.

#include <vector>

#include "cavlat/errors.hpp"

namespace cavlat {

struct LatticeProblem {
  double depth_v0 = 0.0;        // V0 = U0 <n>, attractive (<= 0)
  int plane_wave_cutoff = 32;   // L: components l in -L..L, wavevector q + 2l
  int q_grid_size = 128;        // N_q quasimomenta in (-1, 1]

  void validate() const;
  // q_k = -1 + 2(k+1)/N_q, k = 0..N_q-1 (uniform, contains q = 1 and, for even N_q, q = 0)
  std::vector<double> q_grid() const;
};

enum class PhaseConvention {
  kEigensolver,  // sign fixed so the largest coefficient is positive; no Wannier gauge
  kValue,        // psi_q(x_ref) real and positive
  kSlope,        // d/dx psi_q(x_ref) real and positive
};

struct BlochSolution {
  int band = 0;
  std::vector<double> q;
  std::vector<double> energies;                   // E_m(q)
  std::vector<std::vector<double>> coefficients;  // per q: c_l, l = -L..L (real gauge)
  PhaseConvention phase = PhaseConvention::kEigensolver;

  double band_average_energy() const;
  // Brillouin-zone average of <u_mq| cos^2 |u_mq>.
  double bunching() const;
};

// Diagonalizes the plane-wave Hamiltonian at each q of the grid and returns
// bands 0..max_band. Throws ConvergenceError (naming a sufficient cutoff) when
// the top requested band moves by more than 1e-10 under L -> L+4.
std::vector<BlochSolution> solve_bloch(const LatticeProblem& problem, int max_band);

// Per-band bunching and BZ-averaged energy. The BZ averages use adaptive
// quadrature in q and do not depend on q_grid_size.
struct BandSummary {
  double depth_v0 = 0.0;
  std::vector<double> bunching;       // b_m
  std::vector<double> average_energy; // <E_m(q)>_BZ
  std::vector<double> bunching_q0;    // <cos^2> of the q = 0 Bloch state
  std::vector<double> energy_q0;      // E_m(0)
  bool bound(int m) const { return average_energy.at(static_cast<std::size_t>(m)) < 0.0; }
};
BandSummary band_summary(const LatticeProblem& problem, int max_band);

// b_m = <w_m| cos^2 |w_m>, evaluated as the BZ average (phase independent).
// Returns exactly 1/2 for depth 0.
double bunching_parameter(const LatticeProblem& problem, int m);

struct WannierBand {
  int m = 0;
  double bunching = 0.0;          // from the real-space samples
  double bunching_bloch = 0.0;    // BZ-average route
  double band_avg_energy = 0.0;
  bool bound = false;
  double center = 0.0;            // reference point the phases were fixed at (0 or pi/2)
  PhaseConvention phase = PhaseConvention::kValue;
  std::vector<double> x;
  std::vector<double> w;          // real part of the samples
  double max_imag = 0.0;          // largest |Im w(x)| over the window
};

// Phase-fixes the Bloch functions of band m, sums them over the q grid and
// samples w_m on window_periods lattice periods around the Wannier center.
// Throws DomainError for depth 0 (no localized construction).
WannierBand build_wannier(const LatticeProblem& problem, int m, int window_periods = 20,
                          int samples_per_period = 64);

struct HarmonicBunching {
  double value = 0.0;  // clamped to [0, 1]
  bool valid = true;   // false when |U0| n < omega_R or the unclamped value is negative
};

// b = 1 - (2 n_ho + 1) / (2 sqrt(|U0| n)), the deep-trap oscillator estimate.
// Throws DomainError for n_mean <= 0 or n_ho < 0.
HarmonicBunching harmonic_bunching(int n_ho, double u0, double n_mean);

}  // namespace cavlat
