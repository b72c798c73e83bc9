#pragma once
// Single particle in a driven, lossy cavity lattice: parameters, the truncated
// photon x momentum product space, and matrix-free operator actions.
//
// Units: hbar = omega_R = k_R = 1, so the particle mass is 1/2 and the kinetic
// energy of momentum j*k_R is j^2.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "cavlat/errors.hpp"

namespace cavlat {

using cplx = std::complex<double>;

struct ModelParams {
  double eta = 0.0;      // pump amplitude
  double delta_c = 0.0;  // cavity-pump detuning
  double u0 = 0.0;       // light shift per photon (negative for high-field seekers)
  double kappa = 1.0;    // field decay rate

  // Throws DomainError unless kappa > 0 and eta >= 0.
  void validate() const;
};

struct HilbertGeometry {
  int n_ph_max = 1;  // photon Fock cutoff, n in 0..n_ph_max
  int j_max = 2;     // momentum cutoff, j in -j_max..j_max
  bool even_parity_only = false;

  void validate() const;

  int num_photon() const { return n_ph_max + 1; }
  int num_momentum() const { return even_parity_only ? j_max + 1 : 2 * j_max + 1; }
  std::size_t dim() const {
    return static_cast<std::size_t>(num_photon()) * static_cast<std::size_t>(num_momentum());
  }
  // Momentum index k -> momentum quantum number j.
  int momentum(int k) const { return even_parity_only ? -j_max + 2 * k : -j_max + k; }
  // Momentum quantum number j -> index, or -1 if j is not in the basis.
  int momentum_index(int j) const;
  // Index distance between j and j+2.
  int coupling_stride() const { return even_parity_only ? 1 : 2; }
  std::size_t index(int n, int k) const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(num_momentum()) +
           static_cast<std::size_t>(k);
  }

  friend bool operator==(const HilbertGeometry&, const HilbertGeometry&) = default;
};

// Amplitudes psi(n, j) stored photon-major: index = n * num_momentum + k.
class QuantumState {
public:
  explicit QuantumState(const HilbertGeometry& geometry);
  QuantumState(const HilbertGeometry& geometry, std::vector<cplx> amplitudes);

  // |n, j>; throws DomainError when (n, j) is outside the basis.
  static QuantumState basis(const HilbertGeometry& geometry, int n, int j);

  const HilbertGeometry& geometry() const { return geometry_; }
  std::span<const cplx> amplitudes() const { return amps_; }
  std::span<cplx> amplitudes() { return amps_; }
  std::size_t size() const { return amps_.size(); }

  cplx& at(int n, int j);
  cplx at(int n, int j) const;

  double norm_squared() const;
  // Scales to unit norm; throws DomainError for the zero vector.
  void normalize();

private:
  HilbertGeometry geometry_;
  std::vector<cplx> amps_;
};

// H|psi> with H = sum_j j^2 |j><j| - [Delta_C - U0 C] n - i eta (a - a^dag) and
// C the cos^2(k_R x) operator, <j'|C|j> = 1/2 delta_{j'j} + 1/4 delta_{j',j+-2}.
QuantumState apply_hamiltonian(const QuantumState& state, const ModelParams& params);

// (H - i kappa n)|psi>, the generator of no-jump MCWF evolution.
QuantumState apply_effective_hamiltonian(const QuantumState& state, const ModelParams& params);

// a|psi> / ||a|psi>||. Throws NoJumpPossible when a|psi> = 0.
QuantumState apply_jump(const QuantumState& state);

// a|psi> without normalization; the caller owns the output buffer.
void apply_annihilation(const HilbertGeometry& geometry, std::span<const cplx> in,
                        std::span<cplx> out);

// Precomputed stencil for repeated application of H or H_eff to flat amplitude
// buffers. Optionally folds a scalar prefactor (e.g. -i) into every coefficient.
class HamiltonianStencil {
public:
  HamiltonianStencil(const HilbertGeometry& geometry, const ModelParams& params, bool effective,
                     cplx prefactor = {1.0, 0.0});

  void apply(std::span<const cplx> in, std::span<cplx> out) const;
  const HilbertGeometry& geometry() const { return geometry_; }

private:
  HilbertGeometry geometry_;
  std::vector<cplx> diagonal_;      // per (n, k)
  std::vector<cplx> lattice_;       // per n: prefactor * U0 n / 4
  std::vector<cplx> pump_raise_;    // per n: coefficient of psi(n-1) in (H psi)(n)
  std::vector<cplx> pump_lower_;    // per n: coefficient of psi(n+1) in (H psi)(n)
};

struct ObservableSet {
  double n_mean = 0.0;
  cplx alpha{0.0, 0.0};          // <a>
  double kinetic_energy = 0.0;   // <j^2> in omega_R
  double bunching = 0.0;         // <cos^2(k_R x)>
  double odd_weight = 0.0;       // total probability on odd j
  std::vector<double> joint;     // P(n, j), same layout as the amplitudes
  std::vector<double> photon_distribution;    // P(n)
  std::vector<double> momentum_distribution;  // P(j) by momentum index
};

// Expectation values of a state; throws ContractViolation when | ||psi|| - 1 |
// exceeds norm_tolerance.
ObservableSet observables(const QuantumState& state, double norm_tolerance = 1e-6);

// Same quantities computed from an unnormalized buffer by dividing by its norm.
// Skips the joint distribution unless with_joint is set.
ObservableSet observables_of(const HilbertGeometry& geometry, std::span<const cplx> amps,
                             bool with_joint);

// Probability on the truncation boundary: n = n_ph_max or |j| = j_max (each
// basis state counted once). Above 1e-6 the cutoffs should be treated as too small.
double boundary_population(const QuantumState& state);
double boundary_population(const HilbertGeometry& geometry, std::span<const cplx> amps);

inline constexpr double kTruncationWarningLevel = 1e-6;

}  // namespace cavlat
