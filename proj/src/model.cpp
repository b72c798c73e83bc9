#include "cavlat/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cavlat {

namespace {

constexpr cplx kI{0.0, 1.0};

void require_same_size(const HilbertGeometry& g, std::size_t size) {
  if (size != g.dim()) {
    throw DimensionError("amplitude buffer of size " + std::to_string(size) +
                         " does not match geometry dimension " + std::to_string(g.dim()));
  }
}

}  // namespace

void ModelParams::validate() const {
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(eta >= 0.0)) throw DomainError("eta must be non-negative");
  if (!std::isfinite(delta_c) || !std::isfinite(u0) || !std::isfinite(eta) || !std::isfinite(kappa))
    throw DomainError("model parameters must be finite");
}

void HilbertGeometry::validate() const {
  if (n_ph_max < 1) throw DomainError("n_ph_max must be >= 1");
  if (j_max < 2) throw DomainError("j_max must be >= 2");
  if (even_parity_only && j_max % 2 != 0)
    throw DomainError("j_max must be even when even_parity_only is set");
}

int HilbertGeometry::momentum_index(int j) const {
  if (j < -j_max || j > j_max) return -1;
  if (even_parity_only) {
    if ((j % 2) != 0) return -1;
    return (j + j_max) / 2;
  }
  return j + j_max;
}

QuantumState::QuantumState(const HilbertGeometry& geometry)
    : geometry_(geometry), amps_(geometry.dim(), cplx{0.0, 0.0}) {
  geometry_.validate();
}

QuantumState::QuantumState(const HilbertGeometry& geometry, std::vector<cplx> amplitudes)
    : geometry_(geometry), amps_(std::move(amplitudes)) {
  geometry_.validate();
  require_same_size(geometry_, amps_.size());
}

QuantumState QuantumState::basis(const HilbertGeometry& geometry, int n, int j) {
  QuantumState s(geometry);
  s.at(n, j) = 1.0;
  return s;
}

cplx& QuantumState::at(int n, int j) {
  const int k = geometry_.momentum_index(j);
  if (n < 0 || n > geometry_.n_ph_max || k < 0)
    throw DomainError("basis state (n=" + std::to_string(n) + ", j=" + std::to_string(j) +
                      ") is outside the truncated space");
  return amps_[geometry_.index(n, k)];
}

cplx QuantumState::at(int n, int j) const {
  const int k = geometry_.momentum_index(j);
  if (n < 0 || n > geometry_.n_ph_max || k < 0) return {0.0, 0.0};
  return amps_[geometry_.index(n, k)];
}

double QuantumState::norm_squared() const {
  double s = 0.0;
  for (const cplx& c : amps_) s += std::norm(c);
  return s;
}

void QuantumState::normalize() {
  const double nrm = std::sqrt(norm_squared());
  if (nrm == 0.0) throw DomainError("cannot normalize the zero vector");
  for (cplx& c : amps_) c /= nrm;
}

HamiltonianStencil::HamiltonianStencil(const HilbertGeometry& geometry, const ModelParams& params,
                                       bool effective, cplx prefactor)
    : geometry_(geometry) {
  geometry_.validate();
  const int np = geometry_.num_photon();
  const int nk = geometry_.num_momentum();
  diagonal_.resize(geometry_.dim());
  lattice_.resize(static_cast<std::size_t>(np));
  pump_raise_.resize(static_cast<std::size_t>(np));
  pump_lower_.resize(static_cast<std::size_t>(np));
  for (int n = 0; n < np; ++n) {
    const double dn = static_cast<double>(n);
    // -(Delta_C - U0/2) n from the diagonal half of C
    cplx photon = -(params.delta_c - 0.5 * params.u0) * dn;
    if (effective) photon -= kI * params.kappa * dn;
    for (int k = 0; k < nk; ++k) {
      const double j = geometry_.momentum(k);
      diagonal_[geometry_.index(n, k)] = prefactor * (j * j + photon);
    }
    lattice_[static_cast<std::size_t>(n)] = prefactor * (0.25 * params.u0 * dn);
    // -i eta (a - a^dag): (a psi)(n) = sqrt(n+1) psi(n+1), (a^dag psi)(n) = sqrt(n) psi(n-1)
    pump_lower_[static_cast<std::size_t>(n)] = prefactor * (-kI * params.eta * std::sqrt(dn + 1.0));
    pump_raise_[static_cast<std::size_t>(n)] = prefactor * (kI * params.eta * std::sqrt(dn));
  }
}

void HamiltonianStencil::apply(std::span<const cplx> in, std::span<cplx> out) const {
  require_same_size(geometry_, in.size());
  require_same_size(geometry_, out.size());
  const cplx* psi = in.data();
  cplx* res = out.data();
  const int np = geometry_.num_photon();
  const int nk = geometry_.num_momentum();
  const int s = geometry_.coupling_stride();
  const cplx* diag = diagonal_.data();
  static const cplx kZero{0.0, 0.0};
  for (int n = 0; n < np; ++n) {
    const std::size_t row = static_cast<std::size_t>(n) * static_cast<std::size_t>(nk);
    const cplx* p = psi + row;
    const cplx* d = diag + row;
    cplx* r = res + row;
    const cplx lat = lattice_[static_cast<std::size_t>(n)];
    // Missing photon neighbours read a zero coefficient against the row itself.
    const bool has_up = n + 1 < np, has_down = n > 0;
    const cplx cu = has_up ? pump_lower_[static_cast<std::size_t>(n)] : kZero;
    const cplx cd = has_down ? pump_raise_[static_cast<std::size_t>(n)] : kZero;
    const cplx* up = has_up ? p + nk : p;
    const cplx* down = has_down ? p - nk : p;
    auto at = [&](int k, cplx neighbours) {
      r[k] = d[k] * p[k] + lat * neighbours + cu * up[k] + cd * down[k];
    };
    const int lo = std::min(s, nk), hi = std::max(lo, nk - s);
    for (int k = 0; k < lo; ++k) at(k, k + s < nk ? p[k + s] : kZero);
    for (int k = lo; k < hi; ++k) at(k, p[k - s] + p[k + s]);
    for (int k = hi; k < nk; ++k) at(k, k >= s ? p[k - s] : kZero);
  }
}

QuantumState apply_hamiltonian(const QuantumState& state, const ModelParams& params) {
  HamiltonianStencil h(state.geometry(), params, false);
  QuantumState out(state.geometry());
  h.apply(state.amplitudes(), out.amplitudes());
  return out;
}

QuantumState apply_effective_hamiltonian(const QuantumState& state, const ModelParams& params) {
  HamiltonianStencil h(state.geometry(), params, true);
  QuantumState out(state.geometry());
  h.apply(state.amplitudes(), out.amplitudes());
  return out;
}

void apply_annihilation(const HilbertGeometry& g, std::span<const cplx> in, std::span<cplx> out) {
  require_same_size(g, in.size());
  require_same_size(g, out.size());
  const int np = g.num_photon();
  const int nk = g.num_momentum();
  for (int n = 0; n < np; ++n) {
    cplx* r = out.data() + g.index(n, 0);
    if (n + 1 < np) {
      const double f = std::sqrt(static_cast<double>(n + 1));
      const cplx* up = in.data() + g.index(n + 1, 0);
      for (int k = 0; k < nk; ++k) r[k] = f * up[k];
    } else {
      for (int k = 0; k < nk; ++k) r[k] = 0.0;
    }
  }
}

QuantumState apply_jump(const QuantumState& state) {
  QuantumState out(state.geometry());
  apply_annihilation(state.geometry(), state.amplitudes(), out.amplitudes());
  if (out.norm_squared() == 0.0) throw NoJumpPossible("a|psi> = 0: no jump possible");
  out.normalize();
  return out;
}

ObservableSet observables_of(const HilbertGeometry& g, std::span<const cplx> amps,
                             bool with_joint) {
  require_same_size(g, amps.size());
  const int np = g.num_photon();
  const int nk = g.num_momentum();
  const int s = g.coupling_stride();
  ObservableSet obs;
  obs.photon_distribution.assign(static_cast<std::size_t>(np), 0.0);
  obs.momentum_distribution.assign(static_cast<std::size_t>(nk), 0.0);
  if (with_joint) obs.joint.assign(amps.size(), 0.0);

  double total = 0.0;
  double n_acc = 0.0;
  double kin = 0.0;
  double odd = 0.0;
  double c_off = 0.0;
  cplx alpha{0.0, 0.0};
  for (int n = 0; n < np; ++n) {
    const cplx* p = amps.data() + g.index(n, 0);
    double row = 0.0;
    for (int k = 0; k < nk; ++k) {
      const double w = std::norm(p[k]);
      const int j = g.momentum(k);
      row += w;
      kin += w * static_cast<double>(j) * static_cast<double>(j);
      if (j % 2 != 0) odd += w;
      obs.momentum_distribution[static_cast<std::size_t>(k)] += w;
      if (with_joint) obs.joint[g.index(n, k)] = w;
      if (k + s < nk) c_off += std::real(std::conj(p[k + s]) * p[k]);
    }
    obs.photon_distribution[static_cast<std::size_t>(n)] = row;
    total += row;
    n_acc += static_cast<double>(n) * row;
    if (n + 1 < np) {
      const cplx* up = amps.data() + g.index(n + 1, 0);
      const double f = std::sqrt(static_cast<double>(n + 1));
      for (int k = 0; k < nk; ++k) alpha += std::conj(p[k]) * f * up[k];
    }
  }
  if (total == 0.0) throw DomainError("observables of the zero vector are undefined");
  const double inv = 1.0 / total;
  obs.n_mean = n_acc * inv;
  obs.kinetic_energy = kin * inv;
  obs.odd_weight = odd * inv;
  obs.alpha = alpha * inv;
  // <C> = 1/2 + 1/4 sum (psi*_{j+2} psi_j + c.c.)
  obs.bunching = 0.5 + 0.5 * c_off * inv;
  for (double& v : obs.photon_distribution) v *= inv;
  for (double& v : obs.momentum_distribution) v *= inv;
  for (double& v : obs.joint) v *= inv;
  return obs;
}

ObservableSet observables(const QuantumState& state, double norm_tolerance) {
  const double nrm = std::sqrt(state.norm_squared());
  if (std::abs(nrm - 1.0) > norm_tolerance)
    throw ContractViolation("observables require a normalized state (||psi|| = " +
                            std::to_string(nrm) + ")");
  return observables_of(state.geometry(), state.amplitudes(), true);
}

double boundary_population(const HilbertGeometry& g, std::span<const cplx> amps) {
  require_same_size(g, amps.size());
  const int np = g.num_photon();
  const int nk = g.num_momentum();
  double edge = 0.0;
  double total = 0.0;
  for (int n = 0; n < np; ++n) {
    for (int k = 0; k < nk; ++k) {
      const double w = std::norm(amps[g.index(n, k)]);
      total += w;
      if (n == g.n_ph_max || std::abs(g.momentum(k)) == g.j_max) edge += w;
    }
  }
  return total > 0.0 ? edge / total : 0.0;
}

double boundary_population(const QuantumState& state) {
  return boundary_population(state.geometry(), state.amplitudes());
}

}  // namespace cavlat
