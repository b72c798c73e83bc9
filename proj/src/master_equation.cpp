#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "cavlat/mcwf.hpp"

namespace cavlat {

namespace {

struct RhoMoments {
  double trace = 0.0, n = 0.0, kinetic = 0.0, bunching = 0.0, odd = 0.0;
  cplx alpha{0.0, 0.0};
};

// rho stored column-major: rho(i, k) = v[i + k * dim].
RhoMoments rho_moments(const HilbertGeometry& g, std::span<const cplx> rho) {
  const std::size_t dim = g.dim();
  const int np = g.num_photon(), nk = g.num_momentum(), s = g.coupling_stride();
  RhoMoments m;
  double cross = 0.0;
  for (int n = 0; n < np; ++n) {
    for (int k = 0; k < nk; ++k) {
      const std::size_t i = g.index(n, k);
      const double p = rho[i + i * dim].real();
      const int j = g.momentum(k);
      m.trace += p;
      m.n += n * p;
      m.kinetic += static_cast<double>(j) * j * p;
      if (j % 2 != 0) m.odd += p;
      if (k + s < nk) cross += rho[g.index(n, k + s) + i * dim].real();
      if (n + 1 < np)
        m.alpha += std::sqrt(static_cast<double>(n + 1)) * rho[g.index(n + 1, k) + i * dim];
    }
  }
  m.n /= m.trace;
  m.kinetic /= m.trace;
  m.odd /= m.trace;
  m.alpha /= m.trace;
  m.bunching = 0.5 + 0.5 * cross / m.trace;
  return m;
}

}  // namespace

OracleSeries integrate_master_equation(const OracleConfig& cfg) {
  const HilbertGeometry& g = cfg.geometry;
  g.validate();
  cfg.params.validate();
  const std::size_t dim = g.dim();
  if (dim > kOracleMaxDim)
    throw DomainError("density-matrix oracle refuses dimension " + std::to_string(dim) +
                      " (limit " + std::to_string(kOracleMaxDim) + ")");
  if (!(cfg.sample_dt > 0.0) || !(cfg.t_final >= 0.0))
    throw DomainError("oracle needs sample_dt > 0 and t_final >= 0");

  std::vector<cplx> psi0;
  if (!cfg.initial_state.empty()) {
    if (cfg.initial_state.size() != dim) throw DimensionError("initial state size mismatch");
    psi0 = cfg.initial_state;
    double nrm = 0.0;
    for (auto& c : psi0) nrm += std::norm(c);
    for (auto& c : psi0) c /= std::sqrt(nrm);
  } else {
    const QuantumState s = QuantumState::basis(g, cfg.initial_n, cfg.initial_j);
    psi0.assign(s.amplitudes().begin(), s.amplitudes().end());
  }
  std::vector<cplx> rho(dim * dim);
  for (std::size_t c = 0; c < dim; ++c)
    for (std::size_t r = 0; r < dim; ++r) rho[r + c * dim] = psi0[r] * std::conj(psi0[c]);

  const HamiltonianStencil heff(g, cfg.params, true);
  const double two_kappa = 2.0 * cfg.params.kappa;
  const int np = g.num_photon(), nk = g.num_momentum();
  std::vector<cplx> x(dim * dim);
  const ode::Rhs rhs = [&](double, std::span<const cplx> in, std::span<cplx> out) {
    // X = H_eff rho, column by column.
    for (std::size_t c = 0; c < dim; ++c)
      heff.apply(in.subspan(c * dim, dim), std::span<cplx>(x).subspan(c * dim, dim));
    // rho' = -i X + i X^dag + 2 kappa a rho a^dag
    for (std::size_t c = 0; c < dim; ++c) {
      for (std::size_t r = 0; r < dim; ++r) {
        const cplx a = x[r + c * dim];
        const cplx b = std::conj(x[c + r * dim]);
        out[r + c * dim] = cplx(a.imag() - b.imag(), -a.real() + b.real());
      }
    }
    for (int n2 = 0; n2 + 1 < np; ++n2) {
      const double f2 = std::sqrt(static_cast<double>(n2 + 1));
      for (int k2 = 0; k2 < nk; ++k2) {
        const std::size_t c = g.index(n2, k2), cu = g.index(n2 + 1, k2);
        for (int n1 = 0; n1 + 1 < np; ++n1) {
          const double f = two_kappa * f2 * std::sqrt(static_cast<double>(n1 + 1));
          const std::size_t r0 = g.index(n1, 0), ru = g.index(n1 + 1, 0);
          for (int k1 = 0; k1 < nk; ++k1)
            out[r0 + static_cast<std::size_t>(k1) + c * dim] +=
                f * in[ru + static_cast<std::size_t>(k1) + cu * dim];
        }
      }
    }
  };

  OracleSeries out;
  out.snapshot_times.resize(cfg.snapshot_times.size());
  out.joint_snapshots.resize(cfg.snapshot_times.size());
  std::vector<bool> snap_done(cfg.snapshot_times.size(), false);

  auto emit = [&](double t) {
    double herm = 0.0;
    for (std::size_t c = 0; c < dim; ++c)
      for (std::size_t r = 0; r <= c; ++r) {
        const cplx a = rho[r + c * dim], b = rho[c + r * dim];
        herm = std::max(herm, std::abs(a - std::conj(b)));
        const cplx avg = 0.5 * (a + std::conj(b));
        rho[r + c * dim] = avg;
        rho[c + r * dim] = std::conj(avg);
      }
    const RhoMoments m = rho_moments(g, rho);
    out.times.push_back(t);
    out.n_mean.push_back(m.n);
    out.kinetic_energy.push_back(m.kinetic);
    out.bunching.push_back(m.bunching);
    out.odd_weight.push_back(m.odd);
    out.alpha.push_back(m.alpha);
    out.trace_deviation.push_back(std::abs(m.trace - 1.0));
    out.hermiticity_error.push_back(herm);
    for (std::size_t s = 0; s < cfg.snapshot_times.size(); ++s) {
      if (snap_done[s] || std::abs(cfg.snapshot_times[s] - t) > 0.5 * cfg.sample_dt) continue;
      snap_done[s] = true;
      out.snapshot_times[s] = t;
      std::vector<double> diag(dim);
      for (std::size_t i = 0; i < dim; ++i) diag[i] = rho[i + i * dim].real() / m.trace;
      out.joint_snapshots[s] = std::move(diag);
    }
  };

  ode::DormandPrince dp(dim * dim, cfg.tolerance);
  emit(0.0);
  const long steps = static_cast<long>(std::floor(cfg.t_final / cfg.sample_dt + 1e-9));
  double h = 0.0, t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double tn = static_cast<double>(k) * cfg.sample_dt;
    h = dp.integrate(rhs, t, tn, rho, h);
    dp.invalidate();  // emit() symmetrizes rho in place
    t = tn;
    emit(t);
  }

  Eigen::Map<const Eigen::MatrixXcd> mat(rho.data(), static_cast<Eigen::Index>(dim),
                                         static_cast<Eigen::Index>(dim));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(mat, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.final_rho = rho;
  return out;
}

}  // namespace cavlat
