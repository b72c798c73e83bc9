#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "cavlat/model.hpp"

using namespace cavlat;

namespace {

// Dense H (or H_eff) built element by element from the operator definitions.
Eigen::MatrixXcd dense_hamiltonian(const HilbertGeometry& g, const ModelParams& p, bool effective) {
  const auto dim = static_cast<Eigen::Index>(g.dim());
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  const cplx i1(0.0, 1.0);
  for (int n = 0; n < g.num_photon(); ++n) {
    for (int k = 0; k < g.num_momentum(); ++k) {
      const auto r = static_cast<Eigen::Index>(g.index(n, k));
      const int j = g.momentum(k);
      h(r, r) = j * j - (p.delta_c - 0.5 * p.u0) * n;
      if (effective) h(r, r) -= i1 * p.kappa * static_cast<double>(n);
      for (int dj : {-2, 2}) {
        const int kk = g.momentum_index(j + dj);
        if (kk >= 0) h(r, static_cast<Eigen::Index>(g.index(n, kk))) += 0.25 * p.u0 * n;
      }
      if (n + 1 < g.num_photon())  // -i eta a: <n|a|n+1> = sqrt(n+1)
        h(r, static_cast<Eigen::Index>(g.index(n + 1, k))) += -i1 * p.eta * std::sqrt(n + 1.0);
      if (n > 0)  // +i eta a^dag: <n|a^dag|n-1> = sqrt(n)
        h(r, static_cast<Eigen::Index>(g.index(n - 1, k))) += i1 * p.eta * std::sqrt(1.0 * n);
    }
  }
  return h;
}

std::vector<cplx> random_vector(std::size_t dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<cplx> v(dim);
  for (auto& c : v) c = {nd(rng), nd(rng)};
  return v;
}

const ModelParams kParams{1.3, -2.7, -4.1, 0.8};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("stencil matches the dense operator in both bases") {
  for (bool even : {false, true}) {
    for (bool effective : {false, true}) {
      const HilbertGeometry g{5, 8, even};
      const auto h = dense_hamiltonian(g, kParams, effective);
      const auto v = random_vector(g.dim(), 3);
      const cplx pre(0.0, -1.0);
      const HamiltonianStencil st(g, kParams, effective, pre);
      std::vector<cplx> out(g.dim());
      st.apply(v, out);
      const Eigen::VectorXcd ref =
          pre * h * Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
      double err = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i)
        err = std::max(err, std::abs(out[i] - ref(static_cast<Eigen::Index>(i))));
      CHECK(err < 1e-12 * ref.norm());
    }
  }
}

TEST_CASE("H is Hermitian and H_eff differs by -i kappa n") {
  const HilbertGeometry g{4, 6, false};
  QuantumState u(g, random_vector(g.dim(), 1)), v(g, random_vector(g.dim(), 2));
  const auto hu = apply_hamiltonian(u, kParams), hv = apply_hamiltonian(v, kParams);
  cplx a{0.0, 0.0}, b{0.0, 0.0};
  for (std::size_t i = 0; i < g.dim(); ++i) {
    a += std::conj(u.amplitudes()[i]) * hv.amplitudes()[i];
    b += std::conj(hu.amplitudes()[i]) * v.amplitudes()[i];
  }
  CHECK(std::abs(a - b) < 1e-11 * std::abs(a));

  const auto he = apply_effective_hamiltonian(v, kParams);
  for (int n = 0; n < g.num_photon(); ++n)
    for (int j = -g.j_max; j <= g.j_max; ++j) {
      const cplx diff = he.at(n, j) - hv.at(n, j);
      CHECK(std::abs(diff - cplx(0.0, -kParams.kappa * n) * v.at(n, j)) < 1e-12);
    }
}

TEST_CASE("even-parity basis reproduces the full basis on even states") {
  const HilbertGeometry full{4, 8, false}, even{4, 8, true};
  QuantumState s_even(even, random_vector(even.dim(), 9));
  QuantumState s_full(full);
  for (int n = 0; n <= 4; ++n)
    for (int j = -8; j <= 8; j += 2) s_full.at(n, j) = s_even.at(n, j);
  const auto a = apply_effective_hamiltonian(s_full, kParams);
  const auto b = apply_effective_hamiltonian(s_even, kParams);
  for (int n = 0; n <= 4; ++n)
    for (int j = -8; j <= 8; ++j) {
      if (j % 2 == 0)
        CHECK(std::abs(a.at(n, j) - b.at(n, j)) < 1e-12);
      else
        CHECK(std::abs(a.at(n, j)) == 0.0);
    }
}

TEST_CASE("cos^2 coupling and bunching agree with a real-space quadrature") {
  // <cos^2 x> of psi(x) = sum_j c_j e^{i j x}, averaged over one 2 pi period.
  const HilbertGeometry g{1, 6, false};
  QuantumState s(g, random_vector(g.dim(), 5));
  for (int j = -6; j <= 6; ++j) s.at(1, j) = 0.0;
  s.normalize();
  const int samples = 512;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = 2.0 * std::numbers::pi * i / samples;
    cplx psi{0.0, 0.0};
    for (int j = -6; j <= 6; ++j) psi += s.at(0, j) * std::exp(cplx(0.0, j * x));
    num += std::norm(psi) * std::cos(x) * std::cos(x);
    den += std::norm(psi);
  }
  CHECK(observables(s).bunching == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("basis states, jumps and observables") {
  const HilbertGeometry g{3, 4, false};
  const auto s = QuantumState::basis(g, 2, -3);
  const auto o = observables(s);
  CHECK(o.n_mean == 2.0);
  CHECK(o.kinetic_energy == 9.0);
  CHECK(o.odd_weight == 1.0);
  CHECK(o.bunching == 0.5);
  const auto jumped = apply_jump(s);
  CHECK(std::abs(jumped.at(1, -3)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(apply_jump(QuantumState::basis(g, 0, 0)), NoJumpPossible);
  CHECK_THROWS_AS(QuantumState::basis(g, 4, 0), DomainError);
  CHECK_THROWS_AS(QuantumState::basis(HilbertGeometry{3, 4, true}, 0, 1), DomainError);
  CHECK(boundary_population(QuantumState::basis(g, 3, 0)) == 1.0);
  CHECK(boundary_population(QuantumState::basis(g, 1, 4)) == 1.0);
  CHECK(boundary_population(QuantumState::basis(g, 1, 3)) == 0.0);
}

TEST_CASE("observables refuse unnormalized states") {
  const HilbertGeometry g{2, 2, false};
  QuantumState s = QuantumState::basis(g, 1, 0);
  s.at(1, 0) = 2.0;
  CHECK_THROWS_AS(observables(s), ContractViolation);
  CHECK(observables_of(g, s.amplitudes(), false).n_mean == doctest::Approx(1.0));
}

}
