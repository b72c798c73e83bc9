#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "cavlat/bandstructure.hpp"

using namespace cavlat;

namespace {

std::size_t q_index(const std::vector<double>& q, double value) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (std::abs(q[i] - value) < std::abs(q[best] - value)) best = i;
  return best;
}

}  // namespace

TEST_SUITE("bandstructure") {

TEST_CASE("Mathieu characteristic values at q_M = 1") {
  // V0 cos^2 x = V0/2 + (V0/2) cos 2x; with V0 = -4 the equation is Mathieu's with
  // q_M = 1 and E = a - 2. Tabulated a_0, b_1, a_1, b_2, a_2 (Abramowitz & Stegun 20.1).
  LatticeProblem p{-4.0, 32, 128};
  const auto bands = solve_bloch(p, 2);
  const auto& q = bands[0].q;
  const std::size_t centre = q_index(q, 0.0), edge = q_index(q, 1.0);
  REQUIRE(q[centre] == 0.0);
  REQUIRE(q[edge] == 1.0);
  CHECK(bands[0].energies[centre] == doctest::Approx(-0.4551386 - 2.0).epsilon(1e-7));
  CHECK(bands[0].energies[edge] == doctest::Approx(-0.1102488 - 2.0).epsilon(1e-7));
  CHECK(bands[1].energies[edge] == doctest::Approx(1.8591081 - 2.0).epsilon(1e-7));
  CHECK(bands[1].energies[centre] == doctest::Approx(3.9170248 - 2.0).epsilon(1e-7));
  CHECK(bands[2].energies[centre] == doctest::Approx(4.3713010 - 2.0).epsilon(1e-7));
}

TEST_CASE("tridiagonal solve agrees with a dense diagonalization") {
  const double v0 = -37.0, q = 0.3125;  // q on the N_q = 64 grid
  const int L = 64;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * L + 1, 2 * L + 1);
  for (int l = -L; l <= L; ++l) {
    const int i = l + L;
    h(i, i) = (q + 2 * l) * (q + 2 * l) + 0.5 * v0;
    if (i + 1 <= 2 * L) h(i, i + 1) = h(i + 1, i) = 0.25 * v0;
  }
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues();
  LatticeProblem p{v0, 32, 64};
  const auto bands = solve_bloch(p, 6);
  const std::size_t k = q_index(bands[0].q, q);
  REQUIRE(bands[0].q[k] == doctest::Approx(q));
  for (int m = 0; m <= 6; ++m)
    CHECK(bands[static_cast<std::size_t>(m)].energies[k] == doctest::Approx(ev(m)).epsilon(1e-11));
}

TEST_CASE("deep lattice approaches the harmonic limit") {
  // omega_ho = 2 sqrt(|V0|): E_0 ~ V0 + sqrt(|V0|) and b_0 ~ 1 - 1/(2 sqrt(|V0|)).
  LatticeProblem p100{-100.0, 32, 128};
  const auto s = band_summary(p100, 0);
  CHECK(s.average_energy[0] == doctest::Approx(-90.0).epsilon(0.02));
  LatticeProblem p400{-400.0, 32, 128};
  CHECK(bunching_parameter(p400, 0) == doctest::Approx(0.975).epsilon(0.01));
  CHECK(harmonic_bunching(0, -10.0, 40.0).value == doctest::Approx(0.975));
}

TEST_CASE("deep Wannier function is the oscillator ground state") {
  LatticeProblem p{-400.0, 32, 128};
  const WannierBand w = build_wannier(p, 0, 6, 256);
  const double s = std::sqrt(400.0);  // H ~ p^2 + |V0| x^2 around the well
  double ww = 0.0, gg = 0.0, wg = 0.0;
  for (std::size_t i = 0; i < w.x.size(); ++i) {
    const double dx = w.x[i] - w.center;
    const double g = std::exp(-0.5 * s * dx * dx);
    ww += w.w[i] * w.w[i];
    gg += g * g;
    wg += w.w[i] * g;
  }
  CHECK(wg * wg / (ww * gg) > 0.999);
}

TEST_CASE("Wannier functions are real and both bunching routes agree") {
  for (double v0 : {-5.0, -50.0, -150.0}) {
    for (int m : {0, 1, 4}) {
      // Shallow upper bands have slowly decaying tails: a long window needs a fine q grid.
      LatticeProblem p{v0, 32, 512};
      const WannierBand w = build_wannier(p, m, 256, 32);
      CAPTURE(v0);
      CAPTURE(m);
      CHECK(w.max_imag < 1e-8);
      CHECK(std::abs(w.bunching - w.bunching_bloch) < 1e-6);
      // The Wannier route averages over the discrete q grid; the reference is the exact BZ average.
      CHECK(std::abs(w.bunching_bloch - bunching_parameter(p, m)) < 1e-5);
    }
  }
}

TEST_CASE("b_m is the depth derivative of the band-averaged energy") {
  for (int m : {0, 2, 4}) {
    const double v0 = -30.0, h = 1e-4;
    LatticeProblem a{v0 + h, 32, 128}, b{v0 - h, 32, 128}, c{v0, 32, 128};
    const double de = (band_summary(a, m).average_energy[static_cast<std::size_t>(m)] -
                       band_summary(b, m).average_energy[static_cast<std::size_t>(m)]) /
                      (2.0 * h);
    CHECK(bunching_parameter(c, m) == doctest::Approx(de).epsilon(1e-7));
  }
}

TEST_CASE("free particle limit and bound flags") {
  LatticeProblem free{0.0, 32, 128};
  for (int m = 0; m <= 5; ++m) CHECK(bunching_parameter(free, m) == 0.5);
  CHECK_THROWS_AS(build_wannier(free, 4), DomainError);
  CHECK_THROWS_AS(solve_bloch(LatticeProblem{1.0, 32, 128}, 0), DomainError);
  const auto s = band_summary(LatticeProblem{-60.0, 32, 128}, 5);
  CHECK(s.bound(0));
  CHECK(s.bound(4));
  CHECK_FALSE(s.bound(5));
  const auto weak = harmonic_bunching(3, -10.0, 0.05);
  CHECK_FALSE(weak.valid);
  CHECK(weak.value >= 0.0);
}

}
