#include <doctest.h>

#include <cmath>
#include <complex>

#include "cavlat/meanfield.hpp"

using namespace cavlat;

namespace {

double residual(const ModelParams& p, const BunchingModel& b, double n) {
  const double d = p.delta_c - p.u0 * b(n);
  return p.eta * p.eta / (p.kappa * p.kappa + d * d) - n;
}

// Brute-force sign changes of the residual on a fine log grid.
int count_sign_changes(const ModelParams& p, const BunchingModel& b, int points) {
  NGridSpec spec;
  spec.points = points;
  const auto grid = spec.build(p.eta, p.kappa);
  int changes = 0;
  double prev = residual(p, b, grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = residual(p, b, grid[i]);
    if ((prev < 0.0) != (cur < 0.0)) ++changes;
    prev = cur;
  }
  return changes;
}

BandCache& shared_cache() {
  static BandCache cache(16, 32, 128);
  return cache;
}

}  // namespace

TEST_SUITE("meanfield") {

TEST_CASE("empty lattice: one stable root with the Lorentzian photon number") {
  const ModelParams p{2.0, -3.0, 0.0, 0.5};
  const auto a = field_steady_state(p, 0.37);
  CHECK(std::norm(a) == doctest::Approx(4.0 / (0.25 + 9.0)).epsilon(1e-14));
  CHECK(std::abs(a - (-2.0 / std::complex<double>(-0.5, -3.0))) < 1e-15);
  const auto rs = solve_selfconsistent_wannier(0, p, shared_cache());
  REQUIRE(rs.branches.size() == 1);
  CHECK(rs.branches[0].n_mean == doctest::Approx(std::norm(a)).epsilon(1e-12));
  CHECK(rs.branches[0].stable);
  CHECK(rs.branches[0].slope == 0.0);
}

TEST_CASE("oscillator roots: residuals vanish and the count matches a dense scan") {
  for (int n_ho : {0, 1, 3}) {
    for (double dc : {-25.0, -15.0, -10.0, -6.0, -2.0, 3.0}) {
      const ModelParams p{6.0, dc, -10.0, 1.0};
      const BunchingModel b{BranchModel::kHarmonic, n_ho, p.u0, nullptr};
      const auto rs = solve_selfconsistent_harmonic(n_ho, p);
      CAPTURE(n_ho);
      CAPTURE(dc);
      for (const auto& br : rs.branches)
        CHECK(std::abs(residual(p, b, br.n_mean)) <= 1e-10 * std::max(1.0, br.n_mean));
      CHECK(static_cast<int>(rs.branches.size()) == count_sign_changes(p, b, 200000));
    }
  }
}

TEST_CASE("fourth Wannier band is tristable with alternating stability") {
  const ModelParams p{6.0, -7.5, -10.0, 1.0};
  const auto rs = solve_selfconsistent_wannier(4, p, shared_cache());
  const BunchingModel b{BranchModel::kWannier, 4, p.u0, &shared_cache()};
  REQUIRE(rs.branches.size() == 3);
  CHECK(rs.branches[0].stable);
  CHECK_FALSE(rs.branches[1].stable);
  CHECK(rs.branches[2].stable);
  CHECK_FALSE(rs.branches[0].bound);
  CHECK(rs.branches[2].bound);
  for (const auto& br : rs.branches) CHECK(std::abs(residual(p, b, br.n_mean)) < 1e-10 * br.n_mean);
}

TEST_CASE("contour points are roots at their own detuning") {
  const BunchingModel b{BranchModel::kHarmonic, 0, -10.0, nullptr};
  NGridSpec grid;
  grid.points = 25;
  grid.n_min = 0.05;
  const auto pts = trace_contour(b, 6.0, 1.0, grid);
  REQUIRE(pts.size() > 20);
  for (const auto& pt : pts) {
    const ModelParams p{6.0, pt.delta_c, -10.0, 1.0};
    const auto rs = solve_selfconsistent_harmonic(0, p);
    bool found = false;
    for (const auto& br : rs.branches)
      if (std::abs(br.n_mean - pt.n) <= 1e-6 * pt.n) {
        found = true;
        CHECK(br.stable == pt.stable);
      }
    CAPTURE(pt.delta_c);
    CAPTURE(pt.n);
    CHECK(found);
  }
}

TEST_CASE("stability matrix: trace, determinant and slope identities") {
  const ModelParams p{6.0, -7.5, -10.0, 1.0};
  const BunchingModel b{BranchModel::kWannier, 4, p.u0, &shared_cache()};
  const auto rs = solve_selfconsistent_wannier(4, p, shared_cache());
  for (const auto& br : rs.branches) {
    const auto a = stability_matrix(p, br, std::cref(b));
    const auto r = classify_stability(a, p);
    const double k2d2 = p.kappa * p.kappa + a.delta_eff * a.delta_eff;
    CHECK(r.trace == -2.0 * p.kappa);
    CHECK(r.determinant == doctest::Approx(k2d2 * (1.0 - r.slope)).epsilon(1e-10));
    CHECK(std::abs(r.det_imag) < 1e-12 * k2d2);
    CHECK(r.consistent);
    CHECK(a.fd_discrepancy < 1e-5);
  }
  // Without back-action the eigenvalues are i Delta - kappa and its conjugate.
  const ModelParams free{3.0, -2.0, 0.0, 0.7};
  SelfConsistentBranch br;
  br.n_mean = 9.0 / (0.49 + 4.0);
  br.b = 0.5;
  const auto a = stability_matrix(free, br, [](double) { return 0.5; });
  const auto r = classify_stability(a, free);
  CHECK(r.stable);
  CHECK(r.lambda1.real() == doctest::Approx(-0.7));
  CHECK(std::abs(r.lambda1.imag()) == doctest::Approx(2.0));
}

TEST_CASE("heating condition compares Delta_eff of bands m and m+2") {
  BandCache& cache = shared_cache();
  const ModelParams p{6.0, -12.0, -10.0, 1.0};
  const auto h = heating_condition(0, p, 2.0, cache);
  const auto s = cache.summary(-20.0);
  CHECK(h.delta_eff_m == doctest::Approx(-12.0 + 10.0 * s.bunching[0]));
  CHECK(h.delta_eff_m2 == doctest::Approx(-12.0 + 10.0 * s.bunching[2]));
  CHECK(h.heats == (h.delta_eff_m > -h.delta_eff_m2));
  CHECK_FALSE(h.free_limit_used);
  const auto z = heating_condition(0, p, 0.0, cache);
  CHECK(z.free_limit_used);
  CHECK(z.delta_eff_m == -7.0);
  CHECK_FALSE(z.heats);
  CHECK_THROWS_AS(heating_condition(15, p, 1.0, cache), DomainError);
}

TEST_CASE("field dynamics without back-action relaxes as a driven damped mode") {
  const ModelParams p{2.0, -3.0, 0.0, 0.5};
  MeanFieldState s;
  s.j_max = 4;
  s.psi.assign(9, 0.0);
  s.psi[4] = 1.0;
  MeanFieldOptions opt;
  opt.rtol = 1e-11;
  opt.sample_dt = 0.5;
  const auto out = integrate_meanfield(s, p, 6.0, opt);
  const auto ass = field_steady_state(p, 0.5);
  const std::complex<double> lam(-0.5, -3.0);
  for (const auto& x : out) {
    const auto exact = ass * (1.0 - std::exp(lam * x.t));
    CHECK(std::abs(x.alpha - exact) < 1e-8);
    CHECK(x.norm == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("undriven field decays at 2 kappa") {
  const ModelParams p{0.0, -4.0, -10.0, 1.0};
  MeanFieldState s;
  s.alpha = {1.5, 0.5};
  s.j_max = 8;
  s.psi.assign(17, 0.0);
  s.psi[8] = 1.0;
  MeanFieldOptions opt;
  opt.rtol = 1e-11;
  opt.sample_dt = 0.25;
  const auto out = integrate_meanfield(s, p, 4.0, opt);
  for (const auto& x : out) CHECK(x.n == doctest::Approx(2.5 * std::exp(-2.0 * x.t)).epsilon(1e-8));
}

TEST_CASE("self-consistent q = 0 Bloch state is a fixed point") {
  const ModelParams p{3.0, -5.0, -10.0, 1.0};
  BandCache& cache = shared_cache();
  auto b_q0 = [&](double n) { return cache.summary(p.u0 * n).bunching_q0[0]; };
  auto f = [&](double n) {
    const double d = p.delta_c - p.u0 * b_q0(n);
    return p.eta * p.eta / (p.kappa * p.kappa + d * d) - n;
  };
  double lo = 1e-3, hi = 9.0;
  REQUIRE(f(lo) > 0.0);
  REQUIRE(f(hi) < 0.0);
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  const double n = 0.5 * (lo + hi);
  MeanFieldState s;
  s.alpha = field_steady_state(p, b_q0(n));
  s.j_max = 24;
  s.psi = bloch_state_q0(0, p.u0 * n, s.j_max);
  MeanFieldOptions opt;
  opt.rtol = 1e-11;
  opt.sample_dt = 1.0;
  const auto out = integrate_meanfield(s, p, 10.0, opt);
  for (const auto& x : out) {
    CHECK(std::abs(x.alpha - s.alpha) < 1e-7);
    CHECK(x.b == doctest::Approx(b_q0(n)).epsilon(1e-9));
  }
}

TEST_CASE("adiabatic mode follows the supplied bunching curve") {
  const ModelParams p{6.0, -7.5, -10.0, 1.0};
  const BunchingModel b{BranchModel::kHarmonic, 0, p.u0, nullptr};
  MeanFieldState s;
  s.alpha = {0.1, 0.0};
  MeanFieldOptions opt;
  opt.adiabatic_b = [&](double n) { return b(n); };
  opt.sample_dt = 1.0;
  const auto out = integrate_meanfield(s, p, 30.0, opt);
  const auto rs = solve_selfconsistent_harmonic(0, p);
  bool near_root = false;
  for (const auto& br : rs.branches)
    if (br.stable && std::abs(out.back().n - br.n_mean) < 1e-5 * br.n_mean) near_root = true;
  CHECK(near_root);
}

}
