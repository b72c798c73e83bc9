#include <doctest.h>

#include <cmath>

#include "cavlat/mcwf.hpp"

using namespace cavlat;

TEST_SUITE("oracle") {

TEST_CASE("density matrix stays a state") {
  OracleConfig c;
  c.geometry = {3, 4, false};
  c.params = {1.0, -2.0, -2.0, 1.0};
  c.t_final = 10.0;
  c.sample_dt = 0.5;
  const auto s = integrate_master_equation(c);
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    CHECK(s.trace_deviation[i] < 1e-10);
    CHECK(s.hermiticity_error[i] < 1e-10);
    CHECK(s.odd_weight[i] < 1e-14);
  }
  CHECK(s.min_eigenvalue > -1e-10);
}

TEST_CASE("undriven decay is exponential") {
  OracleConfig c;
  c.geometry = {2, 4, false};
  c.params = {0.0, -1.0, -5.0, 0.8};
  c.initial_n = 2;
  c.t_final = 5.0;
  c.sample_dt = 0.25;
  const auto s = integrate_master_equation(c);
  for (std::size_t i = 0; i < s.times.size(); ++i)
    CHECK(s.n_mean[i] == doctest::Approx(2.0 * std::exp(-1.6 * s.times[i])).epsilon(1e-8));
}

TEST_CASE("empty lattice relaxes to the coherent steady state") {
  OracleConfig c;
  c.geometry = {8, 2, false};
  c.params = {0.5, -1.0, 0.0, 1.0};
  c.initial_n = 0;
  c.t_final = 20.0;
  c.sample_dt = 1.0;
  const auto s = integrate_master_equation(c);
  const auto a = field_steady_state(c.params, 0.5);
  CHECK(s.n_mean.back() == doctest::Approx(std::norm(a)).epsilon(1e-7));
  CHECK(std::abs(s.alpha.back() - a) < 1e-7);
}

TEST_CASE("refuses large truncations") {
  OracleConfig c;
  c.geometry = {20, 10, false};
  CHECK_THROWS_AS(integrate_master_equation(c), DomainError);
}

TEST_CASE("trajectory ensemble converges on the oracle") {
  OracleConfig oc;
  oc.geometry = {3, 4, false};
  oc.params = {1.0, -2.0, -2.0, 1.0};
  oc.t_final = 5.0;
  oc.sample_dt = 0.5;
  const auto rho = integrate_master_equation(oc);
  TrajectoryConfig tc;
  tc.geometry = oc.geometry;
  tc.params = oc.params;
  tc.t_final = oc.t_final;
  tc.sample_dt = oc.sample_dt;
  EnsembleOptions o;
  o.count = 400;
  o.base_seed = 2024;
  o.threads = 2;
  const auto e = run_ensemble(tc, o);
  for (std::size_t i = 1; i < rho.times.size(); ++i) {
    CHECK(std::abs(e.n_mean[i] - rho.n_mean[i]) < 4.0 * e.n_se[i]);
    CHECK(std::abs(e.kinetic_mean[i] - rho.kinetic_energy[i]) < 4.0 * e.kinetic_se[i]);
  }
}

}
