#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cavlat/mcwf.hpp"

using namespace cavlat;

namespace {

TrajectoryConfig small_config() {
  TrajectoryConfig c;
  c.geometry = {6, 6, false};
  c.params = {1.0, -2.0, -2.0, 1.0};
  c.t_final = 4.0;
  c.sample_dt = 0.1;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_SUITE("mcwf") {

TEST_CASE("derived seeds are distinct and reproducible") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 10000);
  CHECK(derive_seed(42, 7) == derive_seed(42, 7));
  CHECK(derive_seed(42, 7) != derive_seed(43, 7));
}

TEST_CASE("a trajectory is a pure function of its config") {
  const auto c = small_config();
  const auto a = run_trajectory(c), b = run_trajectory(c);
  CHECK(a.n_mean == b.n_mean);
  CHECK(a.kinetic_energy == b.kinetic_energy);
  CHECK(a.jump_times == b.jump_times);
  CHECK(a.final_state == b.final_state);
  auto c2 = c;
  c2.seed = 18;
  CHECK(run_trajectory(c2).n_mean != a.n_mean);
  for (double d : a.norm_deviation) CHECK(d < 1e-12);
  CHECK(a.times.size() == 41);
  CHECK(a.times.back() == doctest::Approx(4.0));
}

TEST_CASE("ensemble statistics do not depend on the thread count") {
  const auto c = small_config();
  EnsembleOptions o;
  o.count = 24;
  o.base_seed = 5;
  o.threads = 1;
  const auto one = run_ensemble(c, o);
  o.threads = 4;
  const auto four = run_ensemble(c, o);
  CHECK(one.n_mean == four.n_mean);
  CHECK(one.n_se == four.n_se);
  CHECK(one.kinetic_mean == four.kinetic_mean);
  CHECK(one.jump_counts == four.jump_counts);
  CHECK(one.seeds == four.seeds);
  CHECK(one.seeds[3] == derive_seed(5, 3));
}

TEST_CASE("undriven cavity: one jump per photon and exponential jump times") {
  TrajectoryConfig c;
  c.geometry = {3, 4, false};
  c.params = {0.0, -1.0, -3.0, 1.0};
  c.initial_n = 3;
  c.t_final = 40.0;
  c.sample_dt = 0.5;
  c.seed = 2;
  const auto r = run_trajectory(c);
  CHECK(r.jump_times.size() == 3);
  CHECK(r.n_mean.back() == 0.0);

  // From |1, 0> the single jump time is exponential with rate 2 kappa.
  c.initial_n = 1;
  EnsembleOptions o;
  o.count = 400;
  o.base_seed = 99;
  o.threads = 2;
  std::vector<double> times;
  for (std::size_t i = 0; i < o.count; ++i) {
    c.seed = derive_seed(o.base_seed, i);
    const auto rec = run_trajectory(c);
    REQUIRE(rec.jump_times.size() == 1);
    times.push_back(rec.jump_times[0]);
  }
  std::sort(times.begin(), times.end());
  double d = 0.0;
  const double n = static_cast<double>(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double cdf = 1.0 - std::exp(-2.0 * c.params.kappa * times[i]);
    d = std::max({d, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  CHECK(d < 1.36 / std::sqrt(n));  // Kolmogorov-Smirnov at 5%
}

TEST_CASE("standard errors agree with a bootstrap") {
  const auto c = small_config();
  EnsembleOptions o;
  o.count = 200;
  o.base_seed = 8;
  o.threads = 2;
  const auto s = run_ensemble(c, o);
  const std::size_t k = 30;
  std::vector<double> x;
  for (const auto& series : s.n_series) x.push_back(series[k]);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  double m = 0.0, m2 = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += x[pick(rng)];
    const double v = sum / static_cast<double>(x.size());
    m += v;
    m2 += v * v;
  }
  m /= reps;
  const double boot = std::sqrt(m2 / reps - m * m);
  CHECK(s.n_se[k] == doctest::Approx(boot).epsilon(0.1));
}

TEST_CASE("time windows are half-open and need two samples") {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> v{10.0, 1.0, 2.0, 3.0, 4.0};
  const auto w = time_window_average(t, v, 1.0, 3.0);
  CHECK(w.samples == 2);
  CHECK(w.mean == 2.5);
  CHECK_THROWS_AS(time_window_average(t, v, 1.0, 2.0), DomainError);
  CHECK_THROWS_AS(time_window_average(t, {1.0}, 0.0, 4.0), DimensionError);

  const auto c = small_config();
  EnsembleOptions o;
  o.count = 10;
  const auto s = run_ensemble(c, o);
  const auto e = time_window_average(s, 2.0, 4.0, Observable::kPhotonNumber);
  CHECK(e.samples == 20);
  CHECK(e.trajectories == 10);
  CHECK(e.standard_error > 0.0);
  double direct = 0.0;
  for (const auto& series : s.n_series) direct += time_window_average(s.times, series, 2.0, 4.0).mean;
  CHECK(e.mean == doctest::Approx(direct / 10.0).epsilon(1e-12));
}

TEST_CASE("branch occupancy classifies samples by stable branch") {
  std::vector<SelfConsistentBranch> br(3);
  br[0].n_mean = 2.0;
  br[0].stable = true;
  br[1].n_mean = 10.0;
  br[1].stable = false;
  br[2].n_mean = 30.0;
  br[2].stable = true;
  const std::vector<double> n{2.1, 1.9, 29.0, 31.0, 33.0, 15.0, 0.1, 2.4};
  const auto occ = branch_occupancy(n, br);
  REQUIRE(occ.branch_n.size() == 2);
  CHECK(occ.fraction[0] == doctest::Approx(3.0 / 8.0));
  CHECK(occ.fraction[1] == doctest::Approx(3.0 / 8.0));
  CHECK(occ.transit == doctest::Approx(2.0 / 8.0));
  CHECK(occ.warnings.empty());

  br[2].n_mean = 2.6;
  const auto tight = branch_occupancy(n, br);
  CHECK_FALSE(tight.warnings.empty());
  CHECK(tight.half_width[0] <= 0.3 + 1e-12);
}

TEST_CASE("joint distributions are normalized and fold onto |j|") {
  auto c = small_config();
  c.snapshot_times = {2.0, 4.0};
  EnsembleOptions o;
  o.count = 6;
  const auto s = run_ensemble(c, o);
  for (bool fold : {false, true}) {
    const auto d = joint_distribution(s, 4.0, fold);
    double total = 0.0;
    for (const auto& row : d.p)
      for (double x : row) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(d.warning);
    CHECK(d.momenta.front() == (fold ? 0 : -6));
  }
  const auto off = joint_distribution(s, 3.1);
  CHECK(off.warning);
  CHECK(off.t == 4.0);
}

TEST_CASE("truncation is flagged when the boundary is populated") {
  auto c = small_config();
  c.geometry = {2, 4, false};
  c.params.eta = 3.0;
  const auto r = run_trajectory(c);
  CHECK(r.truncation_warning);
  CHECK(r.max_boundary_population > kTruncationWarningLevel);
  const auto ok = run_trajectory(small_config());
  CHECK(ok.max_boundary_population < 1e-3);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.initial_n = 7;
  CHECK_THROWS_AS(run_trajectory(c), DomainError);
  c = small_config();
  c.geometry.even_parity_only = true;
  c.initial_j = 1;
  CHECK_THROWS_AS(run_trajectory(c), DomainError);
  c = small_config();
  c.sample_dt = 0.0;
  CHECK_THROWS_AS(run_trajectory(c), DomainError);
}

}
