#include "cavlat/bandstructure.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace cavlat {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

struct QSolution {
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;  // columns are eigenvectors, rows l = -L..L
};

// Plane-wave Hamiltonian at quasimomentum q: diagonal (q + 2l)^2 + V0/2, off-diagonal V0/4.
QSolution solve_at(double q, double v0, int cutoff, bool with_vectors) {
  const int size = 2 * cutoff + 1;
  Eigen::VectorXd diag(size);
  Eigen::VectorXd sub = Eigen::VectorXd::Constant(size - 1, 0.25 * v0);
  for (int i = 0; i < size; ++i) {
    const double k = q + 2.0 * static_cast<double>(i - cutoff);
    diag(i) = k * k + 0.5 * v0;
  }
  // computeFromTridiagonal does not rescale its input the way compute() does;
  // unscaled entries in the thousands stall the QL iteration.
  const double scale = std::max(diag.cwiseAbs().maxCoeff(), std::abs(0.25 * v0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag / scale, sub / scale,
                            with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("tridiagonal eigensolver failed");
  QSolution out{es.eigenvalues() * scale, {}};
  if (with_vectors) {
    out.vectors = es.eigenvectors();
    for (int c = 0; c < size; ++c) {
      Eigen::Index imax = 0;
      out.vectors.col(c).cwiseAbs().maxCoeff(&imax);
      if (out.vectors(imax, c) < 0.0) out.vectors.col(c) *= -1.0;
    }
  }
  return out;
}

// <u| cos^2 |u> = 1/2 + 1/2 sum_l c_l c_{l+1} for real coefficients.
double cos2_expectation(const Eigen::Ref<const Eigen::VectorXd>& c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < c.size(); ++i) s += c(i) * c(i + 1);
  return 0.5 + 0.5 * s;
}

void check_cutoff(const LatticeProblem& p, int max_band) {
  auto top_band_moves = [&](int cutoff) {
    double worst = 0.0;
    for (double q : {0.0, 1.0}) {
      const auto a = solve_at(q, p.depth_v0, cutoff, false);
      const auto b = solve_at(q, p.depth_v0, cutoff + 4, false);
      worst = std::max(worst, std::abs(a.energies(max_band) - b.energies(max_band)));
    }
    return worst;
  };
  if (top_band_moves(p.plane_wave_cutoff) < 1e-10) return;
  int suggestion = p.plane_wave_cutoff + 4;
  while (suggestion < 1024 && top_band_moves(suggestion) >= 1e-10) suggestion += 4;
  throw ConvergenceError("plane-wave cutoff L=" + std::to_string(p.plane_wave_cutoff) +
                         " not converged for band " + std::to_string(max_band) +
                         " at depth " + std::to_string(p.depth_v0) + "; use L >= " +
                         std::to_string(suggestion));
}

void check_band_request(const LatticeProblem& p, int max_band) {
  if (max_band < 0) throw DomainError("band index must be non-negative");
  if (max_band >= 2 * p.plane_wave_cutoff)
    throw DomainError("band " + std::to_string(max_band) + " requires plane_wave_cutoff > " +
                      std::to_string(max_band / 2));
}

}  // namespace

void LatticeProblem::validate() const {
  if (depth_v0 > 0.0 || !std::isfinite(depth_v0))
    throw DomainError("lattice depth V0 must be finite and <= 0");
  if (plane_wave_cutoff < 1) throw DomainError("plane_wave_cutoff must be >= 1");
  if (q_grid_size < 2) throw DomainError("q_grid_size must be >= 2");
}

std::vector<double> LatticeProblem::q_grid() const {
  std::vector<double> q(static_cast<std::size_t>(q_grid_size));
  for (int k = 0; k < q_grid_size; ++k)
    q[static_cast<std::size_t>(k)] = -1.0 + 2.0 * static_cast<double>(k + 1) / q_grid_size;
  return q;
}

double BlochSolution::band_average_energy() const {
  double s = 0.0;
  for (double e : energies) s += e;
  return s / static_cast<double>(energies.size());
}

double BlochSolution::bunching() const {
  double s = 0.0;
  for (const auto& c : coefficients)
    s += cos2_expectation(Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
  return s / static_cast<double>(coefficients.size());
}

std::vector<BlochSolution> solve_bloch(const LatticeProblem& problem, int max_band) {
  problem.validate();
  check_band_request(problem, max_band);
  check_cutoff(problem, max_band);
  const auto qs = problem.q_grid();
  std::vector<BlochSolution> bands(static_cast<std::size_t>(max_band + 1));
  for (int m = 0; m <= max_band; ++m) {
    auto& b = bands[static_cast<std::size_t>(m)];
    b.band = m;
    b.q = qs;
    b.energies.reserve(qs.size());
    b.coefficients.reserve(qs.size());
  }
  for (double q : qs) {
    const auto sol = solve_at(q, problem.depth_v0, problem.plane_wave_cutoff, true);
    for (int m = 0; m <= max_band; ++m) {
      auto& b = bands[static_cast<std::size_t>(m)];
      b.energies.push_back(sol.energies(m));
      const auto col = sol.vectors.col(m);
      b.coefficients.emplace_back(col.data(), col.data() + col.size());
    }
  }
  return bands;
}

namespace {

// Solves (T - mu) x = y in place for the plane-wave matrix T at quasimomentum q
// (diagonal (q + 2l)^2 + V0/2, constant off-diagonal V0/4), Gaussian elimination
// with partial pivoting.
class ShiftedTridiagonal {
public:
  ShiftedTridiagonal(const Eigen::VectorXd& diag, double off, double mu, double tiny)
      : n_(diag.size()), d_(diag.array() - mu), dl_(Eigen::VectorXd::Constant(n_, off)),
        du_(Eigen::VectorXd::Constant(n_, off)), du2_(Eigen::VectorXd::Zero(n_)), swap_(n_, false) {
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      if (std::abs(d_(i)) >= std::abs(dl_(i))) {
        if (d_(i) == 0.0) d_(i) = tiny;
        const double f = dl_(i) / d_(i);
        dl_(i) = f;
        d_(i + 1) -= f * du_(i);
      } else {
        const double f = d_(i) / dl_(i);
        d_(i) = dl_(i);
        dl_(i) = f;
        const double t = du_(i);
        du_(i) = d_(i + 1);
        d_(i + 1) = t - f * d_(i + 1);
        if (i + 2 < n_) {
          du2_(i) = du_(i + 1);
          du_(i + 1) = -f * du_(i + 1);
        }
        swap_[static_cast<std::size_t>(i)] = true;
      }
    }
    if (d_(n_ - 1) == 0.0) d_(n_ - 1) = tiny;
  }

  void solve(Eigen::VectorXd& y) const {
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      if (swap_[static_cast<std::size_t>(i)]) {
        const double t = y(i);
        y(i) = y(i + 1);
        y(i + 1) = t - dl_(i) * y(i);
      } else {
        y(i + 1) -= dl_(i) * y(i);
      }
    }
    y(n_ - 1) /= d_(n_ - 1);
    if (n_ > 1) y(n_ - 2) = (y(n_ - 2) - du_(n_ - 2) * y(n_ - 1)) / d_(n_ - 2);
    for (Eigen::Index i = n_ - 3; i >= 0; --i)
      y(i) = (y(i) - du_(i) * y(i + 1) - du2_(i) * y(i + 2)) / d_(i);
  }

private:
  Eigen::Index n_;
  Eigen::VectorXd d_, dl_, du_, du2_;
  std::vector<bool> swap_;
};

// Bands 0..max_band at q: eigenvalues by QL, eigenvectors by inverse iteration
// (re-orthogonalized inside clusters of close eigenvalues).
QSolution solve_low_bands(double q, double v0, int cutoff, int max_band) {
  const QSolution all = solve_at(q, v0, cutoff, false);
  const Eigen::Index size = 2 * cutoff + 1, nb = max_band + 1;
  Eigen::VectorXd diag(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const double k = q + 2.0 * static_cast<double>(i - cutoff);
    diag(i) = k * k + 0.5 * v0;
  }
  const double scale = std::max(diag.cwiseAbs().maxCoeff(), std::abs(0.25 * v0));
  const double tiny = 1e-15 * scale;
  QSolution out{all.energies.head(nb), Eigen::MatrixXd(size, nb)};
  for (Eigen::Index m = 0; m < nb; ++m) {
    const ShiftedTridiagonal lu(diag, 0.25 * v0, out.energies(m), tiny);
    Eigen::VectorXd x(size);
    for (Eigen::Index i = 0; i < size; ++i) x(i) = 1.0 + 0.1 * std::sin(1.7 * static_cast<double>(i + m));
    for (int it = 0; it < 3; ++it) {
      lu.solve(x);
      for (Eigen::Index k = 0; k < m; ++k)
        if (std::abs(out.energies(k) - out.energies(m)) < 1e-8 * scale)
          x -= out.vectors.col(k).dot(x) * out.vectors.col(k);
      x.normalize();
    }
    out.vectors.col(m) = x;
  }
  return out;
}

}  // namespace

namespace {

struct BandAverages {
  Eigen::ArrayXd bunching, energy;
};

// Brillouin-zone averages of b_m(q) and E_m(q) over q in [0, 1] (both are even in q).
// Shallow lattices mix plane waves within a narrow window around q = 0 and q = 1,
// which a uniform q grid resolves only algebraically; adaptive Gauss-Kronrod
// bisection concentrates nodes there.
BandAverages band_averages(double v0, int cutoff, int max_band) {
  using Kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
  using Gauss = boost::math::quadrature::gauss<double, 7>;
  const Eigen::Index nb = max_band + 1;
  constexpr double kTol = 1e-11;        // on the summed error estimate
  constexpr std::size_t kMaxIntervals = 400;

  struct Interval {
    double a, b;
    Eigen::ArrayXd bunching, energy;
    double err;
  };
  const auto& x = Kronrod::abscissa();
  const auto& wk = Kronrod::weights();
  const auto& wg = Gauss::weights();
  auto integrate = [&](double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Interval iv{a, b, Eigen::ArrayXd::Zero(nb), Eigen::ArrayXd::Zero(nb), 0.0};
    Eigen::ArrayXd gb = Eigen::ArrayXd::Zero(nb), ge = Eigen::ArrayXd::Zero(nb), fb(nb);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int sign : {+1, -1}) {
        if (i == 0 && sign < 0) continue;
        // q = (1 - cos(pi u)) / 2 stretches the neighbourhoods of q = 0 and q = 1.
        const double u = mid + sign * half * x[i];
        const double q = 0.5 * (1.0 - std::cos(kPi * u)), jac = 0.5 * kPi * std::sin(kPi * u);
        const QSolution sol = solve_low_bands(q, v0, cutoff, max_band);
        for (Eigen::Index m = 0; m < nb; ++m) fb(m) = jac * cos2_expectation(sol.vectors.col(m));
        const Eigen::ArrayXd fe = jac * sol.energies.array();
        iv.bunching += wk[i] * fb;
        iv.energy += wk[i] * fe;
        if (i % 2 == 0) {
          gb += wg[i / 2] * fb;
          ge += wg[i / 2] * fe;
        }
      }
    }
    iv.bunching *= half;
    iv.energy *= half;
    gb *= half;
    ge *= half;
    // Energies are compared on the scale of their mean over the interval.
    iv.err = std::max((iv.bunching - gb).abs().maxCoeff(),
                      ((iv.energy - ge).abs() / (iv.energy.abs() / (2.0 * half)).max(1.0)).maxCoeff());
    return iv;
  };

  auto worse = [](const Interval& l, const Interval& r) { return l.err < r.err; };
  std::vector<Interval> heap{integrate(0.0, 1.0)};
  double total = heap.front().err;
  while (total > kTol && heap.size() < kMaxIntervals) {
    std::pop_heap(heap.begin(), heap.end(), worse);
    const Interval top = std::move(heap.back());
    heap.pop_back();
    const double mid = 0.5 * (top.a + top.b);
    if (!(mid > top.a && mid < top.b)) {
      heap.push_back(top);
      std::push_heap(heap.begin(), heap.end(), worse);
      break;
    }
    total -= top.err;
    for (auto&& half : {integrate(top.a, mid), integrate(mid, top.b)}) {
      total += half.err;
      heap.push_back(half);
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }
  BandAverages out{Eigen::ArrayXd::Zero(nb), Eigen::ArrayXd::Zero(nb)};
  for (const auto& iv : heap) {
    out.bunching += iv.bunching;
    out.energy += iv.energy;
  }
  return out;
}

}  // namespace

BandSummary band_summary(const LatticeProblem& problem, int max_band) {
  problem.validate();
  check_band_request(problem, max_band);
  check_cutoff(problem, max_band);
  const std::size_t nb = static_cast<std::size_t>(max_band + 1);
  BandSummary out;
  out.depth_v0 = problem.depth_v0;
  out.bunching.assign(nb, 0.5);
  out.average_energy.assign(nb, 0.0);
  out.bunching_q0.assign(nb, 0.5);
  out.energy_q0.assign(nb, 0.0);
  const BandAverages avg = band_averages(problem.depth_v0, problem.plane_wave_cutoff, max_band);
  for (std::size_t m = 0; m < nb; ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    if (problem.depth_v0 != 0.0) out.bunching[m] = avg.bunching(i);
    out.average_energy[m] = avg.energy(i);
  }
  const auto centre = solve_at(0.0, problem.depth_v0, problem.plane_wave_cutoff, true);
  for (std::size_t m = 0; m < nb; ++m) {
    out.energy_q0[m] = centre.energies(static_cast<Eigen::Index>(m));
    if (problem.depth_v0 != 0.0)
      out.bunching_q0[m] = cos2_expectation(centre.vectors.col(static_cast<Eigen::Index>(m)));
  }
  return out;
}

double bunching_parameter(const LatticeProblem& problem, int m) {
  problem.validate();
  check_band_request(problem, m);
  if (problem.depth_v0 == 0.0) return 0.5;
  return band_summary(problem, m).bunching[static_cast<std::size_t>(m)];
}

namespace {

struct PhaseChoice {
  double center = 0.0;
  PhaseConvention convention = PhaseConvention::kValue;
  double quality = 0.0;  // smallest normalized |reference| over the q grid
};

// Reference quantity whose phase is removed: psi_q(x0) or psi_q'(x0), scaled to O(1).
cplx reference_value(const std::vector<double>& c, double q, int cutoff, double x0,
                     PhaseConvention conv) {
  cplx acc{0.0, 0.0};
  double k2 = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double k = q + 2.0 * (static_cast<double>(i) - cutoff);
    const cplx e = std::polar(1.0, k * x0);
    if (conv == PhaseConvention::kValue) {
      acc += c[i] * e;
    } else {
      acc += cplx{0.0, k} * c[i] * e;
      k2 += k * k * c[i] * c[i];
    }
  }
  if (conv == PhaseConvention::kSlope) acc /= std::sqrt(std::max(k2, 1e-300));
  return acc;
}

PhaseChoice evaluate_choice(const BlochSolution& band, int cutoff, double x0, PhaseConvention conv) {
  PhaseChoice ch{x0, conv, 1e300};
  for (std::size_t i = 0; i < band.q.size(); ++i)
    ch.quality = std::min(ch.quality,
                          std::abs(reference_value(band.coefficients[i], band.q[i], cutoff, x0, conv)));
  return ch;
}

}  // namespace

WannierBand build_wannier(const LatticeProblem& problem, int m, int window_periods,
                          int samples_per_period) {
  problem.validate();
  if (problem.depth_v0 == 0.0)
    throw DomainError("Wannier construction is degenerate for a flat potential (depth 0)");
  if (window_periods < 1 || samples_per_period < 4 || samples_per_period % 2 != 0)
    throw DomainError("window needs >= 1 period and an even number (>= 4) of samples per period");
  if (window_periods >= problem.q_grid_size)
    throw DomainError("window must be shorter than the q-grid supercell");
  const auto bands = solve_bloch(problem, m);
  const BlochSolution& band = bands.back();
  const int cutoff = problem.plane_wave_cutoff;

  // Even bands are fixed by their value at the well center, odd bands by the
  // slope. A node of the reference quantity somewhere in the zone means the
  // Wannier function sits on the other inversion center (the potential maximum).
  const PhaseConvention preferred = (m % 2 == 0) ? PhaseConvention::kValue : PhaseConvention::kSlope;
  PhaseChoice choice = evaluate_choice(band, cutoff, 0.0, preferred);
  constexpr double kNodeThreshold = 1e-3;
  if (choice.quality < kNodeThreshold) {
    for (double x0 : {0.0, kPi / 2.0}) {
      for (PhaseConvention conv : {PhaseConvention::kValue, PhaseConvention::kSlope}) {
        const PhaseChoice alt = evaluate_choice(band, cutoff, x0, conv);
        if (alt.quality > choice.quality) choice = alt;
      }
    }
    if (choice.quality < 1e-8)
      throw ConvergenceError("no node-free phase reference for band " + std::to_string(m));
  }

  const std::size_t nq = band.q.size();
  const int spp = samples_per_period;
  // Periodic parts u_q(x) on one period, already multiplied by the gauge phase.
  std::vector<cplx> periodic(nq * static_cast<std::size_t>(spp));
  const double dx = kPi / spp;
  for (std::size_t iq = 0; iq < nq; ++iq) {
    const double q = band.q[iq];
    const auto& c = band.coefficients[iq];
    const cplx ref = reference_value(c, q, cutoff, choice.center, choice.convention);
    const cplx gauge = std::conj(ref) / std::abs(ref);
    for (int s = 0; s < spp; ++s) {
      const double x = s * dx;
      cplx u{0.0, 0.0};
      for (std::size_t i = 0; i < c.size(); ++i)
        u += c[i] * std::polar(1.0, 2.0 * (static_cast<double>(i) - cutoff) * x);
      periodic[iq * static_cast<std::size_t>(spp) + static_cast<std::size_t>(s)] = gauge * u;
    }
  }

  WannierBand out;
  out.m = m;
  out.center = choice.center;
  out.phase = choice.convention;
  out.bunching_bloch = band.bunching();
  out.band_avg_energy = band.band_average_energy();
  out.bound = out.band_avg_energy < 0.0;

  const int half = window_periods * spp / 2;
  const int centre_index = static_cast<int>(std::lround(choice.center / dx));
  std::vector<cplx> samples;
  samples.reserve(static_cast<std::size_t>(2 * half + 1));
  for (int i = centre_index - half; i <= centre_index + half; ++i) {
    const double x = i * dx;
    const int s = ((i % spp) + spp) % spp;
    cplx acc{0.0, 0.0};
    for (std::size_t iq = 0; iq < nq; ++iq)
      acc += std::polar(1.0, band.q[iq] * x) * periodic[iq * static_cast<std::size_t>(spp) + static_cast<std::size_t>(s)];
    out.x.push_back(x);
    samples.push_back(acc);
  }
  double norm = 0.0;
  for (const cplx& v : samples) norm += std::norm(v) * dx;
  const double scale = 1.0 / std::sqrt(norm);
  double weighted = 0.0;
  out.w.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const cplx v = samples[i] * scale;
    out.w.push_back(v.real());
    out.max_imag = std::max(out.max_imag, std::abs(v.imag()));
    const double c = std::cos(out.x[i]);
    weighted += std::norm(v) * c * c * dx;
  }
  out.bunching = weighted;
  return out;
}

HarmonicBunching harmonic_bunching(int n_ho, double u0, double n_mean) {
  if (n_ho < 0) throw DomainError("oscillator level must be non-negative");
  if (!(n_mean > 0.0)) throw DomainError("mean photon number must be positive");
  const double depth = std::abs(u0) * n_mean;
  if (depth == 0.0) return {0.0, false};
  const double raw = 1.0 - (2.0 * n_ho + 1.0) / (2.0 * std::sqrt(depth));
  HarmonicBunching out;
  out.valid = depth >= 1.0 && raw >= 0.0;
  out.value = std::clamp(raw, 0.0, 1.0);
  return out;
}

}  // namespace cavlat
