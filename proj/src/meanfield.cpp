#include "cavlat/meanfield.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
// Boost 1.74's pchip calls isnan unqualified.
namespace boost::math::interpolators { using std::isnan; }
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include "cavlat/ode.hpp"

namespace cavlat {

using cplx = std::complex<double>;

// ---------------------------------------------------------------- band cache

BandCache::BandCache(int max_band, int plane_wave_cutoff, int q_grid_size)
    : max_band_(max_band), cutoff_(plane_wave_cutoff), q_grid_(q_grid_size) {
  if (max_band < 0) throw DomainError("max_band must be non-negative");
}

BandSummary BandCache::summary(double depth_v0) {
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(depth_v0);
    if (it != entries_.end()) return it->second;
  }
  LatticeProblem p{depth_v0, cutoff_, q_grid_};
  BandSummary s = band_summary(p, max_band_);
  std::unique_lock lock(mutex_);
  return entries_.emplace(depth_v0, std::move(s)).first->second;
}

double BandCache::bunching(int m, double depth_v0) {
  if (m < 0 || m > max_band_)
    throw DomainError("band " + std::to_string(m) + " outside cached range 0.." +
                      std::to_string(max_band_));
  return summary(depth_v0).bunching[static_cast<std::size_t>(m)];
}

std::size_t BandCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

const char* to_string(BranchModel model) {
  return model == BranchModel::kHarmonic ? "harmonic" : "wannier";
}

// A repulsive lattice V0 cos^2(x), V0 > 0, is the attractive lattice -V0 cos^2
// shifted by half a period, so b(V0) = 1 - b(-V0).
double BunchingModel::operator()(double n) const {
  if (model == BranchModel::kHarmonic) return harmonic_bunching(level, u0, n).value;
  if (cache == nullptr) throw ContractViolation("Wannier bunching model needs a band cache");
  const double depth = u0 * n;
  if (depth > 0.0) return 1.0 - cache->bunching(level, -depth);
  return cache->bunching(level, depth);
}

bool BunchingModel::bound(double n) const {
  if (model == BranchModel::kHarmonic) return true;
  return cache->summary(-std::abs(u0 * n)).bound(level);
}

bool BunchingModel::valid(double n) const {
  if (model == BranchModel::kWannier) return true;
  return harmonic_bunching(level, u0, n).valid;
}

cplx field_steady_state(const ModelParams& params, double b) {
  params.validate();
  const double delta_eff = params.delta_c - params.u0 * b;
  return -params.eta / cplx(-params.kappa, delta_eff);
}

std::vector<double> NGridSpec::build(double eta, double kappa) const {
  const double hi = n_max.value_or(eta * eta / (kappa * kappa));
  if (points < 2) throw DomainError("n grid needs at least 2 points");
  if (!(n_min > 0.0)) throw DomainError("n grid lower end must be positive");
  if (!(hi > n_min)) return {};
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double f = static_cast<double>(i) / (points - 1);
    g[static_cast<std::size_t>(i)] =
        log_spacing ? n_min * std::pow(hi / n_min, f) : n_min + (hi - n_min) * f;
  }
  g.back() = hi;
  return g;
}

// ---------------------------------------------------------------- roots

namespace {

struct Residual {
  const BunchingModel& b_of_n;
  const ModelParams& params;

  double lorentzian(double b) const {
    const double d = params.delta_c - params.u0 * b;
    return params.eta * params.eta / (params.kappa * params.kappa + d * d);
  }
  double operator()(double n) const { return lorentzian(b_of_n(n)) - n; }
};

double refine_root(const Residual& f, double lo, double hi, double f_lo, double f_hi) {
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-14 * std::max(std::abs(a), std::abs(b)); };
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, tol, iters);
  const double fa = std::abs(f(r.first));
  const double fb = std::abs(f(r.second));
  return fa <= fb ? r.first : r.second;
}

// Minimizes s*F on [a, b] by golden section; returns the abscissa of the minimum.
double golden_min(const std::function<double(double)>& g, double a, double b, int iters = 60) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double g1 = g(x1), g2 = g(x2);
  for (int i = 0; i < iters && (b - a) > 1e-13 * b; ++i) {
    if (g1 < g2) {
      b = x2; x2 = x1; g2 = g1;
      x1 = b - r * (b - a); g1 = g(x1);
    } else {
      a = x1; x1 = x2; g1 = g2;
      x2 = a + r * (b - a); g2 = g(x2);
    }
  }
  return g1 < g2 ? x1 : x2;
}

void dedupe(std::vector<double>& roots, std::vector<bool>& tangent) {
  std::vector<std::size_t> order(roots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return roots[a] < roots[b]; });
  std::vector<double> r;
  std::vector<bool> t;
  for (auto i : order) {
    if (!r.empty() && std::abs(roots[i] - r.back()) <= 1e-9 * roots[i]) {
      t.back() = t.back() || tangent[i];
      continue;
    }
    r.push_back(roots[i]);
    t.push_back(tangent[i]);
  }
  roots = std::move(r);
  tangent = std::move(t);
}

}  // namespace

RootSearch solve_selfconsistent(const BunchingModel& b_of_n, const ModelParams& params,
                                const std::vector<double>& grid) {
  params.validate();
  RootSearch out;
  if (grid.size() < 2) return out;
  const Residual f{b_of_n, params};
  const std::size_t np = grid.size();
  std::vector<double> bs(np), fs(np);
  for (std::size_t i = 0; i < np; ++i) {
    bs[i] = b_of_n(grid[i]);
    fs[i] = f.lorentzian(bs[i]) - grid[i];
  }

  std::vector<double> roots;
  std::vector<bool> tangent;
  auto add = [&](double n, bool t) { roots.push_back(n); tangent.push_back(t); };

  for (std::size_t i = 0; i < np; ++i)
    if (fs[i] == 0.0) add(grid[i], false);

  // Monotone interpolant of b(log n) used to look for sign-change pairs hidden
  // inside a single grid interval.
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> interp;
  if (np >= 4) {
    std::vector<double> lx(np), yb(bs);
    for (std::size_t i = 0; i < np; ++i) lx[i] = std::log(grid[i]);
    interp.emplace(std::move(lx), std::move(yb));
  }
  constexpr int kSub = 8;

  for (std::size_t i = 0; i + 1 < np; ++i) {
    const double a = grid[i], b = grid[i + 1];
    if (fs[i] * fs[i + 1] < 0.0) {
      add(refine_root(f, a, b, fs[i], fs[i + 1]), false);
      continue;
    }
    if (!interp || fs[i] == 0.0 || fs[i + 1] == 0.0) continue;
    // Interpolated residual on interior sub-points.
    std::vector<double> xs{a}, fx{fs[i]};
    bool hidden = false;
    for (int k = 1; k < kSub; ++k) {
      const double x = a * std::pow(b / a, static_cast<double>(k) / kSub);
      const double fi = f.lorentzian((*interp)(std::log(x))) - x;
      if (fi * fs[i] < 0.0) hidden = true;
      xs.push_back(x);
      fx.push_back(fi);
    }
    if (!hidden) continue;
    // Confirm with exact evaluations at the same sub-points.
    for (std::size_t k = 1; k < xs.size(); ++k) fx[k] = f(xs[k]);
    xs.push_back(b);
    fx.push_back(fs[i + 1]);
    bool confirmed = false;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      if (fx[k] == 0.0 && k > 0) { add(xs[k], false); confirmed = true; }
      if (fx[k] * fx[k + 1] < 0.0) {
        add(refine_root(f, xs[k], xs[k + 1], fx[k], fx[k + 1]), false);
        confirmed = true;
      }
    }
    if (!confirmed) {
      std::ostringstream msg;
      msg << "interpolation suggests adjacent roots in n in (" << a << ", " << b
          << ") that exact evaluation did not confirm; refine the n grid";
      out.warnings.push_back(msg.str());
    }
  }

  // Slope heuristic: a grid point where |F| has a local minimum without a sign
  // change may hide a close root pair or a tangency.
  for (std::size_t i = 1; i + 1 < np; ++i) {
    if (fs[i] == 0.0 || fs[i - 1] * fs[i] <= 0.0 || fs[i] * fs[i + 1] <= 0.0) continue;
    const double ai = std::abs(fs[i]);
    if (!(ai < std::abs(fs[i - 1]) && ai < std::abs(fs[i + 1]))) continue;
    const double variation = std::max(std::abs(fs[i - 1] - fs[i]), std::abs(fs[i + 1] - fs[i]));
    if (ai > 0.5 * variation) continue;
    const double s = fs[i] > 0.0 ? 1.0 : -1.0;
    auto g = [&](double n) { return s * f(n); };
    const double xm = golden_min(g, grid[i - 1], grid[i + 1]);
    const double fm = f(xm);
    if (fm * fs[i] < 0.0) {
      add(refine_root(f, grid[i - 1], xm, fs[i - 1], fm), false);
      add(refine_root(f, xm, grid[i + 1], fm, fs[i + 1]), false);
    } else if (std::abs(fm) <= 1e-8 * xm) {
      add(xm, true);
    }
  }

  dedupe(roots, tangent);
  for (std::size_t r = 0; r < roots.size(); ++r) {
    SelfConsistentBranch br;
    br.band = b_of_n.level;
    br.model = b_of_n.model;
    br.delta_c = params.delta_c;
    br.n_mean = roots[r];
    br.b = b_of_n(br.n_mean);
    br.delta_eff = params.delta_c - params.u0 * br.b;
    br.bound = b_of_n.bound(br.n_mean);
    br.valid = b_of_n.valid(br.n_mean);
    br.marginal = tangent[r];
    out.branches.push_back(br);
  }
  classify_branches(out.branches, params, b_of_n);
  return out;
}

RootSearch solve_selfconsistent_harmonic(int n_ho, const ModelParams& params, int grid_points) {
  if (params.u0 == 0.0) throw DomainError("harmonic self-consistency needs U0 != 0");
  if (n_ho < 0) throw DomainError("n_ho must be non-negative");
  NGridSpec spec;
  spec.points = grid_points;
  BunchingModel model{BranchModel::kHarmonic, n_ho, params.u0, nullptr};
  RootSearch rs = solve_selfconsistent(model, params, spec.build(params.eta, params.kappa));
  for (const auto& br : rs.branches) {
    if (!br.valid) {
      std::ostringstream msg;
      msg << "root n=" << br.n_mean << " lies outside the oscillator validity range";
      rs.warnings.push_back(msg.str());
    }
  }
  return rs;
}

RootSearch solve_selfconsistent_wannier(int m, const ModelParams& params, BandCache& cache,
                                        const NGridSpec& grid) {
  if (m < 0 || m > cache.max_band()) throw DomainError("band index outside the band cache");
  BunchingModel model{BranchModel::kWannier, m, params.u0, &cache};
  return solve_selfconsistent(model, params, grid.build(params.eta, params.kappa));
}

// ---------------------------------------------------------------- contour

std::vector<ContourPoint> trace_contour(const BunchingModel& b_of_n, double eta, double kappa,
                                        const NGridSpec& grid) {
  if (!(kappa > 0.0) || eta < 0.0) throw DomainError("need kappa > 0 and eta >= 0");
  std::vector<ContourPoint> out;
  const double apex = eta * eta / (kappa * kappa);
  for (double n : grid.build(eta, kappa)) {
    if (n > apex * (1.0 + 1e-14)) continue;
    double rad = eta * eta / n - kappa * kappa;
    if (rad < 0.0) rad = 0.0;
    const double r = std::sqrt(rad);
    const double b = b_of_n(n);
    for (int sign : {+1, -1}) {
      ContourPoint p;
      p.n = n;
      p.b = b;
      p.sign = sign;
      p.delta_c = b_of_n.u0 * b + sign * r;
      ModelParams mp{eta, p.delta_c, b_of_n.u0, kappa};
      SelfConsistentBranch br;
      br.n_mean = n;
      br.b = b;
      br.delta_c = p.delta_c;
      br.delta_eff = sign * r;
      br.band = b_of_n.level;
      br.model = b_of_n.model;
      if (b_of_n.u0 == 0.0) {
        p.slope = 0.0;
        p.stable = true;
      } else {
        const auto a = stability_matrix(mp, br, std::cref(b_of_n));
        const auto rep = classify_stability(a, mp);
        p.slope = rep.slope;
        p.stable = rep.stable;
      }
      out.push_back(p);
      if (r == 0.0) break;  // apex: both signs coincide
    }
  }
  return out;
}

// ---------------------------------------------------------------- stability

double lorentzian_slope(const ModelParams& params, double delta_eff, double d) {
  const double den = params.kappa * params.kappa + delta_eff * delta_eff;
  return -2.0 * params.eta * params.eta * delta_eff * d / (den * den);
}

StabilityMatrix stability_matrix(const ModelParams& params, const SelfConsistentBranch& branch,
                                 const std::function<double(double)>& b_of_n) {
  params.validate();
  const double n = branch.n_mean;
  const double h = 1e-3 * n;
  if (!(n > 0.0) || !(h > 0.0) || n - h == n || n + h == n)
    throw DomainError("finite-difference step underflows at n = " + std::to_string(n));
  auto central = [&](double step) { return (b_of_n(n + step) - b_of_n(n - step)) / (2.0 * step); };
  const double d1 = central(h);
  const double d2 = central(0.5 * h);
  const double db = (4.0 * d2 - d1) / 3.0;

  StabilityMatrix out;
  out.d_delta_eff_dn = -params.u0 * db;
  out.fd_discrepancy = std::abs(params.u0) * std::abs(d1 - d2);
  out.delta_eff = params.delta_c - params.u0 * branch.b;
  out.alpha_ss = field_steady_state(params, branch.b);
  out.n_ss = std::norm(out.alpha_ss);

  const double dd = out.d_delta_eff_dn;
  const double shifted = out.delta_eff + dd * out.n_ss;
  const cplx a2 = out.alpha_ss * out.alpha_ss;
  const cplx i(0.0, 1.0);
  out.a(0, 0) = cplx(-params.kappa, shifted);
  out.a(1, 1) = cplx(-params.kappa, -shifted);
  out.a(0, 1) = i * dd * a2;
  out.a(1, 0) = -i * dd * std::conj(a2);
  return out;
}

StabilityReport classify_stability(const StabilityMatrix& a, const ModelParams& params) {
  StabilityReport r;
  r.trace = (a.a(0, 0) + a.a(1, 1)).real();
  const cplx det = a.a(0, 0) * a.a(1, 1) - a.a(0, 1) * a.a(1, 0);
  r.determinant = det.real();
  r.det_imag = det.imag();
  r.slope = lorentzian_slope(params, a.delta_eff, a.d_delta_eff_dn);

  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(a.a, false);
  r.lambda1 = es.eigenvalues()(0);
  r.lambda2 = es.eigenvalues()(1);
  if (r.lambda1.real() < r.lambda2.real()) std::swap(r.lambda1, r.lambda2);

  r.eigen_verdict = r.lambda1.real() < 0.0 && r.lambda2.real() < 0.0;
  r.det_verdict = r.trace < 0.0 && r.determinant > 0.0;
  r.slope_verdict = r.slope < 1.0;
  r.consistent = r.eigen_verdict == r.det_verdict && r.det_verdict == r.slope_verdict;
  const bool near_boundary = std::abs(r.slope - 1.0) <= kMarginalBand;
  r.marginal = near_boundary || !r.consistent;
  r.stable = !r.marginal && r.slope_verdict;
  return r;
}

void classify_branches(std::vector<SelfConsistentBranch>& branches, const ModelParams& params,
                       const BunchingModel& b_of_n) {
  for (auto& br : branches) {
    const auto a = stability_matrix(params, br, std::cref(b_of_n));
    const auto rep = classify_stability(a, params);
    br.slope = rep.slope;
    br.marginal = br.marginal || rep.marginal;
    br.stable = rep.stable && !br.marginal;
  }
}

HeatingCheck heating_condition(int m, const ModelParams& params, double n, BandCache& cache) {
  params.validate();
  if (!(n >= 0.0)) throw DomainError("photon number must be non-negative");
  if (m < 0 || m + 2 > cache.max_band()) throw DomainError("bands m and m+2 must be cached");
  HeatingCheck h;
  const double depth = -std::abs(params.u0 * n);
  double bm, bm2;
  if (depth == 0.0) {
    bm = bm2 = 0.5;
    h.free_limit_used = true;
    h.upper_band_bound = false;
  } else {
    const BandSummary s = cache.summary(depth);
    bm = s.bunching[static_cast<std::size_t>(m)];
    bm2 = s.bunching[static_cast<std::size_t>(m + 2)];
    if (params.u0 * n > 0.0) { bm = 1.0 - bm; bm2 = 1.0 - bm2; }
    h.upper_band_bound = s.bound(m + 2);
  }
  h.delta_eff_m = params.delta_c - params.u0 * bm;
  h.delta_eff_m2 = params.delta_c - params.u0 * bm2;
  const double lhs = h.delta_eff_m, rhs = -h.delta_eff_m2;
  const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
  h.marginal = std::abs(lhs - rhs) <= 1e-12 * scale;
  h.heats = !h.marginal && lhs > rhs;
  return h;
}

// ---------------------------------------------------------------- dynamics

std::vector<cplx> bloch_state_q0(int m, double depth_v0, int j_max) {
  if (j_max < 2) throw DomainError("j_max must be >= 2");
  const int cutoff = j_max / 2;
  const int size = 2 * cutoff + 1;
  if (m < 0 || m >= size) throw DomainError("band index exceeds the momentum basis");
  Eigen::VectorXd diag(size);
  Eigen::VectorXd sub = Eigen::VectorXd::Constant(size - 1, 0.25 * depth_v0);
  for (int l = 0; l < size; ++l) {
    const double k = 2.0 * (l - cutoff);
    diag(l) = k * k + 0.5 * depth_v0;
  }
  const double scale = std::max(diag.cwiseAbs().maxCoeff(), std::abs(0.25 * depth_v0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag / scale, sub / scale, Eigen::ComputeEigenvectors);
  Eigen::VectorXd v = es.eigenvectors().col(m);
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0.0) v = -v;
  std::vector<cplx> psi(static_cast<std::size_t>(2 * j_max + 1), cplx(0.0, 0.0));
  for (int l = 0; l < size; ++l) {
    const int j = 2 * (l - cutoff);
    psi[static_cast<std::size_t>(j + j_max)] = v(l);
  }
  return psi;
}

namespace {

struct ParticleMoments {
  double norm = 0.0;
  double b = 0.0;
  double kinetic = 0.0;
};

ParticleMoments moments(std::span<const cplx> psi, int j_max) {
  ParticleMoments m;
  double cross = 0.0;
  const int size = 2 * j_max + 1;
  for (int k = 0; k < size; ++k) {
    const double p = std::norm(psi[static_cast<std::size_t>(k)]);
    const double j = k - j_max;
    m.norm += p;
    m.kinetic += j * j * p;
    if (k + 2 < size)
      cross += (std::conj(psi[static_cast<std::size_t>(k + 2)]) * psi[static_cast<std::size_t>(k)]).real();
  }
  m.b = 0.5 + 0.5 * cross / m.norm;
  m.kinetic /= m.norm;
  return m;
}

}  // namespace

std::vector<MeanFieldSample> integrate_meanfield(const MeanFieldState& initial,
                                                 const ModelParams& params, double t_final,
                                                 const MeanFieldOptions& options) {
  params.validate();
  if (!(options.sample_dt > 0.0)) throw DomainError("sample_dt must be positive");
  if (!(t_final >= 0.0)) throw DomainError("t_final must be non-negative");
  const bool adiabatic = static_cast<bool>(options.adiabatic_b);
  const int j_max = initial.j_max;
  const std::size_t np = static_cast<std::size_t>(2 * j_max + 1);
  if (!adiabatic) {
    if (initial.psi.size() != np)
      throw DimensionError("particle wavefunction must have 2*j_max+1 amplitudes");
    double nrm = 0.0;
    for (const auto& c : initial.psi) nrm += std::norm(c);
    if (std::abs(nrm - 1.0) > 1e-10)
      throw ContractViolation("particle wavefunction must be normalized");
  }

  const std::size_t dim = adiabatic ? 1 : 1 + np;
  std::vector<cplx> y(dim);
  y[0] = initial.alpha;
  if (!adiabatic) std::copy(initial.psi.begin(), initial.psi.end(), y.begin() + 1);

  const double kappa = params.kappa, eta = params.eta, u0 = params.u0, dc = params.delta_c;
  ode::Rhs rhs = [&](double, std::span<const cplx> s, std::span<cplx> ds) {
    const cplx alpha = s[0];
    const double n = std::norm(alpha);
    double b;
    if (adiabatic) {
      b = options.adiabatic_b(n);
    } else {
      const auto psi = s.subspan(1);
      b = moments(psi, j_max).b;
      const double v = u0 * n;
      const int size = 2 * j_max + 1;
      for (int k = 0; k < size; ++k) {
        const double j = k - j_max;
        cplx h = (j * j + 0.5 * v) * psi[static_cast<std::size_t>(k)];
        if (k >= 2) h += 0.25 * v * psi[static_cast<std::size_t>(k - 2)];
        if (k + 2 < size) h += 0.25 * v * psi[static_cast<std::size_t>(k + 2)];
        ds[1 + static_cast<std::size_t>(k)] = cplx(h.imag(), -h.real());  // -i h
      }
    }
    ds[0] = cplx(-kappa, dc - u0 * b) * alpha + eta;
  };

  auto sample = [&](double t) {
    MeanFieldSample s;
    s.t = t;
    s.alpha = y[0];
    s.n = std::norm(y[0]);
    if (adiabatic) {
      s.b = options.adiabatic_b(s.n);
      s.norm = 1.0;
    } else {
      const auto m = moments(std::span<const cplx>(y).subspan(1), j_max);
      s.b = m.b;
      s.kinetic_energy = m.kinetic;
      s.norm = m.norm;
    }
    return s;
  };

  ode::DormandPrince dp(dim, ode::Tolerance{options.rtol, 0.0});
  std::vector<MeanFieldSample> out;
  const double t0 = initial.time;
  const long steps = static_cast<long>(std::floor(t_final / options.sample_dt + 1e-9));
  out.reserve(static_cast<std::size_t>(steps + 2));
  out.push_back(sample(t0));
  double h = 0.0;
  double t = t0;
  for (long k = 1; k <= steps; ++k) {
    const double tn = t0 + static_cast<double>(k) * options.sample_dt;
    h = dp.integrate(rhs, t, tn, y, h);
    t = tn;
    out.push_back(sample(t));
  }
  if (t < t0 + t_final - 1e-12) {
    dp.integrate(rhs, t, t0 + t_final, y, h);
    out.push_back(sample(t0 + t_final));
  }
  return out;
}

}  // namespace cavlat
