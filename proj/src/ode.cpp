#include "cavlat/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cavlat::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// b - b_hat
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;

double norm2(std::span<const cplx> v) {
  double s = 0.0;
  for (const cplx& c : v) s += std::norm(c);
  return std::sqrt(s);
}

}  // namespace

DormandPrince::DormandPrince(std::size_t dim, Tolerance tol)
    : dim_(dim), tol_(tol), k1_(dim), k2_(dim), k3_(dim), k4_(dim), k5_(dim), k6_(dim), k7_(dim),
      stage_(dim) {
  if (!(tol.rtol > 0.0) && !(tol.atol > 0.0))
    throw std::invalid_argument("integrator tolerance must be positive");
}

StepOutcome DormandPrince::attempt(const Rhs& f, double t, std::span<const cplx> y, double h,
                                   std::span<cplx> y_out) {
  const std::size_t n = dim_;
  if (!first_stage_valid_) {
    f(t, y, k1_);
    ++rhs_evals_;
    first_stage_valid_ = true;
  }
  cplx* s = stage_.data();
  const cplx* y0 = y.data();
  const cplx *k1 = k1_.data(), *k2 = k2_.data(), *k3 = k3_.data(), *k4 = k4_.data(),
             *k5 = k5_.data(), *k6 = k6_.data();

  for (std::size_t i = 0; i < n; ++i) s[i] = y0[i] + h * (a21 * k1[i]);
  f(t + c2 * h, stage_, k2_);
  for (std::size_t i = 0; i < n; ++i) s[i] = y0[i] + h * (a31 * k1[i] + a32 * k2[i]);
  f(t + c3 * h, stage_, k3_);
  for (std::size_t i = 0; i < n; ++i) s[i] = y0[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  f(t + c4 * h, stage_, k4_);
  for (std::size_t i = 0; i < n; ++i)
    s[i] = y0[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  f(t + c5 * h, stage_, k5_);
  for (std::size_t i = 0; i < n; ++i)
    s[i] = y0[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  f(t + h, stage_, k6_);
  cplx* yo = y_out.data();
  for (std::size_t i = 0; i < n; ++i)
    yo[i] = y0[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
  f(t + h, y_out, k7_);
  rhs_evals_ += 6;

  const cplx* k7 = k7_.data();
  double err_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    err_sq += std::norm(e);
  }
  return finish(h, err_sq, y, y_out);
}

StepOutcome DormandPrince::finish(double h, double err_sq, std::span<const cplx> y,
                                  std::span<const cplx> y_out) {
  double y_sq = 0.0, yo_sq = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    y_sq += std::norm(y[i]);
    yo_sq += std::norm(y_out[i]);
  }
  const double scale = tol_.atol + tol_.rtol * std::sqrt(std::max(y_sq, yo_sq));
  double err = std::sqrt(err_sq) / scale;
  if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();

  StepOutcome out;
  out.error = err;
  out.accepted = err <= 1.0;
  double factor;
  if (out.accepted) {
    factor = err == 0.0 ? kMaxFactor
                        : std::clamp(kSafety * std::pow(err, -0.2), kMinFactor, kMaxFactor);
    if (!last_step_ok_) factor = std::min(factor, 1.0);
  } else {
    factor = std::isfinite(err) ? std::max(kMinFactor, kSafety * std::pow(err, -0.2)) : kMinFactor;
  }
  last_step_ok_ = out.accepted;
  out.h_next = h * factor;
  return out;
}

void DormandPrince::commit() {
  std::swap(k1_, k7_);
  first_stage_valid_ = true;
}

double DormandPrince::initial_step(const Rhs& f, double t, std::span<const cplx> y) {
  std::vector<cplx> dy(dim_);
  f(t, y, dy);
  ++rhs_evals_;
  const double scale = tol_.atol + tol_.rtol * std::max(norm2(y), 1e-300);
  const double d0 = norm2(y) / scale;
  const double d1 = norm2(dy) / scale;
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  std::vector<cplx> y1(dim_), dy1(dim_);
  for (std::size_t i = 0; i < dim_; ++i) y1[i] = y[i] + h0 * dy[i];
  f(t + h0, y1, dy1);
  ++rhs_evals_;
  double diff = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) diff += std::norm(dy1[i] - dy[i]);
  const double d2 = std::sqrt(diff) / scale / h0;
  const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                              : std::pow(0.01 / std::max(d1, d2), 0.2);
  std::copy(dy.begin(), dy.end(), k1_.begin());
  first_stage_valid_ = true;
  return std::min(100.0 * h0, h1);
}

double DormandPrince::integrate(const Rhs& f, double t0, double t1, std::span<cplx> y,
                                double h_initial) {
  if (t1 <= t0) return h_initial;
  std::vector<cplx> y_new(dim_);
  double t = t0;
  double h = h_initial > 0.0 ? h_initial : initial_step(f, t, y);
  while (t < t1) {
    const bool last = t + h >= t1;
    const double step = last ? t1 - t : h;
    const StepOutcome o = attempt(f, t, y, step, y_new);
    if (o.accepted) {
      commit();
      std::copy(y_new.begin(), y_new.end(), y.begin());
      t = last ? t1 : t + step;
      if (!last) h = o.h_next;
      else h = std::max(h, o.h_next);
    } else {
      h = o.h_next;
      if (h < 1e-14 * std::max(1.0, std::abs(t)))
        throw IntegrationError("step size collapsed at t = " + std::to_string(t), t,
                               std::vector<cplx>(y.begin(), y.end()));
    }
  }
  return h;
}

void DormandPrince::integrate_fixed(const Rhs& f, double t0, double t1, std::span<cplx> y,
                                    double h) {
  if (t1 <= t0) return;
  const long steps = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / h - 1e-9)));
  const double dt = (t1 - t0) / static_cast<double>(steps);
  std::vector<cplx> y_new(dim_);
  for (long i = 0; i < steps; ++i) {
    attempt(f, t0 + static_cast<double>(i) * dt, y, dt, y_new);
    commit();
    for (std::size_t k = 0; k < dim_; ++k) {
      if (!std::isfinite(y_new[k].real()) || !std::isfinite(y_new[k].imag()))
        throw IntegrationError("non-finite state in fixed-step integration", t0 + i * dt,
                               std::vector<cplx>(y.begin(), y.end()));
    }
    std::copy(y_new.begin(), y_new.end(), y.begin());
  }
}

}  // namespace cavlat::ode
