#pragma once
// Embedded Dormand-Prince 5(4) stepping for complex state vectors.

#include <complex>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavlat::ode {

using cplx = std::complex<double>;
using Rhs = std::function<void(double t, std::span<const cplx> y, std::span<cplx> dydt)>;

struct Tolerance {
  double rtol = 1e-8;
  double atol = 0.0;  // absolute floor on the 2-norm of the local error
};

// Step size collapsed or the solution became non-finite. Carries the last
// accepted state.
class IntegrationError : public std::runtime_error {
public:
  IntegrationError(const std::string& what, double t, std::vector<cplx> state)
      : std::runtime_error(what), time(t), last_state(std::move(state)) {}
  double time;
  std::vector<cplx> last_state;
};

struct StepOutcome {
  double error = 0.0;   // scaled error norm; accept when <= 1
  bool accepted = false;
  double h_next = 0.0;  // suggested next step
};

class DormandPrince {
public:
  DormandPrince(std::size_t dim, Tolerance tol);

  // One trial step of size h from (t, y). y_out receives the fifth-order
  // solution. Reuses the last stage of the previous accepted step when valid.
  StepOutcome attempt(const Rhs& f, double t, std::span<const cplx> y, double h,
                      std::span<cplx> y_out);

  // Marks the trial step as taken so its final stage seeds the next step.
  void commit();
  // The state was modified outside the integrator (jump, renormalization).
  void invalidate() { first_stage_valid_ = false; }

  // Advances y from t0 to t1 in place. Returns the step suggested for the next call.
  double integrate(const Rhs& f, double t0, double t1, std::span<cplx> y, double h_initial);

  // Advances y from t0 to t1 with uniform steps of at most h.
  void integrate_fixed(const Rhs& f, double t0, double t1, std::span<cplx> y, double h);

  // Initial step heuristic (Hairer, Norsett & Wanner).
  double initial_step(const Rhs& f, double t, std::span<const cplx> y);

  const Tolerance& tolerance() const { return tol_; }
  std::size_t dim() const { return dim_; }
  long rhs_evaluations() const { return rhs_evals_; }

private:
  StepOutcome finish(double h, double err_sq, std::span<const cplx> y, std::span<const cplx> y_out);

  std::size_t dim_;
  Tolerance tol_;
  std::vector<cplx> k1_, k2_, k3_, k4_, k5_, k6_, k7_, stage_;
  bool first_stage_valid_ = false;
  bool last_step_ok_ = true;
  long rhs_evals_ = 0;
};

}  // namespace cavlat::ode
