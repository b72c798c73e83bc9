#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cavlat/bandstructure.hpp"
#include "cavlat/mcwf.hpp"
#include "cavlat/meanfield.hpp"

namespace py = pybind11;
using namespace cavlat;

namespace {

BunchingModel branch_model(const SelfConsistentBranch& br, double u0, BandCache* cache) {
  return {br.model, br.band, u0, br.model == BranchModel::kWannier ? cache : nullptr};
}

py::dict series(const OracleSeries& s) {
  py::dict d;
  d["t"] = s.times;
  d["n"] = s.n_mean;
  d["E_kin"] = s.kinetic_energy;
  d["b"] = s.bunching;
  d["odd_weight"] = s.odd_weight;
  d["alpha"] = s.alpha;
  d["trace_deviation"] = s.trace_deviation;
  d["min_eigenvalue"] = s.min_eigenvalue;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cavlat core";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<ModelParams>(m, "Params")
      .def(py::init([](double eta, double delta_c, double u0, double kappa) {
             return ModelParams{eta, delta_c, u0, kappa};
           }),
           py::arg("eta"), py::arg("delta_c"), py::arg("u0"), py::arg("kappa") = 1.0)
      .def_readwrite("eta", &ModelParams::eta)
      .def_readwrite("delta_c", &ModelParams::delta_c)
      .def_readwrite("u0", &ModelParams::u0)
      .def_readwrite("kappa", &ModelParams::kappa)
      .def("__repr__", [](const ModelParams& p) {
        return "Params(eta=" + std::to_string(p.eta) + ", delta_c=" + std::to_string(p.delta_c) +
               ", u0=" + std::to_string(p.u0) + ", kappa=" + std::to_string(p.kappa) + ")";
      });

  py::class_<HilbertGeometry>(m, "Geometry")
      .def(py::init([](int n_ph_max, int j_max, bool even) { return HilbertGeometry{n_ph_max, j_max, even}; }),
           py::arg("n_ph_max"), py::arg("j_max"), py::arg("even_parity_only") = false)
      .def_readwrite("n_ph_max", &HilbertGeometry::n_ph_max)
      .def_readwrite("j_max", &HilbertGeometry::j_max)
      .def_readwrite("even_parity_only", &HilbertGeometry::even_parity_only)
      .def_property_readonly("dim", &HilbertGeometry::dim);

  // ---------------------------------------------------------------- bands

  py::class_<LatticeProblem>(m, "LatticeProblem")
      .def(py::init([](double v0, int cutoff, int nq) { return LatticeProblem{v0, cutoff, nq}; }),
           py::arg("depth_v0"), py::arg("plane_wave_cutoff") = 32, py::arg("q_grid_size") = 128)
      .def_readwrite("depth_v0", &LatticeProblem::depth_v0)
      .def_readwrite("plane_wave_cutoff", &LatticeProblem::plane_wave_cutoff)
      .def_readwrite("q_grid_size", &LatticeProblem::q_grid_size)
      .def("q_grid", &LatticeProblem::q_grid);

  py::class_<BandSummary>(m, "BandSummary")
      .def_readonly("depth_v0", &BandSummary::depth_v0)
      .def_readonly("bunching", &BandSummary::bunching)
      .def_readonly("average_energy", &BandSummary::average_energy)
      .def_readonly("bunching_q0", &BandSummary::bunching_q0)
      .def_readonly("energy_q0", &BandSummary::energy_q0)
      .def("bound", &BandSummary::bound);

  m.def("band_summary", &band_summary, py::arg("problem"), py::arg("max_band"));
  m.def("bunching_parameter", &bunching_parameter, py::arg("problem"), py::arg("m"));
  m.def(
      "bloch_energies",
      [](const LatticeProblem& p, int max_band) {
        std::vector<std::vector<double>> e;
        for (const auto& b : solve_bloch(p, max_band)) e.push_back(b.energies);
        return py::make_tuple(p.q_grid(), e);
      },
      py::arg("problem"), py::arg("max_band"), "(q grid, E[m][q])");
  m.def(
      "harmonic_bunching",
      [](int n_ho, double u0, double n) {
        const auto h = harmonic_bunching(n_ho, u0, n);
        return py::make_tuple(h.value, h.valid);
      },
      py::arg("n_ho"), py::arg("u0"), py::arg("n_mean"), "(b, valid)");

  // ---------------------------------------------------------------- mean field

  py::class_<BandCache>(m, "BandCache")
      .def(py::init<int, int, int>(), py::arg("max_band") = 16, py::arg("plane_wave_cutoff") = 32,
           py::arg("q_grid_size") = 128)
      .def("summary", &BandCache::summary, py::arg("depth_v0"))
      .def("bunching", &BandCache::bunching, py::arg("m"), py::arg("depth_v0"))
      .def("__len__", &BandCache::size);

  py::class_<SelfConsistentBranch>(m, "Branch")
      .def_property_readonly("model", [](const SelfConsistentBranch& b) { return to_string(b.model); })
      .def_readonly("band", &SelfConsistentBranch::band)
      .def_readonly("delta_c", &SelfConsistentBranch::delta_c)
      .def_readonly("n", &SelfConsistentBranch::n_mean)
      .def_readonly("b", &SelfConsistentBranch::b)
      .def_readonly("delta_eff", &SelfConsistentBranch::delta_eff)
      .def_readonly("stable", &SelfConsistentBranch::stable)
      .def_readonly("slope", &SelfConsistentBranch::slope)
      .def_readonly("marginal", &SelfConsistentBranch::marginal)
      .def_readonly("bound", &SelfConsistentBranch::bound)
      .def_readonly("valid", &SelfConsistentBranch::valid)
      .def("__repr__", [](const SelfConsistentBranch& b) {
        return "Branch(n=" + std::to_string(b.n_mean) + ", b=" + std::to_string(b.b) +
               (b.stable ? ", stable)" : ", unstable)");
      });

  m.def("field_steady_state", &field_steady_state, py::arg("params"), py::arg("b"));
  m.def(
      "solve_harmonic",
      [](int n_ho, const ModelParams& p) { return solve_selfconsistent_harmonic(n_ho, p).branches; },
      py::arg("n_ho"), py::arg("params"));
  m.def(
      "solve_wannier",
      [](int band, const ModelParams& p, BandCache& cache) {
        return solve_selfconsistent_wannier(band, p, cache).branches;
      },
      py::arg("band"), py::arg("params"), py::arg("cache"));

  py::class_<StabilityReport>(m, "StabilityReport")
      .def_readonly("stable", &StabilityReport::stable)
      .def_readonly("marginal", &StabilityReport::marginal)
      .def_readonly("consistent", &StabilityReport::consistent)
      .def_readonly("lambda1", &StabilityReport::lambda1)
      .def_readonly("lambda2", &StabilityReport::lambda2)
      .def_readonly("trace", &StabilityReport::trace)
      .def_readonly("determinant", &StabilityReport::determinant)
      .def_readonly("slope", &StabilityReport::slope);

  m.def(
      "stability",
      [](const ModelParams& p, const SelfConsistentBranch& br, BandCache* cache) {
        const BunchingModel b = branch_model(br, p.u0, cache);
        if (b.model == BranchModel::kWannier && cache == nullptr)
          throw DomainError("a Wannier branch needs the band cache it was solved with");
        return classify_stability(stability_matrix(p, br, std::cref(b)), p);
      },
      py::arg("params"), py::arg("branch"), py::arg("cache") = nullptr);

  py::class_<HeatingCheck>(m, "HeatingCheck")
      .def_readonly("heats", &HeatingCheck::heats)
      .def_readonly("marginal", &HeatingCheck::marginal)
      .def_readonly("delta_eff_m", &HeatingCheck::delta_eff_m)
      .def_readonly("delta_eff_m2", &HeatingCheck::delta_eff_m2);
  m.def("heating_condition", &heating_condition, py::arg("m"), py::arg("params"), py::arg("n"),
        py::arg("cache"));

  // ---------------------------------------------------------------- trajectories

  m.def("derive_seed", &derive_seed, py::arg("base_seed"), py::arg("index"));

  py::class_<TrajectoryConfig>(m, "TrajectoryConfig")
      .def(py::init([](const ModelParams& p, const HilbertGeometry& g, double t_final, double sample_dt,
                       std::uint64_t seed, int initial_n, int initial_j, double rtol) {
             TrajectoryConfig c;
             c.params = p;
             c.geometry = g;
             c.t_final = t_final;
             c.sample_dt = sample_dt;
             c.seed = seed;
             c.initial_n = initial_n;
             c.initial_j = initial_j;
             c.tolerance.rtol = rtol;
             return c;
           }),
           py::arg("params"), py::arg("geometry"), py::arg("t_final") = 10.0, py::arg("sample_dt") = 0.1,
           py::arg("seed") = 1, py::arg("initial_n") = 1, py::arg("initial_j") = 0, py::arg("rtol") = 1e-8)
      .def_readwrite("params", &TrajectoryConfig::params)
      .def_readwrite("geometry", &TrajectoryConfig::geometry)
      .def_readwrite("t_final", &TrajectoryConfig::t_final)
      .def_readwrite("sample_dt", &TrajectoryConfig::sample_dt)
      .def_readwrite("seed", &TrajectoryConfig::seed)
      .def_readwrite("initial_n", &TrajectoryConfig::initial_n)
      .def_readwrite("initial_j", &TrajectoryConfig::initial_j)
      .def_readwrite("snapshot_times", &TrajectoryConfig::snapshot_times);

  py::class_<TrajectoryRecord>(m, "TrajectoryRecord")
      .def_readonly("seed", &TrajectoryRecord::seed)
      .def_readonly("t", &TrajectoryRecord::times)
      .def_readonly("n", &TrajectoryRecord::n_mean)
      .def_readonly("E_kin", &TrajectoryRecord::kinetic_energy)
      .def_readonly("b", &TrajectoryRecord::bunching)
      .def_readonly("odd_weight", &TrajectoryRecord::odd_weight)
      .def_readonly("jump_times", &TrajectoryRecord::jump_times)
      .def_readonly("final_state", &TrajectoryRecord::final_state)
      .def_readonly("max_boundary_population", &TrajectoryRecord::max_boundary_population)
      .def_readonly("truncation_warning", &TrajectoryRecord::truncation_warning);

  py::class_<EnsembleStats>(m, "EnsembleStats")
      .def_readonly("count", &EnsembleStats::count)
      .def_readonly("t", &EnsembleStats::times)
      .def_readonly("n", &EnsembleStats::n_mean)
      .def_readonly("n_se", &EnsembleStats::n_se)
      .def_readonly("E_kin", &EnsembleStats::kinetic_mean)
      .def_readonly("E_kin_se", &EnsembleStats::kinetic_se)
      .def_readonly("b", &EnsembleStats::bunching_mean)
      .def_readonly("b_se", &EnsembleStats::bunching_se)
      .def_readonly("jump_counts", &EnsembleStats::jump_counts)
      .def_readonly("seeds", &EnsembleStats::seeds)
      .def_readonly("truncated_trajectories", &EnsembleStats::truncated_trajectories);

  m.def("run_trajectory", &run_trajectory, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_ensemble",
      [](const TrajectoryConfig& c, std::size_t count, std::uint64_t base_seed, int threads) {
        EnsembleOptions o;
        o.count = count;
        o.base_seed = base_seed;
        o.threads = threads;
        py::gil_scoped_release release;
        return run_ensemble(c, o);
      },
      py::arg("config"), py::arg("count"), py::arg("base_seed") = 1, py::arg("threads") = 1);
  m.def(
      "window_average",
      [](const EnsembleStats& s, double t1, double t2, const std::string& observable) {
        const auto w = time_window_average(s, t1, t2, observable_from_string(observable));
        return py::make_tuple(w.mean, w.standard_error);
      },
      py::arg("stats"), py::arg("t1"), py::arg("t2"), py::arg("observable") = "n",
      "(mean, standard error) over t1 < t <= t2");

  m.def(
      "integrate_master_equation",
      [](const ModelParams& p, const HilbertGeometry& g, double t_final, double sample_dt, int initial_n,
         int initial_j) {
        OracleConfig c;
        c.params = p;
        c.geometry = g;
        c.t_final = t_final;
        c.sample_dt = sample_dt;
        c.initial_n = initial_n;
        c.initial_j = initial_j;
        return series(integrate_master_equation(c));
      },
      py::arg("params"), py::arg("geometry"), py::arg("t_final") = 10.0, py::arg("sample_dt") = 0.1,
      py::arg("initial_n") = 1, py::arg("initial_j") = 0);
}
