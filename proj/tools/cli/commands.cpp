#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <thread>

#include "cavlat/bandstructure.hpp"
#include "cavlat/mcwf.hpp"
#include "cavlat/meanfield.hpp"
#include "cli/config.hpp"
#include "cli/manifest.hpp"

namespace cavlat::cli {

namespace {

struct Context {
  std::uint64_t seed = 1;
  int threads = 1;
  bool quiet = false;
};

using Action = std::function<void(RunOutputs&, const Context&)>;
using Parser = Action (*)(Section&);

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return stem + "_" + buf + ext;
}

// ------------------------------------------------------------ shared readers

struct BranchSpec {
  BranchModel model = BranchModel::kWannier;
  int level = 0;
  std::shared_ptr<BandCache> cache;

  BunchingModel bunching(double u0) const { return {model, level, u0, cache.get()}; }
};

BranchSpec read_branch(Section& root, const ModelParams& params) {
  Section b = root.child("branch");
  BranchSpec spec;
  const std::string model = b.text("model", "wannier", {"wannier", "harmonic"});
  spec.model = model == "wannier" ? BranchModel::kWannier : BranchModel::kHarmonic;
  spec.level = static_cast<int>(b.integer("level", 0));
  const long max_band = b.integer("max_band", std::max(16L, static_cast<long>(spec.level)));
  const long cutoff = b.integer("plane_wave_cutoff", 32);
  const long q_grid = b.integer("q_grid_size", 128);
  root.adopt("branch", b);
  if (spec.level < 0) throw ConfigError(b.path() + ".level: must be >= 0");
  if (spec.model == BranchModel::kWannier) {
    if (spec.level > max_band) throw ConfigError(b.path() + ".level: exceeds max_band");
    if (cutoff < 1 || q_grid < 2) throw ConfigError(b.path() + ": plane_wave_cutoff >= 1 and q_grid_size >= 2 required");
    spec.cache = std::make_shared<BandCache>(static_cast<int>(max_band), static_cast<int>(cutoff),
                                             static_cast<int>(q_grid));
  } else if (params.u0 == 0.0) {
    throw ConfigError(root.path() + ".params.u0: the oscillator branch needs u0 != 0");
  }
  return spec;
}

NGridSpec read_grid(Section& root) {
  Section g = root.child("grid");
  NGridSpec spec;
  spec.n_min = g.number("n_min", spec.n_min);
  if (g.has("n_max")) spec.n_max = g.number("n_max");
  spec.points = static_cast<int>(g.integer("points", spec.points));
  spec.log_spacing = g.boolean("log_spacing", spec.log_spacing);
  root.adopt("grid", g);
  if (!(spec.n_min > 0.0)) throw ConfigError(g.path() + ".n_min: must be positive");
  if (spec.points < 2) throw ConfigError(g.path() + ".points: must be >= 2");
  return spec;
}

std::vector<double> read_scan(Section& root, double fallback) {
  Section s = root.child("scan");
  auto d = read_detunings(s, fallback);
  root.adopt("scan", s);
  return d;
}

RootSearch find_roots(const BranchSpec& spec, const ModelParams& p, const NGridSpec& grid) {
  RootSearch rs = solve_selfconsistent(spec.bunching(p.u0), p, grid.build(p.eta, p.kappa));
  for (const auto& br : rs.branches)
    if (!br.valid)
      rs.warnings.push_back("root n=" + format_number(br.n_mean) +
                            " lies outside the oscillator validity range");
  return rs;
}

json branch_json(const SelfConsistentBranch& b) {
  return {{"model", to_string(b.model)}, {"m", b.band},         {"delta_c", b.delta_c},
          {"n", b.n_mean},               {"b", b.b},            {"delta_eff", b.delta_eff},
          {"stable", b.stable},          {"slope", b.slope},    {"marginal", b.marginal},
          {"bound", b.bound},            {"valid", b.valid}};
}

const std::vector<std::string> kBranchColumns = {"model", "m",     "delta_c",  "n",     "b",    "delta_eff",
                                                 "stable", "slope", "marginal", "bound", "valid"};

void branch_row(CsvTable& t, const SelfConsistentBranch& b) {
  t.row().add(std::string(to_string(b.model))).add(b.band).add(b.delta_c).add(b.n_mean).add(b.b)
      .add(b.delta_eff).add(b.stable).add(b.slope).add(b.marginal).add(b.bound).add(b.valid);
}

std::function<void(std::size_t, std::size_t)> progress_printer(const Context& ctx,
                                                               const std::string& label) {
  if (ctx.quiet) return {};
  return [label](std::size_t done, std::size_t total) {
    const std::size_t step = std::max<std::size_t>(1, total / 10);
    if (done % step == 0 || done == total)
      std::cerr << label << ": " << done << "/" << total << " trajectories\n";
  };
}

void record_truncation(RunOutputs& out, const EnsembleStats& s, const std::string& label) {
  if (s.truncated_trajectories == 0) return;
  out.truncation(label + ": " + std::to_string(s.truncated_trajectories) + " of " +
                 std::to_string(s.count) + " trajectories put more than " +
                 format_number(kTruncationWarningLevel) +
                 " on the truncation boundary (max " + format_number(s.max_boundary_population) +
                 "); raise n_ph_max or j_max");
}

CsvTable ensemble_table(const EnsembleStats& s) {
  CsvTable t({"t", "n_mean", "n_se", "kinetic_mean", "kinetic_se", "bunching_mean", "bunching_se",
              "odd_weight_max"});
  for (std::size_t i = 0; i < s.times.size(); ++i)
    t.row().add(s.times[i]).add(s.n_mean[i]).add(s.n_se[i]).add(s.kinetic_mean[i])
        .add(s.kinetic_se[i]).add(s.bunching_mean[i]).add(s.bunching_se[i]).add(s.odd_weight_max[i]);
  return t;
}

json joint_json(const JointDistribution& d) {
  json j = {{"t", d.t}, {"folded", d.folded}, {"momenta", d.momenta}, {"p", d.p}};
  if (d.warning) j["warning"] = *d.warning;
  return j;
}

// ------------------------------------------------------------------- bands

Action parse_bands(Section& root) {
  Section b = root.child("bands");
  const auto depths = b.numbers("depths", {0.0});
  const auto bands = b.integers("bands", {0});
  const long cutoff = b.integer("plane_wave_cutoff", 32);
  const long q_grid = b.integer("q_grid_size", 128);
  const bool wannier = b.boolean("wannier", true);
  const long window = b.integer("window_periods", 20);
  const long per_period = b.integer("samples_per_period", 64);
  root.adopt("bands", b);
  if (depths.empty() || bands.empty()) throw ConfigError(b.path() + ": depths and bands must be non-empty");
  for (double v : depths)
    if (v > 0.0) throw ConfigError(b.path() + ".depths: lattice depths must be <= 0");
  for (long m : bands)
    if (m < 0) throw ConfigError(b.path() + ".bands: band indices must be >= 0");
  if (cutoff < 1 || q_grid < 2 || window < 1 || per_period < 4)
    throw ConfigError(b.path() + ": grid sizes out of range");

  return [=](RunOutputs& out, const Context&) {
    const int max_band = static_cast<int>(*std::max_element(bands.begin(), bands.end()));
    CsvTable table({"depth", "m", "b_m", "band_avg_energy", "bound", "free_particle"});
    json summary = json::array();
    for (std::size_t d = 0; d < depths.size(); ++d) {
      LatticeProblem prob{depths[d], static_cast<int>(cutoff), static_cast<int>(q_grid)};
      const auto sol = solve_bloch(prob, max_band);
      const bool free = depths[d] == 0.0;
      for (long ml : bands) {
        const int m = static_cast<int>(ml);
        const auto& bs = sol[static_cast<std::size_t>(m)];
        CsvTable e({"q", "energy"});
        for (std::size_t k = 0; k < bs.q.size(); ++k) e.row().add(bs.q[k]).add(bs.energies[k]);
        const std::string tag = numbered("depth", d, "") + "_m" + std::to_string(m);
        out.add_csv("bands/" + tag + ".csv", e);
        const double bm = bunching_parameter(prob, m);
        const double avg = bs.band_average_energy();
        json entry = {{"depth", depths[d]},         {"m", m},        {"b_m", bm},
                      {"band_avg_energy", avg},     {"bound", avg < 0.0},
                      {"free_particle", free}};
        if (wannier && !free) {
          const auto w = build_wannier(prob, m, static_cast<int>(window), static_cast<int>(per_period));
          CsvTable wt({"x", "w"});
          for (std::size_t i = 0; i < w.x.size(); ++i) wt.row().add(w.x[i]).add(w.w[i]);
          out.add_csv("wannier/" + tag + ".csv", wt);
          entry["wannier_center"] = w.center;
          entry["wannier_max_imag"] = w.max_imag;
          entry["b_m_real_space"] = w.bunching;
        }
        table.row().add(depths[d]).add(m).add(bm).add(avg).add(avg < 0.0).add(free);
        summary.push_back(entry);
      }
    }
    out.add_csv("bunching.csv", table);
    out.add_json("summary.json", summary);
  };
}

// ----------------------------------------------------------------- contour

Action parse_contour(Section& root) {
  const ModelParams params = read_params(root, false);
  const BranchSpec spec = read_branch(root, params);
  const NGridSpec grid = read_grid(root);
  return [=](RunOutputs& out, const Context&) {
    const auto pts = trace_contour(spec.bunching(params.u0), params.eta, params.kappa, grid);
    CsvTable t({"delta_c", "n", "b", "sign", "slope", "stable"});
    for (const auto& p : pts) t.row().add(p.delta_c).add(p.n).add(p.b).add(p.sign).add(p.slope).add(p.stable);
    out.add_csv("contour.csv", t);
  };
}

// ------------------------------------------------------------------- roots

Action parse_roots(Section& root) {
  const auto scan = read_scan(root, 0.0);
  const ModelParams params = read_params(root, false);
  const BranchSpec spec = read_branch(root, params);
  const NGridSpec grid = read_grid(root);
  return [=](RunOutputs& out, const Context&) {
    CsvTable t(kBranchColumns);
    json all = json::array();
    for (double dc : scan) {
      ModelParams p = params;
      p.delta_c = dc;
      const RootSearch rs = find_roots(spec, p, grid);
      json branches = json::array();
      for (const auto& br : rs.branches) {
        branch_row(t, br);
        branches.push_back(branch_json(br));
      }
      for (const auto& w : rs.warnings) out.warn("delta_c=" + format_number(dc) + ": " + w);
      all.push_back({{"delta_c", dc}, {"branches", branches}, {"warnings", rs.warnings}});
    }
    out.add_csv("roots.csv", t);
    out.add_json("roots.json", all);
  };
}

// --------------------------------------------------------------- stability

Action parse_stability(Section& root) {
  const auto scan = read_scan(root, 0.0);
  const ModelParams params = read_params(root, false);
  const BranchSpec spec = read_branch(root, params);
  const NGridSpec grid = read_grid(root);
  return [=](RunOutputs& out, const Context&) {
    CsvTable t({"delta_c", "n", "b", "delta_eff", "d_delta_eff_dn", "fd_discrepancy", "lambda1_re",
                "lambda1_im", "lambda2_re", "lambda2_im", "trace", "determinant", "det_imag",
                "slope", "eigen_stable", "det_stable", "slope_stable", "consistent", "stable",
                "marginal"});
    std::size_t inconsistent = 0;
    for (double dc : scan) {
      ModelParams p = params;
      p.delta_c = dc;
      const auto model = spec.bunching(p.u0);
      const RootSearch rs = find_roots(spec, p, grid);
      for (const auto& br : rs.branches) {
        const auto a = stability_matrix(p, br, std::cref(model));
        const auto r = classify_stability(a, p);
        if (!r.consistent && !r.marginal) ++inconsistent;
        t.row().add(dc).add(br.n_mean).add(br.b).add(a.delta_eff).add(a.d_delta_eff_dn)
            .add(a.fd_discrepancy).add(r.lambda1.real()).add(r.lambda1.imag()).add(r.lambda2.real())
            .add(r.lambda2.imag()).add(r.trace).add(r.determinant).add(r.det_imag).add(r.slope)
            .add(r.eigen_verdict).add(r.det_verdict).add(r.slope_verdict).add(r.consistent)
            .add(r.stable).add(r.marginal);
      }
      for (const auto& w : rs.warnings) out.warn("delta_c=" + format_number(dc) + ": " + w);
    }
    if (inconsistent > 0)
      out.warn(std::to_string(inconsistent) + " roots where the stability tests disagree outside the marginal band");
    out.add_csv("stability.csv", t);
  };
}

// --------------------------------------------------------------- meanfield

Action parse_meanfield(Section& root) {
  const ModelParams params = read_params(root, true);
  Section m = root.child("meanfield");
  const int j_max = static_cast<int>(m.integer("j_max", 16));
  const double a_re = m.number("alpha_re", 0.0), a_im = m.number("alpha_im", 0.0);
  const std::string particle = m.text("particle", "momentum", {"momentum", "bloch_q0"});
  const int j0 = static_cast<int>(m.integer("initial_j", 0));
  const int band = static_cast<int>(m.integer("band", 0));
  const double t_final = m.number("t_final", 10.0);
  MeanFieldOptions opt;
  opt.sample_dt = m.number("sample_dt", opt.sample_dt);
  opt.rtol = m.number("rtol", opt.rtol);
  const bool adiabatic = m.boolean("adiabatic", false);
  root.adopt("meanfield", m);
  if (j_max < 1) throw ConfigError(m.path() + ".j_max: must be >= 1");
  if (std::abs(j0) > j_max) throw ConfigError(m.path() + ".initial_j: outside -j_max..j_max");
  if (band < 0) throw ConfigError(m.path() + ".band: must be >= 0");
  if (!(t_final >= 0.0) || !(opt.sample_dt > 0.0) || !(opt.rtol > 0.0))
    throw ConfigError(m.path() + ": t_final >= 0, sample_dt > 0 and rtol > 0 required");
  std::optional<BranchSpec> spec;
  if (adiabatic) spec = read_branch(root, params);

  return [=](RunOutputs& out, const Context&) {
    MeanFieldState s;
    s.alpha = {a_re, a_im};
    s.j_max = j_max;
    MeanFieldOptions o = opt;
    if (spec) {
      const BunchingModel bm = spec->bunching(params.u0);
      o.adiabatic_b = [bm](double n) { return bm(n); };
    } else if (particle == "bloch_q0") {
      s.psi = bloch_state_q0(band, -std::abs(params.u0 * std::norm(s.alpha)), j_max);
    } else {
      s.psi.assign(static_cast<std::size_t>(2 * j_max + 1), {0.0, 0.0});
      s.psi[static_cast<std::size_t>(j0 + j_max)] = 1.0;
    }
    const auto samples = integrate_meanfield(s, params, t_final, o);
    CsvTable t({"t", "alpha_re", "alpha_im", "n", "b", "kinetic_energy", "norm"});
    for (const auto& x : samples)
      t.row().add(x.t).add(x.alpha.real()).add(x.alpha.imag()).add(x.n).add(x.b).add(x.kinetic_energy).add(x.norm);
    out.add_csv("meanfield.csv", t);
  };
}

// -------------------------------------------------------------------- mcwf

Action parse_mcwf(Section& root) {
  const ModelParams params = read_params(root, true);
  const TrajectoryConfig base = read_trajectory(root, params);
  return [=](RunOutputs& out, const Context& ctx) {
    TrajectoryConfig cfg = base;
    cfg.seed = ctx.seed;
    out.note_seed(cfg.seed);
    const TrajectoryRecord r = run_trajectory(cfg);
    CsvTable t({"t", "n", "kinetic_energy", "bunching", "odd_weight", "norm_deviation"});
    for (std::size_t i = 0; i < r.times.size(); ++i)
      t.row().add(r.times[i]).add(r.n_mean[i]).add(r.kinetic_energy[i]).add(r.bunching[i])
          .add(r.odd_weight[i]).add(r.norm_deviation[i]);
    out.add_csv("trajectory.csv", t);
    out.add_json("jumps.json", {{"seed", r.seed},
                                {"jump_times", r.jump_times},
                                {"jumps", r.jump_times.size()},
                                {"rhs_evaluations", r.rhs_evaluations},
                                {"steps_accepted", r.steps_accepted},
                                {"steps_rejected", r.steps_rejected},
                                {"max_boundary_population", r.max_boundary_population}});
    const HilbertGeometry& g = r.geometry;
    if (cfg.record_distributions) {
      std::vector<std::string> hn{"t"}, hj{"t"};
      for (int n = 0; n < g.num_photon(); ++n) hn.push_back("p_n" + std::to_string(n));
      for (int k = 0; k < g.num_momentum(); ++k) hj.push_back("p_j" + std::to_string(g.momentum(k)));
      CsvTable pn(hn), pj(hj);
      for (std::size_t i = 0; i < r.times.size(); ++i) {
        pn.row().add(r.times[i]);
        for (double p : r.photon_distribution[i]) pn.add(p);
        pj.row().add(r.times[i]);
        for (double p : r.momentum_distribution[i]) pj.add(p);
      }
      out.add_csv("photon_distribution.csv", pn);
      out.add_csv("momentum_distribution.csv", pj);
    }
    if (!r.snapshot_times.empty()) {
      EnsembleAccumulator acc(false);
      acc.add(r);
      const EnsembleStats s = acc.finish();
      json snaps = json::array();
      for (double ts : s.snapshot_times) snaps.push_back(joint_json(joint_distribution(s, ts)));
      out.add_json("joint.json", snaps);
    }
    if (r.truncation_warning)
      out.truncation("trajectory seed " + std::to_string(r.seed) + ": boundary population " +
                     format_number(r.max_boundary_population) + " exceeds " +
                     format_number(kTruncationWarningLevel) + "; raise n_ph_max or j_max");
  };
}

// ---------------------------------------------------------------- ensemble

struct EnsembleSettings {
  std::size_t count = 100;
  bool fold_joint = false;
  std::vector<std::pair<double, double>> windows;
  std::vector<Observable> observables;
};

EnsembleSettings read_ensemble(Section& root, std::size_t default_count) {
  Section e = root.child("ensemble");
  EnsembleSettings s;
  const long count = e.integer("count", static_cast<long>(default_count));
  s.fold_joint = e.boolean("fold_joint", false);
  s.windows = e.intervals("windows", {});
  root.adopt("ensemble", e);
  if (count < 1) throw ConfigError(e.path() + ".count: must be >= 1");
  s.count = static_cast<std::size_t>(count);
  s.observables = {Observable::kPhotonNumber, Observable::kKineticEnergy, Observable::kBunching};
  return s;
}

Action parse_ensemble(Section& root) {
  const bool scanned = root.has("scan");
  const auto scan = read_scan(root, 0.0);
  const ModelParams params = read_params(root, !scanned);
  const TrajectoryConfig base = read_trajectory(root, params);
  const EnsembleSettings es = read_ensemble(root, 100);
  for (const auto& [t1, t2] : es.windows) {
    const auto times = base.sample_times();
    const auto inside = std::count_if(times.begin(), times.end(), [&](double t) { return t > t1 && t <= t2; });
    if (inside < 2) throw ConfigError("config.ensemble.windows: (" + format_number(t1) + ", " +
                                      format_number(t2) + "] holds fewer than 2 samples");
  }
  const std::vector<double> detunings = scanned ? scan : std::vector<double>{params.delta_c};

  return [=](RunOutputs& out, const Context& ctx) {
    CsvTable win({"delta_c", "observable", "t1", "t2", "mean", "standard_error", "samples", "trajectories"});
    json summary = json::array();
    for (std::size_t d = 0; d < detunings.size(); ++d) {
      TrajectoryConfig cfg = base;
      cfg.params.delta_c = detunings[d];
      EnsembleOptions opt;
      opt.count = es.count;
      opt.base_seed = detunings.size() == 1 ? ctx.seed : derive_seed(ctx.seed, 1000000 + d);
      opt.threads = ctx.threads;
      opt.keep_series = !es.windows.empty();
      opt.progress = progress_printer(ctx, "delta_c=" + format_number(detunings[d]));
      out.note_seed(opt.base_seed);
      const EnsembleStats s = run_ensemble(cfg, opt);
      out.add_csv(numbered("ensemble", d, ".csv"), ensemble_table(s));
      if (!s.snapshot_times.empty()) {
        json snaps = json::array();
        for (double ts : s.snapshot_times) snaps.push_back(joint_json(joint_distribution(s, ts, es.fold_joint)));
        out.add_json(numbered("joint", d, ".json"), {{"delta_c", detunings[d]}, {"snapshots", snaps}});
      }
      for (const auto& [t1, t2] : es.windows)
        for (Observable o : es.observables) {
          const WindowAverage w = time_window_average(s, t1, t2, o);
          win.row().add(detunings[d]).add(std::string(to_string(o))).add(t1).add(t2).add(w.mean)
              .add(w.standard_error).add(w.samples).add(w.trajectories);
        }
      double jumps = 0.0;
      for (auto c : s.jump_counts) jumps += static_cast<double>(c);
      summary.push_back({{"delta_c", detunings[d]},
                         {"base_seed", s.base_seed},
                         {"count", s.count},
                         {"mean_jumps", jumps / static_cast<double>(s.count)},
                         {"truncated_trajectories", s.truncated_trajectories},
                         {"max_boundary_population", s.max_boundary_population},
                         {"series", numbered("ensemble", d, ".csv")}});
      record_truncation(out, s, "delta_c=" + format_number(detunings[d]));
    }
    if (!es.windows.empty()) out.add_csv("windows.csv", win);
    out.add_json("summary.json", summary);
  };
}

// ------------------------------------------------------------------ oracle

Action parse_oracle(Section& root) {
  const ModelParams params = read_params(root, true);
  Section o = root.child("oracle");
  OracleConfig cfg;
  cfg.params = params;
  cfg.geometry = read_geometry(o, cfg.geometry);
  cfg.initial_n = static_cast<int>(o.integer("initial_n", cfg.initial_n));
  cfg.initial_j = static_cast<int>(o.integer("initial_j", cfg.initial_j));
  cfg.t_final = o.number("t_final", cfg.t_final);
  cfg.sample_dt = o.number("sample_dt", cfg.sample_dt);
  cfg.tolerance.rtol = o.number("rtol", cfg.tolerance.rtol);
  cfg.tolerance.atol = o.number("atol", cfg.tolerance.atol);
  cfg.snapshot_times = o.numbers("snapshot_times", {});
  root.adopt("oracle", o);
  if (cfg.geometry.dim() > kOracleMaxDim)
    throw ConfigError(o.path() + ".geometry: dimension " + std::to_string(cfg.geometry.dim()) +
                      " exceeds the oracle limit " + std::to_string(kOracleMaxDim));
  Section c = root.child("compare");
  const long count = c.integer("count", 0);
  const double rtol = c.number("rtol", 1e-8);
  root.adopt("compare", c);
  if (count < 0) throw ConfigError(c.path() + ".count: must be >= 0");
  TrajectoryConfig tc;
  tc.geometry = cfg.geometry;
  tc.params = params;
  tc.initial_n = cfg.initial_n;
  tc.initial_j = cfg.initial_j;
  tc.t_final = cfg.t_final;
  tc.sample_dt = cfg.sample_dt;
  tc.tolerance = {rtol, 0.0};
  tc.snapshot_times = cfg.snapshot_times;
  try {
    tc.validate();
  } catch (const std::exception& e) {
    throw ConfigError(o.path() + ": " + e.what());
  }

  return [=](RunOutputs& out, const Context& ctx) {
    const OracleSeries s = integrate_master_equation(cfg);
    CsvTable t({"t", "n", "kinetic_energy", "bunching", "odd_weight", "alpha_re", "alpha_im",
                "trace_deviation", "hermiticity_error"});
    for (std::size_t i = 0; i < s.times.size(); ++i)
      t.row().add(s.times[i]).add(s.n_mean[i]).add(s.kinetic_energy[i]).add(s.bunching[i])
          .add(s.odd_weight[i]).add(s.alpha[i].real()).add(s.alpha[i].imag())
          .add(s.trace_deviation[i]).add(s.hermiticity_error[i]);
    out.add_csv("oracle.csv", t);
    json report = {{"min_eigenvalue", s.min_eigenvalue},
                   {"max_trace_deviation", *std::max_element(s.trace_deviation.begin(), s.trace_deviation.end())},
                   {"max_hermiticity_error",
                    *std::max_element(s.hermiticity_error.begin(), s.hermiticity_error.end())}};
    if (count > 0) {
      EnsembleOptions opt;
      opt.count = static_cast<std::size_t>(count);
      opt.base_seed = ctx.seed;
      opt.threads = ctx.threads;
      opt.keep_series = false;
      opt.progress = progress_printer(ctx, "oracle comparison");
      out.note_seed(opt.base_seed);
      const EnsembleStats e = run_ensemble(tc, opt);
      out.add_csv("mcwf_ensemble.csv", ensemble_table(e));
      CsvTable dev({"t", "n_oracle", "n_mcwf", "n_se", "n_z", "kinetic_oracle", "kinetic_mcwf",
                    "kinetic_se", "kinetic_z"});
      double zn = 0.0, zk = 0.0;
      auto zscore = [](double a, double b, double se) {
        if (se > 0.0) return (b - a) / se;
        return std::abs(b - a) <= 1e-12 * std::max(1.0, std::abs(a)) ? 0.0
                                                                     : std::numeric_limits<double>::infinity();
      };
      for (std::size_t i = 0; i < s.times.size(); ++i) {
        const double z1 = zscore(s.n_mean[i], e.n_mean[i], e.n_se[i]);
        const double z2 = zscore(s.kinetic_energy[i], e.kinetic_mean[i], e.kinetic_se[i]);
        zn = std::max(zn, std::abs(z1));
        zk = std::max(zk, std::abs(z2));
        dev.row().add(s.times[i]).add(s.n_mean[i]).add(e.n_mean[i]).add(e.n_se[i]).add(z1)
            .add(s.kinetic_energy[i]).add(e.kinetic_mean[i]).add(e.kinetic_se[i]).add(z2);
      }
      out.add_csv("deviation.csv", dev);
      report["trajectories"] = count;
      report["max_abs_z_n"] = zn;
      report["max_abs_z_kinetic"] = zk;
      report["within_3_sigma"] = zn <= 3.0 && zk <= 3.0;
      record_truncation(out, e, "oracle comparison");
    }
    out.add_json("report.json", report);
  };
}

// --------------------------------------------------------------- occupancy

Action parse_occupancy(Section& root) {
  const ModelParams params = read_params(root, true);
  const TrajectoryConfig base = read_trajectory(root, params);
  const BranchSpec spec = read_branch(root, params);
  const NGridSpec grid = read_grid(root);
  Section o = root.child("occupancy");
  const long count = o.integer("count", 50);
  const double t_discard = o.number("t_discard", 0.0);
  ToleranceBand band;
  band.relative = o.number("relative_width", band.relative);
  band.absolute = o.number("absolute_width", band.absolute);
  const long bins = o.integer("histogram_bins", 60);
  root.adopt("occupancy", o);
  if (count < 1) throw ConfigError(o.path() + ".count: must be >= 1");
  if (bins < 2) throw ConfigError(o.path() + ".histogram_bins: must be >= 2");
  if (band.relative < 0.0 || band.absolute < 0.0 || (band.relative == 0.0 && band.absolute == 0.0))
    throw ConfigError(o.path() + ": tolerance band must be positive");
  if (!(t_discard >= 0.0) || t_discard >= base.t_final)
    throw ConfigError(o.path() + ".t_discard: must lie in [0, t_final)");

  return [=](RunOutputs& out, const Context& ctx) {
    const RootSearch rs = find_roots(spec, params, grid);
    for (const auto& w : rs.warnings) out.warn(w);
    EnsembleOptions opt;
    opt.count = static_cast<std::size_t>(count);
    opt.base_seed = ctx.seed;
    opt.threads = ctx.threads;
    opt.keep_series = true;
    opt.progress = progress_printer(ctx, "occupancy");
    out.note_seed(opt.base_seed);
    const EnsembleStats s = run_ensemble(base, opt);
    record_truncation(out, s, "occupancy");

    std::size_t first = 0;
    while (first < s.times.size() && s.times[first] <= t_discard) ++first;
    std::vector<double> pooled;
    const BranchOccupancy layout = branch_occupancy(std::vector<double>{}, rs.branches, band);
    std::vector<std::string> header{"trajectory", "seed"};
    for (std::size_t b = 0; b < layout.branch_n.size(); ++b) header.push_back("fraction_" + std::to_string(b));
    header.push_back("transit");
    CsvTable per(header);
    for (std::size_t i = 0; i < s.n_series.size(); ++i) {
      const std::vector<double> tail(s.n_series[i].begin() + static_cast<long>(first), s.n_series[i].end());
      pooled.insert(pooled.end(), tail.begin(), tail.end());
      const BranchOccupancy occ = branch_occupancy(tail, rs.branches, band);
      per.row().add(i).add(std::to_string(s.seeds[i]));
      for (double f : occ.fraction) per.add(f);
      per.add(occ.transit);
    }
    out.add_csv("occupancy.csv", per);

    const BranchOccupancy all = branch_occupancy(pooled, rs.branches, band);
    for (const auto& w : all.warnings) out.warn(w);
    json branches = json::array();
    for (const auto& br : rs.branches) branches.push_back(branch_json(br));
    out.add_json("occupancy.json", {{"branches", branches},
                                    {"stable_n", all.branch_n},
                                    {"half_width", all.half_width},
                                    {"fraction", all.fraction},
                                    {"transit", all.transit},
                                    {"samples", pooled.size()},
                                    {"warnings", all.warnings}});

    const double hi = pooled.empty() ? 1.0 : *std::max_element(pooled.begin(), pooled.end());
    const double width = (hi > 0.0 ? hi : 1.0) / static_cast<double>(bins);
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double n : pooled)
      ++counts[std::min(static_cast<std::size_t>(bins - 1), static_cast<std::size_t>(n / width))];
    CsvTable h({"n_lo", "n_hi", "count", "density"});
    for (long b = 0; b < bins; ++b) {
      const auto c = counts[static_cast<std::size_t>(b)];
      h.row().add(b * width).add((b + 1) * width).add(c)
          .add(pooled.empty() ? 0.0 : static_cast<double>(c) / (static_cast<double>(pooled.size()) * width));
    }
    out.add_csv("histogram.csv", h);
  };
}

// ----------------------------------------------------------------- dispatch

struct Entry {
  const char* name;
  Parser parse;
};

const Entry kCommands[] = {
    {"bands", parse_bands},         {"contour", parse_contour},   {"roots", parse_roots},
    {"stability", parse_stability}, {"meanfield", parse_meanfield}, {"mcwf", parse_mcwf},
    {"ensemble", parse_ensemble},   {"oracle", parse_oracle},     {"occupancy", parse_occupancy},
};

struct Parsed {
  json canonical;
  Action action;
  std::uint64_t seed = 1;
  long threads = 0;
};

Parsed parse(const std::string& command, const json& config) {
  const Entry* entry = nullptr;
  for (const auto& e : kCommands)
    if (command == e.name) entry = &e;
  if (entry == nullptr) throw ConfigError("unknown command '" + command + "'");
  if (!config.is_object()) throw ConfigError("config: top level must be an object");
  Section root(config, "config");
  if (!root.has("schema_version")) throw ConfigError("config.schema_version: required value missing");
  const long version = root.integer("schema_version", 0);
  if (version != kSchemaVersion)
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion) + ", got " +
                      std::to_string(version));
  Parsed p;
  const long seed = root.integer("seed", 1);
  if (seed < 0) throw ConfigError("config.seed: must be >= 0");
  p.seed = static_cast<std::uint64_t>(seed);
  p.threads = root.integer("threads", 0);
  if (p.threads < 0) throw ConfigError("config.threads: must be >= 0 (0 picks a default)");
  try {
    p.action = entry->parse(root);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  root.finish();
  p.canonical = root.canonical();
  return p;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : kCommands) v.emplace_back(e.name);
    return v;
  }();
  return names;
}

json canonicalize(const std::string& command, const json& config) {
  return parse(command, config).canonical;
}

int resolve_threads(long configured) {
  if (configured > 0) return static_cast<int>(configured);
  if (const char* env = std::getenv("CAVLAT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int run_command(const std::string& command, const json& config, const RunOptions& options) {
  Parsed p = parse(command, config);
  Context ctx{p.seed, resolve_threads(p.threads), options.quiet};
  RunOutputs out(command, p.canonical);
  out.set_threads(ctx.threads);
  p.action(out, ctx);
  out.commit(options.out_dir);
  for (const auto& w : out.warnings()) std::cerr << "warning: " << w << "\n";
  for (const auto& w : out.truncation_warnings()) std::cerr << "truncation: " << w << "\n";
  return out.truncated() ? kExitTruncation : kExitOk;
}

}  // namespace cavlat::cli
