#pragma once

// Experiment runner behind the CLI.  Each kind turns a parsed configuration
// into artifacts held by an Emitter; nothing touches the disk until the
// caller writes them.

#include "qkin/config.hpp"
#include "qkin/io.hpp"

#include <fftw3.h>

#include <chrono>
#include <cmath>
#include <limits>

namespace qkin {

inline constexpr const char* version_string = "1.0.0";

struct RunOptions {
  int threads = 1;
  bool seedless = false;
};

struct RunResult {
  Emitter emitter;
  json summary;              ///< headline numbers, echoed in the manifest
  std::string failed_stage;  ///< non-empty when a numerical stage failed
  std::string failure;
};

namespace detail {

inline std::vector<std::string> axis_columns(const std::vector<Axis>& axes) {
  std::vector<std::string> c;
  for (const auto& a : axes) c.push_back(a.label);
  return c;
}

inline std::vector<double> coords_at(const std::vector<Axis>& axes, const std::vector<std::size_t>& idx) {
  std::vector<double> c;
  for (std::size_t k = 0; k < axes.size(); ++k) c.push_back(axes[k].grid.coord(static_cast<int>(idx[k])));
  return c;
}

inline double cell_volume(const std::vector<Axis>& axes) {
  double v = 1.0;
  for (const auto& a : axes) v *= a.grid.spacing();
  return v;
}

/// rho, J_j, E and velocity variance per spatial point, with an optional leading time column.
inline void append_moments(CsvTable& t, const MomentSet& m, const double* time) {
  const auto& axes = m.rho.axes();
  for (std::size_t i = 0; i < m.rho.size(); ++i) {
    std::vector<double> row;
    if (time) row.push_back(*time);
    const auto c = coords_at(axes, m.rho.unravel(i));
    row.insert(row.end(), c.begin(), c.end());
    row.push_back(m.rho[i]);
    for (const auto& J : m.J) row.push_back(J[i]);
    row.push_back(m.E.size() ? m.E[i] : 0.0);
    row.push_back(m.v_variance.size() ? m.v_variance[i] : 0.0);
    t.row(row);
  }
}

inline std::vector<std::string> moment_columns(int d, bool with_time) {
  std::vector<std::string> c;
  if (with_time) c.push_back("t");
  for (int j = 0; j < d; ++j) c.push_back(label("x", j));
  c.push_back("rho");
  for (int j = 0; j < d; ++j) c.push_back(label("J", j));
  c.push_back("E");
  c.push_back("v_variance");
  return c;
}

inline DensityOperator state_at(const ExperimentConfig& cfg, double hbar) {
  return build_state(cfg.state, cfg.grid.grid(), {hbar, cfg.params.mass});
}

inline WaveFunction pure_at(const ExperimentConfig& cfg, double hbar, const char* stage) {
  const auto r = state_at(cfg, hbar);
  if (r.rank() != 1) throw precondition_error(stage, "this experiment needs a pure state");
  return to_wave_function(r);
}

inline WignerField wigner_of(const DensityOperator& r, const std::vector<GridAxis>& v) {
  return r.rank() == 1 ? wigner_of_pure(to_wave_function(r), v) : wigner_of_mixed(r, v);
}

// ---------------------------------------------------------------------------

inline void run_transform(const ExperimentConfig& cfg, RunResult& out) {
  const auto r = state_at(cfg, cfg.params.hbar);
  r.validate();
  const auto w = wigner_of(r, cfg.grid.v_axes(cfg.params.hbar));
  const auto& axes = w.values.axes();
  const double cell = cell_volume(axes);
  const int d = w.dim();

  auto cols = axis_columns(axes);
  cols.push_back("w");
  cols.push_back("quadrature");
  CsvTable table(cols);
  double total = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    auto row = coords_at(axes, w.values.unravel(i));
    row.push_back(w.values[i]);
    row.push_back(w.values[i] * cell);
    table.row(row);
    total += w.values[i] * cell;
    lo = std::min(lo, w.values[i]);
    hi = std::max(hi, w.values[i]);
  }
  double sum_l2 = 0.0;
  for (double l : r.weights) sum_l2 += l * l;
  const double plancherel = std::pow(two_pi * r.params.hbar, d) * l2_norm_squared(w);

  const auto mom = moments(w, 1.0);
  CsvTable mt(moment_columns(d, false));
  append_moments(mt, mom, nullptr);

  out.summary = {{"trace", total},
                 {"plancherel", {{"scaled_l2", plancherel}, {"sum_lambda2", sum_l2},
                                 {"relative_error", std::abs(plancherel - sum_l2) / sum_l2}}},
                 {"min_w", lo},
                 {"max_w", hi},
                 {"imag_residue", w.imag_residue},
                 {"velocity_tail", velocity_tail(w)},
                 {"rank", r.rank()},
                 {"purity", purity(r)}};
  out.emitter.add("wigner.csv", "transform", table.str());
  out.emitter.add("moments.csv", "moments", mt.str());
  if (cfg.output.binary) out.emitter.add("wigner.bin", "transform", field_dump({&w.values}));
}

inline void run_evolve(const ExperimentConfig& cfg, const RunOptions& opt, RunResult& out) {
  const auto r = state_at(cfg, cfg.params.hbar);
  r.validate();
  TrajectoryRecord traj;
  switch (cfg.solver) {
  case Solver::schrodinger:
    if (r.rank() != 1) throw precondition_error("evolve", "solver 'schrodinger' needs a pure state");
    traj = schrodinger_evolve(to_wave_function(r), cfg.potential, cfg.evolution);
    break;
  case Solver::von_neumann: traj = von_neumann_evolve(r, cfg.potential, cfg.evolution, opt.threads); break;
  case Solver::wigner:
    traj = wigner_evolve(wigner_of(r, cfg.grid.v_axes(cfg.params.hbar)), cfg.potential, cfg.evolution);
    break;
  }
  // The Wigner solver reports the L2 norm of w in the energy slot.
  CsvTable t({"t", "mass", cfg.solver == Solver::wigner ? "w_l2" : "energy"});
  for (std::size_t k = 0; k < traj.times.size(); ++k) t.row({traj.times[k], traj.mass[k], traj.energy[k]});
  CsvTable mt(moment_columns(cfg.grid.dim, true));
  for (std::size_t k = 0; k < traj.times.size(); ++k) append_moments(mt, traj.moments[k], &traj.times[k]);

  const double drift = std::abs(traj.mass.back() - traj.mass.front());
  out.summary = {{"solver", cfg.solver == Solver::schrodinger ? "schrodinger"
                            : cfg.solver == Solver::wigner    ? "wigner"
                                                              : "von_neumann"},
                 {"records", traj.times.size()},
                 {"final_time", traj.times.back()},
                 {"mass_drift", drift},
                 {"max_imag_dropped", traj.max_imag_dropped}};
  out.emitter.add("trajectory.csv", "evolve", t.str());
  out.emitter.add("moments.csv", "moments", mt.str());
  if (cfg.output.binary) {
    std::vector<const RealField*> stack;
    if (!traj.fields.empty()) {
      for (const auto& f : traj.fields) stack.push_back(&f.values);
      std::vector<double> times = traj.times;
      times.resize(stack.size(), traj.times.back());
      out.emitter.add("fields.bin", "evolve", field_dump(stack, times));
    } else {
      for (const auto& m : traj.moments) stack.push_back(&m.rho);
      out.emitter.add("density.bin", "evolve", field_dump(stack, traj.times));
    }
  }
}

inline void run_sweep_experiment(const ExperimentConfig& cfg, const RunOptions& opt, RunResult& out) {
  const PhaseGrid grid = cfg.grid.grid();
  SweepConfig sc = cfg.sweep;
  sc.threads = opt.threads;
  const StateFamily family = [&](double h) { return state_at(cfg, h); };
  const SweepReport rep = cfg.kind == ExperimentKind::sweep_quantum
                              ? sweep_quantum(family, cfg.potential, cfg.hbars, sc, &grid)
                              : sweep_semiclassical(family, cfg.potential, cfg.hbars, sc, &grid);

  CsvTable t({"hbar", "s", "norm", "scaled_norm", "rank", "purity", "slope", "intercept"});
  for (const auto& leg : rep.legs)
    for (std::size_t j = 0; j < leg.estimates.size(); ++j) {
      const double norm = leg.estimates[j].value;
      t.row({leg.hbar, leg.estimates[j].s, norm, std::pow(leg.hbar, rep.scale_exponent) * norm,
             static_cast<double>(leg.rank), leg.purity, rep.fits[j].slope, rep.fits[j].intercept});
    }
  out.summary = {{"valid", rep.valid},
                 {"slope", rep.fit.slope},
                 {"ratio", rep.ratio},
                 {"bound_constant", rep.bound_constant},
                 {"bound_violations", rep.bound_violations},
                 {"window", rep.window}};
  out.emitter.add("sweep.csv", "sweep", t.str());
  if (cfg.output.json) out.emitter.add_json("sweep.json", "sweep", to_json(rep));
  if (!rep.valid) {
    out.failed_stage = "sweep";
    out.failure = rep.failure;
  }
}

inline void run_purity(const ExperimentConfig& cfg, RunResult& out) {
  const auto r = state_at(cfg, cfg.params.hbar);
  r.validate();
  const auto tilde = tilde_of_state(r, cfg.grid.v_axes(cfg.params.hbar));
  const auto verdict = is_pure_diagnostic(tilde, cfg.purity);
  json identity = nullptr;
  try {
    identity = madelung_identity_residual(tilde, cfg.purity.floor_rel);
  } catch (const precondition_error& e) {
    identity = {{"skipped", e.what()}};
  }
  CsvTable t({"family", "j", "k", "residual"});
  const auto& res = verdict.residual;
  for (std::size_t j = 0; j < res.r1.size(); ++j)
    for (std::size_t k = 0; k < res.r1.size(); ++k) {
      t.row({1.0, static_cast<double>(j + 1), static_cast<double>(k + 1), res.r1[j][k]});
      t.row({2.0, static_cast<double>(j + 1), static_cast<double>(k + 1), res.r2[j][k]});
    }
  out.summary = {{"verdict", describe(verdict.verdict)},
                 {"max_residual", verdict.max_residual},
                 {"support_fraction", res.support_fraction},
                 {"state_purity", purity(r)}};
  out.emitter.add("purity.csv", "purity", t.str());
  if (cfg.output.json) {
    json j = to_json(verdict);
    j["madelung_identity"] = identity;
    out.emitter.add_json("purity.json", "purity", j);
  }
}

inline void run_qhd(const ExperimentConfig& cfg, RunResult& out) {
  const auto psi = pure_at(cfg, cfg.params.hbar, "qhd");
  std::vector<QhdResiduals> rs;
  if (cfg.evolution.n_steps == 0) rs.push_back(qhd_snapshot(psi, cfg.potential, cfg.qhd_floor));
  else rs = qhd_residuals(schrodinger_evolve(psi, cfg.potential, cfg.evolution), cfg.potential, cfg.qhd_floor);

  std::vector<std::string> cols{"t", "continuity"};
  const int d = cfg.grid.dim;
  for (const char* form : {"euler_conservation", "euler_pressure_form", "euler_bohm_form"})
    for (int j = 0; j < d; ++j) cols.push_back(std::string(form) + "_" + std::to_string(j + 1));
  for (const char* c : {"form_equivalence", "grad_identity", "mask_fraction", "near_vacuum"}) cols.push_back(c);
  CsvTable t(cols);
  double worst = 0.0;
  json series = json::array();
  for (const auto& r : rs) {
    std::vector<double> row{r.time, r.continuity};
    for (const auto* v : {&r.euler_conservation, &r.euler_pressure_form, &r.euler_bohm_form})
      row.insert(row.end(), v->begin(), v->end());
    row.insert(row.end(), {r.form_equivalence, r.grad_identity, r.mask_fraction, r.near_vacuum ? 1.0 : 0.0});
    t.row(row);
    worst = std::max(worst, r.max_residual());
    series.push_back(to_json(r));
  }
  out.summary = {{"records", rs.size()}, {"max_residual", worst}};
  out.emitter.add("qhd.csv", "qhd", t.str());
  if (cfg.output.json) out.emitter.add_json("qhd.json", "qhd", series);
}

inline void run_monokinetic(const ExperimentConfig& cfg, RunResult& out) {
  const PureFamily family = [&](double h) { return pure_at(cfg, h, "monokinetic"); };
  const auto rep = monokinetic_diagnostic(family, cfg.hbars, cfg.monokinetic);
  CsvTable t({"hbar", "variance", "hypothesis", "grad_energy", "rho2_P", "rho2_TrPi"});
  for (const auto& l : rep.legs) t.row({l.hbar, l.variance, l.hypothesis, l.grad_energy, l.rho2_P, l.rho2_TrPi});
  out.summary = {{"variance_slope", rep.variance_fit.slope},
                 {"hypothesis_slope", rep.hypothesis_fit.slope},
                 {"chain_agrees", rep.chain_agrees}};
  out.emitter.add("monokinetic.csv", "monokinetic", t.str());
  if (cfg.output.json) out.emitter.add_json("monokinetic.json", "monokinetic", to_json(rep));
}

inline void run_classical(const ExperimentConfig& cfg, RunResult& out) {
  const auto& c = cfg.classical;
  const auto rep = classical_regularity(c);
  CsvTable t({"level", "n_x", "n_t", "f_tail", "average_tail", "f_ratio", "average_ratio"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t l = 0; l < rep.f_tail.size(); ++l)
    t.row({static_cast<double>(l), static_cast<double>(c.n_x << l), static_cast<double>(c.n_t << l), rep.f_tail[l],
           rep.average_tail[l], l ? rep.f_ratio[l - 1] : nan, l ? rep.average_ratio[l - 1] : nan});
  out.summary = {{"f_stable", rep.f_stable}, {"average_stable", rep.average_stable}, {"max_shift", rep.max_shift}};
  out.emitter.add("classical.csv", "classical", t.str());
  if (cfg.output.json) out.emitter.add_json("classical.json", "classical", to_json(rep));
}

} // namespace detail

/// Builds every state the run would use, so factory preconditions (box
/// margins, resolution) surface without running an experiment.
inline void validate_experiment(const ExperimentConfig& cfg) {
  using E = ExperimentKind;
  if (cfg.kind == E::classical) return;
  std::vector<double> hs = cfg.hbars.empty() ? std::vector<double>{cfg.params.hbar} : cfg.hbars;
  for (double h : hs) {
    const auto r = detail::state_at(cfg, h);
    r.validate();
    if ((cfg.kind == E::qhd || cfg.kind == E::monokinetic || (cfg.kind == E::evolve && cfg.solver == Solver::schrodinger)) &&
        r.rank() != 1)
      throw precondition_error(describe(cfg.kind), "this experiment needs a pure state");
  }
  if (cfg.kind != E::sweep_quantum && cfg.kind != E::sweep_semiclassical && cfg.kind != E::monokinetic)
    cfg.potential.validate(cfg.grid.dim);
}

/// Runs the experiment.  Precondition and configuration errors propagate;
/// numerical failures are reported through `failed_stage`.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (opt.threads < 1) throw config_error("--threads must be >= 1");
  RunResult out;
  try {
    switch (cfg.kind) {
    case ExperimentKind::transform: detail::run_transform(cfg, out); break;
    case ExperimentKind::evolve: detail::run_evolve(cfg, opt, out); break;
    case ExperimentKind::sweep_quantum:
    case ExperimentKind::sweep_semiclassical: detail::run_sweep_experiment(cfg, opt, out); break;
    case ExperimentKind::purity: detail::run_purity(cfg, out); break;
    case ExperimentKind::qhd: detail::run_qhd(cfg, out); break;
    case ExperimentKind::monokinetic: detail::run_monokinetic(cfg, out); break;
    case ExperimentKind::classical: detail::run_classical(cfg, out); break;
    }
  } catch (const numerical_error& e) {
    out.failed_stage = e.stage();
    out.failure = e.what();
  }
  return out;
}

/// Manifest: config echo, versions, options, defaults applied and per-file digests.
inline json make_manifest(const ExperimentConfig& cfg, const RunOptions& opt, const RunResult& res, const json& files,
                          double wall_seconds, const std::string& config_text) {
  json echo = json::array();
  for (const auto& [block, key, value] : cfg.echo) echo.push_back({{"block", block}, {"key", key}, {"value", value}});
  json defaults = json::object();
  for (const auto& [k, v] : cfg.defaults) defaults[k] = v;
  return {{"experiment", describe(cfg.kind)},
          {"status", res.failed_stage.empty() ? "ok" : "numerical_failure"},
          {"failed_stage", res.failed_stage},
          {"failure", res.failure},
          {"config", echo},
          {"config_sha256", sha256_hex(config_text)},
          {"defaults_applied", defaults},
          {"versions", {{"qkin", version_string}, {"fftw", std::string(fftw_version)}, {"compiler", __VERSION__}}},
          {"options", {{"threads", opt.threads}, {"seedless", opt.seedless}, {"randomness", "none"}}},
          {"wall_time_seconds", wall_seconds},
          {"summary", res.summary},
          {"files", files}};
}

} // namespace qkin
