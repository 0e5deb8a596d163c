#pragma once

// Split-step solvers for the Schroedinger, von Neumann and Wigner equations,
// the theta[V] operator, and exact classical free transport.

#include "qkin/wigner.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace qkin {

/// Prescribed external potential, evaluated analytically anywhere.
struct Potential {
  enum class Kind { zero, harmonic, cosine, barrier, linear };
  Kind kind = Kind::zero;
  double omega = 1.0;              // harmonic: (1/2) m omega^2 |x - c|^2
  double mass = 1.0;
  std::vector<double> center;      // harmonic centre, barrier centre (x1 only)
  double amplitude = 0.0;          // cosine: V0 cos(k.x); barrier: height
  std::vector<double> wavevector;
  double width = 1.0;              // barrier plateau width
  double smoothing = 0.1;          // barrier edge width
  std::vector<double> slope;       // linear: a.x

  double value(std::span<const double> x) const {
    switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::harmonic: {
      double r2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - c(j)) * (x[j] - c(j));
      return 0.5 * mass * omega * omega * r2;
    }
    case Kind::cosine: return amplitude * std::cos(phase(x));
    case Kind::barrier: {
      const double u = x[0] - c(0);
      return 0.5 * amplitude *
             (std::tanh((u + 0.5 * width) / smoothing) - std::tanh((u - 0.5 * width) / smoothing));
    }
    case Kind::linear: {
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += slope[j] * x[j];
      return s;
    }
    }
    return 0.0;
  }

  double gradient(std::span<const double> x, std::size_t j) const {
    switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::harmonic: return mass * omega * omega * (x[j] - c(j));
    case Kind::cosine: return -amplitude * wavevector[j] * std::sin(phase(x));
    case Kind::barrier: {
      if (j != 0) return 0.0;
      const double u = x[0] - c(0);
      auto sech2 = [](double z) { const double ch = std::cosh(z); return 1.0 / (ch * ch); };
      return 0.5 * amplitude / smoothing *
             (sech2((u + 0.5 * width) / smoothing) - sech2((u - 0.5 * width) / smoothing));
    }
    case Kind::linear: return slope[j];
    }
    return 0.0;
  }

  void validate(int d) const {
    auto need = [&](const std::vector<double>& v, const char* what) {
      if (static_cast<int>(v.size()) != d)
        throw precondition_error("potential", std::string(what) + " needs one entry per dimension");
    };
    switch (kind) {
    case Kind::zero: break;
    case Kind::harmonic:
      need(center, "center");
      if (!(omega > 0.0) || !(mass > 0.0)) throw precondition_error("potential", "omega and mass must be positive");
      break;
    case Kind::cosine: need(wavevector, "wavevector"); break;
    case Kind::barrier:
      need(center, "center");
      if (!(width > 0.0) || !(smoothing > 0.0)) throw precondition_error("potential", "barrier width and smoothing must be positive");
      break;
    case Kind::linear: need(slope, "slope"); break;
    }
  }

  RealField sample(const std::vector<Axis>& axes) const {
    RealField out(axes);
    std::vector<double> pt(axes.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto idx = out.unravel(i);
      for (std::size_t k = 0; k < idx.size(); ++k) pt[k] = axes[k].grid.coord(static_cast<int>(idx[k]));
      out[i] = value(pt);
    }
    return out;
  }

  /// sup |V| over the box.
  double linf(const PhaseGrid& g) const { return max_abs(sample(g.x_axes())); }

  /// sup |grad V| over the box.
  double lipschitz(const PhaseGrid& g) const {
    const auto axes = g.x_axes();
    RealField probe(axes);
    std::vector<double> pt(axes.size());
    double best = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const auto idx = probe.unravel(i);
      for (std::size_t k = 0; k < idx.size(); ++k) pt[k] = axes[k].grid.coord(static_cast<int>(idx[k]));
      double g2 = 0.0;
      for (std::size_t k = 0; k < pt.size(); ++k) g2 += std::pow(gradient(pt, k), 2);
      best = std::max(best, std::sqrt(g2));
    }
    return best;
  }

private:
  double c(std::size_t j) const { return center.empty() ? 0.0 : center[j]; }
  double phase(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += wavevector[j] * x[j];
    return s;
  }
};

struct EvolutionConfig {
  double dt = 1e-3;
  int n_steps = 0;
  int record_stride = 1;
  bool store_states = false; ///< keep psi / R snapshots at record times
  bool store_fields = false; ///< keep Wigner slices at record times (wigner_evolve)

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw precondition_error("evolution_config", "dt must be positive");
    if (n_steps < 0) throw precondition_error("evolution_config", "n_steps must be nonnegative");
    if (record_stride < 1) throw precondition_error("evolution_config", "record_stride must be >= 1");
  }
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<MomentSet> moments;
  std::vector<DensityOperator> states;
  std::vector<WignerField> fields;
  std::vector<double> mass;
  std::vector<double> energy;
  double max_imag_dropped = 0.0; ///< wigner_evolve: largest |Im w| discarded per step
};

/// Called at every record time with the record index, time and current psi.
using PsiObserver = std::function<void(std::size_t, double, const ComplexField&)>;

namespace detail {

inline double max_kinetic_phase(const std::vector<Axis>& axes, double hbar, double mass, double dt) {
  double k2 = 0.0;
  for (const auto& a : axes) k2 += std::pow(pi / a.grid.spacing(), 2);
  return dt * hbar * k2 / (2.0 * mass);
}

/// Strang splitting e^{-i dt V/2hbar} e^{-i dt hbar |k|^2/2m} e^{-i dt V/2hbar}.
class SchrodingerStepper {
public:
  SchrodingerStepper(const std::vector<Axis>& axes, const PhysicalParams& p, const Potential& V, double dt)
      : half_v_(axes), kinetic_(axes) {
    const double phase = max_kinetic_phase(axes, p.hbar, p.mass, dt);
    if (!(phase < pi))
      throw precondition_error("evolution_config", "dt * hbar * k_max^2 / (2m) = " + std::to_string(phase) +
                                                       " must stay below pi; reduce dt");
    const RealField v = V.sample(axes);
    for (std::size_t i = 0; i < v.size(); ++i) half_v_[i] = std::polar(1.0, -0.5 * dt * v[i] / p.hbar);
    std::vector<std::vector<double>> k;
    for (const auto& a : axes) k.push_back(wavenumbers(a.grid));
    const double inv_n = 1.0 / static_cast<double>(kinetic_.size());
    for (std::size_t i = 0; i < kinetic_.size(); ++i) {
      const auto idx = kinetic_.unravel(i);
      double k2 = 0.0;
      for (std::size_t j = 0; j < idx.size(); ++j) k2 += k[j][idx[j]] * k[j][idx[j]];
      kinetic_[i] = inv_n * std::polar(1.0, -dt * p.hbar * k2 / (2.0 * p.mass));
    }
  }

  void step(ComplexField& psi) const {
    auto data = psi.values();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] *= half_v_[i];
    fft_all(psi, fft::sign::forward);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] *= kinetic_[i];
    fft_all(psi, fft::sign::backward);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] *= half_v_[i];
  }

private:
  ComplexField half_v_;
  ComplexField kinetic_;
};

inline double energy_of(const ComplexField& psi, const PhysicalParams& p, const RealField& v) {
  double kin = 0.0, pot = 0.0;
  for (std::size_t j = 0; j < psi.rank(); ++j) {
    const auto g = derivative(psi, label("x", static_cast<int>(j)));
    for (const auto& c : g.values()) kin += std::norm(c);
  }
  for (std::size_t i = 0; i < psi.size(); ++i) pot += v[i] * std::norm(psi[i]);
  const double h = cell_measure(psi);
  return h * (p.hbar * p.hbar / (2.0 * p.mass) * kin + pot);
}

inline void require_finite_state(const ComplexField& psi, const char* stage, int step) {
  for (const auto& c : psi.values())
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw numerical_error(stage, "non-finite wave function at step " + std::to_string(step));
}

/// Weighted sum of moment sets; v_variance rebuilt from the combined moments.
inline MomentSet combine_moments(const std::vector<MomentSet>& parts, const std::vector<double>& weights,
                                 double mass, double floor_rel = 1e-6) {
  MomentSet out;
  out.rho = RealField(parts.front().rho.axes());
  out.E = out.rho;
  out.J.assign(parts.front().J.size(), out.rho);
  for (std::size_t e = 0; e < parts.size(); ++e) {
    const double lam = weights[e];
    for (std::size_t i = 0; i < out.rho.size(); ++i) {
      out.rho[i] += lam * parts[e].rho[i];
      out.E[i] += lam * parts[e].E[i];
      for (std::size_t j = 0; j < out.J.size(); ++j) out.J[j][i] += lam * parts[e].J[j][i];
    }
  }
  const double floor = floor_rel * max_abs(out.rho);
  out.v_variance = RealField(out.rho.axes());
  for (std::size_t i = 0; i < out.rho.size(); ++i) {
    if (out.rho[i] <= floor) continue;
    double p2 = 0.0;
    for (const auto& J : out.J) p2 += std::pow(mass * J[i], 2);
    out.v_variance[i] = 2.0 * mass * out.E[i] - p2 / out.rho[i];
  }
  return out;
}

} // namespace detail

/// Strang split-step evolution of a pure state.
inline TrajectoryRecord schrodinger_evolve(const WaveFunction& psi0, const Potential& V,
                                           const EvolutionConfig& cfg, const PsiObserver& observer = {}) {
  cfg.validate();
  psi0.params.validate();
  V.validate(psi0.dim());
  const auto& axes = psi0.samples.axes();
  const detail::SchrodingerStepper stepper(axes, psi0.params, V, cfg.dt);
  const RealField vs = V.sample(axes);

  TrajectoryRecord rec;
  ComplexField psi = psi0.samples;
  auto record = [&](int step) {
    detail::require_finite_state(psi, "schrodinger_evolve", step);
    const double t = step * cfg.dt;
    const WaveFunction snap{psi0.params, psi};
    rec.times.push_back(t);
    rec.moments.push_back(moments_of_state(pure_state(snap)));
    rec.mass.push_back(std::pow(l2_norm(psi), 2));
    rec.energy.push_back(detail::energy_of(psi, psi0.params, vs));
    if (cfg.store_states) rec.states.push_back(pure_state(snap));
    if (observer) observer(rec.times.size() - 1, t, psi);
  };
  record(0);
  for (int n = 1; n <= cfg.n_steps; ++n) {
    stepper.step(psi);
    if (n % cfg.record_stride == 0) record(n);
    else if (n % 64 == 0) detail::require_finite_state(psi, "schrodinger_evolve", n);
  }
  return rec;
}

/// Eigenfunction-wise evolution of R; weights stay fixed.  Eigenfunctions are
/// distributed over `threads` workers and merged in index order.
inline TrajectoryRecord von_neumann_evolve(const DensityOperator& r, const Potential& V,
                                           const EvolutionConfig& cfg, int threads = 1) {
  r.params.validate();
  const std::size_t n = r.eigenfunctions.size();
  std::vector<TrajectoryRecord> legs(n);
  EvolutionConfig leg_cfg = cfg;
  auto work = [&](std::size_t e) { legs[e] = schrodinger_evolve(r.eigenfunctions[e], V, leg_cfg); };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers == 1) {
    for (std::size_t e = 0; e < n; ++e) work(e);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t e = w; e < n; e += workers) work(e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  TrajectoryRecord rec;
  rec.times = legs.front().times;
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    std::vector<MomentSet> parts;
    double mass = 0.0, energy = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      parts.push_back(legs[e].moments[k]);
      mass += r.weights[e] * legs[e].mass[k];
      energy += r.weights[e] * legs[e].energy[k];
    }
    rec.moments.push_back(detail::combine_moments(parts, r.weights, r.params.mass));
    rec.mass.push_back(mass);
    rec.energy.push_back(energy);
    if (cfg.store_states) {
      DensityOperator snap{r.params, r.weights, {}};
      for (std::size_t e = 0; e < n; ++e) snap.eigenfunctions.push_back(to_wave_function(legs[e].states[k]));
      rec.states.push_back(std::move(snap));
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Wigner-equation solver.

namespace detail {

inline std::vector<GridAxis> velocity_axes_of(const WignerField& w) {
  std::vector<GridAxis> v;
  for (int j = 0; j < w.dim(); ++j) v.push_back(w.values.axis(static_cast<std::size_t>(w.dim() + j)).grid);
  return v;
}

/// exp(-i dt (V(x + hbar y/2) - V(x - hbar y/2)) / hbar) on the (x, y) grid, or the
/// symbol itself (V(x + hbar y/2) - V(x - hbar y/2)) / (i hbar) when dt == 0.
inline ComplexField potential_symbol(const ComplexField& tilde_shape, int d, const Potential& V,
                                     double hbar, double dt) {
  ComplexField out(tilde_shape.axes());
  std::vector<double> xp(static_cast<std::size_t>(d)), xm(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = out.unravel(i);
    for (int j = 0; j < d; ++j) {
      const double x = out.axis(static_cast<std::size_t>(j)).grid.coord(static_cast<int>(idx[static_cast<std::size_t>(j)]));
      const double y = out.axis(static_cast<std::size_t>(d + j)).grid.coord(static_cast<int>(idx[static_cast<std::size_t>(d + j)]));
      xp[static_cast<std::size_t>(j)] = x + 0.5 * hbar * y;
      xm[static_cast<std::size_t>(j)] = x - 0.5 * hbar * y;
    }
    const double dv = V.value(xp) - V.value(xm);
    out[i] = dt == 0.0 ? complex(0.0, -dv / hbar) : std::polar(1.0, -dt * dv / hbar);
  }
  return out;
}

class WignerStepper {
public:
  WignerStepper(const WignerField& w0, const Potential& V, double dt)
      : d_(w0.dim()), params_(w0.params), v_axes_(velocity_axes_of(w0)), transport_(to_complex(w0.values).axes()) {
    // Transport: multiply by exp(-i (dt/2) xi.v / m) in the x-Fourier picture.
    std::vector<std::vector<double>> k;
    for (int j = 0; j < d_; ++j) k.push_back(wavenumbers(w0.values.axis(static_cast<std::size_t>(j)).grid));
    std::size_t nx = 1;
    for (int j = 0; j < d_; ++j) nx *= w0.values.extent(static_cast<std::size_t>(j));
    const double inv_n = 1.0 / static_cast<double>(nx);
    for (std::size_t i = 0; i < transport_.size(); ++i) {
      const auto idx = transport_.unravel(i);
      double kv = 0.0;
      for (int j = 0; j < d_; ++j)
        kv += k[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]] *
              v_axes_[static_cast<std::size_t>(j)].coord(static_cast<int>(idx[static_cast<std::size_t>(d_ + j)]));
      transport_[i] = inv_n * std::polar(1.0, -0.5 * dt * kv / params_.mass);
    }
    potential_ = potential_symbol(tilde_of(w0).values, d_, V, params_.hbar, dt);
    // e^{+i k dv y0} before the backward transform, its conjugate / N_v after.
    pre_ = ComplexField(transport_.axes());
    post_ = pre_;
    std::size_t nv = 1;
    for (const auto& a : v_axes_) nv *= static_cast<std::size_t>(a.n_points);
    for (std::size_t i = 0; i < pre_.size(); ++i) {
      const auto idx = pre_.unravel(i);
      double ph = 0.0;
      for (int j = 0; j < d_; ++j) {
        const auto& a = v_axes_[static_cast<std::size_t>(j)];
        ph += static_cast<double>(idx[static_cast<std::size_t>(d_ + j)]) * a.spacing() * a.dual().offset;
      }
      pre_[i] = std::polar(1.0, ph);
      post_[i] = std::conj(pre_[i]) / static_cast<double>(nv);
    }
  }

  /// One Strang step; returns the largest |Im| dropped.
  double step(RealField& w) const {
    ComplexField c = to_complex(w);
    half_transport(c);
    // v -> y -> v with the centred-grid phases folded into pre/post factors;
    // the y-index phases of the two transforms cancel.
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= pre_[i];
    for (int j = 0; j < d_; ++j) fft_axis(c, static_cast<std::size_t>(d_ + j), fft::sign::backward);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= potential_[i];
    for (int j = 0; j < d_; ++j) fft_axis(c, static_cast<std::size_t>(d_ + j), fft::sign::forward);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= post_[i];
    half_transport(c);
    double mi = 0.0;
    w = real_part(c, &mi);
    return mi;
  }

private:
  void half_transport(ComplexField& c) const {
    for (int j = 0; j < d_; ++j) fft_axis(c, static_cast<std::size_t>(j), fft::sign::forward);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= transport_[i];
    for (int j = 0; j < d_; ++j) fft_axis(c, static_cast<std::size_t>(j), fft::sign::backward);
  }

  int d_;
  PhysicalParams params_;
  std::vector<GridAxis> v_axes_;
  ComplexField transport_;
  ComplexField potential_;
  ComplexField pre_;
  ComplexField post_;
};

} // namespace detail

/// Strang splitting: exact half-step free transport, exact potential step in (x, y).
inline TrajectoryRecord wigner_evolve(const WignerField& w0, const Potential& V, const EvolutionConfig& cfg) {
  cfg.validate();
  w0.params.validate();
  V.validate(w0.dim());
  const detail::WignerStepper stepper(w0, V, cfg.dt);
  TrajectoryRecord rec;
  RealField w = w0.values;
  auto record = [&](int step) {
    require_finite(w, "wigner_evolve");
    const WignerField snap{w0.params, w};
    rec.times.push_back(step * cfg.dt);
    rec.moments.push_back(moments(snap, 1.0));
    rec.mass.push_back(integrate(w));
    rec.energy.push_back(l2_norm(w));
    if (cfg.store_fields) rec.fields.push_back(snap);
  };
  record(0);
  for (int n = 1; n <= cfg.n_steps; ++n) {
    rec.max_imag_dropped = std::max(rec.max_imag_dropped, stepper.step(w));
    if (n % cfg.record_stride == 0) record(n);
  }
  if (rec.fields.empty() || rec.times.back() != cfg.n_steps * cfg.dt)
    rec.fields.push_back(WignerField{w0.params, w});
  return rec;
}

/// theta[V] w = (2 pi)^{-d} F_{y -> v}[ (V(x + hbar y/2) - V(x - hbar y/2)) / (i hbar) w~ ].
inline WignerField apply_theta(const WignerField& w, const Potential& V) {
  V.validate(w.dim());
  const int d = w.dim();
  TildeField t = tilde_of(w);
  const ComplexField sym = detail::potential_symbol(t.values, d, V, w.params.hbar, 0.0);
  for (std::size_t i = 0; i < sym.size(); ++i) t.values[i] *= sym[i];
  return wigner_from_tilde(t, detail::velocity_axes_of(w));
}

/// Classical force term grad V(x) . grad_v w.
inline RealField vlasov_force_term(const WignerField& w, const Potential& V) {
  const int d = w.dim();
  RealField out(w.values.axes());
  std::vector<double> pt(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const auto dw = derivative(w.values, label("v", j));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto idx = out.unravel(i);
      for (int k = 0; k < d; ++k)
        pt[static_cast<std::size_t>(k)] = w.values.axis(static_cast<std::size_t>(k)).grid.coord(static_cast<int>(idx[static_cast<std::size_t>(k)]));
      out[i] += V.gradient(pt, static_cast<std::size_t>(j)) * dw[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classical free transport.

enum class VelocityMap { identity, relativistic };

/// v(xi) = xi, or xi / sqrt(1 + |xi|^2).
inline std::vector<double> velocity(VelocityMap map, std::span<const double> xi) {
  std::vector<double> v(xi.begin(), xi.end());
  if (map == VelocityMap::relativistic) {
    double n2 = 0.0;
    for (double q : xi) n2 += q * q;
    const double g = 1.0 / std::sqrt(1.0 + n2);
    for (auto& q : v) q *= g;
  }
  return v;
}

struct ClassicalTransport {
  RealField f;
  double max_shift = 0.0; ///< largest |v(xi)| t over the velocity slices
};

/// f(t, x, xi) = f0(x - v(xi) t, xi) by spectral shifts; f0 has axes x1..xd, v1..vd.
inline ClassicalTransport free_transport_classical(const RealField& f0, VelocityMap map, double t) {
  const std::size_t d = f0.rank() / 2;
  ComplexField c = to_complex(f0);
  std::vector<std::vector<double>> k;
  std::size_t nx = 1;
  for (std::size_t j = 0; j < d; ++j) {
    k.push_back(wavenumbers(f0.axis(j).grid));
    nx *= f0.extent(j);
  }
  for (std::size_t j = 0; j < d; ++j) fft_axis(c, j, fft::sign::forward);
  ClassicalTransport out;
  std::vector<double> xi(d);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto idx = c.unravel(i);
    for (std::size_t j = 0; j < d; ++j) xi[j] = f0.axis(d + j).grid.coord(static_cast<int>(idx[d + j]));
    const auto v = velocity(map, xi);
    double kv = 0.0, v2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double kj = k[j][idx[j]];
      // Nyquist mode: keep the real cosine part so the result stays real.
      kv += kj * v[j];
      v2 += v[j] * v[j];
    }
    out.max_shift = std::max(out.max_shift, std::sqrt(v2) * std::abs(t));
    bool nyquist = false;
    for (std::size_t j = 0; j < d; ++j) nyquist |= idx[j] == f0.extent(j) / 2;
    c[i] *= (nyquist ? complex(std::cos(kv * t), 0.0) : std::polar(1.0, -kv * t)) / static_cast<double>(nx);
  }
  for (std::size_t j = 0; j < d; ++j) fft_axis(c, j, fft::sign::backward);
  out.f = real_part(c);
  return out;
}

} // namespace qkin
