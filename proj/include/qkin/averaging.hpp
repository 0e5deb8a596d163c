#pragma once

// Velocity averages, discrete space-time Sobolev norms and the hbar sweeps.

#include "qkin/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace qkin {

struct TestFunction {
  enum class Kind { gaussian, bump };
  Kind kind = Kind::gaussian;
  double width = 1.0;      // gaussian: exp(-|v|^2 / (2 width^2))
  double radius = 1.0;     // bump: 1 on |v| <= radius
  double transition = 1.0; // bump: smooth decay to 0 over this distance

  double value(std::span<const double> v) const {
    double r2 = 0.0;
    for (double q : v) r2 += q * q;
    if (kind == Kind::gaussian) return std::exp(-0.5 * r2 / (width * width));
    const double r = std::sqrt(r2);
    if (r <= radius) return 1.0;
    if (r >= radius + transition) return 0.0;
    const double u = 1.0 - (r - radius) / transition;
    const double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
    return a / (a + b);
  }

  /// Fraction of |psi| mass lying outside the velocity box.
  double tail_fraction(const std::vector<GridAxis>& v_axes) const {
    if (kind == Kind::bump) {
      for (const auto& a : v_axes)
        if (radius + transition > std::min(-a.lower(), a.upper() - a.spacing())) return 1.0;
      return 0.0;
    }
    double inside = 1.0;
    for (const auto& a : v_axes) {
      const double edge = std::min(-a.lower(), a.upper() - a.spacing());
      inside *= 1.0 - std::erfc(edge / (width * std::sqrt(2.0)));
    }
    return 1.0 - inside;
  }

  void validate() const {
    if (kind == Kind::gaussian && !(width > 0.0)) throw precondition_error("test_function", "width must be positive");
    if (kind == Kind::bump && (!(radius > 0.0) || !(transition > 0.0)))
      throw precondition_error("test_function", "radius and transition must be positive");
  }
};

inline std::string describe(const TestFunction& f) {
  if (f.kind == TestFunction::Kind::gaussian) return "gaussian(width=" + std::to_string(f.width) + ")";
  return "bump(radius=" + std::to_string(f.radius) + ",transition=" + std::to_string(f.transition) + ")";
}

// ---------------------------------------------------------------------------
// Velocity averages.

/// rho_psi(t, x) = int w(t, x, v) psi(v) dv from a stack of Wigner slices.
/// The time axis spans [times[0], times[0] + n dt) with uniform spacing.
inline RealField velocity_average(const std::vector<WignerField>& stack, const std::vector<double>& times,
                                  const TestFunction& psi) {
  psi.validate();
  if (stack.empty() || stack.size() != times.size())
    throw precondition_error("velocity_average", "stack and time list must be nonempty and equally long");
  const int d = stack.front().dim();
  const auto& axes = stack.front().values.axes();
  std::vector<GridAxis> v_axes;
  for (int j = 0; j < d; ++j) v_axes.push_back(axes[static_cast<std::size_t>(d + j)].grid);
  const double tail = psi.tail_fraction(v_axes);
  if (tail >= 1e-10)
  {
    std::ostringstream msg;
    msg << "test function tail outside the velocity box is " << tail << " (need < 1e-10)";
    throw precondition_error("velocity_average", msg.str());
  }
  const double dt = times.size() > 1 ? times[1] - times[0] : 1.0;
  std::vector<Axis> out_axes{{"t1", GridAxis{static_cast<int>(times.size()), dt * static_cast<double>(times.size()), times[0]}}};
  for (int j = 0; j < d; ++j) out_axes.push_back(axes[static_cast<std::size_t>(j)]);
  RealField out(out_axes);

  std::size_t nv = 1;
  for (const auto& a : v_axes) nv *= static_cast<std::size_t>(a.n_points);
  std::vector<double> weight(nv);
  {
    RealField probe(std::vector<Axis>(axes.begin() + d, axes.end()));
    std::vector<double> pt(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < nv; ++i) {
      const auto idx = probe.unravel(i);
      for (int j = 0; j < d; ++j)
        pt[static_cast<std::size_t>(j)] = v_axes[static_cast<std::size_t>(j)].coord(static_cast<int>(idx[static_cast<std::size_t>(j)]));
      weight[i] = psi.value(pt);
    }
  }
  double dv = 1.0;
  for (const auto& a : v_axes) dv *= a.spacing();
  const std::size_t nx = stack.front().values.size() / nv;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    if (!stack[k].values.same_shape(stack.front().values))
      throw precondition_error("velocity_average", "stack slices differ in shape");
    const auto& w = stack[k].values;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (std::size_t iv = 0; iv < nv; ++iv) acc += w[ix * nv + iv] * weight[iv];
      out[k * nx + ix] = acc * dv;
    }
  }
  return out;
}

/// Exact-in-v average of a pure or mixed state against a Gaussian test function:
/// rho_psi(x) = (2 pi)^{-d} int R~(x, y) F[psi](y) dy, F[psi](y) = (2 pi a^2)^{d/2} e^{-a^2 |y|^2 / 2}.
/// The y-rule spacing keeps aliased copies of psi below e^{-40}; no velocity grid is needed.
class KernelAverager {
public:
  KernelAverager(const std::vector<Axis>& x_axes, double hbar, const TestFunction& psi)
      : axes_(x_axes), hbar_(hbar), a_(psi.width) {
    if (psi.kind != TestFunction::Kind::gaussian)
      throw config_error("the kernel velocity average supports the gaussian test function only");
    psi.validate();
    const int d = static_cast<int>(x_axes.size());
    // Band limit of w in v: hbar * Nyquist wavenumber.
    double band = 0.0;
    for (const auto& a : x_axes) band = std::max(band, hbar * pi / a.grid.spacing());
    hy_ = two_pi / (band + 9.0 * a_);
    const int m = static_cast<int>(std::ceil(9.5 / (a_ * hy_)));
    // Half lattice: lexicographically positive points carry weight 2 (R~(x,-y) = conj R~(x,y)).
    std::vector<int> idx(static_cast<std::size_t>(d), -m);
    for (;;) {
      int first = 0;
      for (int v : idx)
        if (v != 0) { first = v; break; }
      if (first >= 0) {
        Node node;
        double y2 = 0.0;
        for (int v : idx) {
          node.y.push_back(v * hy_);
          y2 += std::pow(v * hy_, 2);
        }
        node.weight = (first == 0 ? 1.0 : 2.0) * std::pow(two_pi * a_ * a_, 0.5 * d) * std::exp(-0.5 * a_ * a_ * y2);
        if (node.weight > 1e-300) nodes_.push_back(std::move(node));
      }
      int j = d - 1;
      while (j >= 0 && idx[static_cast<std::size_t>(j)] == m) idx[static_cast<std::size_t>(j--)] = -m;
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
    }
    scale_ = std::pow(hy_ / two_pi, d);
    for (const auto& a : x_axes) k_.push_back(wavenumbers(a.grid));
    const RealField probe(x_axes);
    for (std::size_t i = 0; i < probe.size(); ++i)
      for (auto v : probe.unravel(i)) index_.push_back(v);
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Adds weight * rho_psi[psi] into out (same x axes).
  void accumulate(RealField& out, const ComplexField& psi, double weight) const {
    ComplexField hat = psi;
    fft_all(hat, fft::sign::forward);
    const double inv_n = 1.0 / static_cast<double>(psi.size());
    ComplexField plus(psi.axes()), minus(psi.axes());
    std::vector<complex> phase(psi.size());
    for (const auto& node : nodes_) {
      // phase(k) = prod_j e^{i k_j hbar y_j / 2}
      const std::size_t d = k_.size();
      for (std::size_t i = 0; i < psi.size(); ++i) {
        const std::size_t* idx = &index_[i * d];
        double arg = 0.0;
        bool nyquist = false;
        for (std::size_t j = 0; j < d; ++j) {
          arg += k_[j][idx[j]] * 0.5 * hbar_ * node.y[j];
          nyquist |= idx[j] == k_[j].size() / 2;
        }
        phase[i] = nyquist ? complex(std::cos(arg), 0.0) : std::polar(1.0, arg);
      }
      for (std::size_t i = 0; i < psi.size(); ++i) {
        plus[i] = hat[i] * phase[i] * inv_n;
        minus[i] = hat[i] * std::conj(phase[i]) * inv_n;
      }
      fft_all(plus, fft::sign::backward);
      fft_all(minus, fft::sign::backward);
      const double c = weight * node.weight * scale_;
      for (std::size_t i = 0; i < psi.size(); ++i) out[i] += c * (plus[i] * std::conj(minus[i])).real();
    }
  }

private:
  struct Node {
    std::vector<double> y;
    double weight = 0.0;
  };

  std::vector<Axis> axes_;
  double hbar_;
  double a_;
  double hy_ = 0.0;
  double scale_ = 1.0;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> k_;
  std::vector<std::size_t> index_; ///< per-sample axis indices, row-major
};

// ---------------------------------------------------------------------------
// Sobolev norms.

enum class Taper { hann, none };

inline std::string describe(Taper t) { return t == Taper::hann ? "hann(t)" : "none"; }

struct SobolevEstimate {
  double s = 0.0;
  double value = 0.0;
  double top_octave = 0.0; ///< weighted share of value^2 from modes in the top octave of the grid
  std::string window;
  std::string grid;
};

/// value^2 = prod(h/n) sum (1 + tau^2 + |xi|^2)^s |DFT(taper g)|^2 over all axes;
/// the first axis is time and carries the taper.
inline SobolevEstimate sobolev_norm(const RealField& g, double s, Taper taper = Taper::hann) {
  if (!(s >= 0.0)) throw precondition_error("sobolev_norm", "negative s is out of scope");
  require_finite(g, "sobolev_norm");
  ComplexField c = to_complex(g);
  const std::size_t nt = g.extent(0);
  if (taper == Taper::hann) {
    std::vector<double> h(nt);
    for (std::size_t k = 0; k < nt; ++k) h[k] = std::pow(std::sin(pi * static_cast<double>(k) / static_cast<double>(nt)), 2);
    scale_axis<complex, double>(c, 0, h);
  }
  fft_all(c, fft::sign::forward);
  std::vector<std::vector<double>> k;
  for (const auto& a : g.axes()) k.push_back(wavenumbers(a.grid));
  double total = 0.0, top = 0.0;
  std::string grid;
  for (const auto& a : g.axes()) grid += (grid.empty() ? "" : " x ") + a.label + ":" + describe(a.grid);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto idx = c.unravel(i);
    double k2 = 0.0, octave = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double kj = k[j][idx[j]];
      k2 += kj * kj;
      octave = std::max(octave, std::abs(kj) / (pi / g.axis(j).grid.spacing()));
    }
    const double term = std::pow(1.0 + k2, s) * std::norm(c[i]);
    total += term;
    if (octave > 0.5) top += term;
  }
  const double measure = cell_measure(g) / static_cast<double>(g.size());
  SobolevEstimate e;
  e.s = s;
  e.value = std::sqrt(total * measure);
  e.top_octave = top * measure;
  e.window = describe(taper);
  e.grid = grid;
  return e;
}

// ---------------------------------------------------------------------------
// Slope fits and sweep reports.

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool flat = false; ///< all values equal: slope 0 by definition
};

/// Least-squares fit of log(y) against log(x).
inline SlopeFit fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw precondition_error("fit_log_slope", "need at least two points");
  SlopeFit f;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (!(*lo > 0.0)) throw numerical_error("fit_log_slope", "values must be positive");
  if (*hi - *lo <= 1e-14 * *hi) {
    f.flat = true;
    f.intercept = std::log(*hi);
    return f;
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

struct SweepLeg {
  double hbar = 0.0;
  std::size_t rank = 0;
  double purity = 0.0;
  int substeps = 0;       ///< solver steps per recorded time
  std::vector<SobolevEstimate> estimates; ///< one per requested s
};

struct SweepReport {
  std::string kind;
  std::vector<double> s_list;
  double scale_exponent = 0.0; ///< scaled_norm = hbar^scale_exponent * norm
  std::vector<SweepLeg> legs;
  std::vector<double> norm;        ///< primary s (s_list[0])
  std::vector<double> scaled_norm;
  SlopeFit fit;                    ///< log(norm) vs log(hbar), primary s
  std::vector<SlopeFit> fits;      ///< one per s
  double ratio = 0.0;              ///< max / min of scaled_norm
  double bound_constant = 0.0;     ///< max of scaled_norm
  int bound_violations = 0;        ///< legs with norm > C hbar^{-scale_exponent}
  double potential_linf = 0.0;
  double potential_lipschitz = 0.0;
  std::string window;
  std::string test_function;
  bool valid = true;
  std::string failure;
};

struct SweepConfig {
  double window = 1.0;      ///< T; records cover [0, 2T)
  int n_times = 32;
  double dt_max = 1e-2;
  std::vector<double> s_list;
  TestFunction test;
  Taper taper = Taper::hann;
  int threads = 1;

  void validate() const {
    if (!(window > 0.0)) throw precondition_error("sweep_config", "window must be positive");
    if (n_times < 8) throw precondition_error("sweep_config", "need at least 8 time samples");
    if (!(dt_max > 0.0)) throw precondition_error("sweep_config", "dt_max must be positive");
    for (double s : s_list)
      if (!(s >= 0.0)) throw precondition_error("sweep_config", "s must be nonnegative");
    test.validate();
  }
};

/// hbar-indexed state family.
using StateFamily = std::function<DensityOperator(double)>;

inline void validate_hbar_list(const std::vector<double>& hbars) {
  if (hbars.size() < 5) throw precondition_error("hbar_list", "slope fits need at least 5 hbar values");
  for (std::size_t i = 1; i < hbars.size(); ++i)
    if (!(hbars[i] < hbars[i - 1])) throw precondition_error("hbar_list", "hbar values must be strictly descending");
  if (hbars.front() / hbars.back() < 16.0 * (1.0 - 1e-12))
    throw precondition_error("hbar_list", "hbar values must span at least a factor 16");
  for (double h : hbars)
    if (!(h > 0.0) || h > 1.0) throw precondition_error("hbar_list", "hbar must lie in (0, 1]");
}

namespace detail {

/// rho_psi(t, x) on [0, 2T) for one state, by eigenfunction-wise evolution
/// and the kernel average at every recorded time.
inline RealField space_time_average(const DensityOperator& r, const Potential& V, const SweepConfig& cfg,
                                    int* substeps_out = nullptr) {
  const auto& x_axes = r.eigenfunctions.front().samples.axes();
  const double dt_rec = 2.0 * cfg.window / cfg.n_times;
  const double phase_dt = 0.5 * pi * 2.0 * r.params.mass /
                          (r.params.hbar * [&] {
                            double k2 = 0.0;
                            for (const auto& a : x_axes) k2 += std::pow(pi / a.grid.spacing(), 2);
                            return k2;
                          }());
  const int sub = static_cast<int>(std::ceil(dt_rec / std::min(cfg.dt_max, phase_dt) - 1e-9));
  if (substeps_out) *substeps_out = sub;
  EvolutionConfig ecfg{dt_rec / sub, (cfg.n_times - 1) * sub, sub};

  std::vector<Axis> st_axes{{"t1", GridAxis{cfg.n_times, 2.0 * cfg.window, 0.0}}};
  st_axes.insert(st_axes.end(), x_axes.begin(), x_axes.end());
  RealField out(st_axes);
  const KernelAverager avg(x_axes, r.params.hbar, cfg.test);
  RealField slice(x_axes);
  for (std::size_t e = 0; e < r.eigenfunctions.size(); ++e) {
    const double lam = r.weights[e];
    schrodinger_evolve(r.eigenfunctions[e], V, ecfg, [&](std::size_t k, double, const ComplexField& psi) {
      std::fill(slice.values().begin(), slice.values().end(), 0.0);
      avg.accumulate(slice, psi, lam);
      double* row = out.values().data() + k * slice.size();
      for (std::size_t i = 0; i < slice.size(); ++i) row[i] += slice[i];
    });
  }
  return out;
}

} // namespace detail

/// Shared sweep driver: per-hbar legs run on `threads` workers, merged by index.
inline SweepReport run_sweep(std::string kind, const StateFamily& family, const Potential& V,
                             const std::vector<double>& hbars, SweepConfig cfg, double default_s,
                             double scale_exponent, const PhaseGrid* grid_for_potential = nullptr) {
  cfg.validate();
  validate_hbar_list(hbars);
  if (cfg.s_list.empty()) cfg.s_list = {default_s};
  SweepReport rep;
  rep.kind = std::move(kind);
  rep.s_list = cfg.s_list;
  rep.scale_exponent = scale_exponent;
  rep.window = describe(cfg.taper) + " on [0," + std::to_string(2.0 * cfg.window) + ")";
  rep.test_function = describe(cfg.test);
  if (grid_for_potential) {
    rep.potential_linf = V.linf(*grid_for_potential);
    rep.potential_lipschitz = V.lipschitz(*grid_for_potential);
  }

  const std::size_t n = hbars.size();
  std::vector<SweepLeg> legs(n);
  std::vector<std::string> errors(n);
  auto work = [&](std::size_t i) {
    try {
      const DensityOperator r = family(hbars[i]);
      r.validate();
      SweepLeg leg;
      leg.hbar = hbars[i];
      leg.rank = r.rank();
      leg.purity = purity(r);
      const RealField g = detail::space_time_average(r, V, cfg, &leg.substeps);
      for (double s : cfg.s_list) leg.estimates.push_back(sobolev_norm(g, s, cfg.taper));
      legs[i] = std::move(leg);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.threads, 1)), n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) work(i);
      });
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      rep.valid = false;
      rep.failure = "hbar=" + std::to_string(hbars[i]) + ": " + errors[i];
      break;
    }
    rep.legs.push_back(std::move(legs[i]));
  }
  if (!rep.valid) return rep;

  std::vector<double> h;
  for (const auto& leg : rep.legs) {
    h.push_back(leg.hbar);
    rep.norm.push_back(leg.estimates.front().value);
    rep.scaled_norm.push_back(std::pow(leg.hbar, scale_exponent) * leg.estimates.front().value);
  }
  for (std::size_t j = 0; j < cfg.s_list.size(); ++j) {
    std::vector<double> y;
    for (const auto& leg : rep.legs) y.push_back(leg.estimates[j].value);
    rep.fits.push_back(fit_log_slope(h, y));
  }
  rep.fit = rep.fits.front();
  const auto [lo, hi] = std::minmax_element(rep.scaled_norm.begin(), rep.scaled_norm.end());
  rep.ratio = *hi / *lo;
  rep.bound_constant = *hi;
  for (std::size_t i = 0; i < rep.norm.size(); ++i)
    if (rep.norm[i] > rep.bound_constant * std::pow(h[i], -scale_exponent) * (1.0 + 1e-12)) ++rep.bound_violations;
  return rep;
}

/// Quantum averaging sweep: H^{1/2} norms, scaled by hbar^{1/2}.
inline SweepReport sweep_quantum(const StateFamily& family, const Potential& V, const std::vector<double>& hbars,
                                 const SweepConfig& cfg, const PhaseGrid* grid = nullptr) {
  return run_sweep("sweep-quantum", family, V, hbars, cfg, 0.5, 0.5, grid);
}

/// Semi-classical sweep: H^{1/4} norms, unscaled.
inline SweepReport sweep_semiclassical(const StateFamily& family, const Potential& V,
                                       const std::vector<double>& hbars, const SweepConfig& cfg,
                                       const PhaseGrid* grid = nullptr) {
  return run_sweep("sweep-semiclassical", family, V, hbars, cfg, 0.25, 0.0, grid);
}

// ---------------------------------------------------------------------------
// Classical averaging gain.

struct ClassicalConfig {
  enum class Profile { smooth_gaussian, smoothed_jump };
  Profile profile = Profile::smooth_gaussian;
  VelocityMap map = VelocityMap::identity;
  double s = 0.5;
  TestFunction test;
  double length = 16.0;     ///< x box
  double v_length = 12.0;   ///< xi box, centred
  int n_v = 64;
  int n_x = 64;             ///< coarsest level
  int n_t = 64;             ///< coarsest level; resolves tau = v k at the x Nyquist
  double window = 1.0;      ///< T; samples on [0, 2T)
  double plateau = 2.0;     ///< jump profile: half-width of the plateau
  int levels = 3;
  Taper taper = Taper::hann;

  void validate() const {
    if (levels < 2) throw precondition_error("classical_config", "need at least two refinement levels");
    if (n_x < 8 || n_t < 8 || n_v < 8) throw precondition_error("classical_config", "grids need at least 8 points");
    if (!(s >= 0.0)) throw precondition_error("classical_config", "negative s is out of scope");
    test.validate();
  }
};

struct ClassicalRegularity {
  SobolevEstimate f;        ///< finest level, L^2 in xi of the (t, x) norm
  SobolevEstimate average;  ///< finest level
  std::vector<double> f_tail, average_tail;    ///< top-octave weighted sums per level
  std::vector<double> f_ratio, average_ratio;  ///< tail(level + 1) / tail(level)
  double max_shift = 0.0;
  bool f_stable = false, average_stable = false;
};

namespace detail {

inline double classical_profile(const ClassicalConfig& c, double x, double h) {
  if (c.profile == ClassicalConfig::Profile::smooth_gaussian) return std::exp(-x * x);
  return 0.5 * (std::tanh((x + c.plateau) / h) - std::tanh((x - c.plateau) / h));
}

/// Tail ratio, with tails below round-off counted as fully resolved.
inline double tail_ratio(double coarse, double fine, double scale) {
  const double floor = 1e-24 * scale;
  if (fine <= floor) return 0.0;
  if (coarse <= floor) return std::numeric_limits<double>::infinity();
  return fine / coarse;
}

} // namespace detail

/// Free transport f(t, x, xi) = f0(x - v(xi) t) e^{-xi^2/2} and its average against psi,
/// refined `levels` times in (t, x).  The f slices use the fixed n_v grid; the average
/// integrates xi on a grid with v-spread dxi 2T <= h/4, so the discrete sum of
/// shifted profiles does not reintroduce steps at the x resolution.
inline ClassicalRegularity classical_regularity(const ClassicalConfig& c) {
  c.validate();
  const GridAxis va = GridAxis::centered(c.n_v, c.v_length);
  ClassicalRegularity out;
  for (int level = 0; level < c.levels; ++level) {
    const int nx = c.n_x << level, nt = c.n_t << level;
    const GridAxis xa = GridAxis::centered(nx, c.length);
    const GridAxis ta{nt, 2.0 * c.window, 0.0};
    RealField f0({{"x1", xa}, {"v1", va}});
    for (std::size_t i = 0; i < f0.size(); ++i) {
      const double x = xa.coord(static_cast<int>(i) / c.n_v), xi = va.coord(static_cast<int>(i) % c.n_v);
      f0[i] = detail::classical_profile(c, x, xa.spacing()) * std::exp(-0.5 * xi * xi);
    }
    std::vector<RealField> slices(static_cast<std::size_t>(c.n_v), RealField({{"t1", ta}, {"x1", xa}}));
    for (int it = 0; it < nt; ++it) {
      const auto tr = free_transport_classical(f0, c.map, ta.coord(it));
      out.max_shift = std::max(out.max_shift, tr.max_shift);
      for (int ix = 0; ix < nx; ++ix)
        for (int k = 0; k < c.n_v; ++k)
          slices[static_cast<std::size_t>(k)][static_cast<std::size_t>(it * nx + ix)] =
              tr.f[static_cast<std::size_t>(ix * c.n_v + k)];
    }
    double f2 = 0.0, ftop = 0.0;
    SobolevEstimate last;
    for (const auto& sl : slices) {
      last = sobolev_norm(sl, c.s, c.taper);
      f2 += last.value * last.value * va.spacing();
      ftop += last.top_octave * va.spacing();
    }
    out.f = last;
    out.f.value = std::sqrt(f2);
    out.f.top_octave = ftop;
    out.f.grid += " x v1:" + describe(va);

    // Average: rho^(t, k) = p^(k) sum_xi w(xi) e^{-i k v(xi) t}.
    int n_fine = c.n_v;
    while (n_fine * xa.spacing() < 4.0 * c.v_length * 2.0 * c.window) n_fine *= 2;
    const GridAxis fa = GridAxis::centered(n_fine, c.v_length);
    std::vector<double> fv(static_cast<std::size_t>(n_fine)), fw(static_cast<std::size_t>(n_fine));
    for (int k = 0; k < n_fine; ++k) {
      const double xi[] = {fa.coord(k)};
      fv[static_cast<std::size_t>(k)] = velocity(c.map, xi)[0];
      fw[static_cast<std::size_t>(k)] = std::exp(-0.5 * xi[0] * xi[0]) * c.test.value(xi) * fa.spacing();
    }
    ComplexField profile({{"x1", xa}});
    for (int ix = 0; ix < nx; ++ix)
      profile[static_cast<std::size_t>(ix)] = detail::classical_profile(c, xa.coord(ix), xa.spacing());
    fft_axis(profile, 0, fft::sign::forward);
    const double dk = two_pi / c.length;
    const int half = nx / 2;
    ComplexField avg_c({{"t1", ta}, {"x1", xa}});
    std::vector<complex> phi(static_cast<std::size_t>(half + 1));
    for (int it = 0; it < nt; ++it) {
      const double t = ta.coord(it);
      std::fill(phi.begin(), phi.end(), complex(0.0));
      for (int k = 0; k < n_fine; ++k) {
        const complex step = std::polar(1.0, -dk * fv[static_cast<std::size_t>(k)] * t);
        complex z = fw[static_cast<std::size_t>(k)];
        for (int m = 0; m <= half; ++m) {
          phi[static_cast<std::size_t>(m)] += z;
          z *= step;
        }
      }
      complex* row = avg_c.values().data() + static_cast<std::size_t>(it * nx);
      for (int m = 0; m < nx; ++m) {
        const complex ph = m < half ? phi[static_cast<std::size_t>(m)]
                           : m == half ? complex(phi[static_cast<std::size_t>(half)].real(), 0.0)
                                       : std::conj(phi[static_cast<std::size_t>(nx - m)]);
        row[m] = profile[static_cast<std::size_t>(m)] * ph / static_cast<double>(nx);
      }
    }
    fft_axis(avg_c, 1, fft::sign::backward);
    out.average = sobolev_norm(real_part(avg_c), c.s, c.taper);
    out.f_tail.push_back(ftop);
    out.average_tail.push_back(out.average.top_octave);
    if (level > 0) {
      out.f_ratio.push_back(detail::tail_ratio(out.f_tail[static_cast<std::size_t>(level - 1)], ftop, f2));
      out.average_ratio.push_back(detail::tail_ratio(out.average_tail[static_cast<std::size_t>(level - 1)],
                                                     out.average.top_octave, out.average.value * out.average.value));
    }
  }
  auto stable = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [](double q) { return q < 1.5; });
  };
  out.f_stable = stable(out.f_ratio);
  out.average_stable = stable(out.average_ratio);
  return out;
}

} // namespace qkin
