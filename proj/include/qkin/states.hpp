#pragma once

// Wave functions, low-rank density operators and the factories that build
// them on a periodic position grid.

#include "qkin/grid.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace qkin {

struct PhysicalParams {
  double hbar = 1.0;
  double mass = 1.0;

  void validate() const {
    if (!(hbar > 0.0 && hbar <= 1.0))
      throw precondition_error("physical_params", "hbar must lie in (0, 1]");
    if (!(mass > 0.0)) throw precondition_error("physical_params", "mass must be positive");
  }
};

struct WaveFunction {
  PhysicalParams params;
  ComplexField samples; ///< axes x1..xd

  int dim() const { return static_cast<int>(samples.rank()); }
  double norm() const { return l2_norm(samples); }
};

/// R = sum_j weights[j] |psi_j><psi_j| with orthonormal psi_j.
struct DensityOperator {
  PhysicalParams params;
  std::vector<double> weights;
  std::vector<WaveFunction> eigenfunctions;

  std::size_t rank() const {
    std::size_t r = 0;
    for (double w : weights) r += w > 0.0 ? 1 : 0;
    return r;
  }

  void validate(double trace_tol = 1e-10, double gram_tol = 1e-8) const;
};

/// Sum of squared occupation probabilities, tr R^2.
inline double purity(const DensityOperator& r) {
  double p = 0.0;
  for (double w : r.weights) p += w * w;
  return p;
}

inline complex inner_product(const ComplexField& a, const ComplexField& b) {
  complex acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc * cell_measure(a);
}

inline std::vector<std::vector<complex>> gram_matrix(const std::vector<WaveFunction>& fs) {
  const std::size_t n = fs.size();
  std::vector<std::vector<complex>> g(n, std::vector<complex>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      g[i][j] = inner_product(fs[i].samples, fs[j].samples);
      g[j][i] = std::conj(g[i][j]);
    }
  return g;
}

inline void DensityOperator::validate(double trace_tol, double gram_tol) const {
  params.validate();
  if (weights.size() != eigenfunctions.size() || weights.empty())
    throw precondition_error("density_operator", "weights and eigenfunctions differ in length");
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw precondition_error("density_operator", "negative occupation probability");
    sum += w;
  }
  if (std::abs(sum - 1.0) > trace_tol)
    throw precondition_error("density_operator", "trace " + std::to_string(sum) + " != 1");
  const auto g = gram_matrix(eigenfunctions);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (std::abs(g[i][j] - (i == j ? 1.0 : 0.0)) > gram_tol)
        throw precondition_error("density_operator", "eigenfunctions are not orthonormal");
}

inline DensityOperator pure_state(const WaveFunction& psi) { return {psi.params, {1.0}, {psi}}; }

/// Recover psi (up to a global phase) from a rank-one operator.
inline WaveFunction to_wave_function(const DensityOperator& r) {
  if (r.rank() != 1) throw precondition_error("to_wave_function", "operator is not rank one");
  for (std::size_t j = 0; j < r.weights.size(); ++j)
    if (r.weights[j] > 0.0) return r.eigenfunctions[j];
  throw precondition_error("to_wave_function", "operator is empty");
}

// ---------------------------------------------------------------------------
// Sampling helpers.

using PointFunction = std::function<complex(std::span<const double>)>;

inline ComplexField sample(const PhaseGrid& grid, const PointFunction& f) {
  grid.validate();
  ComplexField out(grid.x_axes());
  std::vector<double> pt(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = out.unravel(i);
    for (std::size_t k = 0; k < idx.size(); ++k)
      pt[k] = grid.x[k].coord(static_cast<int>(idx[k]));
    out[i] = f(pt);
  }
  return out;
}

inline void normalize(ComplexField& f) {
  const double n = l2_norm(f);
  if (!(n > 0.0) || !std::isfinite(n)) throw numerical_error("normalize", "zero or non-finite norm");
  for (auto& v : f.values()) v /= n;
}

namespace detail {

inline void require_coord_size(const std::vector<double>& v, int d, const char* what) {
  if (static_cast<int>(v.size()) != d)
    throw precondition_error("state_factory", std::string(what) + " must have one entry per dimension");
}

inline void require_margin(const PhaseGrid& grid, const std::vector<double>& centre, double width,
                           double hbar, const std::vector<double>& p0, const char* name) {
  for (int j = 0; j < grid.dim(); ++j) {
    const auto& ax = grid.x[static_cast<std::size_t>(j)];
    const double c = centre[static_cast<std::size_t>(j)];
    const double margin = std::min(c - ax.lower(), ax.upper() - c);
    if (margin < 8.0 * width)
      throw precondition_error(name, "box margin " + std::to_string(margin) + " < 8 sigma = " +
                                         std::to_string(8.0 * width) + " on axis " +
                                         label("x", j));
    const double k_need = std::abs(p0[static_cast<std::size_t>(j)]) / hbar + 8.0 / width;
    const double k_max = pi / ax.spacing();
    if (k_need > k_max)
      throw precondition_error(name, "dual margin: |p0|/hbar + 8/sigma = " + std::to_string(k_need) +
                                         " exceeds Nyquist wavenumber " + std::to_string(k_max));
  }
}

} // namespace detail

/// psi(x) = (pi s^2)^{-d/4} exp(-|x-x0|^2/(2 s^2)) exp(i p0.x/hbar), normalized on the grid.
inline WaveFunction make_gaussian(const PhaseGrid& grid, const PhysicalParams& params,
                                  std::vector<double> x0, std::vector<double> p0, double sigma) {
  params.validate();
  grid.validate();
  const int d = grid.dim();
  detail::require_coord_size(x0, d, "x0");
  detail::require_coord_size(p0, d, "p0");
  if (!(sigma > 0.0)) throw precondition_error("make_gaussian", "sigma must be positive");
  detail::require_margin(grid, x0, sigma, params.hbar, p0, "make_gaussian");
  const double amp = std::pow(pi * sigma * sigma, -0.25 * d);
  auto f = [&](std::span<const double> x) {
    double r2 = 0.0, phase = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dx = x[j] - x0[static_cast<std::size_t>(j)];
      r2 += dx * dx;
      phase += p0[static_cast<std::size_t>(j)] * x[j];
    }
    return amp * std::exp(-r2 / (2.0 * sigma * sigma)) * std::polar(1.0, phase / params.hbar);
  };
  WaveFunction psi{params, sample(grid, f)};
  normalize(psi.samples);
  return psi;
}

/// Harmonic-oscillator coherent state: Gaussian of width sqrt(hbar/(m omega)).
inline WaveFunction make_coherent(const PhaseGrid& grid, const PhysicalParams& params,
                                  std::vector<double> x0, std::vector<double> p0, double omega) {
  if (!(omega > 0.0)) throw precondition_error("make_coherent", "omega must be positive");
  return make_gaussian(grid, params, std::move(x0), std::move(p0),
                       std::sqrt(params.hbar / (params.mass * omega)));
}

/// Superposition of two Gaussians at x0 -/+ separation/2 along x1.
inline WaveFunction make_cat(const PhaseGrid& grid, const PhysicalParams& params,
                             std::vector<double> x0, double separation, double sigma,
                             double relative_phase = 0.0) {
  params.validate();
  grid.validate();
  const int d = grid.dim();
  detail::require_coord_size(x0, d, "x0");
  std::vector<double> zero(static_cast<std::size_t>(d), 0.0);
  auto left = x0, right = x0;
  left[0] -= 0.5 * separation;
  right[0] += 0.5 * separation;
  detail::require_margin(grid, left, sigma, params.hbar, zero, "make_cat");
  detail::require_margin(grid, right, sigma, params.hbar, zero, "make_cat");
  const complex rel = std::polar(1.0, relative_phase);
  auto f = [&](std::span<const double> x) {
    double a = 0.0, b = 0.0;
    for (int j = 0; j < d; ++j) {
      const double da = x[j] - left[static_cast<std::size_t>(j)];
      const double db = x[j] - right[static_cast<std::size_t>(j)];
      a += da * da;
      b += db * db;
    }
    return std::exp(-a / (2 * sigma * sigma)) + rel * std::exp(-b / (2 * sigma * sigma));
  };
  WaveFunction psi{params, sample(grid, f)};
  normalize(psi.samples);
  return psi;
}

// ---------------------------------------------------------------------------
// WKB states psi = sqrt(rho) exp(i S / hbar).

struct AmplitudeProfile {
  enum class Kind { gaussian, oscillating_gaussian };
  Kind kind = Kind::gaussian;
  std::vector<double> center;
  double sigma = 1.0;
  /// oscillating_gaussian: rho = G(x) (1 + a cos(x1 / (scale hbar)))
  double oscillation_amplitude = 0.0;
  double oscillation_scale = 1.0;

  double value(std::span<const double> x, double hbar) const {
    double r2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double dx = x[j] - center[j];
      r2 += dx * dx;
    }
    double rho = std::exp(-r2 / (sigma * sigma));
    if (kind == Kind::oscillating_gaussian)
      rho *= 1.0 + oscillation_amplitude * std::cos(x[0] / (oscillation_scale * hbar));
    return rho;
  }
};

struct PhaseProfile {
  enum class Kind { zero, linear, sine, focusing };
  Kind kind = Kind::zero;
  std::vector<double> momentum; ///< linear: S = p.x
  double amplitude = 0.0;       ///< sine: S = amplitude sin(wavenumber x1)
  double wavenumber = 1.0;
  double focus_time = 1.0;      ///< focusing: S = -m |x-c|^2 / (2 t_f)
  std::vector<double> center;

  double value(std::span<const double> x, double mass) const {
    switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::linear: {
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += momentum[j] * x[j];
      return s;
    }
    case Kind::sine: return amplitude * std::sin(wavenumber * x[0]);
    case Kind::focusing: {
      double r2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - center[j]) * (x[j] - center[j]);
      return -mass * r2 / (2.0 * focus_time);
    }
    }
    return 0.0;
  }

  /// Component j of grad S.
  double gradient(std::span<const double> x, std::size_t j, double mass) const {
    switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::linear: return momentum[j];
    case Kind::sine: return j == 0 ? amplitude * wavenumber * std::cos(wavenumber * x[0]) : 0.0;
    case Kind::focusing: return -mass * (x[j] - center[j]) / focus_time;
    }
    return 0.0;
  }
};

struct WkbState {
  WaveFunction psi;
  double spectral_tail = 0.0; ///< fraction of |psi^|^2 beyond 2/3 of Nyquist
  bool non_smooth = false;    ///< spectral_tail > 1e-6
};

/// Fraction of spectral energy with |k| > 2/3 k_Nyquist on any axis.
inline double spectral_tail_fraction(const ComplexField& f) {
  ComplexField hat = f;
  for (std::size_t k = 0; k < hat.rank(); ++k) fft_axis(hat, k, fft::sign::forward);
  double total = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < hat.size(); ++i) {
    const auto idx = hat.unravel(i);
    bool high = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const long n = static_cast<long>(hat.extent(k));
      long m = static_cast<long>(idx[k]);
      if (m >= n / 2) m -= n;
      if (3 * std::abs(m) > n) high = true;
    }
    const double e = std::norm(hat[i]);
    total += e;
    if (high) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

using RealPointFunction = std::function<double(std::span<const double>)>;

inline WkbState make_wkb(const PhaseGrid& grid, const PhysicalParams& params,
                         const RealPointFunction& rho_profile, const RealPointFunction& s_profile) {
  params.validate();
  grid.validate();
  auto f = [&](std::span<const double> x) {
    const double rho = rho_profile(x);
    if (rho < 0.0) throw precondition_error("make_wkb", "negative density profile");
    return std::sqrt(rho) * std::polar(1.0, s_profile(x) / params.hbar);
  };
  WkbState out{WaveFunction{params, sample(grid, f)}};
  normalize(out.psi.samples);
  out.spectral_tail = spectral_tail_fraction(out.psi.samples);
  out.non_smooth = out.spectral_tail > 1e-6;
  return out;
}

inline WkbState make_wkb(const PhaseGrid& grid, const PhysicalParams& params,
                         const AmplitudeProfile& amp, const PhaseProfile& phase) {
  detail::require_coord_size(amp.center, grid.dim(), "amplitude center");
  return make_wkb(
      grid, params, [&](std::span<const double> x) { return amp.value(x, params.hbar); },
      [&](std::span<const double> x) { return phase.value(x, params.mass); });
}

// ---------------------------------------------------------------------------
// Orthonormal bases and admissible mixtures.

struct BasisRecipe {
  enum class Kind { harmonic, shifted_gaussians };
  Kind kind = Kind::harmonic;
  double omega = 1.0;          ///< harmonic: oscillator frequency
  std::vector<double> center;  ///< harmonic: well centre; gaussians: lattice centre
  double sigma = 1.0;          ///< shifted_gaussians: width
  double spacing = 1.0;        ///< shifted_gaussians: lattice spacing
};

/// Normalized Hermite functions phi_0..phi_{n-1} at scaled coordinate xi.
inline std::vector<double> hermite_functions(int n, double xi) {
  std::vector<double> phi(static_cast<std::size_t>(std::max(n, 1)));
  phi[0] = std::pow(pi, -0.25) * std::exp(-0.5 * xi * xi);
  if (n > 1) phi[1] = std::sqrt(2.0) * xi * phi[0];
  for (int k = 1; k + 1 < n; ++k)
    phi[static_cast<std::size_t>(k + 1)] =
        std::sqrt(2.0 / (k + 1)) * xi * phi[static_cast<std::size_t>(k)] -
        std::sqrt(static_cast<double>(k) / (k + 1)) * phi[static_cast<std::size_t>(k - 1)];
  return phi;
}

/// Multi-indices ordered by total degree, then lexicographically.
inline std::vector<std::vector<int>> degree_ordered_indices(int d, int count) {
  std::vector<std::vector<int>> out;
  for (int total = 0; static_cast<int>(out.size()) < count; ++total) {
    if (d == 1) out.push_back({total});
    else
      for (int a = total; a >= 0 && static_cast<int>(out.size()) < count; --a)
        out.push_back({a, total - a});
  }
  out.resize(static_cast<std::size_t>(count));
  return out;
}

namespace detail {

/// Boundary density and top-eighth spectral band checks for a basis function.
inline bool well_contained(const ComplexField& f) {
  double peak = 0.0;
  for (const auto& v : f.values()) peak = std::max(peak, std::norm(v));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto idx = f.unravel(i);
    for (std::size_t k = 0; k < idx.size(); ++k)
      if ((idx[k] == 0 || idx[k] + 1 == f.extent(k)) && std::norm(f[i]) > 1e-12 * peak)
        return false;
  }
  ComplexField hat = f;
  for (std::size_t k = 0; k < hat.rank(); ++k) fft_axis(hat, k, fft::sign::forward);
  double hpeak = 0.0;
  for (const auto& v : hat.values()) hpeak = std::max(hpeak, std::norm(v));
  for (std::size_t i = 0; i < hat.size(); ++i) {
    const auto idx = hat.unravel(i);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const long n = static_cast<long>(hat.extent(k));
      long m = static_cast<long>(idx[k]);
      if (m >= n / 2) m -= n;
      if (16 * std::abs(m) >= 7 * n && std::norm(hat[i]) > 1e-12 * hpeak) return false;
    }
  }
  return true;
}

} // namespace detail

/// First `count` basis functions of the recipe; throws listing the largest
/// feasible count when the grid cannot hold them.
inline std::vector<WaveFunction> make_basis(const PhaseGrid& grid, const PhysicalParams& params,
                                            const BasisRecipe& recipe, int count) {
  params.validate();
  grid.validate();
  const int d = grid.dim();
  detail::require_coord_size(recipe.center, d, "basis center");
  std::vector<WaveFunction> out;
  auto reject = [&](int feasible) {
    throw precondition_error("make_basis", "grid cannot hold " + std::to_string(count) +
                                               " well-contained modes; max feasible N = " +
                                               std::to_string(feasible));
  };

  if (recipe.kind == BasisRecipe::Kind::harmonic) {
    const double scale = std::sqrt(params.mass * recipe.omega / params.hbar);
    const auto multi = degree_ordered_indices(d, count);
    int max_degree = 0;
    for (const auto& m : multi)
      for (int a : m) max_degree = std::max(max_degree, a);
    // Tabulate 1d Hermite functions per axis once.
    std::vector<std::vector<std::vector<double>>> table(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      const auto& ax = grid.x[static_cast<std::size_t>(j)];
      for (int i = 0; i < ax.n_points; ++i)
        table[static_cast<std::size_t>(j)].push_back(hermite_functions(
            max_degree + 1, scale * (ax.coord(i) - recipe.center[static_cast<std::size_t>(j)])));
    }
    for (const auto& m : multi) {
      ComplexField f(grid.x_axes());
      for (std::size_t i = 0; i < f.size(); ++i) {
        const auto idx = f.unravel(i);
        double v = 1.0;
        for (int j = 0; j < d; ++j)
          v *= std::sqrt(scale) *
               table[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]]
                    [static_cast<std::size_t>(m[static_cast<std::size_t>(j)])];
        f[i] = v;
      }
      if (!detail::well_contained(f)) reject(static_cast<int>(out.size()));
      normalize(f);
      out.push_back({params, std::move(f)});
    }
  } else {
    const int side = d == 1 ? count : static_cast<int>(std::ceil(std::sqrt(count - 1e-9)));
    for (int n = 0; n < count; ++n) {
      std::vector<double> c = recipe.center;
      const int i0 = d == 1 ? n : n % side;
      c[0] += (i0 - 0.5 * (side - 1)) * recipe.spacing;
      if (d == 2) c[1] += (n / side - 0.5 * (side - 1)) * recipe.spacing;
      const double s = recipe.sigma;
      ComplexField f = sample(grid, [&](std::span<const double> x) {
        double r2 = 0.0;
        for (int j = 0; j < d; ++j) r2 += (x[j] - c[static_cast<std::size_t>(j)]) * (x[j] - c[static_cast<std::size_t>(j)]);
        return complex(std::exp(-r2 / (2 * s * s)), 0.0);
      });
      if (!detail::well_contained(f)) reject(n);
      // Modified Gram-Schmidt, applied twice.
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : out) {
          const complex proj = inner_product(q.samples, f);
          for (std::size_t i = 0; i < f.size(); ++i) f[i] -= proj * q.samples[i];
        }
      normalize(f);
      out.push_back({params, std::move(f)});
    }
  }
  return out;
}

/// Number of equally weighted modes that saturates sum lambda^2 <= (2 pi hbar)^d.
inline int admissible_count(double hbar, int d) {
  const double n = std::pow(two_pi * hbar, -d);
  return std::max(1, static_cast<int>(std::ceil(n - 1e-9)));
}

/// Equal-weight mixture of N = ceil((2 pi hbar)^{-d}) orthonormal modes.
inline DensityOperator make_admissible_mixture(const PhaseGrid& grid, const PhysicalParams& params,
                                               const BasisRecipe& basis) {
  const int n = admissible_count(params.hbar, grid.dim());
  DensityOperator r{params, std::vector<double>(static_cast<std::size_t>(n), 1.0 / n),
                    make_basis(grid, params, basis, n)};
  return r;
}

/// Mixture of the first weights.size() harmonic eigenfunctions.
inline DensityOperator make_eigenbasis_mixture(const PhaseGrid& grid, const PhysicalParams& params,
                                               const BasisRecipe& basis, std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (weights.empty() || std::abs(sum - 1.0) > 1e-10)
    throw precondition_error("make_eigenbasis_mixture", "weights must sum to 1");
  auto fs = make_basis(grid, params, basis, static_cast<int>(weights.size()));
  return DensityOperator{params, std::move(weights), std::move(fs)};
}

// ---------------------------------------------------------------------------

/// Serializable description of a state family member.
struct StateRecipe {
  enum class Kind { gaussian, coherent, wkb, cat, admissible_mixture, harmonic_eigenbasis_mixture };
  Kind kind = Kind::gaussian;
  std::vector<double> x0;
  std::vector<double> p0;
  double sigma = 1.0;
  double omega = 1.0;
  double separation = 0.0;
  double relative_phase = 0.0;
  AmplitudeProfile amplitude;
  PhaseProfile phase;
  BasisRecipe basis;
  std::vector<double> weights;
};

inline DensityOperator build_state(const StateRecipe& recipe, const PhaseGrid& grid,
                                   const PhysicalParams& params) {
  using K = StateRecipe::Kind;
  switch (recipe.kind) {
  case K::gaussian: return pure_state(make_gaussian(grid, params, recipe.x0, recipe.p0, recipe.sigma));
  case K::coherent: return pure_state(make_coherent(grid, params, recipe.x0, recipe.p0, recipe.omega));
  case K::cat:
    return pure_state(make_cat(grid, params, recipe.x0, recipe.separation, recipe.sigma,
                               recipe.relative_phase));
  case K::wkb: return pure_state(make_wkb(grid, params, recipe.amplitude, recipe.phase).psi);
  case K::admissible_mixture: return make_admissible_mixture(grid, params, recipe.basis);
  case K::harmonic_eigenbasis_mixture:
    return make_eigenbasis_mixture(grid, params, recipe.basis, recipe.weights);
  }
  throw precondition_error("build_state", "unknown state kind");
}

} // namespace qkin
