#pragma once

// Wigner transforms, the partial Fourier picture w~(x, y) and velocity moments.

#include "qkin/grid.hpp"
#include "qkin/states.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace qkin {

/// Real samples of w(x, v); axes x1..xd, v1..vd.
struct WignerField {
  PhysicalParams params;
  RealField values;
  double imag_residue = 0.0; ///< max |Im| dropped when forming the real field

  int dim() const { return static_cast<int>(values.rank() / 2); }
};

/// Complex samples of w~(x, y) = R(x + hbar y/2, x - hbar y/2); axes x1..xd, y1..yd.
struct TildeField {
  PhysicalParams params;
  ComplexField values;

  int dim() const { return static_cast<int>(values.rank() / 2); }
};

struct MomentSet {
  RealField rho;
  std::vector<RealField> J; ///< J_j = (1/m) int v_j w dv
  RealField E;              ///< (1/2m) int |v|^2 w dv
  RealField v_variance;     ///< int |v - <v>(x)|^2 w dv on the mask, 0 elsewhere
  double tail = 0.0;        ///< relative |v|^2 |w| mass in the outer velocity band
};

inline std::vector<std::string> x_labels(int d) {
  std::vector<std::string> l;
  for (int j = 0; j < d; ++j) l.push_back(label("x", j));
  return l;
}
inline std::vector<std::string> v_labels(int d) {
  std::vector<std::string> l;
  for (int j = 0; j < d; ++j) l.push_back(label("v", j));
  return l;
}
inline std::vector<std::string> y_labels(int d) {
  std::vector<std::string> l;
  for (int j = 0; j < d; ++j) l.push_back(label("y", j));
  return l;
}

/// FFT over every axis of a field, in place (unnormalized).
inline void fft_all(ComplexField& f, fft::sign dir) {
  for (std::size_t k = 0; k < f.rank(); ++k) fft_axis(f, k, dir);
}

namespace detail {

inline void require_y_fits(const ComplexField& psi, const std::vector<GridAxis>& v_axes, double hbar) {
  if (v_axes.size() != psi.rank())
    throw precondition_error("wigner", "one velocity axis per position axis is required");
  for (std::size_t j = 0; j < v_axes.size(); ++j) {
    v_axes[j].validate();
    if (!v_axes[j].is_centered()) throw precondition_error("wigner", "velocity axis must be centered");
    const double reach = 0.5 * hbar * v_axes[j].dual().max_abs();
    const double half_box = 0.5 * psi.axis(j).grid.length;
    if (reach > half_box * (1.0 + 1e-12))
      throw precondition_error(
          "wigner", "hbar*y_max/2 = " + std::to_string(reach) + " exceeds half box " +
                        std::to_string(half_box) + " on axis " + label("x", static_cast<int>(j)) +
                        "; pad the box to length >= " + std::to_string(2.0 * reach) +
                        " or coarsen the velocity grid to dv >= " +
                        std::to_string(pi * hbar / half_box / 2.0));
  }
}

/// Accumulate weight * psi(x + hbar y/2) conj psi(x - hbar y/2) into `out`.
inline void accumulate_tilde(ComplexField& out, const ComplexField& psi, double hbar, double weight) {
  const std::size_t d = psi.rank();
  ComplexField hat = psi;
  fft_all(hat, fft::sign::forward);
  const double inv_n = 1.0 / static_cast<double>(psi.size());
  for (auto& c : hat.values()) c *= inv_n;

  std::vector<std::vector<double>> k(d);
  std::vector<std::size_t> nx(d), ny(d);
  std::vector<GridAxis> yax(d);
  for (std::size_t j = 0; j < d; ++j) {
    k[j] = wavenumbers(psi.axis(j).grid);
    nx[j] = psi.extent(j);
    yax[j] = out.axis(d + j).grid;
    ny[j] = static_cast<std::size_t>(yax[j].n_points);
  }
  std::size_t n_y = 1, n_x = psi.size();
  for (auto n : ny) n_y *= n;

  // Flat y index -> multi-index, and its mirror (coordinate -y) when on grid.
  auto y_multi = [&](std::size_t iy) {
    std::vector<std::size_t> m(d);
    for (std::size_t j = d; j-- > 0;) {
      m[j] = iy % ny[j];
      iy /= ny[j];
    }
    return m;
  };
  auto y_flat = [&](const std::vector<std::size_t>& m) {
    std::size_t f = 0;
    for (std::size_t j = 0; j < d; ++j) f = f * ny[j] + m[j];
    return f;
  };

  std::vector<std::vector<std::size_t>> xidx(n_x);
  for (std::size_t i = 0; i < n_x; ++i) xidx[i] = hat.unravel(i);

  ComplexField a = hat, b = hat;
  for (std::size_t iy = 0; iy < n_y; ++iy) {
    const auto m = y_multi(iy);
    bool mirror_on_grid = true;
    std::vector<std::size_t> mm(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (m[j] == 0) mirror_on_grid = false;
      mm[j] = (ny[j] - m[j]) % ny[j];
    }
    const std::size_t iy_mirror = mirror_on_grid ? y_flat(mm) : iy;
    if (mirror_on_grid && iy_mirror < iy) continue;

    // Spectral shift by +-hbar y/2 on every axis.
    std::vector<std::vector<complex>> fp(d), fm(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double s = 0.5 * hbar * yax[j].coord(static_cast<int>(m[j]));
      fp[j].resize(nx[j]);
      fm[j].resize(nx[j]);
      for (std::size_t q = 0; q < nx[j]; ++q) {
        if (q == nx[j] / 2) {
          fp[j][q] = fm[j][q] = std::cos(k[j][q] * s);
        } else {
          fp[j][q] = std::polar(1.0, k[j][q] * s);
          fm[j][q] = std::conj(fp[j][q]);
        }
      }
    }
    for (std::size_t i = 0; i < n_x; ++i) {
      const auto& idx = xidx[i];
      complex p = 1.0, q = 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        p *= fp[j][idx[j]];
        q *= fm[j][idx[j]];
      }
      a[i] = hat[i] * p;
      b[i] = hat[i] * q;
    }
    fft_all(a, fft::sign::backward);
    fft_all(b, fft::sign::backward);
    for (std::size_t i = 0; i < n_x; ++i) {
      const complex r = weight * a[i] * std::conj(b[i]);
      out[i * n_y + iy] += r;
      if (iy_mirror != iy) out[i * n_y + iy_mirror] += std::conj(r);
    }
  }
}

/// Periodic shifts by +-s pair points a distance L - 2s apart (mod L).  The
/// largest such product of amplitudes, along each axis, must be negligible.
inline void require_no_wrap(const ComplexField& psi, const std::vector<GridAxis>& v_axes, double hbar,
                            double rel_tol = 1e-12) {
  double peak = 0.0;
  for (const auto& c : psi.values()) peak = std::max(peak, std::norm(c));
  for (std::size_t j = 0; j < psi.rank(); ++j) {
    const auto& ax = psi.axis(j).grid;
    const int n = ax.n_points;
    std::vector<double> amp(static_cast<std::size_t>(n), 0.0);
    for (std::size_t i = 0; i < psi.size(); ++i) {
      const auto idx = psi.unravel(i);
      amp[idx[j]] = std::max(amp[idx[j]], std::abs(psi[i]));
    }
    const double s = 0.5 * hbar * v_axes[j].dual().max_abs();
    const int gap = static_cast<int>(std::floor((ax.length - 2.0 * s) / ax.spacing()));
    double worst = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const int d = std::abs(a - b);
        if (std::min(d, n - d) >= gap)
          worst = std::max(worst, amp[static_cast<std::size_t>(a)] * amp[static_cast<std::size_t>(b)]);
      }
    if (worst > rel_tol * peak)
      throw precondition_error("wigner_wrap", "amplitudes " + std::to_string(gap * ax.spacing()) +
                                                  " apart on axis " + label("x", static_cast<int>(j)) +
                                                  " overlap after periodic shifts; enlarge the box "
                                                  "or coarsen the velocity grid");
  }
}

} // namespace detail

/// w~ of a density operator, evaluated directly from its eigenfunctions.
inline TildeField tilde_of_state(const DensityOperator& r, const std::vector<GridAxis>& v_axes) {
  if (r.eigenfunctions.empty()) throw precondition_error("tilde_of_state", "empty operator");
  const ComplexField& first = r.eigenfunctions.front().samples;
  detail::require_y_fits(first, v_axes, r.params.hbar);
  std::vector<Axis> axes = first.axes();
  for (std::size_t j = 0; j < v_axes.size(); ++j)
    axes.push_back({label("y", static_cast<int>(j)), v_axes[j].dual()});
  TildeField out{r.params, ComplexField(axes)};
  for (std::size_t j = 0; j < r.weights.size(); ++j) {
    if (r.weights[j] == 0.0) continue;
    require_finite(r.eigenfunctions[j].samples, "tilde_of_state");
    detail::require_no_wrap(r.eigenfunctions[j].samples, v_axes, r.params.hbar);
    detail::accumulate_tilde(out.values, r.eigenfunctions[j].samples, r.params.hbar, r.weights[j]);
  }
  return out;
}

inline TildeField tilde_of_pure(const WaveFunction& psi, const std::vector<GridAxis>& v_axes) {
  return tilde_of_state(pure_state(psi), v_axes);
}

/// w = (2 pi)^{-d} F_{y -> v} w~, onto the given velocity axes.
inline WignerField wigner_from_tilde(const TildeField& t, const std::vector<GridAxis>& v_axes) {
  const int d = t.dim();
  ComplexField cur = t.values;
  for (int j = 0; j < d; ++j)
    cur = dft_along(cur, label("y", j), Direction::forward, v_axes[static_cast<std::size_t>(j)]);
  WignerField w{t.params, {}};
  w.values = real_part(cur, &w.imag_residue);
  return w;
}

inline WignerField wigner_from_tilde(const TildeField& t) {
  std::vector<GridAxis> v;
  for (int j = 0; j < t.dim(); ++j) v.push_back(t.values.axis(static_cast<std::size_t>(t.dim() + j)).grid.dual());
  return wigner_from_tilde(t, v);
}

inline WignerField wigner_of_pure(const WaveFunction& psi, const std::vector<GridAxis>& v_axes) {
  return wigner_from_tilde(tilde_of_pure(psi, v_axes), v_axes);
}

inline WignerField wigner_of_mixed(const DensityOperator& r, const std::vector<GridAxis>& v_axes) {
  return wigner_from_tilde(tilde_of_state(r, v_axes), v_axes);
}

/// Inverse of the velocity transform: w~ = F_{v -> y} w with w~(x, 0) = rho(x).
inline TildeField tilde_of(const WignerField& w) {
  const int d = w.dim();
  ComplexField cur = to_complex(w.values);
  for (int j = 0; j < d; ++j) cur = dft_along(cur, label("v", j), Direction::inverse);
  return {w.params, std::move(cur)};
}

/// Phase-space integral of w^2.
inline double l2_norm_squared(const WignerField& w) {
  double acc = 0.0;
  for (double v : w.values.values()) acc += v * v;
  return acc * cell_measure(w.values);
}

/// Relative |v|^2 |w| mass carried by the outer eighth of every velocity band.
inline double velocity_tail(const WignerField& w) {
  const int d = w.dim();
  double tail = 0.0, total = 0.0;
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    const auto idx = w.values.unravel(i);
    double v2 = 0.0;
    bool outer = false;
    for (int j = 0; j < d; ++j) {
      const auto& ax = w.values.axis(static_cast<std::size_t>(d + j)).grid;
      const double v = ax.coord(static_cast<int>(idx[static_cast<std::size_t>(d + j)]));
      v2 += v * v;
      if (std::abs(v) > 0.875 * ax.max_abs()) outer = true;
    }
    const double m = (1.0 + v2) * std::abs(w.values[i]);
    total += m;
    if (outer) tail += m;
  }
  return total > 0.0 ? tail / total : 0.0;
}

/// rho, J, E and the local velocity variance by velocity quadrature.
inline MomentSet moments(const WignerField& w, double tail_tol = 1e-8, double floor_rel = 1e-6) {
  const int d = w.dim();
  const double m = w.params.mass;
  MomentSet out;
  out.tail = velocity_tail(w);
  if (out.tail > tail_tol) {
    // Crude second-moment estimate of the needed extent.
    const double total = integrate(w.values);
    double v2 = 0.0;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      const auto idx = w.values.unravel(i);
      for (int j = 0; j < d; ++j) {
        const double v = w.values.axis(static_cast<std::size_t>(d + j)).grid.coord(
            static_cast<int>(idx[static_cast<std::size_t>(d + j)]));
        v2 += v * v * std::abs(w.values[i]);
      }
    }
    v2 *= cell_measure(w.values) / std::max(std::abs(total), 1e-300);
    std::ostringstream msg;
    msg << "velocity tail mass " << out.tail << " exceeds " << tail_tol
        << "; required v_max is about " << 8.0 * std::sqrt(v2);
    throw precondition_error("moments", msg.str());
  }

  const auto xl = x_labels(d);
  const auto vl = v_labels(d);
  std::vector<Axis> xa(w.values.axes().begin(), w.values.axes().begin() + d);
  out.rho = quadrature(w.values, vl);
  out.E = RealField(xa);
  out.J.assign(static_cast<std::size_t>(d), RealField(xa));
  RealField second(xa);

  std::size_t n_v = 1;
  for (int j = 0; j < d; ++j) n_v *= w.values.extent(static_cast<std::size_t>(d + j));
  double dv = 1.0;
  for (int j = 0; j < d; ++j) dv *= w.values.axis(static_cast<std::size_t>(d + j)).grid.spacing();

  for (std::size_t ix = 0; ix < out.rho.size(); ++ix) {
    std::vector<double> first(static_cast<std::size_t>(d), 0.0);
    double sq = 0.0;
    for (std::size_t iv = 0; iv < n_v; ++iv) {
      const double wv = w.values[ix * n_v + iv];
      std::size_t rem = iv;
      double v2 = 0.0;
      for (int j = d; j-- > 0;) {
        const auto& ax = w.values.axis(static_cast<std::size_t>(d + j)).grid;
        const std::size_t n = static_cast<std::size_t>(ax.n_points);
        const double v = ax.coord(static_cast<int>(rem % n));
        rem /= n;
        first[static_cast<std::size_t>(j)] += v * wv;
        v2 += v * v;
      }
      sq += v2 * wv;
    }
    for (int j = 0; j < d; ++j) out.J[static_cast<std::size_t>(j)][ix] = first[static_cast<std::size_t>(j)] * dv / m;
    out.E[ix] = sq * dv / (2.0 * m);
    second[ix] = sq * dv;
  }

  const double floor = floor_rel * max_abs(out.rho);
  out.v_variance = RealField(xa);
  for (std::size_t ix = 0; ix < out.rho.size(); ++ix) {
    if (out.rho[ix] <= floor) continue;
    double mean2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double p = m * out.J[static_cast<std::size_t>(j)][ix];
      mean2 += p * p;
    }
    out.v_variance[ix] = second[ix] - mean2 / out.rho[ix];
  }
  return out;
}

/// Moments of a density operator computed from its eigenfunctions
/// (rho = |psi|^2, J = (hbar/m) Im(conj psi grad psi), E = (hbar^2/4m)(|grad psi|^2 - Re conj psi lap psi)).
inline MomentSet moments_of_state(const DensityOperator& r, double floor_rel = 1e-6) {
  const auto& first = r.eigenfunctions.front().samples;
  const int d = static_cast<int>(first.rank());
  const double hbar = r.params.hbar, m = r.params.mass;
  MomentSet out;
  out.rho = RealField(first.axes());
  out.E = RealField(first.axes());
  out.J.assign(static_cast<std::size_t>(d), RealField(first.axes()));
  RealField grad2(first.axes());
  for (std::size_t e = 0; e < r.weights.size(); ++e) {
    const double lam = r.weights[e];
    if (lam == 0.0) continue;
    const auto& psi = r.eigenfunctions[e].samples;
    std::vector<ComplexField> g;
    ComplexField lap(psi.axes());
    for (int j = 0; j < d; ++j) {
      g.push_back(derivative(psi, label("x", j), 1));
      const auto d2 = derivative(psi, label("x", j), 2);
      for (std::size_t i = 0; i < psi.size(); ++i) lap[i] += d2[i];
    }
    for (std::size_t i = 0; i < psi.size(); ++i) {
      out.rho[i] += lam * std::norm(psi[i]);
      double gg = 0.0;
      for (int j = 0; j < d; ++j) {
        const complex gj = g[static_cast<std::size_t>(j)][i];
        out.J[static_cast<std::size_t>(j)][i] += lam * (hbar / m) * std::imag(std::conj(psi[i]) * gj);
        gg += std::norm(gj);
      }
      out.E[i] += lam * (hbar * hbar / (4.0 * m)) * (gg - std::real(std::conj(psi[i]) * lap[i]));
    }
  }
  const double floor = floor_rel * max_abs(out.rho);
  out.v_variance = RealField(first.axes());
  for (std::size_t i = 0; i < out.rho.size(); ++i) {
    if (out.rho[i] <= floor) continue;
    double mean2 = 0.0;
    for (int j = 0; j < d; ++j) mean2 += std::pow(m * out.J[static_cast<std::size_t>(j)][i], 2);
    out.v_variance[i] = 2.0 * m * out.E[i] - mean2 / out.rho[i];
  }
  return out;
}

} // namespace qkin
