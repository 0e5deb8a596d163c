#pragma once

// Madelung fields, QHD residuals and the monokinetic concentration diagnostic.
//
// Every quotient by rho is expanded by the quotient rule into spectral
// derivatives of psi (or of rho and J when only moments are available), so
// the masked region never enters a Fourier transform.

#include "qkin/averaging.hpp"
#include "qkin/dynamics.hpp"
#include "qkin/grid.hpp"
#include "qkin/states.hpp"
#include "qkin/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace qkin {

struct MadelungFields {
  RealField rho;
  std::vector<RealField> u;  // d components, zero off the mask
  RealField P;               // Bohm potential
  std::vector<RealField> Pi; // d*d, row-major
  std::vector<char> mask;
  double floor = 0.0;
  double mask_fraction = 0.0;
};

namespace detail {

// rho and J with spatial derivatives up to third (rho) and first (J) order.
// Index conventions: r1[i], r2[i*d+j], r3[(i*d+j)*d+k], dJ[i*d+j] = d_i J_j.
struct Jet {
  int d = 0;
  RealField rho;
  std::vector<RealField> r1, r2, r3, J, dJ;

  std::size_t i2(int i, int j) const { return static_cast<std::size_t>(i * d + j); }
  std::size_t i3(int i, int j, int k) const { return static_cast<std::size_t>((i * d + j) * d + k); }
};

inline Jet jet_from_psi(const ComplexField& psi, double hbar, double m) {
  const int d = static_cast<int>(psi.rank());
  Jet t;
  t.d = d;
  const auto n1 = static_cast<std::size_t>(d);
  std::vector<ComplexField> g1, g2(n1 * n1), g3(n1 * n1 * n1);
  for (int i = 0; i < d; ++i) g1.push_back(derivative(psi, label("x", i)));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      g2[t.i2(i, j)] = i == j ? derivative(psi, label("x", i), 2) : derivative(g1[static_cast<std::size_t>(j)], label("x", i));
      g2[t.i2(j, i)] = g2[t.i2(i, j)];
    }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        if (i == j && j == k) g3[t.i3(i, j, k)] = derivative(psi, label("x", i), 3);
        else g3[t.i3(i, j, k)] = derivative(g2[t.i2(i, j)], label("x", k));
      }

  const auto& axes = psi.axes();
  t.rho = RealField(axes);
  t.r1.assign(n1, RealField(axes));
  t.r2.assign(n1 * n1, RealField(axes));
  t.r3.assign(n1 * n1 * n1, RealField(axes));
  t.J.assign(n1, RealField(axes));
  t.dJ.assign(n1 * n1, RealField(axes));
  const double c = hbar / m;
  for (std::size_t p = 0; p < psi.size(); ++p) {
    const complex f = psi[p];
    const complex fc = std::conj(f);
    t.rho[p] = std::norm(f);
    for (int i = 0; i < d; ++i) {
      const complex gi = g1[static_cast<std::size_t>(i)][p];
      t.r1[static_cast<std::size_t>(i)][p] = 2.0 * std::real(fc * gi);
      t.J[static_cast<std::size_t>(i)][p] = c * std::imag(fc * gi);
      for (int j = 0; j < d; ++j) {
        const complex gj = g1[static_cast<std::size_t>(j)][p];
        const complex gij = g2[t.i2(i, j)][p];
        t.r2[t.i2(i, j)][p] = 2.0 * std::real(fc * gij + std::conj(gi) * gj);
        t.dJ[t.i2(i, j)][p] = c * std::imag(std::conj(gi) * gj + fc * gij);
        for (int k = 0; k < d; ++k) {
          const complex gk = g1[static_cast<std::size_t>(k)][p];
          t.r3[t.i3(i, j, k)][p] =
              2.0 * std::real(std::conj(gk) * gij + fc * g3[t.i3(i, j, k)][p] +
                              std::conj(g2[t.i2(i, k)][p]) * gj + std::conj(gi) * g2[t.i2(j, k)][p]);
        }
      }
    }
  }
  return t;
}

inline Jet jet_from_moments(const RealField& rho, const std::vector<RealField>& J) {
  const int d = static_cast<int>(rho.rank());
  Jet t;
  t.d = d;
  t.rho = rho;
  t.J = J;
  const auto n1 = static_cast<std::size_t>(d);
  t.r2.resize(n1 * n1);
  t.r3.resize(n1 * n1 * n1);
  t.dJ.resize(n1 * n1);
  for (int i = 0; i < d; ++i) t.r1.push_back(derivative(rho, label("x", i)));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      t.r2[t.i2(i, j)] = i == j ? derivative(rho, label("x", i), 2) : derivative(t.r1[static_cast<std::size_t>(j)], label("x", i));
      t.dJ[t.i2(i, j)] = derivative(J[static_cast<std::size_t>(j)], label("x", i));
    }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        t.r3[t.i3(i, j, k)] = (i == j && j == k) ? derivative(rho, label("x", i), 3)
                                                 : derivative(t.r2[t.i2(i, j)], label("x", k));
  return t;
}

inline std::vector<char> density_mask(const RealField& rho, double floor_rel, double* floor, double* fraction) {
  const double f = floor_rel * max_abs(rho);
  std::vector<char> mask(rho.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] > f) {
      mask[i] = 1;
      ++count;
    }
  if (floor) *floor = f;
  if (fraction) *fraction = static_cast<double>(count) / static_cast<double>(rho.size());
  return mask;
}

inline void require_mask(double fraction, const char* op) {
  if (fraction < 0.1)
    throw precondition_error(op, "density exceeds the floor on a fraction " + std::to_string(fraction) +
                                     " of the grid; at least 0.1 is required");
}

inline MadelungFields fields_from_jet(const Jet& t, double hbar, double m, double floor_rel) {
  const int d = t.d;
  MadelungFields f;
  f.rho = t.rho;
  f.mask = density_mask(t.rho, floor_rel, &f.floor, &f.mask_fraction);
  require_mask(f.mask_fraction, "madelung_fields");
  const auto& axes = t.rho.axes();
  f.u.assign(static_cast<std::size_t>(d), RealField(axes));
  f.P = RealField(axes);
  f.Pi.assign(static_cast<std::size_t>(d * d), RealField(axes));
  for (std::size_t p = 0; p < t.rho.size(); ++p) {
    if (!f.mask[p]) continue;
    const double r = t.rho[p];
    double lap = 0.0, g2 = 0.0;
    for (int i = 0; i < d; ++i) {
      f.u[static_cast<std::size_t>(i)][p] = t.J[static_cast<std::size_t>(i)][p] / r;
      lap += t.r2[t.i2(i, i)][p];
      g2 += t.r1[static_cast<std::size_t>(i)][p] * t.r1[static_cast<std::size_t>(i)][p];
    }
    // Delta sqrt(rho) / sqrt(rho) = Delta rho / (2 rho) - |grad rho|^2 / (4 rho^2)
    f.P[p] = -(hbar * hbar / (2.0 * m)) * (lap / (2.0 * r) - g2 / (4.0 * r * r));
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double hess_log = t.r2[t.i2(i, j)][p] / r -
                                t.r1[static_cast<std::size_t>(i)][p] * t.r1[static_cast<std::size_t>(j)][p] / (r * r);
        const double v = -(hbar * hbar / (4.0 * m)) * hess_log;
        f.Pi[t.i2(i, j)][p] = v;
        f.Pi[t.i2(j, i)][p] = v;
      }
  }
  return f;
}

} // namespace detail

inline MadelungFields madelung_fields(const WaveFunction& psi, double floor_rel = 1e-6) {
  require_finite(psi.samples, "madelung_fields");
  return detail::fields_from_jet(detail::jet_from_psi(psi.samples, psi.params.hbar, psi.params.mass),
                                 psi.params.hbar, psi.params.mass, floor_rel);
}

/// From recorded moments only (rho and J differentiated spectrally).
inline MadelungFields madelung_fields(const MomentSet& mom, const PhysicalParams& params, double floor_rel = 1e-6) {
  require_finite(mom.rho, "madelung_fields");
  return detail::fields_from_jet(detail::jet_from_moments(mom.rho, mom.J), params.hbar, params.mass, floor_rel);
}

// ---------------------------------------------------------------------------
// Closing identity relating hbar^2 |grad rho|^2 to rho^2 P and rho^2 Tr Pi.

struct GradIdentity {
  double bohm = 0.0;     // hbar^2|grad rho|^2 = (1/3) hbar^2 Delta(rho^2) + (8/3) m rho^2 P
  double pressure = 0.0; // hbar^2|grad rho|^2 = (1/4) hbar^2 Delta(rho^2) + 2 m rho^2 Tr Pi
  double max() const { return std::max(bohm, pressure); }
};

namespace detail {

/// ||sum of terms|| / max ||term|| over the mask.
inline double term_residual(const std::vector<const std::vector<double>*>& terms, const std::vector<char>& mask,
                            double reference = 0.0) {
  double total = 0.0, scale = reference * reference;
  const std::size_t n = terms.front()->size();
  for (const auto* t : terms) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) s += (*t)[i] * (*t)[i];
    scale = std::max(scale, s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    double acc = 0.0;
    for (const auto* t : terms) acc += (*t)[i];
    total += acc * acc;
  }
  return scale > 0.0 ? std::sqrt(total / scale) : 0.0;
}

} // namespace detail

/// Residuals of both equalities on the mask of `rho`; gradients and
/// Delta(rho^2) are taken spectrally from rho itself.
inline GradIdentity grad_identity_check(const RealField& rho, const RealField& P, const std::vector<RealField>& Pi,
                                        const PhysicalParams& params, double floor_rel = 1e-6) {
  const int d = static_cast<int>(rho.rank());
  if (!P.same_shape(rho) || Pi.size() != static_cast<std::size_t>(d * d))
    throw precondition_error("grad_identity_check", "P and Pi must match the density grid");
  const double h2 = params.hbar * params.hbar, m = params.mass;
  const auto mask = detail::density_mask(rho, floor_rel, nullptr, nullptr);

  RealField rho2(rho.axes());
  for (std::size_t i = 0; i < rho.size(); ++i) rho2[i] = rho[i] * rho[i];
  RealField lap_rho2(rho.axes());
  std::vector<RealField> grad;
  for (int j = 0; j < d; ++j) {
    grad.push_back(derivative(rho, label("x", j)));
    const auto dd = derivative(rho2, label("x", j), 2);
    for (std::size_t i = 0; i < rho.size(); ++i) lap_rho2[i] += dd[i];
  }
  const std::size_t n = rho.size();
  std::vector<double> lhs(n), a1(n), b1(n), a2(n), b2(n);
  for (std::size_t i = 0; i < n; ++i) {
    double g2 = 0.0, tr = 0.0;
    for (int j = 0; j < d; ++j) {
      g2 += grad[static_cast<std::size_t>(j)][i] * grad[static_cast<std::size_t>(j)][i];
      tr += Pi[static_cast<std::size_t>(j * d + j)][i];
    }
    lhs[i] = -h2 * g2;
    a1[i] = h2 * lap_rho2[i] / 3.0;
    b1[i] = 8.0 / 3.0 * m * rho2[i] * P[i];
    a2[i] = h2 * lap_rho2[i] / 4.0;
    b2[i] = 2.0 * m * rho2[i] * tr;
  }
  return {detail::term_residual({&lhs, &a1, &b1}, mask), detail::term_residual({&lhs, &a2, &b2}, mask)};
}

inline GradIdentity grad_identity_check(const MadelungFields& f, const PhysicalParams& params, double floor_rel = 1e-6) {
  return grad_identity_check(f.rho, f.P, f.Pi, params, floor_rel);
}

// ---------------------------------------------------------------------------
// QHD residuals.

struct QhdResiduals {
  double time = 0.0;
  double continuity = 0.0;
  std::vector<double> euler_conservation;
  std::vector<double> euler_pressure_form;
  std::vector<double> euler_bohm_form;
  double form_equivalence = 0.0;
  double grad_identity = 0.0;
  double mask_fraction = 0.0;
  bool near_vacuum = false; // mask fraction below 0.1

  double max_residual() const {
    double m = std::max({continuity, form_equivalence, grad_identity});
    for (const auto* v : {&euler_conservation, &euler_pressure_form, &euler_bohm_form})
      for (double x : *v) m = std::max(m, x);
    return m;
  }
};

namespace detail {

inline std::vector<RealField> potential_gradient(const Potential& V, const std::vector<Axis>& axes) {
  std::vector<RealField> g(axes.size(), RealField(axes));
  std::vector<double> pt(axes.size());
  for (std::size_t i = 0; i < g[0].size(); ++i) {
    const auto idx = g[0].unravel(i);
    for (std::size_t k = 0; k < axes.size(); ++k) pt[k] = axes[k].grid.coord(static_cast<int>(idx[k]));
    for (std::size_t k = 0; k < axes.size(); ++k) g[k][i] = V.gradient(pt, k);
  }
  return g;
}

/// Continuity and the three Euler forms from a spatial jet plus time
/// derivatives of rho and J.
inline QhdResiduals euler_residuals(const Jet& t, const RealField& rho_t, const std::vector<RealField>& J_t,
                                    const std::vector<RealField>& gradV, const PhysicalParams& params,
                                    double floor_rel) {
  const int d = t.d;
  const double hbar = params.hbar, m = params.mass, h2 = hbar * hbar;
  QhdResiduals out;
  double floor = 0.0;
  const auto mask = density_mask(t.rho, floor_rel, &floor, &out.mask_fraction);
  out.near_vacuum = out.mask_fraction < 0.1;
  const std::size_t n = t.rho.size();

  {
    std::vector<double> a(n), b(n), lap(n);
    for (std::size_t p = 0; p < n; ++p) {
      a[p] = rho_t[p];
      for (int j = 0; j < d; ++j) {
        b[p] += t.dJ[t.i2(j, j)][p];
        lap[p] += t.r2[t.i2(j, j)][p];
      }
    }
    // Reference rate (hbar/2m)|Delta rho| keeps stationary states from reading 0/0.
    double ref = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      if (mask[p]) ref += lap[p] * lap[p];
    out.continuity = term_residual({&a, &b}, mask, hbar / (2.0 * m) * std::sqrt(ref));
  }

  double worst_pair = 0.0;
  for (int k = 0; k < d; ++k) {
    const auto K = static_cast<std::size_t>(k);
    std::vector<double> t1(n), t2(n), t3(n), t3b(n), t4(n), c1(n), c2(n), c3v(n), c3p(n);
    for (std::size_t p = 0; p < n; ++p) {
      if (!mask[p]) continue;
      const double r = t.rho[p], ir = 1.0 / r;
      const double rk = t.r1[K][p];
      const double Jk = t.J[K][p], uk = Jk * ir;
      double lap = 0.0, grad2 = 0.0, lap_k = 0.0, grad_dot_hess_k = 0.0;
      double conv = 0.0, div_hess_log = 0.0, div_rho_pi = 0.0, advect = 0.0;
      for (int j = 0; j < d; ++j) {
        const auto J_ = static_cast<std::size_t>(j);
        const double rj = t.r1[J_][p], rjj = t.r2[t.i2(j, j)][p], rjk = t.r2[t.i2(j, k)][p];
        const double rjjk = t.r3[t.i3(j, j, k)][p];
        const double Jj = t.J[J_][p], uj = Jj * ir;
        const double dJjj = t.dJ[t.i2(j, j)][p], dJjk = t.dJ[t.i2(j, k)][p];
        lap += rjj;
        grad2 += rj * rj;
        lap_k += rjjk;
        grad_dot_hess_k += rj * rjk;
        // d_j (J_j J_k / rho)
        conv += (dJjj * Jk + Jj * dJjk) * ir - Jj * Jk * rj * ir * ir;
        // d_j (rho d_j d_k ln rho)
        const double L = rjk * ir - rj * rk * ir * ir;
        const double dL = rjjk * ir - rjk * rj * ir * ir - (rjj * rk + rj * rjk) * ir * ir + 2.0 * rj * rj * rk * ir * ir * ir;
        div_hess_log += rj * L + r * dL;
        // d_j (rho Pi_jk) with rho Pi_jk = -(hbar^2/4m)(rho_jk - rho_j rho_k / rho)
        div_rho_pi += -(h2 / (4.0 * m)) * (rjjk - (rjj * rk + rj * rjk) * ir + rj * rj * rk * ir * ir);
        // u_j d_j u_k
        advect += uj * (dJjk - uk * rj) * ir;
      }
      const double gradP_k = -(h2 / (2.0 * m)) * (lap_k / (2.0 * r) - lap * rk / (2.0 * r * r) -
                                                   grad_dot_hess_k / (2.0 * r * r) + grad2 * rk / (2.0 * r * r * r));
      t1[p] = J_t[K][p];
      t2[p] = conv;
      t3[p] = -(h2 / (4.0 * m * m)) * div_hess_log;
      t3b[p] = div_rho_pi / m;
      t4[p] = r * gradV[K][p] / m;
      c1[p] = (J_t[K][p] - uk * rho_t[p]) * ir;
      c2[p] = advect;
      c3v[p] = gradV[K][p] / m;
      c3p[p] = gradP_k / m;
    }
    out.euler_conservation.push_back(term_residual({&t1, &t2, &t3, &t4}, mask));
    out.euler_pressure_form.push_back(term_residual({&t1, &t2, &t3b, &t4}, mask));
    out.euler_bohm_form.push_back(term_residual({&c1, &c2, &c3v, &c3p}, mask));

    // Pairwise discrepancy of the three forms, all scaled to rho * (momentum rate).
    double ab = 0.0, ac = 0.0, bc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!mask[p]) continue;
      const double A = t1[p] + t2[p] + t3[p] + t4[p];
      const double B = t1[p] + t2[p] + t3b[p] + t4[p];
      const double C = t.rho[p] * (c1[p] + c2[p] + c3v[p] + c3p[p]);
      ab += (A - B) * (A - B);
      ac += (A - C) * (A - C);
      bc += (B - C) * (B - C);
    }
    double scale = 0.0;
    for (const auto* v : {&t1, &t2, &t3, &t4}) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p)
        if (mask[p]) s += (*v)[p] * (*v)[p];
      scale = std::max(scale, s);
    }
    if (scale > 0.0) worst_pair = std::max(worst_pair, std::sqrt(std::max({ab, ac, bc}) / scale));
  }
  out.form_equivalence = worst_pair;
  return out;
}

/// d_t rho and d_t J of a pure state from i hbar d_t psi = H psi.
inline void schrodinger_rates(const ComplexField& psi, const Potential& V, const PhysicalParams& params,
                              RealField& rho_t, std::vector<RealField>& J_t) {
  const int d = static_cast<int>(psi.rank());
  const double hbar = params.hbar, m = params.mass;
  const RealField pot = V.sample(psi.axes());
  ComplexField lap(psi.axes());
  for (int j = 0; j < d; ++j) {
    const auto dd = derivative(psi, label("x", j), 2);
    for (std::size_t i = 0; i < psi.size(); ++i) lap[i] += dd[i];
  }
  ComplexField psi_t(psi.axes());
  const complex minus_i_over_hbar(0.0, -1.0 / hbar);
  for (std::size_t i = 0; i < psi.size(); ++i)
    psi_t[i] = minus_i_over_hbar * (-(hbar * hbar / (2.0 * m)) * lap[i] + pot[i] * psi[i]);
  rho_t = RealField(psi.axes());
  J_t.assign(static_cast<std::size_t>(d), RealField(psi.axes()));
  for (std::size_t i = 0; i < psi.size(); ++i) rho_t[i] = 2.0 * std::real(std::conj(psi[i]) * psi_t[i]);
  for (int j = 0; j < d; ++j) {
    const auto g = derivative(psi, label("x", j));
    const auto gt = derivative(psi_t, label("x", j));
    for (std::size_t i = 0; i < psi.size(); ++i)
      J_t[static_cast<std::size_t>(j)][i] =
          (hbar / m) * std::imag(std::conj(psi_t[i]) * g[i] + std::conj(psi[i]) * gt[i]);
  }
}

} // namespace detail

/// Snapshot residuals with exact time derivatives taken from the
/// Schroedinger equation; form_equivalence is then a purely algebraic check.
inline QhdResiduals qhd_snapshot(const WaveFunction& psi, const Potential& V, double floor_rel = 1e-6) {
  require_finite(psi.samples, "qhd_snapshot");
  V.validate(psi.dim());
  const auto jet = detail::jet_from_psi(psi.samples, psi.params.hbar, psi.params.mass);
  RealField rho_t;
  std::vector<RealField> J_t;
  detail::schrodinger_rates(psi.samples, V, psi.params, rho_t, J_t);
  auto out = detail::euler_residuals(jet, rho_t, J_t, detail::potential_gradient(V, psi.samples.axes()), psi.params,
                                     floor_rel);
  if (!out.near_vacuum)
    out.grad_identity = grad_identity_check(detail::fields_from_jet(jet, psi.params.hbar, psi.params.mass, floor_rel),
                                            psi.params, floor_rel)
                            .max();
  return out;
}

/// Residual time series of a stored Schroedinger trajectory.  Time
/// derivatives are centered differences across records, so the first and last
/// records are skipped; form_equivalence uses the exact snapshot rates.
inline std::vector<QhdResiduals> qhd_residuals(const TrajectoryRecord& traj, const Potential& V,
                                               double floor_rel = 1e-6) {
  const std::size_t n = traj.times.size();
  if (traj.states.size() != n)
    throw precondition_error("qhd_residuals", "trajectory must store states at every record");
  if (n < 3) throw precondition_error("qhd_residuals", "need at least three records for centered differences");
  for (std::size_t r = 1; r < n; ++r) {
    const double step = traj.times[r] - traj.times[r - 1];
    if (std::abs(step - (traj.times[1] - traj.times[0])) > 1e-9 * std::abs(step))
      throw precondition_error("qhd_residuals", "records must be equally spaced in time");
  }
  for (const auto& s : traj.states)
    if (s.eigenfunctions.size() != 1 || s.weights.front() != 1.0)
      throw precondition_error("qhd_residuals", "QHD residuals apply to pure-state trajectories");

  const double h = traj.times[1] - traj.times[0];
  std::vector<QhdResiduals> out;
  for (std::size_t r = 1; r + 1 < n; ++r) {
    const WaveFunction& psi = traj.states[r].eigenfunctions.front();
    const auto& params = psi.params;
    const int d = psi.dim();
    const auto jet = detail::jet_from_psi(psi.samples, params.hbar, params.mass);
    const auto& prev = traj.moments[r - 1];
    const auto& next = traj.moments[r + 1];
    RealField rho_t(psi.samples.axes());
    std::vector<RealField> J_t(static_cast<std::size_t>(d), RealField(psi.samples.axes()));
    for (std::size_t i = 0; i < rho_t.size(); ++i) {
      rho_t[i] = (next.rho[i] - prev.rho[i]) / (2.0 * h);
      for (int j = 0; j < d; ++j)
        J_t[static_cast<std::size_t>(j)][i] =
            (next.J[static_cast<std::size_t>(j)][i] - prev.J[static_cast<std::size_t>(j)][i]) / (2.0 * h);
    }
    auto res = detail::euler_residuals(jet, rho_t, J_t, detail::potential_gradient(V, psi.samples.axes()), params,
                                       floor_rel);
    res.time = traj.times[r];
    if (!res.near_vacuum) {
      const auto snap = qhd_snapshot(psi, V, floor_rel);
      res.form_equivalence = snap.form_equivalence;
      res.grad_identity = snap.grad_identity;
    }
    out.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monokinetic concentration.

struct MonokineticLeg {
  double hbar = 0.0;
  double variance = 0.0;    // int |v - m u|^2 w dv dx over the mask
  double hypothesis = 0.0;  // hbar ||grad rho||_{L2}
  double grad_energy = 0.0; // hbar^2 ||grad rho||^2
  double rho2_P = 0.0;      // <rho^2 P, phi>
  double rho2_TrPi = 0.0;   // <rho^2 Tr Pi, phi>
};

struct MonokineticConfig {
  double test_width = 1.0; // phi(x) = exp(-|x|^2 / test_width^2)
  double floor_rel = 1e-6;
};

struct MonokineticReport {
  std::vector<MonokineticLeg> legs;
  SlopeFit variance_fit, hypothesis_fit, grad_energy_fit, rho2_P_fit, rho2_TrPi_fit;
  bool chain_agrees = false; // the three equivalent quantities' slopes share a sign
  double test_width = 1.0;
};

using PureFamily = std::function<WaveFunction(double)>;

namespace detail {

inline int slope_sign(const SlopeFit& f, double tol = 0.1) {
  if (f.flat || std::abs(f.slope) <= tol) return 0;
  return f.slope > 0.0 ? 1 : -1;
}

} // namespace detail

inline MonokineticLeg monokinetic_leg(const WaveFunction& psi, const MonokineticConfig& cfg) {
  const auto& params = psi.params;
  const int d = psi.dim();
  const double h2 = params.hbar * params.hbar, m = params.mass;
  MonokineticLeg leg;
  leg.hbar = params.hbar;
  const auto mom = moments_of_state(pure_state(psi), cfg.floor_rel);
  leg.variance = integrate(mom.v_variance);

  const auto jet = detail::jet_from_psi(psi.samples, params.hbar, m);
  const double cell = cell_measure(psi.samples);
  const auto& axes = psi.samples.axes();
  double g2sum = 0.0, p_sum = 0.0, pi_sum = 0.0;
  std::vector<double> pt(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < psi.samples.size(); ++i) {
    const auto idx = psi.samples.unravel(i);
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      pt[static_cast<std::size_t>(k)] = axes[static_cast<std::size_t>(k)].grid.coord(static_cast<int>(idx[static_cast<std::size_t>(k)]));
      r2 += pt[static_cast<std::size_t>(k)] * pt[static_cast<std::size_t>(k)];
    }
    const double phi = std::exp(-r2 / (cfg.test_width * cfg.test_width));
    const double r = jet.rho[i];
    double lap = 0.0, g2 = 0.0;
    for (int k = 0; k < d; ++k) {
      lap += jet.r2[jet.i2(k, k)][i];
      g2 += jet.r1[static_cast<std::size_t>(k)][i] * jet.r1[static_cast<std::size_t>(k)][i];
    }
    g2sum += g2;
    // rho^2 P and rho^2 Tr Pi without division by rho.
    p_sum += phi * (-(h2 / (2.0 * m)) * (0.5 * r * lap - 0.25 * g2));
    pi_sum += phi * (-(h2 / (4.0 * m)) * (r * lap - g2));
  }
  leg.grad_energy = h2 * g2sum * cell;
  leg.hypothesis = std::sqrt(leg.grad_energy);
  leg.rho2_P = p_sum * cell;
  leg.rho2_TrPi = pi_sum * cell;
  return leg;
}

inline MonokineticReport monokinetic_diagnostic(const PureFamily& family, const std::vector<double>& hbars,
                                                const MonokineticConfig& cfg = {}) {
  if (hbars.size() < 5) throw precondition_error("monokinetic_diagnostic", "at least five hbar values are required");
  for (std::size_t i = 0; i < hbars.size(); ++i) {
    if (!(hbars[i] > 0.0 && hbars[i] <= 1.0))
      throw precondition_error("monokinetic_diagnostic", "hbar values must lie in (0, 1]");
    if (i > 0 && !(hbars[i] < hbars[i - 1]))
      throw precondition_error("monokinetic_diagnostic", "hbar list must be strictly descending");
  }
  if (!(cfg.test_width > 0.0)) throw precondition_error("monokinetic_diagnostic", "test width must be positive");

  MonokineticReport rep;
  rep.test_width = cfg.test_width;
  for (double h : hbars) rep.legs.push_back(monokinetic_leg(family(h), cfg));

  auto fit = [&](auto get) {
    std::vector<double> y;
    for (const auto& l : rep.legs) y.push_back(std::abs(get(l)));
    return fit_log_slope(hbars, y);
  };
  rep.variance_fit = fit([](const MonokineticLeg& l) { return l.variance; });
  rep.hypothesis_fit = fit([](const MonokineticLeg& l) { return l.hypothesis; });
  rep.grad_energy_fit = fit([](const MonokineticLeg& l) { return l.grad_energy; });
  rep.rho2_P_fit = fit([](const MonokineticLeg& l) { return l.rho2_P; });
  rep.rho2_TrPi_fit = fit([](const MonokineticLeg& l) { return l.rho2_TrPi; });
  const int a = detail::slope_sign(rep.grad_energy_fit), b = detail::slope_sign(rep.rho2_P_fit),
            c = detail::slope_sign(rep.rho2_TrPi_fit);
  rep.chain_agrees = a == b && b == c;
  return rep;
}

} // namespace qkin
