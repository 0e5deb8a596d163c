#pragma once

// Residuals of the rank-one characterization of w~ and of the Madelung
// identity on the partial Fourier picture.

#include "qkin/grid.hpp"
#include "qkin/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace qkin {

using Matrix = std::vector<std::vector<double>>;

struct CharResidual {
  Matrix r1;
  Matrix r2;
  double support_fraction = 0.0;
  double floor = 0.0;
  bool reliable = true;

  double max_residual() const {
    double m = 0.0;
    for (const auto* mat : {&r1, &r2})
      for (const auto& row : *mat)
        for (double v : row) m = std::max(m, v);
    return m;
  }
};

namespace detail {

// First derivatives of w~ along every axis; second derivatives per (j,k)
// pair on demand, since 2d fields are large.
struct TildeDerivatives {
  const ComplexField& w;
  int d = 0;
  std::vector<ComplexField> dx, dy;

  TildeDerivatives(const ComplexField& field, int dim) : w(field), d(dim) {
    for (int j = 0; j < d; ++j) {
      dx.push_back(derivative(w, label("x", j)));
      dy.push_back(derivative(w, label("y", j)));
    }
  }

  ComplexField second(const char* base, int j, int k) const {
    const auto& first = std::string(base) == "x" ? dx : dy;
    if (j == k) return derivative(w, label(base, j), 2);
    return derivative(first[static_cast<std::size_t>(k)], label(base, j));
  }
  /// d_{y_j} d_{x_k} w
  ComplexField mixed(int j, int k) const {
    return derivative(dx[static_cast<std::size_t>(k)], label("y", j));
  }
};

inline std::vector<char> tilde_mask(const ComplexField& w, double floor, double* fraction) {
  std::vector<char> mask(w.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (std::abs(w[i]) > floor) {
      mask[i] = 1;
      ++count;
    }
  if (fraction) *fraction = w.size() ? static_cast<double>(count) / static_cast<double>(w.size()) : 0.0;
  return mask;
}

struct MaskedComparison {
  double diff = 0.0;  // ||a - b||
  double larger = 0.0; // max(||a||, ||b||)

  /// Relative residual; `reference` stands in when both sides vanish
  /// analytically (off-diagonal pairs of separable states).
  double relative(double reference = 0.0) const {
    const double scale = std::max(larger, reference);
    return scale > 0.0 ? diff / scale : 0.0;
  }
};

inline MaskedComparison masked_compare(const std::vector<complex>& a, const std::vector<complex>& b,
                                       const std::vector<char>& mask) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask[i]) continue;
    diff += std::norm(a[i] - b[i]);
    na += std::norm(a[i]);
    nb += std::norm(b[i]);
  }
  return {std::sqrt(diff), std::sqrt(std::max(na, nb))};
}

inline void require_tilde(const TildeField& t, const char* op) {
  if (t.values.rank() % 2 != 0 || t.dim() < 1)
    throw precondition_error(op, "expected axes x1..xd, y1..yd");
  require_finite(t.values, op);
}

} // namespace detail

/// Both PDE families of the rank-one characterization, with every quotient
/// d_j(d_k w/w) expanded as d_jk w/w - d_j w d_k w/w^2 so that only w~ itself
/// is differentiated.
inline CharResidual char_residual(const TildeField& t, double floor_rel = 1e-6) {
  detail::require_tilde(t, "char_residual");
  if (!(floor_rel > 0.0)) throw precondition_error("char_residual", "floor must be positive");
  const int d = t.dim();
  const ComplexField& w = t.values;
  const double hbar = t.params.hbar;

  CharResidual out;
  out.floor = floor_rel * max_abs(w);
  const auto mask = detail::tilde_mask(w, out.floor, &out.support_fraction);
  out.reliable = out.support_fraction >= 0.05;

  const detail::TildeDerivatives g(w, d);
  const auto n = static_cast<std::size_t>(d);
  std::vector<std::vector<detail::MaskedComparison>> first(n, std::vector<detail::MaskedComparison>(n)),
      second = first;
  std::vector<complex> lhs(w.size()), rhs(w.size());
  const double c = 4.0 / (hbar * hbar);

  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      const auto dxx = g.second("x", j, k);
      const auto dyy = g.second("y", j, k);
      const auto& yj = g.dy[static_cast<std::size_t>(j)];
      const auto& yk = g.dy[static_cast<std::size_t>(k)];
      const auto& xj = g.dx[static_cast<std::size_t>(j)];
      const auto& xk = g.dx[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!mask[i]) continue;
        const complex inv = 1.0 / w[i];
        lhs[i] = c * (dyy[i] - yj[i] * yk[i] * inv) * inv;
        rhs[i] = (dxx[i] - xj[i] * xk[i] * inv) * inv;
      }
      first[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = detail::masked_compare(lhs, rhs, mask);

      // d_{y_j}(d_{x_k} w/w) against d_{x_j}(d_{y_k} w/w).
      const auto yx = g.mixed(j, k);
      const auto xy = g.mixed(k, j);
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!mask[i]) continue;
        const complex inv = 1.0 / w[i];
        lhs[i] = (yx[i] - yj[i] * xk[i] * inv) * inv;
        rhs[i] = (xy[i] - xj[i] * yk[i] * inv) * inv;
      }
      second[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = detail::masked_compare(lhs, rhs, mask);
    }

  // Scale of a (j,k) pair: geometric mean of the diagonal first-family sides;
  // the mixed family carries one y derivative, hence the factor hbar/2.
  out.r1.assign(n, std::vector<double>(n, 0.0));
  out.r2 = out.r1;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const double ref = std::sqrt(first[j][j].larger * first[k][k].larger);
      out.r1[j][k] = first[j][k].relative(ref);
      out.r2[j][k] = second[j][k].relative(0.5 * hbar * ref);
    }
  return out;
}

/// Per-(j,k) masked relative residual of
/// d_yj d_yk R = d_yj R d_yk R / R + (hbar^2/4) R d_xj(d_xk R / R).
inline Matrix madelung_identity_residual(const TildeField& t, double floor_rel = 1e-6) {
  detail::require_tilde(t, "madelung_identity_residual");
  const int d = t.dim();
  const ComplexField& w = t.values;
  const double q = 0.25 * t.params.hbar * t.params.hbar;
  double fraction = 0.0;
  const auto mask = detail::tilde_mask(w, floor_rel * max_abs(w), &fraction);
  if (fraction < 0.05)
    throw precondition_error("madelung_identity_residual",
                             "support fraction " + std::to_string(fraction) + " below 0.05");

  const detail::TildeDerivatives g(w, d);
  const auto n = static_cast<std::size_t>(d);
  std::vector<std::vector<detail::MaskedComparison>> cmp(n, std::vector<detail::MaskedComparison>(n));
  std::vector<complex> lhs(w.size()), rhs(w.size());
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      const auto dxx = g.second("x", j, k);
      const auto dyy = g.second("y", j, k);
      const auto& yj = g.dy[static_cast<std::size_t>(j)];
      const auto& yk = g.dy[static_cast<std::size_t>(k)];
      const auto& xj = g.dx[static_cast<std::size_t>(j)];
      const auto& xk = g.dx[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!mask[i]) continue;
        const complex inv = 1.0 / w[i];
        lhs[i] = dyy[i];
        rhs[i] = yj[i] * yk[i] * inv + q * (dxx[i] - xj[i] * xk[i] * inv);
      }
      cmp[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = detail::masked_compare(lhs, rhs, mask);
    }
  Matrix out(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      out[j][k] = cmp[j][k].relative(std::sqrt(cmp[j][j].larger * cmp[k][k].larger));
  return out;
}

enum class Verdict { pure, mixed, indeterminate };

inline const char* describe(Verdict v) {
  switch (v) {
  case Verdict::pure: return "PURE";
  case Verdict::mixed: return "MIXED";
  case Verdict::indeterminate: return "INDETERMINATE";
  }
  return "?";
}

struct PurityThresholds {
  double pure = 1e-5;
  double mixed = 1e-3;
  double floor_rel = 1e-6;
};

struct PurityVerdict {
  Verdict verdict = Verdict::indeterminate;
  CharResidual residual;
  double max_residual = 0.0;
  PurityThresholds thresholds;
};

inline PurityVerdict is_pure_diagnostic(const TildeField& t, PurityThresholds th = {}) {
  if (!(th.pure > 0.0 && th.pure <= th.mixed))
    throw precondition_error("is_pure_diagnostic", "need 0 < pure threshold <= mixed threshold");
  PurityVerdict out;
  out.thresholds = th;
  out.residual = char_residual(t, th.floor_rel);
  out.max_residual = out.residual.max_residual();
  if (!out.residual.reliable) out.verdict = Verdict::indeterminate;
  else if (out.max_residual < th.pure) out.verdict = Verdict::pure;
  else if (out.max_residual > th.mixed) out.verdict = Verdict::mixed;
  else out.verdict = Verdict::indeterminate;
  return out;
}

inline PurityVerdict is_pure_diagnostic(const WignerField& w, PurityThresholds th = {}) {
  return is_pure_diagnostic(tilde_of(w), th);
}

} // namespace qkin
