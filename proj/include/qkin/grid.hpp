#pragma once

// Uniform periodic grids, labelled sample blocks and the spacing-weighted
// Fourier transforms that approximate continuum integrals.
//
// Convention: the forward transform along an axis is
//     F(v) = (2 pi)^{-1} sum_j h e^{-i v y_j} f(y_j)
// and the inverse is
//     f(y) = sum_k dv e^{+i v_k y} F(v_k),
// so a Wigner function is the forward transform of the Weyl-ordered density
// matrix and the v -> y inverse gives back the density matrix itself.

#include "qkin/error.hpp"
#include "qkin/fft.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace qkin {

using complex = std::complex<double>;
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct GridAxis {
  int n_points = 0;
  double length = 0.0;
  double offset = 0.0;

  static GridAxis centered(int n, double length) { return {n, length, -0.5 * length}; }

  double spacing() const { return length / n_points; }
  double coord(int i) const { return offset + i * spacing(); }
  double lower() const { return offset; }
  double upper() const { return offset + length; }
  /// Largest |coordinate| on the grid.
  double max_abs() const { return std::max(std::abs(coord(0)), std::abs(coord(n_points - 1))); }

  std::vector<double> coords() const {
    std::vector<double> c(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) c[static_cast<std::size_t>(i)] = coord(i);
    return c;
  }

  /// Centered reciprocal axis: spacing 2 pi / length, n points.
  GridAxis dual() const { return centered(n_points, two_pi / spacing()); }

  bool is_centered() const { return std::abs(offset + 0.5 * length) <= 1e-12 * length; }

  void validate() const {
    if (n_points < 8 || n_points % 2 != 0)
      throw precondition_error("grid_axis", "n_points must be even and >= 8, got " +
                                                std::to_string(n_points));
    if (!(length > 0.0) || !std::isfinite(length))
      throw precondition_error("grid_axis", "length must be positive and finite");
    if (!std::isfinite(offset)) throw precondition_error("grid_axis", "offset must be finite");
  }

  bool operator==(const GridAxis&) const = default;
};

/// Angular wavenumbers 2 pi/length * {0, 1, ..., n/2-1, -n/2, ..., -1}.
inline std::vector<double> wavenumbers(const GridAxis& axis) {
  axis.validate();
  const int n = axis.n_points;
  std::vector<double> k(static_cast<std::size_t>(n));
  const double dk = two_pi / axis.length;
  for (int i = 0; i < n; ++i) k[static_cast<std::size_t>(i)] = dk * (i < n / 2 ? i : i - n);
  return k;
}

// Axis labels are a base name plus a 1-based component ("x1", "v2", "t").
// Dual pairs: x <-> xi, y <-> v, t <-> tau.
inline std::string label(std::string_view base, int component) {
  return std::string(base) + std::to_string(component + 1);
}

inline std::string dual_label(std::string_view lbl) {
  std::size_t cut = lbl.size();
  while (cut > 0 && std::isdigit(static_cast<unsigned char>(lbl[cut - 1]))) --cut;
  std::string_view base = lbl.substr(0, cut);
  std::string_view digits = lbl.substr(cut);
  std::string d;
  if (base == "x") d = "xi";
  else if (base == "xi") d = "x";
  else if (base == "y") d = "v";
  else if (base == "v") d = "y";
  else if (base == "t") d = "tau";
  else if (base == "tau") d = "t";
  else throw precondition_error("dual_label", "no dual for axis label '" + std::string(lbl) + "'");
  return d + std::string(digits);
}

struct Axis {
  std::string label;
  GridAxis grid;
  bool operator==(const Axis&) const = default;
};

/// Dense row-major block of samples; each dimension carries a labelled axis.
template <class T>
class Field {
public:
  Field() = default;

  explicit Field(std::vector<Axis> axes) : axes_(std::move(axes)) {
    values_.assign(count(axes_), T{});
  }

  Field(std::vector<Axis> axes, std::vector<T> values)
      : axes_(std::move(axes)), values_(std::move(values)) {
    if (values_.size() != count(axes_))
      throw precondition_error("field", "sample count does not match axis product");
  }

  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(std::size_t k) const { return axes_.at(k); }
  std::size_t rank() const { return axes_.size(); }
  std::size_t size() const { return values_.size(); }

  std::size_t extent(std::size_t k) const {
    return static_cast<std::size_t>(axes_.at(k).grid.n_points);
  }

  bool has_axis(std::string_view lbl) const {
    return std::any_of(axes_.begin(), axes_.end(), [&](const Axis& a) { return a.label == lbl; });
  }

  std::size_t index_of(std::string_view lbl) const {
    for (std::size_t k = 0; k < axes_.size(); ++k)
      if (axes_[k].label == lbl) return k;
    throw precondition_error("axis_lookup", "label '" + std::string(lbl) + "' not present");
  }

  /// Product of extents after axis k (the stride of axis k).
  std::size_t stride(std::size_t k) const {
    std::size_t s = 1;
    for (std::size_t j = k + 1; j < axes_.size(); ++j) s *= extent(j);
    return s;
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// Multi-index of flat position i.
  std::vector<std::size_t> unravel(std::size_t i) const {
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t k = axes_.size(); k-- > 0;) {
      idx[k] = i % extent(k);
      i /= extent(k);
    }
    return idx;
  }

  bool same_shape(const Field& other) const { return axes_ == other.axes_; }

private:
  static std::size_t count(const std::vector<Axis>& axes) {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.grid.n_points);
    return axes.empty() ? 1 : n;
  }

  std::vector<Axis> axes_;
  std::vector<T> values_;
};

using RealField = Field<double>;
using ComplexField = Field<complex>;

inline ComplexField to_complex(const RealField& f) {
  ComplexField out(f.axes());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
  return out;
}

/// Real part, with the largest |imaginary| sample written to `max_imag`.
inline RealField real_part(const ComplexField& f, double* max_imag = nullptr) {
  RealField out(f.axes());
  double mi = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    out[i] = f[i].real();
    mi = std::max(mi, std::abs(f[i].imag()));
  }
  if (max_imag) *max_imag = mi;
  return out;
}

template <class T>
double max_abs(const Field<T>& f) {
  double m = 0.0;
  for (const auto& v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

template <class T>
void require_finite(const Field<T>& f, std::string_view stage) {
  for (const auto& v : f.values()) {
    if constexpr (std::is_same_v<T, complex>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw precondition_error(std::string(stage), "non-finite samples");
    } else {
      if (!std::isfinite(v)) throw precondition_error(std::string(stage), "non-finite samples");
    }
  }
}

/// Product of all axis spacings (quadrature cell measure).
template <class T>
double cell_measure(const Field<T>& f) {
  double c = 1.0;
  for (const auto& a : f.axes()) c *= a.grid.spacing();
  return c;
}

enum class Direction { forward, inverse };

/// Spacing-weighted DFT along one labelled axis; the axis is replaced by its
/// dual (label and grid).  The target grid defaults to the centered dual and
/// must have spacing 2 pi / (n h).
inline ComplexField dft_along(const ComplexField& field, std::string_view axis_label,
                              Direction dir, std::optional<GridAxis> target = std::nullopt) {
  const std::size_t k = field.index_of(axis_label);
  require_finite(field, "dft_along");
  const GridAxis src = field.axis(k).grid;
  const GridAxis dst = target.value_or(src.dual());
  const int n = src.n_points;
  if (dst.n_points != n ||
      std::abs(dst.spacing() * src.spacing() * n - two_pi) > 1e-10 * two_pi)
    throw precondition_error("dft_along", "target axis is not dual to '" +
                                              std::string(axis_label) + "'");

  std::vector<Axis> axes = field.axes();
  axes[k] = Axis{dual_label(axis_label), dst};
  ComplexField out(axes, std::vector<complex>(field.values().begin(), field.values().end()));

  const double h = src.spacing();
  const double s0 = src.offset;
  const double d0 = dst.offset;
  const double dd = dst.spacing();
  const double sgn = dir == Direction::forward ? -1.0 : 1.0;
  const double scale = dir == Direction::forward ? h / two_pi : h;

  // exp(sgn i v_k y_j) = exp(sgn i v_k y0) exp(sgn i v0 j h) exp(sgn 2 pi i jk/n)
  std::vector<complex> pre(static_cast<std::size_t>(n)), post(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    pre[static_cast<std::size_t>(j)] = std::polar(1.0, sgn * d0 * j * h);
    post[static_cast<std::size_t>(j)] = scale * std::polar(1.0, sgn * (d0 + j * dd) * s0);
  }

  const std::size_t inner = field.stride(k);
  const std::size_t outer = field.size() / (inner * static_cast<std::size_t>(n));
  auto data = out.values();
  auto apply = [&](const std::vector<complex>& phase) {
    for (std::size_t o = 0; o < outer; ++o)
      for (int j = 0; j < n; ++j) {
        complex* row = data.data() + (o * n + static_cast<std::size_t>(j)) * inner;
        const complex ph = phase[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < inner; ++i) row[i] *= ph;
      }
  };
  apply(pre);
  fft::transform_lines(data, outer, static_cast<std::size_t>(n), inner,
                       dir == Direction::forward ? fft::sign::forward : fft::sign::backward);
  apply(post);
  return out;
}

/// Rectangle-rule integral over the listed axes; those axes are removed.
template <class T>
Field<T> quadrature(const Field<T>& field, const std::vector<std::string>& labels) {
  if (labels.empty()) throw precondition_error("quadrature", "empty axis subset");
  Field<T> cur = field;
  for (const auto& lbl : labels) {
    const std::size_t k = cur.index_of(lbl);
    const std::size_t n = cur.extent(k);
    const std::size_t inner = cur.stride(k);
    const std::size_t outer = cur.size() / (n * inner);
    const double h = cur.axis(k).grid.spacing();
    std::vector<Axis> axes = cur.axes();
    axes.erase(axes.begin() + static_cast<std::ptrdiff_t>(k));
    Field<T> next(axes);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        T acc{};
        for (std::size_t j = 0; j < n; ++j) acc += cur[(o * n + j) * inner + i];
        next[o * inner + i] = acc * h;
      }
    cur = std::move(next);
  }
  return cur;
}

/// Integral over every axis.
template <class T>
T integrate(const Field<T>& field) {
  T acc{};
  for (const auto& v : field.values()) acc += v;
  return acc * cell_measure(field);
}

template <class T>
double l2_norm(const Field<T>& field) {
  double acc = 0.0;
  for (const auto& v : field.values()) acc += std::norm(v);
  return std::sqrt(acc * cell_measure(field));
}

// ---------------------------------------------------------------------------
// Spectral calculus on periodic axes.

/// Native-order (unscaled) FFT of every line along axis k, in place.
inline void fft_axis(ComplexField& f, std::size_t k, fft::sign dir) {
  const std::size_t n = f.extent(k);
  const std::size_t inner = f.stride(k);
  fft::transform_lines(f.values(), f.size() / (n * inner), n, inner, dir);
}

/// Multiply every line along axis k by a per-index factor.
template <class T, class U>
void scale_axis(Field<T>& f, std::size_t k, std::span<const U> factor) {
  const std::size_t n = f.extent(k);
  const std::size_t inner = f.stride(k);
  const std::size_t outer = f.size() / (n * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j) {
      T* row = f.values().data() + (o * n + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) row[i] *= factor[j];
    }
}

/// Spectral derivative of the given order along a labelled axis.
inline ComplexField derivative(const ComplexField& f, std::string_view axis_label, int order = 1) {
  const std::size_t k = f.index_of(axis_label);
  const auto& ax = f.axis(k).grid;
  const auto kk = wavenumbers(ax);
  const std::size_t n = kk.size();
  std::vector<complex> factor(n);
  for (std::size_t j = 0; j < n; ++j) {
    factor[j] = std::pow(complex(0.0, kk[j]), order) / static_cast<double>(n);
    if (j == n / 2 && order % 2 == 1) factor[j] = 0.0;
  }
  ComplexField out = f;
  fft_axis(out, k, fft::sign::forward);
  scale_axis<complex, complex>(out, k, factor);
  fft_axis(out, k, fft::sign::backward);
  return out;
}

inline RealField derivative(const RealField& f, std::string_view axis_label, int order = 1) {
  return real_part(derivative(to_complex(f), axis_label, order));
}

/// Periodic trigonometric interpolation: returns g(x) = f(x + shift) along an axis.
inline ComplexField shifted(const ComplexField& f, std::string_view axis_label, double shift) {
  const std::size_t k = f.index_of(axis_label);
  const auto kk = wavenumbers(f.axis(k).grid);
  const std::size_t n = kk.size();
  std::vector<complex> factor(n);
  for (std::size_t j = 0; j < n; ++j)
    factor[j] = (j == n / 2 ? complex(std::cos(kk[j] * shift), 0.0)
                            : std::polar(1.0, kk[j] * shift)) /
                static_cast<double>(n);
  ComplexField out = f;
  fft_axis(out, k, fft::sign::forward);
  scale_axis<complex, complex>(out, k, factor);
  fft_axis(out, k, fft::sign::backward);
  return out;
}

// ---------------------------------------------------------------------------

/// Phase-space discretization: d position axes, optional d velocity axes and
/// an optional time axis.  d is 1 or 2.
struct PhaseGrid {
  std::vector<GridAxis> x;
  std::vector<GridAxis> v;
  std::optional<GridAxis> time;

  int dim() const { return static_cast<int>(x.size()); }

  std::vector<Axis> x_axes() const {
    std::vector<Axis> a;
    for (int j = 0; j < dim(); ++j) a.push_back({label("x", j), x[static_cast<std::size_t>(j)]});
    return a;
  }
  std::vector<Axis> v_axes() const {
    std::vector<Axis> a;
    for (std::size_t j = 0; j < v.size(); ++j) a.push_back({label("v", static_cast<int>(j)), v[j]});
    return a;
  }
  /// Relative-position axes dual to the velocity axes.
  std::vector<Axis> y_axes() const {
    std::vector<Axis> a;
    for (std::size_t j = 0; j < v.size(); ++j)
      a.push_back({label("y", static_cast<int>(j)), v[j].dual()});
    return a;
  }

  void validate() const {
    if (dim() < 1 || dim() > 2) throw precondition_error("phase_grid", "dimension must be 1 or 2");
    for (const auto& a : x) a.validate();
    if (!v.empty() && v.size() != x.size())
      throw precondition_error("phase_grid", "velocity axes must match position dimension");
    for (const auto& a : v) {
      a.validate();
      if (!a.is_centered()) throw precondition_error("phase_grid", "velocity axes must be centered");
    }
    if (time) time->validate();
  }

  static PhaseGrid line(int n, double length) { return PhaseGrid{{GridAxis::centered(n, length)}, {}, {}}; }
};

/// Velocity axis whose dual y-grid reaches hbar*y_max = length/2 on the
/// given position axis: v_max = n pi hbar / length.
inline GridAxis velocity_axis_for(const GridAxis& x, double hbar, int n_v) {
  return GridAxis::centered(n_v, two_pi * hbar * n_v / x.length);
}

inline std::string describe(const GridAxis& a) {
  std::ostringstream os;
  os << "n=" << a.n_points << " length=" << a.length << " offset=" << a.offset;
  return os.str();
}

} // namespace qkin
