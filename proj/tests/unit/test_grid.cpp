#include "qkin/grid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace qkin;

namespace {

ComplexField line_field(const GridAxis& ax, const std::string& lbl) {
  return ComplexField({{lbl, ax}});
}

ComplexField random_field(std::vector<Axis> axes, unsigned seed) {
  ComplexField f(std::move(axes));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : f.values()) v = complex(n(rng), n(rng));
  return f;
}

double rel_diff(const ComplexField& a, const ComplexField& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

} // namespace

TEST(Wavenumbers, NativeOrderUnitLattice) {
  const auto k = wavenumbers(GridAxis{8, two_pi, 0.0});
  const std::vector<double> expect{0, 1, 2, 3, -4, -3, -2, -1};
  ASSERT_EQ(k.size(), expect.size());
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k[i], expect[i], 1e-14);
}

TEST(Wavenumbers, ScaledLattice) {
  // n = 4 violates the n >= 8 axis invariant, so check the n = 8 analogue with length pi.
  const auto k = wavenumbers(GridAxis{8, pi, 0.0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(k[i], 2.0 * static_cast<double>(i), 1e-14);
  EXPECT_NEAR(k[4], -8.0, 1e-14);
  EXPECT_THROW(wavenumbers(GridAxis{4, pi, 0.0}), precondition_error);
}

TEST(Wavenumbers, SpacingIdentity) {
  const GridAxis ax{64, 3.7, -1.0};
  EXPECT_NEAR(ax.spacing() * ax.n_points, ax.length, 1e-14);
  EXPECT_NEAR(ax.dual().spacing() * ax.n_points, two_pi * ax.n_points / ax.length, 1e-10);
}

TEST(DftAlong, RoundTripIsIdentity) {
  const GridAxis ax = GridAxis::centered(64, 10.0);
  const auto f = random_field({{"y1", ax}}, 7);
  const auto g = dft_along(dft_along(f, "y1", Direction::forward), "v1", Direction::inverse, ax);
  EXPECT_LT(rel_diff(g, f), 1e-12);
  EXPECT_EQ(g.axis(0).label, "y1");
}

TEST(DftAlong, RoundTripOnInnerAxisOf2d) {
  const auto f = random_field({{"x1", GridAxis::centered(16, 4.0)}, {"y1", GridAxis::centered(32, 8.0)}}, 3);
  const auto g = dft_along(dft_along(f, "y1", Direction::forward), "v1", Direction::inverse,
                           GridAxis::centered(32, 8.0));
  EXPECT_LT(rel_diff(g, f), 1e-12);
}

TEST(DftAlong, ConstantGivesUnitMassDelta) {
  const GridAxis ax = GridAxis::centered(64, 20.0);
  ComplexField f = line_field(ax, "y1");
  for (auto& v : f.values()) v = 1.0;
  const auto F = dft_along(f, "y1", Direction::forward);
  // Discrete delta at v = 0 carrying (2 pi)^{-1} int 1 dy in each cell, so that
  // the inverse rebuilds the constant: sum dv * F = 1.
  const auto& vax = F.axis(0).grid;
  double mass = 0.0;
  for (int i = 0; i < vax.n_points; ++i) {
    if (std::abs(vax.coord(i)) < 1e-12) {
      EXPECT_NEAR(std::abs(F[static_cast<std::size_t>(i)]) * vax.spacing(), 1.0, 1e-12);
    } else {
      EXPECT_LT(std::abs(F[static_cast<std::size_t>(i)]), 1e-12);
    }
    mass += F[static_cast<std::size_t>(i)].real() * vax.spacing();
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(DftAlong, GaussianMatchesDirectSummation) {
  const GridAxis ax = GridAxis::centered(256, 40.0);
  ComplexField f = line_field(ax, "y1");
  for (int i = 0; i < ax.n_points; ++i) f[static_cast<std::size_t>(i)] = std::exp(-0.5 * ax.coord(i) * ax.coord(i));
  const auto F = dft_along(f, "y1", Direction::forward);
  const auto& vax = F.axis(0).grid;
  double worst_direct = 0.0, worst_closed = 0.0;
  for (int k = 0; k < vax.n_points; ++k) {
    const double v = vax.coord(k);
    complex direct = 0.0;
    for (int j = 0; j < ax.n_points; ++j)
      direct += std::exp(complex(0.0, -v * ax.coord(j))) * std::exp(-0.5 * ax.coord(j) * ax.coord(j));
    direct *= ax.spacing() / two_pi;
    worst_direct = std::max(worst_direct, std::abs(F[static_cast<std::size_t>(k)] - direct));
    const double closed = std::exp(-0.5 * v * v) / std::sqrt(two_pi);
    worst_closed = std::max(worst_closed, std::abs(F[static_cast<std::size_t>(k)] - closed));
  }
  EXPECT_LT(worst_direct, 1e-12);
  EXPECT_LT(worst_closed, 1e-8);
}

TEST(DftAlong, ParsevalWithTwoPiWeight) {
  const GridAxis ax = GridAxis::centered(128, 12.0);
  const auto f = random_field({{"x1", GridAxis::centered(8, 1.0)}, {"y1", ax}}, 11);
  const auto F = dft_along(f, "y1", Direction::forward);
  const double lhs = std::pow(l2_norm(f), 2);
  const double rhs = two_pi * std::pow(l2_norm(F), 2);
  EXPECT_NEAR(lhs / rhs, 1.0, 1e-10);
}

TEST(DftAlong, Linear) {
  const GridAxis ax = GridAxis::centered(32, 5.0);
  const auto f = random_field({{"y1", ax}}, 1), g = random_field({{"y1", ax}}, 2);
  const complex a(0.3, -1.2), b(2.0, 0.5);
  ComplexField h = f;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = a * f[i] + b * g[i];
  const auto Ff = dft_along(f, "y1", Direction::forward), Fg = dft_along(g, "y1", Direction::forward);
  auto expect = Ff;
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = a * Ff[i] + b * Fg[i];
  EXPECT_LT(rel_diff(dft_along(h, "y1", Direction::forward), expect), 1e-12);
}

TEST(DftAlong, Errors) {
  const GridAxis ax = GridAxis::centered(32, 5.0);
  ComplexField f = line_field(ax, "y1");
  EXPECT_THROW(dft_along(f, "x1", Direction::forward), precondition_error);
  EXPECT_THROW(dft_along(f, "y1", Direction::forward, GridAxis::centered(32, 1.0)), precondition_error);
  f[3] = complex(std::nan(""), 0.0);
  EXPECT_THROW(dft_along(f, "y1", Direction::forward), precondition_error);
}

TEST(Quadrature, ConstantGivesLength) {
  RealField f({{"x1", GridAxis{16, 3.5, 0.0}}});
  for (auto& v : f.values()) v = 2.0;
  EXPECT_NEAR(integrate(f), 7.0, 1e-12);
  EXPECT_NEAR(quadrature(f, {"x1"})[0], 7.0, 1e-12);
}

TEST(Quadrature, OddInVanishes) {
  const GridAxis v = GridAxis::centered(64, 12.0);
  RealField f({{"x1", GridAxis::centered(8, 1.0)}, {"v1", v}});
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double vv = v.coord(static_cast<int>(i % 64));
    f[i] = vv * std::exp(-vv * vv);
  }
  const auto g = quadrature(f, {"v1"});
  EXPECT_EQ(g.rank(), 1u);
  for (double x : g.values()) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Quadrature, NormalizedGaussianDensity) {
  const GridAxis ax = GridAxis::centered(128, 20.0);
  RealField f({{"x1", ax}});
  for (int i = 0; i < ax.n_points; ++i) f[static_cast<std::size_t>(i)] = std::exp(-ax.coord(i) * ax.coord(i)) / std::sqrt(pi);
  EXPECT_NEAR(quadrature(f, {"x1"})[0], 1.0, 1e-10);
}

TEST(Quadrature, ExactForTrigPolynomials) {
  const GridAxis ax{32, two_pi, 0.0};
  RealField f({{"x1", ax}});
  for (int i = 0; i < ax.n_points; ++i) {
    const double x = ax.coord(i);
    f[static_cast<std::size_t>(i)] = 1.5 + std::cos(3 * x) + std::sin(15 * x) - 0.25 * std::cos(7 * x);
  }
  EXPECT_NEAR(integrate(f), 1.5 * two_pi, 1e-12);
}

TEST(Quadrature, Errors) {
  RealField f({{"x1", GridAxis::centered(8, 1.0)}});
  EXPECT_THROW(quadrature(f, {}), precondition_error);
  EXPECT_THROW(quadrature(f, {"v1"}), precondition_error);
}

TEST(SpectralCalculus, DerivativeAndShiftOfTrigPolynomial) {
  const GridAxis ax{64, two_pi, 0.0};
  ComplexField f({{"x1", ax}});
  for (int i = 0; i < 64; ++i) f[static_cast<std::size_t>(i)] = std::sin(3 * ax.coord(i));
  const auto d = derivative(f, "x1", 1);
  const auto s = shifted(f, "x1", 0.4);
  for (int i = 0; i < 64; ++i) {
    EXPECT_NEAR(d[static_cast<std::size_t>(i)].real(), 3 * std::cos(3 * ax.coord(i)), 1e-12);
    EXPECT_NEAR(s[static_cast<std::size_t>(i)].real(), std::sin(3 * (ax.coord(i) + 0.4)), 1e-12);
  }
}

TEST(PhaseGrid, Validation) {
  PhaseGrid g = PhaseGrid::line(64, 10.0);
  EXPECT_NO_THROW(g.validate());
  g.v = {GridAxis{64, 4.0, 0.0}};
  EXPECT_THROW(g.validate(), precondition_error);
  g.v = {GridAxis::centered(64, 4.0), GridAxis::centered(64, 4.0)};
  EXPECT_THROW(g.validate(), precondition_error);
  EXPECT_THROW((GridAxis{7, 1.0, 0.0}.validate()), precondition_error);
}
