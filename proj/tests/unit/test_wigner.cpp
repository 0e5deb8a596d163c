#include "qkin/wigner.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qkin;

namespace {

struct Setup {
  PhaseGrid grid;
  PhysicalParams params;
  std::vector<GridAxis> v;
};

Setup line_setup(int nx, double L, int nv, double hbar) {
  Setup s{PhaseGrid::line(nx, L), {hbar, 1.0}, {}};
  s.v = {velocity_axis_for(s.grid.x[0], hbar, nv)};
  return s;
}

double gaussian_psi(double x, double sigma) {
  return std::pow(pi * sigma * sigma, -0.25) * std::exp(-x * x / (2 * sigma * sigma));
}

// Direct rectangle-rule evaluation of (2 pi)^{-1} int e^{-ivy} psi(x+hy/2) psi(x-hy/2) dy.
double direct_wigner(double x, double v, double hbar, double sigma) {
  const double Y = 40.0 * sigma / hbar;
  const int n = 20000;
  const double dy = 2 * Y / n;
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    const double y = -Y + j * dy;
    acc += std::cos(v * y) * gaussian_psi(x + hbar * y / 2, sigma) * gaussian_psi(x - hbar * y / 2, sigma);
  }
  return acc * dy / two_pi;
}

double wmin(const WignerField& w) {
  double m = 1e300;
  for (double v : w.values.values()) m = std::min(m, v);
  return m;
}

} // namespace

TEST(WignerOfPure, GaussianMatchesClosedFormAndDirectQuadrature) {
  const double hbar = 0.5, sigma = 1.0;
  auto s = line_setup(256, 32.0, 256, hbar);
  const auto psi = make_gaussian(s.grid, s.params, {0.0}, {0.0}, sigma);
  const auto w = wigner_of_pure(psi, s.v);
  const auto& xa = w.values.axis(0).grid;
  const auto& va = w.values.axis(1).grid;
  double worst = 0.0;
  for (int i = 0; i < xa.n_points; ++i)
    for (int k = 0; k < va.n_points; ++k) {
      const double x = xa.coord(i), v = va.coord(k);
      const double closed = std::exp(-x * x / (sigma * sigma)) * std::exp(-sigma * sigma * v * v / (hbar * hbar)) / (pi * hbar);
      worst = std::max(worst, std::abs(w.values[static_cast<std::size_t>(i * va.n_points + k)] - closed));
    }
  EXPECT_LT(worst, 1e-7);
  for (auto [x, v] : {std::pair{0.0, 0.0}, {0.5, 0.25}, {-1.0, 0.5}}) {
    const int i = static_cast<int>(std::lround((x - xa.offset) / xa.spacing()));
    const int k = static_cast<int>(std::lround((v - va.offset) / va.spacing()));
    EXPECT_NEAR(w.values[static_cast<std::size_t>(i * va.n_points + k)],
                direct_wigner(xa.coord(i), va.coord(k), hbar, sigma), 1e-7);
  }
  EXPECT_LT(w.imag_residue, 1e-9 * max_abs(w.values));
}

TEST(WignerOfPure, MarginalIsDensity) {
  auto s = line_setup(256, 32.0, 256, 0.25);
  const auto psi = make_cat(s.grid, s.params, {0.0}, 3.0, 0.8);
  const auto w = wigner_of_pure(psi, s.v);
  const auto rho = quadrature(w.values, {"v1"});
  for (std::size_t i = 0; i < rho.size(); ++i) EXPECT_NEAR(rho[i], std::norm(psi.samples[i]), 1e-8);
}

TEST(WignerOfPure, BoostShiftsVelocity) {
  const double hbar = 0.5;
  auto s = line_setup(256, 32.0, 256, hbar);
  const double dv = s.v[0].spacing();
  // p0 a multiple of dv, and p0/hbar a multiple of the x-lattice 2 pi / L.
  const int shift = 8;
  const double p0 = shift * dv;
  const auto a = make_gaussian(s.grid, s.params, {0.0}, {0.0}, 1.0);
  const auto b = make_gaussian(s.grid, s.params, {0.0}, {p0}, 1.0);
  const auto wa = wigner_of_pure(a, s.v), wb = wigner_of_pure(b, s.v);
  const int nv = s.v[0].n_points;
  double worst = 0.0;
  for (int i = 0; i < 256; ++i)
    for (int k = 0; k + shift < nv; ++k)
      worst = std::max(worst, std::abs(wb.values[static_cast<std::size_t>(i * nv + k + shift)] -
                                       wa.values[static_cast<std::size_t>(i * nv + k)]));
  EXPECT_LT(worst, 1e-10);
}

TEST(WignerOfPure, HudsonDichotomy) {
  auto s = line_setup(256, 40.0, 256, 1.0);
  for (double p0 : {0.0, 0.5}) {
    const auto w = wigner_of_pure(make_gaussian(s.grid, s.params, {1.0}, {p0}, 1.3), s.v);
    EXPECT_GE(wmin(w), -1e-8 * max_abs(w.values));
  }
  const auto cat = wigner_of_pure(make_cat(s.grid, s.params, {0.0}, 6.0, 1.0), s.v);
  EXPECT_LT(wmin(cat), -1e-2 * max_abs(cat.values));
}

TEST(WignerOfPure, RejectsWrapAround) {
  auto s = line_setup(256, 32.0, 256, 0.5);
  const auto psi = make_gaussian(s.grid, s.params, {0.0}, {0.0}, 2.0);
  EXPECT_THROW(wigner_of_pure(psi, s.v), precondition_error);
}

TEST(WignerOfPure, RejectsOverflowingShift) {
  auto s = line_setup(128, 16.0, 128, 0.5);
  s.v = {GridAxis::centered(128, 8.0)};  // dv too fine: hbar y_max / 2 > L / 2
  const auto psi = make_gaussian(s.grid, s.params, {0.0}, {0.0}, 1.0);
  EXPECT_THROW(wigner_of_pure(psi, s.v), precondition_error);
}

TEST(WignerOfMixed, LinearityTraceAndPlancherel) {
  const double hbar = 1.0 / (16.0 * pi);
  // Modes stay inside half the x band, so the y-rule resolves |w~|^2.
  auto s = line_setup(512, 12.0, 256, hbar);
  BasisRecipe b;
  b.center = {0.0};
  const auto r = make_admissible_mixture(s.grid, s.params, b);
  const auto w = wigner_of_mixed(r, s.v);
  EXPECT_NEAR(integrate(w.values), 1.0, 1e-8);
  const double lhs = two_pi * hbar * l2_norm_squared(w);
  EXPECT_NEAR(lhs / purity(r), 1.0, 1e-6);

  RealField sum(w.values.axes());
  for (std::size_t j = 0; j < r.weights.size(); ++j) {
    const auto wj = wigner_of_pure(r.eigenfunctions[j], s.v);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.weights[j] * wj.values[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) ASSERT_NEAR(sum[i], w.values[i], 1e-12);
}

TEST(WignerOfMixed, RankOneMatchesPure) {
  auto s = line_setup(128, 24.0, 128, 0.5);
  const auto psi = make_gaussian(s.grid, s.params, {0.5}, {0.25}, 1.0);
  const auto a = wigner_of_pure(psi, s.v), b = wigner_of_mixed(pure_state(psi), s.v);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_EQ(a.values[i], b.values[i]);
}

TEST(TildeOf, RoundTripZeroSliceAndHermitian) {
  auto s = line_setup(128, 24.0, 128, 0.5);
  const auto psi = make_gaussian(s.grid, s.params, {0.5}, {0.75}, 1.0);
  const auto w = wigner_of_pure(psi, s.v);
  const auto t = tilde_of(w);
  const auto back = wigner_from_tilde(t, s.v);
  for (std::size_t i = 0; i < w.values.size(); ++i) EXPECT_NEAR(back.values[i], w.values[i], 1e-12);
  const int ny = 128;
  const auto& ya = t.values.axis(1).grid;
  for (int i = 0; i < 128; ++i) {
    int zero = -1;
    for (int k = 0; k < ny; ++k)
      if (std::abs(ya.coord(k)) < 1e-12) zero = k;
    ASSERT_GE(zero, 0);
    EXPECT_NEAR(std::abs(t.values[static_cast<std::size_t>(i * ny + zero)] - std::norm(psi.samples[static_cast<std::size_t>(i)])), 0.0, 1e-9);
    for (int k = 1; k < ny; ++k)
      EXPECT_NEAR(std::abs(t.values[static_cast<std::size_t>(i * ny + k)] -
                           std::conj(t.values[static_cast<std::size_t>(i * ny + ny - k)])),
                  0.0, 1e-9);
  }
}

TEST(Moments, GaussianEnergyAndVariance) {
  const double hbar = 0.5, sigma = 1.2, m = 1.0;
  auto s = line_setup(256, 32.0, 256, hbar);
  const auto w = wigner_of_pure(make_gaussian(s.grid, s.params, {0.0}, {0.0}, sigma), s.v);
  const auto mom = moments(w);
  EXPECT_NEAR(integrate(mom.rho), 1.0, 1e-8);
  const double E = integrate(mom.E);
  EXPECT_NEAR(E / (hbar * hbar / (4 * m * sigma * sigma)), 1.0, 1e-6);
  EXPECT_NEAR(integrate(mom.v_variance) / (hbar * hbar / (2 * sigma * sigma)), 1.0, 1e-6);
}

TEST(Moments, WkbCurrent) {
  const double hbar = 0.25, p0 = 0.5;
  auto s = line_setup(512, 64.0, 1024, hbar);
  AmplitudeProfile a;
  a.center = {0.0};
  a.sigma = 2.0;
  PhaseProfile ph;
  ph.kind = PhaseProfile::Kind::linear;
  ph.momentum = {p0};
  const auto wkb = make_wkb(s.grid, s.params, a, ph);
  const auto mom = moments(wigner_of_pure(wkb.psi, s.v));
  for (std::size_t i = 0; i < mom.rho.size(); ++i) EXPECT_NEAR(mom.J[0][i], p0 * mom.rho[i], 1e-6);
  const auto direct = moments_of_state(pure_state(wkb.psi));
  for (std::size_t i = 0; i < mom.rho.size(); ++i) {
    EXPECT_NEAR(direct.J[0][i], mom.J[0][i], 1e-8);
    EXPECT_NEAR(direct.E[i], mom.E[i], 1e-8);
  }
}

TEST(Moments, RejectsTruncatedVelocityGrid) {
  const double hbar = 1.0;
  auto s = line_setup(512, 64.0, 64, hbar);
  s.v = {GridAxis::centered(64, 4.0)};
  const auto w = wigner_of_pure(make_gaussian(s.grid, s.params, {0.0}, {0.0}, 0.5), s.v);
  EXPECT_THROW(moments(w), precondition_error);
}
