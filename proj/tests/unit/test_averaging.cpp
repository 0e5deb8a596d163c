#include "qkin/averaging.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qkin;

namespace {

struct Line {
  PhaseGrid grid;
  PhysicalParams params;
  std::vector<GridAxis> v;
};

Line line(int nx, double L, int nv, double hbar) {
  Line s{PhaseGrid::line(nx, L), {hbar, 1.0}, {}};
  s.v = {velocity_axis_for(s.grid.x[0], hbar, nv)};
  return s;
}

// Direct O(N^2) evaluation of the discrete weighted sum, no FFT.
double direct_sobolev(const RealField& g, double s, bool hann) {
  const auto& ta = g.axis(0).grid;
  const auto& xa = g.axis(1).grid;
  const int nt = ta.n_points, nx = xa.n_points;
  double total = 0.0;
  for (int p = 0; p < nt; ++p)
    for (int q = 0; q < nx; ++q) {
      const int pp = p <= nt / 2 - 1 ? p : p - nt, qq = q <= nx / 2 - 1 ? q : q - nx;
      const double tau = two_pi * pp / ta.length, xi = two_pi * qq / xa.length;
      complex c = 0;
      for (int a = 0; a < nt; ++a) {
        const double taper = hann ? std::pow(std::sin(pi * a / nt), 2) : 1.0;
        for (int b = 0; b < nx; ++b)
          c += taper * g[static_cast<std::size_t>(a * nx + b)] *
               std::polar(1.0, -two_pi * (static_cast<double>(p) * a / nt + static_cast<double>(q) * b / nx));
      }
      total += std::pow(1 + tau * tau + xi * xi, s) * std::norm(c);
    }
  return std::sqrt(total * ta.spacing() * xa.spacing() / (nt * nx));
}

RealField bump_field(int nt, int nx) {
  RealField g({{"t1", GridAxis{nt, 4.0, 0.0}}, {"x1", GridAxis::centered(nx, 12.0)}});
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b) {
      const double t = g.axis(0).grid.coord(a) - 2.0, x = g.axis(1).grid.coord(b);
      g[static_cast<std::size_t>(a * nx + b)] = std::exp(-t * t - 0.5 * x * x);
    }
  return g;
}

} // namespace

TEST(TestFunction, ValuesAndTails) {
  TestFunction g;
  const double z[] = {0.0}, one[] = {1.0};
  EXPECT_DOUBLE_EQ(g.value(z), 1.0);
  EXPECT_NEAR(g.value(one), std::exp(-0.5), 1e-15);
  EXPECT_LT(g.tail_fraction({GridAxis::centered(64, 20.0)}), 1e-12);
  EXPECT_GT(g.tail_fraction({GridAxis::centered(64, 4.0)}), 1e-3);
  TestFunction b;
  b.kind = TestFunction::Kind::bump;
  b.radius = 1.0;
  b.transition = 0.5;
  const double in[] = {0.9}, mid[] = {1.25}, out[] = {1.6};
  EXPECT_DOUBLE_EQ(b.value(in), 1.0);
  EXPECT_NEAR(b.value(mid), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(b.value(out), 0.0);
}

TEST(VelocityAverage, BumpCoveringSupportGivesDensity) {
  auto s = line(256, 32.0, 256, 0.25);
  const auto psi = make_gaussian(s.grid, s.params, {0.0}, {0.0}, 1.0);
  const auto w = wigner_of_pure(psi, s.v);
  TestFunction b;
  b.kind = TestFunction::Kind::bump;
  b.radius = 3.0;
  b.transition = 1.0;
  const auto rho = velocity_average({w}, {0.0}, b);
  for (std::size_t i = 0; i < psi.samples.size(); ++i) EXPECT_NEAR(rho[i], std::norm(psi.samples[i]), 1e-8);
}

TEST(VelocityAverage, OddFieldVanishes) {
  auto s = line(64, 16.0, 128, 0.5);
  RealField f({{"x1", s.grid.x[0]}, {"v1", s.v[0]}});
  for (std::size_t i = 0; i < f.size(); ++i) {
    const int k = static_cast<int>(i % 128);
    // Odd about v = 0 on the centred grid; the unpaired end point is zeroed.
    f[i] = k == 0 ? 0.0 : s.v[0].coord(k) * std::exp(-s.v[0].coord(k) * s.v[0].coord(k));
  }
  const auto rho = velocity_average({WignerField{s.params, f, 0.0}}, {0.0}, TestFunction{});
  for (double r : rho.values()) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(VelocityAverage, GaussianClosedFormAndLinearity) {
  const double hbar = 0.5, sigma = 1.0, a = 0.8;
  auto s = line(256, 32.0, 256, hbar);
  const auto w = wigner_of_pure(make_gaussian(s.grid, s.params, {0.0}, {0.0}, sigma), s.v);
  TestFunction t;
  t.width = a;
  const auto rho = velocity_average({w}, {0.0}, t);
  for (int i = 0; i < 256; ++i) {
    const double x = s.grid.x[0].coord(i);
    const double expect = std::exp(-x * x / (sigma * sigma)) / (pi * hbar) *
                          std::sqrt(pi / (sigma * sigma / (hbar * hbar) + 1.0 / (2 * a * a)));
    EXPECT_NEAR(rho[static_cast<std::size_t>(i)], expect, 1e-6);
  }
  const auto w2 = wigner_of_pure(make_gaussian(s.grid, s.params, {1.0}, {0.5}, sigma), s.v);
  WignerField combo = w;
  for (std::size_t i = 0; i < combo.values.size(); ++i) combo.values[i] = 0.3 * w.values[i] - 1.7 * w2.values[i];
  const auto r2 = velocity_average({w2}, {0.0}, t), rc = velocity_average({combo}, {0.0}, t);
  for (std::size_t i = 0; i < rc.size(); ++i) EXPECT_NEAR(rc[i], 0.3 * rho[i] - 1.7 * r2[i], 1e-12);
}

TEST(VelocityAverage, RejectsTruncatedTestFunction) {
  auto s = line(128, 32.0, 128, 0.5);
  const auto w = wigner_of_pure(make_gaussian(s.grid, s.params, {0.0}, {0.0}, 1.0), s.v);
  TestFunction t;
  t.width = 5.0;
  EXPECT_THROW(velocity_average({w}, {0.0}, t), precondition_error);
}

TEST(KernelAverager, MatchesVelocityGridQuadrature) {
  const double hbar = 1.0 / (8.0 * pi);
  auto s = line(512, 16.0, 1024, hbar);
  BasisRecipe b;
  b.center = {0.5};
  const auto r = make_admissible_mixture(s.grid, s.params, b);
  TestFunction t;
  t.width = 0.3;
  const auto stack = velocity_average({wigner_of_mixed(r, s.v)}, {0.0}, t);
  const KernelAverager k(s.grid.x_axes(), hbar, t);
  RealField direct(s.grid.x_axes());
  for (std::size_t j = 0; j < r.rank(); ++j) k.accumulate(direct, r.eigenfunctions[j].samples, r.weights[j]);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(direct[i], stack[i], 1e-9);
}

TEST(SobolevNorm, ParsevalAtZero) {
  const auto g = bump_field(32, 64);
  double l2 = 0.0;
  for (int a = 0; a < 32; ++a)
    for (int b = 0; b < 64; ++b)
      l2 += std::pow(std::pow(std::sin(pi * a / 32), 2) * g[static_cast<std::size_t>(a * 64 + b)], 2);
  l2 = std::sqrt(l2 * cell_measure(g));
  EXPECT_NEAR(sobolev_norm(g, 0.0).value, l2, 1e-10);
  EXPECT_THROW(sobolev_norm(g, -0.5), precondition_error);
}

TEST(SobolevNorm, SingleModeWithoutTaper) {
  RealField g({{"t1", GridAxis{16, 2.0, 0.0}}, {"x1", GridAxis::centered(32, 8.0)}});
  const double tau0 = two_pi * 3 / 2.0, xi0 = two_pi * 5 / 8.0;
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 32; ++b)
      g[static_cast<std::size_t>(a * 32 + b)] = std::cos(tau0 * g.axis(0).grid.coord(a) + xi0 * g.axis(1).grid.coord(b));
  const double l2 = std::sqrt(0.5 * 2.0 * 8.0);
  for (double s : {0.25, 0.5, 1.0})
    EXPECT_NEAR(sobolev_norm(g, s, Taper::none).value, std::pow(1 + tau0 * tau0 + xi0 * xi0, s / 2) * l2, 1e-8);
}

TEST(SobolevNorm, MatchesDirectSumAndIsMonotone) {
  const auto g = bump_field(16, 32);
  double prev = 0.0;
  for (double s : {0.0, 0.25, 0.5, 1.0}) {
    const auto e = sobolev_norm(g, s);
    EXPECT_NEAR(e.value / direct_sobolev(g, s, true), 1.0, 1e-8);
    EXPECT_GE(e.value, prev);
    prev = e.value;
  }
}

TEST(FitLogSlope, PowerLawAndFlat) {
  const std::vector<double> h{1.0, 0.5, 0.25, 0.125, 0.0625};
  std::vector<double> y;
  for (double x : h) y.push_back(3.0 * std::pow(x, -0.5));
  const auto f = fit_log_slope(h, y);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-12);
  const auto flat = fit_log_slope(h, std::vector<double>(5, 2.0));
  EXPECT_TRUE(flat.flat);
  EXPECT_EQ(flat.slope, 0.0);
}

TEST(Sweep, RejectsBadHbarLists) {
  EXPECT_THROW(validate_hbar_list({0.5, 0.25, 0.125, 0.0625}), precondition_error);
  EXPECT_THROW(validate_hbar_list({0.0625, 0.125, 0.25, 0.5, 1.0}), precondition_error);
  EXPECT_THROW(validate_hbar_list({1.0, 0.9, 0.8, 0.7, 0.6}), precondition_error);
  EXPECT_NO_THROW(validate_hbar_list({1.0, 0.5, 0.25, 0.125, 0.0625}));
}

TEST(Sweep, StationaryMixtureGivesFlatNormsAndNoViolation) {
  const auto grid = PhaseGrid::line(256, 8.0);
  BasisRecipe b;
  b.center = {0.0};
  Potential V;
  V.kind = Potential::Kind::harmonic;
  V.center = {0.0};
  const StateFamily fam = [&](double hbar) { return make_admissible_mixture(grid, {hbar, 1.0}, b); };
  std::vector<double> hbars;
  for (int k = 0; k <= 4; ++k) hbars.push_back(std::pow(2.0, -k) / two_pi);
  SweepConfig cfg;
  cfg.window = 0.25;
  cfg.n_times = 8;
  cfg.dt_max = 0.05;
  cfg.s_list = {0.5, 0.25};
  const auto rep = sweep_quantum(fam, V, hbars, cfg, &grid);
  ASSERT_TRUE(rep.valid) << rep.failure;
  ASSERT_EQ(rep.legs.size(), 5u);
  EXPECT_EQ(rep.bound_violations, 0);
  EXPECT_GE(rep.fit.slope, -0.65);
  EXPECT_EQ(rep.legs.back().rank, 16u);

  // Stationary up to splitting error: every recorded slice matches the first.
  const auto g = detail::space_time_average(fam(hbars[2]), V, cfg);
  const std::size_t nx = 256;
  const double tol = 1e-5 * max_abs(g);
  for (std::size_t k = 1; k < 8; ++k)
    for (std::size_t i = 0; i < nx; ++i) ASSERT_NEAR(g[k * nx + i], g[i], tol);
}

TEST(Sweep, FailingLegMarksReportInvalid) {
  const auto grid = PhaseGrid::line(64, 8.0);
  BasisRecipe b;
  b.center = {0.0};
  const StateFamily fam = [&](double hbar) { return make_admissible_mixture(grid, {hbar, 1.0}, b); };
  std::vector<double> hbars;
  for (int k = 0; k <= 5; ++k) hbars.push_back(std::pow(2.0, -k) / two_pi);
  SweepConfig cfg;
  cfg.n_times = 8;
  const auto rep = sweep_semiclassical(fam, Potential{}, hbars, cfg);
  EXPECT_FALSE(rep.valid);
  EXPECT_NE(rep.failure.find("max feasible N"), std::string::npos);
  EXPECT_LT(rep.legs.size(), hbars.size());
}

TEST(ClassicalRegularity, SmoothDataStableAtHalf) {
  ClassicalConfig c;
  const auto r = classical_regularity(c);
  EXPECT_TRUE(r.f_stable);
  EXPECT_TRUE(r.average_stable);
  EXPECT_GT(r.average.value, 0.0);
}

TEST(ClassicalRegularity, RelativisticShiftsStayBelowTime) {
  ClassicalConfig c;
  c.map = VelocityMap::relativistic;
  c.profile = ClassicalConfig::Profile::smoothed_jump;
  c.levels = 2;
  const auto r = classical_regularity(c);
  EXPECT_LE(r.max_shift, 2.0 * c.window);
  EXPECT_TRUE(r.average_stable);
}
