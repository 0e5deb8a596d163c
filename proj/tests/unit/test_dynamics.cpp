#include "qkin/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qkin;

namespace {

struct Stats {
  double mean = 0, var = 0;
};

Stats position_stats(const ComplexField& psi) {
  const auto& ax = psi.axis(0).grid;
  Stats s;
  double n = 0;
  for (int i = 0; i < ax.n_points; ++i) {
    const double p = std::norm(psi[static_cast<std::size_t>(i)]);
    n += p;
    s.mean += ax.coord(i) * p;
  }
  s.mean /= n;
  for (int i = 0; i < ax.n_points; ++i)
    s.var += std::pow(ax.coord(i) - s.mean, 2) * std::norm(psi[static_cast<std::size_t>(i)]);
  s.var /= n;
  return s;
}

// Closed-form Wigner function of a minimum-uncertainty Gaussian at (x0, p0).
double gaussian_w(double x, double v, double x0, double p0, double sigma, double hbar) {
  return std::exp(-std::pow(x - x0, 2) / (sigma * sigma)) *
         std::exp(-sigma * sigma * std::pow(v - p0, 2) / (hbar * hbar)) / (pi * hbar);
}

WignerField closed_form_field(const std::vector<Axis>& axes, const PhysicalParams& p,
                              const std::function<double(double, double)>& f) {
  WignerField w{p, RealField(axes), 0.0};
  const int nv = axes[1].grid.n_points;
  for (std::size_t i = 0; i < w.values.size(); ++i)
    w.values[i] = f(axes[0].grid.coord(static_cast<int>(i) / nv), axes[1].grid.coord(static_cast<int>(i) % nv));
  return w;
}

double max_diff(const RealField& a, const RealField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Potential harmonic(double omega, double mass) {
  Potential V;
  V.kind = Potential::Kind::harmonic;
  V.omega = omega;
  V.mass = mass;
  V.center = {0.0};
  return V;
}

} // namespace

TEST(Potential, ValuesAndGradients) {
  Potential V;
  V.kind = Potential::Kind::cosine;
  V.amplitude = 0.5;
  V.wavevector = {2.0};
  const double x[] = {0.3};
  EXPECT_NEAR(V.value(x), 0.5 * std::cos(0.6), 1e-15);
  EXPECT_NEAR(V.gradient(x, 0), -std::sin(0.6), 1e-15);
  Potential B;
  B.kind = Potential::Kind::barrier;
  B.amplitude = 2.0;
  B.center = {0.0};
  B.width = 1.0;
  B.smoothing = 0.05;
  const double mid[] = {0.0}, far[] = {5.0};
  EXPECT_NEAR(B.value(mid), 2.0, 1e-6);
  EXPECT_NEAR(B.value(far), 0.0, 1e-12);
  const double h = 1e-6, at[] = {0.47}, lo[] = {0.47 - h}, hi[] = {0.47 + h};
  EXPECT_NEAR(B.gradient(at, 0), (B.value(hi) - B.value(lo)) / (2 * h), 1e-4);
  Potential bad;
  bad.kind = Potential::Kind::harmonic;
  EXPECT_THROW(bad.validate(1), precondition_error);
}

TEST(SchrodingerEvolve, FreeGaussianSpreads) {
  const double hbar = 0.5, m = 1.0, sigma = 1.0, t_end = 2.0;
  const auto grid = PhaseGrid::line(512, 64.0);
  const auto psi = make_gaussian(grid, {hbar, m}, {0.0}, {0.0}, sigma);
  EvolutionConfig cfg{0.01, 200, 50, true};
  const auto rec = schrodinger_evolve(psi, Potential{}, cfg);
  ASSERT_EQ(rec.times.size(), 5u);
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const double t = rec.times[k];
    const double expect = 0.5 * sigma * sigma * (1 + std::pow(hbar * t / (m * sigma * sigma), 2));
    EXPECT_NEAR(position_stats(rec.states[k].eigenfunctions[0].samples).var, expect, 1e-10);
    EXPECT_NEAR(rec.mass[k], 1.0, 1e-12);
    EXPECT_NEAR(rec.energy[k], hbar * hbar / (4 * m * sigma * sigma), 1e-10);
  }
  EXPECT_DOUBLE_EQ(rec.times.back(), t_end);
}

TEST(SchrodingerEvolve, GalileanDrift) {
  const double hbar = 0.25, m = 2.0, p0 = 1.0;
  const auto grid = PhaseGrid::line(512, 64.0);
  const auto psi = make_gaussian(grid, {hbar, m}, {-5.0}, {p0}, 1.0);
  std::vector<double> centres;
  EvolutionConfig cfg{0.05, 200, 40};
  schrodinger_evolve(psi, Potential{}, cfg,
                     [&](std::size_t, double, const ComplexField& f) { centres.push_back(position_stats(f).mean); });
  ASSERT_EQ(centres.size(), 6u);
  for (std::size_t k = 0; k < centres.size(); ++k) EXPECT_NEAR(centres[k], -5.0 + p0 * (k * 2.0) / m, 1e-9);
}

TEST(SchrodingerEvolve, CoherentStateOscillates) {
  const double hbar = 0.5, m = 1.0, omega = 1.0, x0 = 2.0;
  const auto grid = PhaseGrid::line(256, 32.0);
  const auto psi = make_coherent(grid, {hbar, m}, {x0}, {0.0}, omega);
  EvolutionConfig cfg{0.002, 1500, 250};
  std::vector<std::pair<double, Stats>> seen;
  const auto rec = schrodinger_evolve(psi, harmonic(omega, m), cfg,
                                      [&](std::size_t, double t, const ComplexField& f) { seen.emplace_back(t, position_stats(f)); });
  for (const auto& [t, s] : seen) {
    EXPECT_NEAR(s.mean, x0 * std::cos(omega * t), 1e-5);
    EXPECT_NEAR(s.var, hbar / (2 * m * omega), 1e-5);
  }
  for (double e : rec.energy) EXPECT_NEAR(e, rec.energy.front(), 1e-5);
}

TEST(SchrodingerEvolve, StrangIsSecondOrder) {
  const double hbar = 0.5;
  const auto grid = PhaseGrid::line(256, 32.0);
  const auto psi = make_gaussian(grid, {hbar, 1.0}, {0.5}, {0.3}, 1.0);
  Potential V;
  V.kind = Potential::Kind::cosine;
  V.amplitude = 1.0;
  V.wavevector = {0.7};
  auto final_state = [&](double dt) {
    const int n = static_cast<int>(std::lround(0.8 / dt));
    EvolutionConfig cfg{dt, n, n, true};
    return schrodinger_evolve(psi, V, cfg).states.back().eigenfunctions[0].samples;
  };
  const auto ref = final_state(1e-3), a = final_state(0.016), b = final_state(0.008);
  auto err = [&](const ComplexField& f) {
    double s = 0;
    for (std::size_t i = 0; i < f.size(); ++i) s += std::norm(f[i] - ref[i]);
    return std::sqrt(s);
  };
  const double order = std::log2(err(a) / err(b));
  EXPECT_NEAR(order, 2.0, 0.1);
}

TEST(SchrodingerEvolve, RejectsUnresolvedKineticPhase) {
  const auto grid = PhaseGrid::line(512, 16.0);
  const auto psi = make_gaussian(grid, {1.0, 1.0}, {0.0}, {0.0}, 1.0);
  EvolutionConfig cfg{0.1, 10};
  EXPECT_THROW(schrodinger_evolve(psi, Potential{}, cfg), precondition_error);
  cfg.dt = -1.0;
  EXPECT_THROW(schrodinger_evolve(psi, Potential{}, cfg), precondition_error);
}

TEST(VonNeumannEvolve, RankOneMatchesPureAndThreadsAreDeterministic) {
  const double hbar = 1.0 / (16.0 * pi);
  const auto grid = PhaseGrid::line(512, 24.0);
  const PhysicalParams p{hbar, 1.0};
  Potential V = harmonic(1.0, 1.0);
  EvolutionConfig cfg{0.01, 50, 25, true};

  const auto psi = make_gaussian(grid, p, {0.5}, {0.0}, 0.5);
  const auto a = schrodinger_evolve(psi, V, cfg);
  const auto b = von_neumann_evolve(pure_state(psi), V, cfg);
  for (std::size_t i = 0; i < a.moments.back().rho.size(); ++i)
    EXPECT_DOUBLE_EQ(a.moments.back().rho[i], b.moments.back().rho[i]);

  BasisRecipe basis;
  basis.center = {1.0};
  const auto r = make_admissible_mixture(grid, p, basis);
  const auto serial = von_neumann_evolve(r, V, cfg, 1);
  const auto threaded = von_neumann_evolve(r, V, cfg, 4);
  for (std::size_t i = 0; i < serial.moments.back().rho.size(); ++i) {
    ASSERT_EQ(serial.moments.back().rho[i], threaded.moments.back().rho[i]);
    ASSERT_EQ(serial.moments.back().J[0][i], threaded.moments.back().J[0][i]);
  }
  for (double m : serial.mass) EXPECT_NEAR(m, 1.0, 1e-10);
  EXPECT_NEAR(purity(serial.states.back()), purity(r), 1e-15);
}

TEST(WignerEvolve, FreeTransportIsExactShear) {
  const double hbar = 0.5, m = 1.0, sigma = 1.0, t = 1.5;
  const auto grid = PhaseGrid::line(256, 48.0);
  const std::vector<GridAxis> v = {velocity_axis_for(grid.x[0], hbar, 256)};
  const auto psi = make_gaussian(grid, {hbar, m}, {-2.0}, {0.5}, sigma);
  const auto w0 = wigner_of_pure(psi, v);
  EvolutionConfig cfg{0.1, 15, 15};
  const auto rec = wigner_evolve(w0, Potential{}, cfg);
  const auto expect = closed_form_field(w0.values.axes(), w0.params, [&](double x, double vv) {
    return gaussian_w(x - vv * t / m, vv, -2.0, 0.5, sigma, hbar);
  });
  EXPECT_LT(max_diff(rec.fields.back().values, expect.values), 1e-8);
  EXPECT_NEAR(rec.mass.back(), 1.0, 1e-10);
}

TEST(WignerEvolve, HarmonicFlowRotatesPhaseSpace) {
  const double hbar = 0.5, m = 1.0, omega = 1.0, x0 = 2.0, t = 1.0;
  const auto grid = PhaseGrid::line(256, 32.0);
  const std::vector<GridAxis> v = {velocity_axis_for(grid.x[0], hbar, 256)};
  const double sigma = std::sqrt(hbar / (m * omega));
  const auto w0 = wigner_of_pure(make_coherent(grid, {hbar, m}, {x0}, {0.0}, omega), v);
  EvolutionConfig cfg{1e-3, 1000, 1000};
  const auto rec = wigner_evolve(w0, harmonic(omega, m), cfg);
  const double c = std::cos(omega * t), s = std::sin(omega * t);
  const auto expect = closed_form_field(w0.values.axes(), w0.params, [&](double x, double vv) {
    return gaussian_w(x * c - vv * s / (m * omega), vv * c + m * omega * x * s, x0, 0.0, sigma, hbar);
  });
  EXPECT_LT(max_diff(rec.fields.back().values, expect.values) / max_abs(expect.values), 1e-5);
  EXPECT_LT(rec.max_imag_dropped, 1e-10);
}

TEST(WignerEvolve, AgreesWithSchrodingerInCosinePotential) {
  const double hbar = 1.0, m = 1.0;
  const auto grid = PhaseGrid::line(128, 32.0);
  const std::vector<GridAxis> v = {velocity_axis_for(grid.x[0], hbar, 128)};
  const auto psi = make_gaussian(grid, {hbar, m}, {0.0}, {0.0}, 1.0);
  Potential V;
  V.kind = Potential::Kind::cosine;
  V.amplitude = 1.0;
  V.wavevector = {two_pi / 32.0 * 2.0};
  EvolutionConfig cfg{2e-3, 250, 250, true};
  const auto srec = schrodinger_evolve(psi, V, cfg);
  const auto wref = wigner_of_pure(srec.states.back().eigenfunctions[0], v);
  const auto wrec = wigner_evolve(wigner_of_pure(psi, v), V, cfg);
  EXPECT_LT(max_diff(wrec.fields.back().values, wref.values) / max_abs(wref.values), 1e-4);
}

TEST(Theta, ConstantAndLinearPotentials) {
  const double hbar = 0.5;
  const auto grid = PhaseGrid::line(128, 24.0);
  const std::vector<GridAxis> v = {velocity_axis_for(grid.x[0], hbar, 128)};
  const auto w = wigner_of_pure(make_gaussian(grid, {hbar, 1.0}, {0.0}, {0.25}, 1.0), v);
  Potential c;
  c.kind = Potential::Kind::linear;
  c.slope = {0.0};
  EXPECT_LT(max_abs(apply_theta(w, c).values), 1e-14);
  Potential lin;
  lin.kind = Potential::Kind::linear;
  lin.slope = {0.8};
  const auto th = apply_theta(w, lin);
  const auto dv = derivative(w.values, "v1");
  for (std::size_t i = 0; i < dv.size(); ++i) EXPECT_NEAR(th.values[i], 0.8 * dv[i], 1e-9);
}

TEST(Theta, QuadraticMatchesVlasovAndBoundHolds) {
  const double hbar = 0.5;
  const auto grid = PhaseGrid::line(128, 32.0);
  const std::vector<GridAxis> v = {velocity_axis_for(grid.x[0], hbar, 128)};
  const auto w = wigner_of_pure(make_cat(grid, {hbar, 1.0}, {0.0}, 4.0, 1.0), v);
  const Potential V = harmonic(0.7, 1.0);
  const auto th = apply_theta(w, V);
  const auto cl = vlasov_force_term(w, V);
  EXPECT_LT(max_diff(th.values, cl) / max_abs(cl), 1e-9);

  Potential cosv;
  cosv.kind = Potential::Kind::cosine;
  cosv.amplitude = 1.3;
  cosv.wavevector = {1.0};
  const auto tc = apply_theta(w, cosv);
  EXPECT_LE(l2_norm(tc.values), 2.0 / hbar * cosv.linf(grid) * l2_norm(w.values) * (1 + 1e-12));
}

TEST(FreeTransportClassical, ShiftsEachVelocitySlice) {
  const GridAxis x = GridAxis::centered(256, 40.0), v = GridAxis::centered(32, 4.0);
  RealField f0({{"x1", x}, {"v1", v}});
  for (std::size_t i = 0; i < f0.size(); ++i) {
    const double xx = x.coord(static_cast<int>(i / 32));
    f0[i] = std::exp(-xx * xx);
  }
  const double t = 3.0;
  const auto id = free_transport_classical(f0, VelocityMap::identity, t);
  const auto rel = free_transport_classical(f0, VelocityMap::relativistic, t);
  double worst = 0;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    const double xx = x.coord(static_cast<int>(i / 32)), vv = v.coord(static_cast<int>(i % 32));
    worst = std::max(worst, std::abs(id.f[i] - std::exp(-std::pow(xx - vv * t, 2))));
    const double u = vv / std::sqrt(1 + vv * vv);
    worst = std::max(worst, std::abs(rel.f[i] - std::exp(-std::pow(xx - u * t, 2))));
  }
  EXPECT_LT(worst, 1e-10);
  EXPECT_NEAR(id.max_shift, 2.0 * t, 1e-12);
  EXPECT_LT(rel.max_shift, t);
}
