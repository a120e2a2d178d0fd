#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "fvp/approx.hpp"
#include "fvp/error.hpp"
#include "fvp/numerics.hpp"

using doctest::Approx;
using namespace fvp;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::vector<double> interior(double a, double b, int n) {
  auto v = uniform_nodes(a, b, n);
  v.erase(v.begin());
  v.pop_back();
  return v;
}

// D^α t^ν on base 0.
double power_deriv(double alpha, double nu, double t) {
  return boost::math::tgamma(nu + 1) / boost::math::tgamma(nu + 1 - alpha) * std::pow(t, nu - alpha);
}

}  // namespace

TEST_SUITE("approx") {

TEST_CASE("moment coefficients: layout and argument checks") {
  const auto c = moment_coeffs(0.5, 1, 7, CoeffKind::derivative);
  CHECK(c.A.size() == 2);
  CHECK(c.B.size() == 6);
  CHECK(c.B_named() == c.A[1]);
  CHECK(c.C_named(2) == c.B[0]);
  CHECK_THROWS_AS(moment_coeffs(0.5, 1, 1, CoeffKind::derivative), UsageError);
  CHECK_THROWS_AS(moment_coeffs(0.0, 1, 4, CoeffKind::derivative), UsageError);
}

TEST_CASE("B(α,N) matches its closed-form partial sum and decays to zero") {
  // The sum defining B is a partial sum of the binomial series of (1-z)^{1-α}
  // at z = 1, so B(α,N) = Γ(N+α) / (Γ(α) Γ(2-α) N!).
  for (double alpha : {0.3, 0.5, 0.7, 0.99}) {
    double prev = 1e9;
    for (int N : {2, 4, 30, 170, 400}) {
      const double b = moment_coeffs(alpha, 1, N, CoeffKind::derivative).B_named();
      const double want = boost::math::tgamma_ratio(N + alpha, N + 1.0) /
                          (boost::math::tgamma(alpha) * boost::math::tgamma(2 - alpha));
      CHECK(b == Approx(want).epsilon(1e-11));
      CHECK(b < prev);
      CHECK(b > 0.0);
      prev = b;
    }
  }
}

TEST_CASE("Taylor expansion is exact once the polynomial is exhausted") {
  const auto f = FunctionModel::from_expr("t^4", 0, 1);
  const auto grid = interior(0, 1, 50);
  std::vector<double> exact;
  for (double t : grid) exact.push_back(power_deriv(0.5, 4, t));
  const auto d3 = frac_deriv_expansion(f, 0.5, 0, 1, Side::left, Family::rl, ExpansionMethod::taylor(3), grid);
  const auto d4 = frac_deriv_expansion(f, 0.5, 0, 1, Side::left, Family::rl, ExpansionMethod::taylor(4), grid);
  CHECK(max_abs_diff(d4, exact) < 1e-12);
  CHECK(max_abs_diff(d3, exact) > 1e-3);
}

TEST_CASE("moment expansion error decreases with N") {
  const auto f = FunctionModel::from_expr("t^4", 0, 1);
  const auto grid = interior(0, 1, 50);
  std::vector<double> exact;
  for (double t : grid) exact.push_back(power_deriv(0.5, 4, t));
  double prev = 1e9;
  for (int N : {4, 7, 15, 30}) {
    const auto d = frac_deriv_expansion(f, 0.5, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, N), grid);
    const double e = max_abs_diff(d, exact);
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("linearity of the expansions") {
  const double a = 0, b = 1;
  const auto f = FunctionModel::from_expr("t^2", a, b);
  const auto g = FunctionModel::from_expr("exp(t)", a, b);
  const auto h = FunctionModel::from_expr("2*t^2 + 3*exp(t)", a, b);
  const auto grid = interior(a, b, 40);
  for (Side side : {Side::left, Side::right})
    for (auto m : {ExpansionMethod::moment(1, 6), ExpansionMethod::moment(2, 5), ExpansionMethod::taylor(5)}) {
      const auto df = frac_deriv_expansion(f, 0.4, a, b, side, Family::rl, m, grid);
      const auto dg = frac_deriv_expansion(g, 0.4, a, b, side, Family::rl, m, grid);
      const auto dh = frac_deriv_expansion(h, 0.4, a, b, side, Family::rl, m, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) CHECK(std::fabs(dh[i] - 2 * df[i] - 3 * dg[i]) < 1e-10);
      if (m.kind == ExpansionMethod::Kind::moment) {
        const auto If = frac_integral_expansion(f, 0.4, a, b, side, Family::rl, m, grid);
        const auto Ig = frac_integral_expansion(g, 0.4, a, b, side, Family::rl, m, grid);
        const auto Ih = frac_integral_expansion(h, 0.4, a, b, side, Family::rl, m, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) CHECK(std::fabs(Ih[i] - 2 * If[i] - 3 * Ig[i]) < 1e-10);
      }
    }
}

TEST_CASE("right operators mirror left ones") {
  // tD_1^α f(t) = 0D_s^α f(1-s) at s = 1 - t.
  const auto f = FunctionModel::from_expr("exp(t) + t^3", 0, 1);
  const auto g = FunctionModel::from_expr("exp(1-t) + (1-t)^3", 0, 1);
  const auto grid = interior(0, 1, 20);
  std::vector<double> mirrored;
  for (double t : grid) mirrored.push_back(1 - t);
  for (auto m : {ExpansionMethod::moment(1, 8), ExpansionMethod::taylor(6)}) {
    const auto right = frac_deriv_expansion(f, 0.6, 0, 1, Side::right, Family::rl, m, grid);
    const auto left = frac_deriv_expansion(g, 0.6, 0, 1, Side::left, Family::rl, m, mirrored);
    CHECK(max_abs_diff(right, left) < 1e-10);
  }
  const auto Ir = frac_integral_expansion(f, 0.6, 0, 1, Side::right, Family::rl, ExpansionMethod::moment(1, 8), grid);
  const auto Il = frac_integral_expansion(g, 0.6, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, 8), mirrored);
  CHECK(max_abs_diff(Ir, Il) < 1e-10);

  // Grid schemes: right GL on samples equals left GL on the reversed samples.
  const auto nodes = uniform_nodes(0, 1, 64);
  const auto s = TabularFunction::sample(f, nodes);
  TabularFunction rev = s;
  std::reverse(rev.x.begin(), rev.x.end());
  const auto R = frac_deriv_grid(s, 0.6, GlScheme::gl_right);
  const auto L = frac_deriv_grid(rev, 0.6, GlScheme::gl_left);
  for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(R.x[i] == Approx(L.x[nodes.size() - 1 - i]).epsilon(1e-12));
}

TEST_CASE("Caputo expansion differs from RL by the x(a) term") {
  const auto f = FunctionModel::from_expr("1 + t^2", 0, 1);
  const auto grid = interior(0, 1, 10);
  const auto rl = frac_deriv_expansion(f, 0.5, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, 6), grid);
  const auto cap = frac_deriv_expansion(f, 0.5, 0, 1, Side::left, Family::caputo, ExpansionMethod::moment(1, 6), grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(rl[i] - cap[i] == Approx(std::pow(grid[i], -0.5) / boost::math::tgamma(0.5)).epsilon(1e-10));
  CHECK_THROWS_AS(frac_integral_expansion(f, 0.5, 0, 1, Side::left, Family::caputo, ExpansionMethod::moment(1, 6), grid),
                  UsageError);
}

TEST_CASE("GL convergence is first order") {
  const double alpha = 0.5;
  auto err = [&](int n) {
    const auto nodes = uniform_nodes(0, 1, n);
    const auto s = TabularFunction::sample([](double t) { return t * t; }, nodes);
    const auto d = frac_deriv_grid(s, alpha, GlScheme::gl_left);
    return std::fabs(d.x.back() - power_deriv(alpha, 2, 1.0));
  };
  const double e1 = err(100), e2 = err(200), e3 = err(400);
  const double slope1 = std::log2(e1 / e2), slope2 = std::log2(e2 / e3);
  CHECK(slope1 >= 0.8);
  CHECK(slope1 <= 1.2);
  CHECK(slope2 >= 0.8);
  CHECK(slope2 <= 1.2);
}

TEST_CASE("shifted GL and Diethelm beat plain GL on smooth data") {
  const double alpha = 0.5;
  const auto nodes = uniform_nodes(0, 1, 100);
  const auto s = TabularFunction::sample([](double t) { return t * t; }, nodes);
  const auto gl = frac_deriv_grid(s, alpha, GlScheme::gl_left);
  const auto sh = frac_deriv_grid(s, alpha, GlScheme::gl_shifted_left);
  const auto di = frac_deriv_grid(s, alpha, GlScheme::diethelm_caputo);
  const double ex = power_deriv(alpha, 2, 1.0);
  CHECK(std::fabs(di.x.back() - ex) < std::fabs(gl.x.back() - ex));
  CHECK(std::fabs(di.x.back() - ex) < 1e-3);
  CHECK(std::fabs(sh.x[50] - power_deriv(alpha, 2, 0.5)) < 2e-2);
  // Diethelm order 2 - α.
  auto derr = [&](int n) {
    const auto nd = uniform_nodes(0, 1, n);
    const auto d = frac_deriv_grid(TabularFunction::sample([](double t) { return t * t; }, nd), alpha,
                                   GlScheme::diethelm_caputo);
    return std::fabs(d.x.back() - ex);
  };
  const double slope = std::log2(derr(100) / derr(200));
  CHECK(slope == Approx(2 - alpha).epsilon(0.1));
}

TEST_CASE("fractional derivative inverts the fractional integral") {
  const double alpha = 0.5;
  const int n = 400;
  const auto nodes = uniform_nodes(0, 1, n);
  const auto f = FunctionModel::from_expr("t^2", 0, 1);
  std::vector<double> inner(nodes.begin() + 1, nodes.end());
  auto I = frac_integral_expansion(f, alpha, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, 10), inner);
  I.insert(I.begin(), 0.0);
  const auto d = frac_deriv_grid({nodes, I}, alpha, GlScheme::gl_left);
  std::vector<double> sq(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) sq[i] = std::pow(d.x[i] - nodes[i] * nodes[i], 2);
  CHECK(std::sqrt(trapz(nodes, sq)) <= 1e-2);
}

TEST_CASE("truncation bounds dominate measured errors") {
  const double alpha = 0.5;
  for (const char* src : {"t^4", "exp(t)", "t^2 + sin(t)"}) {
    const auto f = FunctionModel::from_expr(src, 0, 1);
    const auto ref = [&](double t) {
      // Quadrature oracle: D^α f = f(0) t^{-α}/Γ(1-α) + I^{1-α} f', with τ = t - s².
      const double q = integrate([&](double s) { return 2 * f.deriv(1, t - s * s); }, 0, std::sqrt(t), 1e-13);
      return (f(0) * std::pow(t, -alpha) + q) / boost::math::tgamma(1 - alpha);
    };
    const auto refI = [&](double t) {
      const double q = integrate([&](double s) { return 2 * f(t - s * s); }, 0, std::sqrt(t), 1e-13);
      return q / boost::math::tgamma(alpha);
    };
    for (double t : {0.25, 0.5, 1.0}) {
      // Polynomials make some bounds exactly zero; leave room for rounding.
      const double ulps = 1e-14 * (1 + std::fabs(ref(t)));
      for (int N : {3, 5, 8}) {
        const auto dm = frac_deriv_expansion(f, alpha, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, N), {t});
        const auto bm = truncation_bound(alpha, 1, N, f, t, 0, BoundKind::deriv_moment);
        CHECK(std::fabs(dm[0] - ref(t)) <= bm.value + ulps);
        const auto dt = frac_deriv_expansion(f, alpha, 0, 1, Side::left, Family::rl, ExpansionMethod::taylor(N), {t});
        const auto bt = truncation_bound(alpha, 0, N, f, t, 0, BoundKind::deriv_taylor);
        CHECK(std::fabs(dt[0] - ref(t)) <= bt.value + ulps);
        const auto im = frac_integral_expansion(f, alpha, 0, 1, Side::left, Family::rl, ExpansionMethod::moment(1, N), {t});
        const auto bi = truncation_bound(alpha, 1, N, f, t, 0, BoundKind::integral_moment);
        CHECK(std::fabs(im[0] - refI(t)) <= bi.value + ulps);
      }
    }
  }
}

TEST_CASE("Hadamard moment expansion: exact on ln t, convergent on t^2") {
  const double e1 = std::exp(1.0);
  // δ ln t = 1 and δ² ln t = 0, so every remainder term vanishes.
  const auto lg = FunctionModel::from_expr("ln(t)", 1, e1);
  for (int N : {2, 4, 8, 16}) {
    const auto d = frac_deriv_expansion(lg, 0.5, 1, e1, Side::left, Family::hadamard, ExpansionMethod::moment(1, N), {2.0});
    CHECK(d[0] == Approx(std::pow(std::log(2.0), 0.5) / boost::math::tgamma(1.5)).epsilon(1e-13));
  }
  // Quadrature oracle at α = 1/2: D x = (x(1) ln(t)^{-1/2} + ∫ ln(t/τ)^{-1/2} δx(τ) dτ/τ) / Γ(1/2),
  // with τ = t e^{-s²}.
  const auto f = FunctionModel::from_expr("t^2", 1, e1);
  const double t = 2.0;
  const double q = integrate([&](double s) {
    const double tau = t * std::exp(-s * s);
    return 2 * tau * f.deriv(1, tau);
  }, 0, std::sqrt(std::log(t)), 1e-13);
  const double exact = (f(1) / std::sqrt(std::log(t)) + q) / boost::math::tgamma(0.5);
  double prev = 1e9;
  for (int N : {2, 4, 8, 16}) {
    const auto d = frac_deriv_expansion(f, 0.5, 1, e1, Side::left, Family::hadamard, ExpansionMethod::moment(1, N), {t});
    const double e = std::fabs(d[0] - exact);
    CHECK(e < prev);
    prev = e;
  }
  CHECK(prev < 1e-2 * exact);
}

TEST_CASE("Euler operator powers") {
  const auto f = FunctionModel::from_expr("t^3", 1, 2);
  CHECK(hadamard_power(f, 0, 1.5) == Approx(std::pow(1.5, 3)));
  CHECK(hadamard_power(f, 1, 1.5) == Approx(3 * std::pow(1.5, 3)));
  CHECK(hadamard_power(f, 2, 1.5) == Approx(9 * std::pow(1.5, 3)));
  CHECK(hadamard_power(f, 3, 1.5) == Approx(27 * std::pow(1.5, 3)));
}

TEST_CASE("moment states match direct quadrature") {
  const auto f = FunctionModel::from_expr("exp(t)", 0, 1);
  const std::vector<double> grid = {0.2, 0.5, 0.9};
  const auto V = moment_states(f, 0, 1, 1, 5, Side::left, false, grid);
  for (std::size_t j = 0; j < grid.size(); ++j)
    for (int p = 2; p <= 5; ++p) {
      const double q = integrate([&](double tau) { return (p - 1) * std::pow(tau, p - 2) * std::exp(tau); }, 0, grid[j]);
      CHECK(V[j][p - 2] == Approx(q).epsilon(1e-11));
    }
  const auto W = moment_states(f, 0, 1, 1, 4, Side::right, false, grid);
  for (std::size_t j = 0; j < grid.size(); ++j)
    for (int p = 2; p <= 4; ++p) {
      const double q = integrate([&](double tau) { return (p - 1) * std::pow(1 - tau, p - 2) * std::exp(tau); }, grid[j], 1);
      CHECK(W[j][p - 2] == Approx(q).epsilon(1e-11));
    }
}

TEST_CASE("tabular derivative raises N until successive results agree") {
  const auto nodes = uniform_nodes(0, 1, 200);
  const auto data = TabularFunction::sample([](double t) { return t * t; }, nodes);
  const auto r = tabular_frac_deriv(data, 0.5, 1e-3, 3, 60);
  CHECK(r.converged);
  CHECK(r.N > 3);
  CHECK(r.d.size() == nodes.size() - 1);
  double e = 0;
  for (std::size_t i = 0; i < r.d.size(); ++i) e = std::max(e, std::fabs(r.d.x[i] - power_deriv(0.5, 2, r.d.t[i])));
  CHECK(e < 5e-2);
  const auto stuck = tabular_frac_deriv(data, 0.5, 1e-14, 3, 5);
  CHECK_FALSE(stuck.converged);
  CHECK(stuck.N == 5);
  CHECK(tabular_frac_deriv(data, 0.5, HUGE_VAL, 3, 60).N == 3);

  // 101 samples on [0,1], error measured on [0.1, 1].
  const auto coarse = uniform_nodes(0, 1, 100);
  const auto r2 = tabular_frac_deriv(TabularFunction::sample([](double t) { return t * t; }, coarse), 0.5, 1e-3, 3, 200);
  CHECK(r2.converged);
  double e2 = 0;
  for (std::size_t i = 0; i < r2.d.size(); ++i)
    if (r2.d.t[i] >= 0.1) e2 = std::max(e2, std::fabs(r2.d.x[i] - power_deriv(0.5, 2, r2.d.t[i])));
  CHECK(e2 <= 0.05);
  const auto rc = tabular_frac_deriv(TabularFunction::sample([](double) { return 3.0; }, coarse), 0.5, 1e-3, 3, 200);
  for (std::size_t i = 0; i < rc.d.size(); ++i)
    if (rc.d.t[i] >= 0.1) {
      const double want = 3 * std::pow(rc.d.t[i], -0.5) / boost::math::tgamma(0.5);
      CHECK(std::fabs(rc.d.x[i] - want) <= 0.05 * want);
    }
}

}  // TEST_SUITE
