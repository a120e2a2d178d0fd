#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <variant>

#include <boost/math/special_functions/gamma.hpp>

#include "fvp/bench.hpp"
#include "fvp/error.hpp"
#include "fvp/indirect.hpp"

using doctest::Approx;
using namespace fvp;

namespace {

const OcProblem& oc(const char* id) { return std::get<OcProblem>(find_problem(id).payload); }
const BasicFvp& basic(const char* id) { return std::get<BasicFvp>(find_problem(id).payload); }

// Piecewise-linear interpolation of (t, x) at s.
double interp(const std::vector<double>& t, const std::vector<double>& x, double s) {
  if (s <= t.front()) return x.front();
  if (s >= t.back()) return x.back();
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  const std::size_t j = static_cast<std::size_t>(it - t.begin());
  const double w = (s - t[j - 1]) / (t[j] - t[j - 1]);
  return (1 - w) * x[j - 1] + w * x[j];
}

// Cubic Lagrange interpolation through the four nodes around s.
double lagrange4(const std::vector<double>& t, const std::vector<double>& x, double s) {
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  const long j = std::clamp<long>(static_cast<long>(it - t.begin()) - 2, 0, static_cast<long>(t.size()) - 4);
  double v = 0;
  for (long i = j; i < j + 4; ++i) {
    double w = 1;
    for (long k = j; k < j + 4; ++k)
      if (k != i) w *= (s - t[static_cast<std::size_t>(k)]) / (t[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(k)]);
    v += w * x[static_cast<std::size_t>(i)];
  }
  return v;
}

double max_dev(const IndirectSolution& a, const IndirectSolution& b) {
  const auto xa = a.x(), xb = b.x();
  double m = 0;
  for (std::size_t i = 0; i < a.traj.t.size(); ++i)
    m = std::max(m, std::fabs(xa[i] - lagrange4(b.traj.t, xb, a.traj.t[i])));
  return m;
}

}  // namespace

TEST_SUITE("indirect") {

TEST_CASE("transformed dynamics reproduce the moment expansion") {
  const double alpha = 0.5;
  const auto f = FunctionModel::from_expr("exp(t) + t^2", 0, 1);
  for (int N : {2, 4, 7}) {
    const auto tp = TransformedProblem::from_basic(basic("indirect-example-2"), N);
    for (double t : {0.1, 0.45, 0.9}) {
      std::vector<double> V;
      for (int p = 2; p <= N; ++p)
        V.push_back(integrate([&](double s) { return (1 - p) * std::pow(s, p - 2) * f(s); }, 0, t, 1e-14));
      const double got = tp.frac_term(t, f(t), f.deriv(1, t), V.data());
      const double want = frac_deriv_expansion(f, alpha, 0, 1, Side::left, Family::rl,
                                               ExpansionMethod::moment(1, N), {t})[0];
      CHECK(std::fabs(got - want) <= 1e-12 * (1 + std::fabs(want)));

      // Moment states integrate (1-p) k^{p-2} x.
      State y(static_cast<std::size_t>(2 * N), 0.0), dy(y.size());
      y[0] = f(t);
      for (int p = 2; p <= N; ++p) y[static_cast<std::size_t>(p - 1)] = V[static_cast<std::size_t>(p - 2)];
      tp.rhs(t, y, dy);
      for (int p = 2; p <= N; ++p)
        CHECK(dy[static_cast<std::size_t>(p - 1)] == Approx((1 - p) * std::pow(t, p - 2) * f(t)));
    }
  }
}

TEST_CASE("optimal control problems validate their expressions") {
  OcProblem p = oc("exm41");
  p.L = parse_expr("Dx^2");
  CHECK_THROWS_AS(p.validate(), UsageError);
  p = oc("exm41");
  p.m_frac = 0.0;
  p.m_int = 0.0;
  CHECK_THROWS_AS(p.validate(), UsageError);
  CHECK_THROWS_AS(solve_free_time(oc("exm41"), 2, 100), UsageError);
}

TEST_CASE("the control is stationary along exm41 solutions") {
  for (int N : {2, 3}) {
    const auto tp = TransformedProblem::from_oc(oc("exm41"), N);
    const auto s = solve_indirect_bvp(tp, 400);
    const double h = 1e-4;
    for (std::size_t i = 0; i < s.traj.t.size(); i += 7) {
      const double t = s.traj.t[i];
      const auto& y = s.traj.y[i];
      const double u = s.u[i];
      CHECK(std::fabs(tp.dH_du(t, y, u)) <= 1e-8);
      const double fd = (tp.hamiltonian(t, y, u + h) - tp.hamiltonian(t, y, u - h)) / (2 * h);
      CHECK(std::fabs(fd) <= 1e-8);
    }
    // Costates of the moment states vanish at the final time.
    const auto& yT = s.traj.y.back();
    for (int p = 2; p <= N; ++p) CHECK(std::fabs(yT[static_cast<std::size_t>(N + p - 1)]) <= 1e-8);
  }
}

TEST_CASE("exm41 error decreases from N = 2 to N = 3 for both routes") {
  const auto& p = oc("exm41");
  const auto exact = FunctionModel::from_expr(*find_problem("exm41").exact, 0, 1);
  auto err = [&](const IndirectSolution& s) { return error_metrics(s.traj.t, s.x(), exact).E_max; };
  const double t2 = err(solve_indirect_bvp(TransformedProblem::from_oc(p, 2), 400));
  const double t3 = err(solve_indirect_bvp(TransformedProblem::from_oc(p, 3), 400));
  CHECK(t3 < t2);
  const double f2 = err(solve_fractional_conditions(p, 2, 400));
  const double f3 = err(solve_fractional_conditions(p, 3, 400));
  CHECK(f3 < f2);
  CHECK(t2 < 2e-2);
  CHECK(f2 < 2e-2);
}

TEST_CASE("exm41 with order near one approaches the classical solution") {
  // At α = 1 the dynamics read 2ẋ = u + t² and the minimizer is t³/3.
  OcProblem p = oc("exm41");
  p.alpha = 0.999;
  p.L = parse_expr("(t*u - 2.999*x)^2");
  p.xT = 2 / boost::math::tgamma(3.999);
  const auto s = solve_indirect_bvp(TransformedProblem::from_oc(p, 3), 400);
  const auto x = s.x();
  double e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::fabs(x[i] - std::pow(s.traj.t[i], 3) / 3));
  CHECK(e < 1e-2);
}

TEST_CASE("Example 2: closed form, numerical BVP and the direct method agree") {
  const auto& p = basic("indirect-example-2");
  for (int N : {2, 4}) {
    const auto s = solve_indirect_bvp(TransformedProblem::from_basic(p, N), 400);
    const auto cf = closed_form_indirect_example2(0.5, N);
    const auto x = s.x();
    double e = 0;
    for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::fabs(x[i] - cf(s.traj.t[i])));
    CHECK(e <= 1e-6);
  }
  // Cross-route: direct Euler-like solution against the indirect one.
  const auto ind = solve_indirect_bvp(TransformedProblem::from_basic(p, 8), 400);
  const auto dir = solve_euler_like(p, 30);
  const auto nodes = dir.grid.nodes();
  double e = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    e = std::max(e, std::fabs(dir.x[i] - interp(ind.traj.t, ind.x(), nodes[i])));
  CHECK(e <= 0.02);
}

TEST_CASE("exm42 transversality and fixed-time consistency") {
  const auto& p = oc("exm42");
  const auto s = solve_free_time(p, 2, 400);
  const auto& yT = s.traj.y.back();
  CHECK(std::fabs(yT[0] - p.xT) <= 1e-8);
  CHECK(std::fabs(yT[3]) <= 1e-6);  // λ_2(T)
  CHECK(std::fabs(final_hamiltonian(p, 2, s)) <= 1e-6);
  CHECK(s.T > 0.0);

  OcProblem fixed = p;
  fixed.terminal = Terminal::fixed;
  fixed.T = s.T;
  const auto r = solve_indirect_bvp(TransformedProblem::from_oc(fixed, 2), 400);
  CHECK(r.T == Approx(s.T));
  CHECK(max_dev(r, s) <= 1e-6);
}

TEST_CASE("perturbing the final time breaks the Hamiltonian condition") {
  // L > 0 everywhere, so H(T) = 0 singles out the optimal final time.
  OcProblem p;
  p.alpha = 0.5;
  p.L = parse_expr("1 + u^2");
  p.f = parse_expr("u");
  p.xa = 0.0;
  p.xT = 1.0;
  p.T = 1.0;
  p.terminal = Terminal::free_time;
  const auto s = solve_free_time(p, 2, 400);
  CHECK(std::fabs(final_hamiltonian(p, 2, s)) <= 1e-6);

  OcProblem shifted = p;
  shifted.terminal = Terminal::fixed;
  shifted.T = s.T + 0.1;
  const auto r = solve_indirect_bvp(TransformedProblem::from_oc(shifted, 2), 400);
  CHECK(std::fabs(final_hamiltonian(shifted, 2, r)) > 1e-3);

  // The optimum is a minimum of the cost over T.
  OcProblem at = shifted;
  at.T = s.T;
  const double c0 = solve_indirect_bvp(TransformedProblem::from_oc(at, 2), 400).cost;
  CHECK(c0 < r.cost);
}

TEST_CASE("FDE solutions") {
  const auto ex = FunctionModel::from_expr("t^2", 0, 1);
  FdeSpec f = std::get<FdeSpec>(find_problem("fde-ex1").payload);
  f.method = ExpansionMethod::moment(1, 7);
  const auto m = solve_fde(f, 1000);
  f.method = ExpansionMethod::taylor(1);
  const auto i = solve_fde(f, 1000);
  const double em = error_metrics(m.t, m.component(0), ex).E_L2;
  const double ei = error_metrics(i.t, i.component(0), ex).E_L2;
  CHECK(em < ei);
  CHECK(em < 1e-2);
  f.method = ExpansionMethod::taylor(2);
  CHECK_THROWS_AS(solve_fde(f, 100), UsageError);
  f.family = Family::caputo;
  CHECK_THROWS_AS(solve_fde(f, 100), UsageError);

  FdeSpec h = std::get<FdeSpec>(find_problem("fde-hadamard").payload);
  const auto th = solve_fde(h, 1000);
  const auto lnt = FunctionModel::from_expr("ln(t)", h.a, h.b);
  CHECK(error_metrics(th.t, th.component(0), lnt).E_L2 < 0.1);
}

TEST_CASE("FIE solutions") {
  // I^α 1 = t^α / Γ(α+1) is reproduced exactly.
  FieSpec c;
  c.alpha = 0.5;
  c.rhs = parse_expr("t^0.5/gamma(1.5)");
  c.N = 2;
  const auto tc = solve_fie(c, 100);
  for (double v : tc.component(0)) CHECK(v == Approx(1.0).epsilon(1e-10));

  FieSpec f = std::get<FieSpec>(find_problem("fie-system").payload);
  const auto exact = FunctionModel::from_expr("t^3.5", 0, 1);
  f.N = 2;
  const auto t2 = solve_fie(f, 200);
  f.N = 3;
  const auto t3 = solve_fie(f, 200);
  CHECK(error_metrics(t3.t, t3.component(0), exact).E_L2 < error_metrics(t2.t, t2.component(0), exact).E_L2);
}

TEST_CASE("Euler-Lagrange residual separates the minimizer from perturbations") {
  const auto& p = basic("direct-example-1");
  const auto nodes = std::vector<double>{0.2, 0.4, 0.6, 0.8};
  const auto good = FunctionModel::from_expr("t^2", 0, 1);
  const auto bad = FunctionModel::from_expr("t^2 + 0.1*sin(3.14159*t)", 0, 1);
  double rg = 0, rb = 0;
  for (double v : el_residual(p, good, nodes)) rg = std::max(rg, std::fabs(v));
  for (double v : el_residual(p, bad, nodes)) rb = std::max(rb, std::fabs(v));
  CHECK(rg < 1e-6);
  CHECK(rb > 1e-2);
}

TEST_CASE("indefinite-integral problems") {
  for (const char* id : {"indint-example-bra", "indint-example-1"}) {
    const auto& q = std::get<IndIntProblem>(find_problem(id).payload);
    const auto exact = FunctionModel::from_expr(*find_problem(id).exact, 0, 1);
    for (int N : {2, 3}) {
      const auto s = solve_indint(q, N, 400);
      CHECK(s.x().back() == Approx(q.xb).epsilon(1e-8));
      CHECK(error_metrics(s.traj.t, s.x(), exact).E_max < 0.1);
    }
  }
}

}  // TEST_SUITE
