#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "fvp/error.hpp"
#include "fvp/expr.hpp"
#include "fvp/funcmodel.hpp"
#include "fvp/numerics.hpp"

using doctest::Approx;
using fvp::Expr;
using fvp::parse_expr;

TEST_SUITE("funcmodel") {

TEST_CASE("parser precedence and associativity") {
  CHECK(parse_expr("2*t^2+1").eval_t(3.0) == Approx(19.0));
  CHECK(parse_expr("-t^2").eval_t(3.0) == Approx(-9.0));
  CHECK(parse_expr("2^3^2").eval_t(0.0) == Approx(512.0));
  CHECK(parse_expr("8/4/2").eval_t(0.0) == Approx(1.0));
  CHECK(parse_expr("1 - 2 - 3").eval_t(0.0) == Approx(-4.0));
  CHECK(parse_expr("2^-1").eval_t(0.0) == Approx(0.5));
  CHECK(parse_expr("1.5e2 + .5").eval_t(0.0) == Approx(150.5));
  CHECK(parse_expr("gamma(4.5)").eval_t(0.0) == Approx(boost::math::tgamma(4.5)));
  CHECK(parse_expr("sqrt(pi)").eval_t(0.0) == Approx(std::sqrt(std::numbers::pi)));
}

TEST_CASE("variables read from the environment") {
  const Expr e = parse_expr("t + 2*x + 3*xp + 4*Dx + 5*u + 6*lambda");
  fvp::VarEnv env{1, 1, 1, 1, 1, 1};
  CHECK(e.eval(env) == Approx(21.0));
  CHECK(e.depends_on(fvp::Var::Dx));
  CHECK_FALSE(parse_expr("t^2").depends_on(fvp::Var::x));
  CHECK(parse_expr("gamma(2)*3").is_constant());
}

TEST_CASE("syntax errors carry the byte offset") {
  try {
    parse_expr("t + * 2");
    FAIL("no exception");
  } catch (const fvp::SyntaxError& e) {
    CHECK(e.offset == 4);
  }
  CHECK_THROWS_AS(parse_expr("foo(t)"), fvp::SyntaxError);
  CHECK_THROWS_AS(parse_expr("(t + 1"), fvp::SyntaxError);
  CHECK_THROWS_AS(parse_expr("t 1"), fvp::SyntaxError);
  CHECK_THROWS_AS(parse_expr(""), fvp::SyntaxError);
  CHECK_THROWS_AS(parse_expr("exp t"), fvp::SyntaxError);
}

TEST_CASE("evaluation errors") {
  CHECK_THROWS_AS(parse_expr("ln(t)").eval_t(-1.0), fvp::EvalError);
  CHECK_THROWS_AS(parse_expr("1/t").eval_t(0.0), fvp::EvalError);
}

TEST_CASE("printer round-trips") {
  for (const char* s : {"2*t^2+1", "-t^2", "(1-t)^1.5/(2*gamma(2.5))", "exp(-t)*sin(3*t)", "2^3^2",
                        "(2^3)^2", "t-(1-t)", "-(t+1)*x", "Dx - xp^2", "t/(x*u)", "ln(t)^0.5"}) {
    const Expr e = parse_expr(s);
    CHECK(parse_expr(fvp::to_string(e)) == e);
    const Expr back = parse_expr(fvp::to_string(e));
    for (double t : {0.7, 1.7}) {
      const fvp::VarEnv env{t, 0.4, -0.3, 0.8, 1.2, 0.5};
      double v = 0;
      try {
        v = e.eval(env);
      } catch (const fvp::EvalError&) {
        CHECK_THROWS_AS(back.eval(env), fvp::EvalError);
        continue;
      }
      CHECK(back.eval(env) == Approx(v));
    }
  }
}

TEST_CASE("symbolic derivative matches central differences") {
  for (const char* s : {"sin(t^2)", "exp(-2*t)*t^3", "t^1.5/gamma(2.5)", "ln(1+t)/sqrt(t)", "cos(t)^2 - t",
                        "2^t"}) {
    const Expr e = parse_expr(s);
    const Expr d = fvp::diff_expr(e, fvp::Var::t);
    for (double t : {0.3, 0.9, 1.7}) {
      const double h = 1e-5;
      const double fd = (e.eval_t(t + h) - e.eval_t(t - h)) / (2 * h);
      CHECK(d.eval_t(t) == Approx(fd).epsilon(1e-7));
    }
  }
  // Partials in non-time variables.
  const Expr L = parse_expr("(Dx - xp^2)*x");
  fvp::VarEnv env{0.5, 2.0, 3.0, 4.0, 0, 0};
  CHECK(fvp::diff_expr(L, fvp::Var::xp).eval(env) == Approx(-2 * 3.0 * 2.0));
  CHECK(fvp::diff_expr(L, fvp::Var::Dx).eval(env) == Approx(2.0));
  CHECK(fvp::diff_expr(L, fvp::Var::x).eval(env) == Approx(4.0 - 9.0));
}

TEST_CASE("FunctionModel derivatives and limits") {
  const auto f = fvp::FunctionModel::from_expr("t^4", 0, 1, 5);
  CHECK(f(0.5) == Approx(0.0625));
  CHECK(f.deriv(1, 0.5) == Approx(0.5));
  CHECK(f.deriv(4, 0.3) == Approx(24.0));
  CHECK(f.deriv(5, 0.3) == Approx(0.0));
  CHECK_THROWS_AS(f.deriv(6, 0.3), fvp::DomainError);
  CHECK(f.sup_abs(1, 0, 1) == Approx(4.0));
  const auto g = fvp::FunctionModel::from_callables({[](double t) { return std::sin(t); },
                                                     [](double t) { return std::cos(t); }},
                                                    0, 1);
  CHECK(g.deriv(1, 0.0) == Approx(1.0));
  CHECK_THROWS_AS(g.deriv(2, 0.0), fvp::DomainError);
}

TEST_CASE("tabular functions") {
  const auto nodes = fvp::uniform_nodes(0, 1, 10);
  REQUIRE(nodes.size() == 11);
  CHECK(nodes.back() == 1.0);
  auto tab = fvp::TabularFunction::sample([](double t) { return t * t; }, nodes);
  CHECK_NOTHROW(tab.check_uniform());
  const auto d = fvp::tabular_first_derivative(tab);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.x[i] == Approx(2 * d.t[i]).epsilon(1e-12));
  tab.t[3] += 1e-3;
  CHECK_THROWS_AS(tab.check_uniform(), fvp::UsageError);
  fvp::TabularFunction one{{0.0}, {1.0}};
  CHECK_THROWS_AS(one.check_uniform(), fvp::UsageError);
}

TEST_CASE("closed-form operators on probes") {
  using fvp::OpFamily;
  using fvp::Probe;
  const double pi = std::numbers::pi;
  // Half derivative of t is 2 sqrt(t/π).
  CHECK(fvp::reference_frac_op(OpFamily::rl_deriv, 0.5, 0, Probe::power(1), 0.49) ==
        Approx(2 * std::sqrt(0.49 / pi)));
  // RL derivative of a constant is singular at the base; Caputo kills it.
  CHECK(fvp::reference_frac_op(OpFamily::rl_deriv, 0.3, 0, Probe::constant(2), 0.5) ==
        Approx(2 * std::pow(0.5, -0.3) / boost::math::tgamma(0.7)));
  CHECK(fvp::reference_frac_op(OpFamily::caputo_deriv, 0.3, 0, Probe::constant(2), 0.5) ==
        Approx(0.0).epsilon(1e-14));
  CHECK(fvp::reference_frac_op(OpFamily::rl_integral, 0.5, 1, Probe::power(2), 2.0) ==
        Approx(2.0 / boost::math::tgamma(3.5)));
  // Hadamard derivative of ln(t)^ν with base 1.
  CHECK(fvp::reference_frac_op(OpFamily::hadamard_deriv, 0.5, 1, Probe::log_power(1), std::exp(1.0)) ==
        Approx(1.0 / boost::math::tgamma(1.5)));
  CHECK_THROWS_AS(fvp::reference_frac_op(OpFamily::rl_deriv, 0.5, 0, Probe::power(1), 0.0), fvp::DomainError);
  CHECK_THROWS_AS(fvp::reference_frac_op(OpFamily::rl_deriv, 0.5, 0, Probe::log_power(1), 0.5), fvp::UsageError);
}

TEST_CASE("closed forms against quadrature of the defining integrals") {
  using fvp::OpFamily;
  using fvp::Probe;
  const double alpha = 0.5, t = 0.8;
  // I^α e^{λt}: τ = t - s² removes the kernel singularity.
  for (double lam : {1.0, -2.0}) {
    const double q = fvp::integrate([&](double s) { return 2 * std::exp(lam * (t - s * s)); }, 0, std::sqrt(t));
    CHECK(fvp::reference_frac_op(OpFamily::rl_integral, alpha, 0, Probe::exp(lam), t) ==
          Approx(q / boost::math::tgamma(alpha)).epsilon(1e-10));
  }
  // Caputo derivative of e^{λt}: I^{1-α} of λ e^{λτ}.
  {
    const double lam = 1.3;
    const double q =
        fvp::integrate([&](double s) { return 2 * lam * std::exp(lam * (t - s * s)); }, 0, std::sqrt(t));
    CHECK(fvp::reference_frac_op(OpFamily::caputo_deriv, alpha, 0, Probe::exp(lam), t) ==
          Approx(q / boost::math::tgamma(1 - alpha)).epsilon(1e-10));
  }
  // Hadamard integral of t^k, base 1: with τ = t e^{-s²}, kernel ln(t/τ) = s².
  {
    const double T = 2.0, k = 2.0, L = std::log(T);
    const double q = fvp::integrate([&](double s) { return 2 * std::pow(T * std::exp(-s * s), k); }, 0, std::sqrt(L));
    CHECK(fvp::reference_frac_op(OpFamily::hadamard_integral, alpha, 1, Probe::monomial(k), T) ==
          Approx(q / boost::math::tgamma(alpha)).epsilon(1e-10));
  }
}

TEST_CASE("regularized incomplete gamma") {
  for (double a : {0.5, 1.0, 3.5})
    for (double x : {0.0, 0.1, 1.0, 4.0, 20.0})
      CHECK(fvp::gamma_p(a, x) == Approx(boost::math::gamma_p(a, x)).epsilon(1e-12));
  CHECK_THROWS_AS(fvp::gamma_p(0.0, 1.0), fvp::DomainError);
}

}  // TEST_SUITE
