#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fvp/expr.hpp"

namespace fvp {

// x(t) on [a,b] with integer-order derivatives up to n_max.
class FunctionModel {
 public:
  using Deriv = std::function<double(int k, double t)>;

  FunctionModel() = default;
  FunctionModel(double a, double b, int n_max, Deriv d) : a_(a), b_(b), n_max_(n_max), d_(std::move(d)) {}

  // Symbolic derivatives of an expression in t, precomputed up to n_max.
  static FunctionModel from_expr(const Expr& e, double a, double b, int n_max = 12);
  static FunctionModel from_expr(const std::string& src, double a, double b, int n_max = 12);
  // fs[k] evaluates x^(k).
  static FunctionModel from_callables(std::vector<std::function<double(double)>> fs, double a,
                                      double b);

  double operator()(double t) const { return deriv(0, t); }
  // Throws DomainError when k exceeds n_max.
  double deriv(int k, double t) const;

  double a() const { return a_; }
  double b() const { return b_; }
  int n_max() const { return n_max_; }

  // max |x^(k)| over [lo,hi] from `samples` equally spaced points.
  double sup_abs(int k, double lo, double hi, int samples = 1000) const;

 private:
  double a_ = 0.0, b_ = 1.0;
  int n_max_ = 0;
  Deriv d_;
};

struct TabularFunction {
  std::vector<double> t;
  std::vector<double> x;

  double h() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
  std::size_t size() const { return t.size(); }
  // Throws UsageError unless nodes are increasing, >= 2, uniform to 1e-12 relative.
  void check_uniform() const;

  static TabularFunction sample(const FunctionModel& f, const std::vector<double>& nodes);
  static TabularFunction sample(const std::function<double(double)>& f,
                                const std::vector<double>& nodes);
};

// n subintervals of [a,b]: n+1 nodes with exact endpoints.
std::vector<double> uniform_nodes(double a, double b, int n);

// Centered differences inside, second-order one-sided at the ends.
TabularFunction tabular_first_derivative(const TabularFunction& f);

enum class OpFamily { rl_deriv, rl_integral, caputo_deriv, hadamard_deriv, hadamard_integral };

// Closed set of probes with known fractional operators.
struct Probe {
  enum class Kind { power, exp, constant, log_power, monomial };
  Kind kind = Kind::power;
  double p = 1.0;  // ν for power/log_power, λ for exp, c for constant, k for monomial

  static Probe power(double nu) { return {Kind::power, nu}; }
  static Probe exp(double lambda) { return {Kind::exp, lambda}; }
  static Probe constant(double c) { return {Kind::constant, c}; }
  static Probe log_power(double nu) { return {Kind::log_power, nu}; }
  static Probe monomial(double k) { return {Kind::monomial, k}; }

  // The probe as an expression in t. power is (t-base)^ν and log_power ln(t/base)^ν.
  Expr expr(double base) const;
  FunctionModel model(double base, double b, int n_max = 12) const;
};

// Left-sided operator of order alpha with lower terminal `base`, evaluated at t > base.
// Throws UsageError for unsupported family/probe pairs.
double reference_frac_op(OpFamily family, double alpha, double base, const Probe& probe, double t);

// Regularized lower incomplete gamma P(a,x) by its power series.
double gamma_p(double a, double x);

}  // namespace fvp
