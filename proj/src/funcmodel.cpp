#include "fvp/funcmodel.hpp"

#include <cmath>

#include <fmt/format.h>

#include "fvp/error.hpp"
#include "fvp/special.hpp"

namespace fvp {

FunctionModel FunctionModel::from_expr(const Expr& e, double a, double b, int n_max) {
  for (int i = 1; i < static_cast<int>(kVarCount); ++i)
    if (e.depends_on(static_cast<Var>(i)))
      throw UsageError(fmt::format("function of t may not use variable '{}'",
                                   var_name(static_cast<Var>(i))));
  std::vector<Expr> ds{e};
  for (int k = 1; k <= n_max; ++k) ds.push_back(diff_expr(ds.back(), Var::t));
  return FunctionModel(a, b, n_max, [ds = std::move(ds)](int k, double t) {
    return ds[static_cast<std::size_t>(k)].eval_t(t);
  });
}

FunctionModel FunctionModel::from_expr(const std::string& src, double a, double b, int n_max) {
  return from_expr(parse_expr(src), a, b, n_max);
}

FunctionModel FunctionModel::from_callables(std::vector<std::function<double(double)>> fs,
                                            double a, double b) {
  if (fs.empty()) throw UsageError("from_callables: need at least the value function");
  const int n = static_cast<int>(fs.size()) - 1;
  return FunctionModel(a, b, n, [fs = std::move(fs)](int k, double t) {
    return fs[static_cast<std::size_t>(k)](t);
  });
}

double FunctionModel::deriv(int k, double t) const {
  if (k < 0 || k > n_max_)
    throw DomainError(fmt::format("derivative of order {} requested, model provides {}", k, n_max_));
  return d_(k, t);
}

double FunctionModel::sup_abs(int k, double lo, double hi, int samples) const {
  double m = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = samples == 1 ? hi : lo + (hi - lo) * i / (samples - 1);
    m = std::max(m, std::fabs(deriv(k, t)));
  }
  return m;
}

void TabularFunction::check_uniform() const {
  if (t.size() < 2 || t.size() != x.size())
    throw UsageError("tabular data needs at least two nodes and matching value count");
  const double h0 = t[1] - t[0];
  if (!(h0 > 0.0)) throw UsageError("tabular nodes must be strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double hi = t[i] - t[i - 1];
    if (std::fabs(hi - h0) > 1e-12 * std::max(1.0, std::fabs(t[i])) + 1e-9 * h0)
      throw UsageError(fmt::format("non-uniform grid at node {}", i));
  }
}

TabularFunction TabularFunction::sample(const FunctionModel& f, const std::vector<double>& nodes) {
  return sample([&f](double t) { return f(t); }, nodes);
}

TabularFunction TabularFunction::sample(const std::function<double(double)>& f,
                                        const std::vector<double>& nodes) {
  TabularFunction r;
  r.t = nodes;
  r.x.reserve(nodes.size());
  for (double t : nodes) r.x.push_back(f(t));
  return r;
}

std::vector<double> uniform_nodes(double a, double b, int n) {
  if (n < 1) throw UsageError("uniform_nodes: need at least one subinterval");
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  const double h = (b - a) / n;
  for (int i = 0; i <= n; ++i) t[static_cast<std::size_t>(i)] = a + i * h;
  t.back() = b;
  return t;
}

TabularFunction tabular_first_derivative(const TabularFunction& f) {
  if (f.size() < 3) throw UsageError("tabular_first_derivative: need at least three nodes");
  f.check_uniform();
  const std::size_t n = f.size();
  const double h = f.h();
  TabularFunction d;
  d.t = f.t;
  d.x.resize(n);
  d.x[0] = (-3.0 * f.x[0] + 4.0 * f.x[1] - f.x[2]) / (2.0 * h);
  for (std::size_t i = 1; i + 1 < n; ++i) d.x[i] = (f.x[i + 1] - f.x[i - 1]) / (2.0 * h);
  d.x[n - 1] = (3.0 * f.x[n - 1] - 4.0 * f.x[n - 2] + f.x[n - 3]) / (2.0 * h);
  return d;
}

Expr Probe::expr(double base) const {
  const Expr t = Expr::var(Var::t);
  switch (kind) {
    case Kind::power: return pow(t - Expr::num(base), Expr::num(p));
    case Kind::exp: return Expr::call(Fn::exp, Expr::num(p) * t);
    case Kind::constant: return Expr::num(p);
    case Kind::log_power: return pow(Expr::call(Fn::ln, t / Expr::num(base)), Expr::num(p));
    case Kind::monomial: return pow(t, Expr::num(p));
  }
  return Expr();
}

FunctionModel Probe::model(double base, double b, int n_max) const {
  return FunctionModel::from_expr(expr(base), base, b, n_max);
}

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  long double term = 1.0L / a, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= static_cast<long double>(x) / (a + n);
    sum += term;
    if (term < 1e-19L * sum) break;
  }
  return static_cast<double>(
      sum * std::exp(static_cast<long double>(a) * std::log(static_cast<long double>(x)) - x -
                     std::lgamma(static_cast<long double>(a))));
}

double reference_frac_op(OpFamily family, double alpha, double base, const Probe& probe, double t) {
  if (!(t > base)) throw DomainError("reference_frac_op: t must exceed the base point");
  using K = Probe::Kind;
  const double s = t - base;
  auto unsupported = [&]() -> double {
    throw UsageError("reference_frac_op: unsupported probe for this operator family");
  };
  switch (family) {
    case OpFamily::rl_deriv:
    case OpFamily::caputo_deriv: {
      double v;
      if (probe.kind == K::power || probe.kind == K::constant) {
        const double nu = probe.kind == K::power ? probe.p : 0.0;
        const double c = probe.kind == K::power ? 1.0 : probe.p;
        v = c * gamma_ratio(nu + 1.0, nu + 1.0 - alpha) * std::pow(s, nu - alpha);
      } else if (probe.kind == K::exp) {
        v = std::exp(probe.p * base) * std::pow(s, -alpha) *
            mittag_leffler(1.0, 1.0 - alpha, probe.p * s);
      } else {
        return unsupported();
      }
      if (family == OpFamily::caputo_deriv) {
        const double xa = probe.expr(base).eval_t(base);
        v -= xa * std::pow(s, -alpha) * rgamma(1.0 - alpha);
      }
      return v;
    }
    case OpFamily::rl_integral: {
      if (probe.kind == K::power || probe.kind == K::constant) {
        const double nu = probe.kind == K::power ? probe.p : 0.0;
        const double c = probe.kind == K::power ? 1.0 : probe.p;
        return c * gamma_ratio(nu + 1.0, nu + 1.0 + alpha) * std::pow(s, nu + alpha);
      }
      if (probe.kind == K::exp)
        return std::exp(probe.p * base) * std::pow(s, alpha) *
               mittag_leffler(1.0, 1.0 + alpha, probe.p * s);
      return unsupported();
    }
    case OpFamily::hadamard_deriv:
    case OpFamily::hadamard_integral: {
      if (!(base > 0.0)) throw DomainError("Hadamard operators need a positive base point");
      const double L = std::log(t / base);
      const double sign = family == OpFamily::hadamard_deriv ? -1.0 : 1.0;
      const double beta = sign * alpha;
      if (probe.kind == K::log_power || probe.kind == K::constant) {
        const double nu = probe.kind == K::log_power ? probe.p : 0.0;
        const double c = probe.kind == K::log_power ? 1.0 : probe.p;
        return c * gamma_ratio(nu + 1.0, nu + 1.0 + beta) * std::pow(L, nu + beta);
      }
      if (probe.kind == K::monomial) {
        const double k = probe.p;
        if (!(k > 0.0)) return unsupported();
        // Substituting τ = t e^{-s} turns the kernel into an incomplete gamma.
        if (family == OpFamily::hadamard_integral)
          return std::pow(t, k) * std::pow(k, -alpha) * gamma_p(alpha, k * L);
        return std::pow(t, k) * std::pow(k, alpha) * gamma_p(1.0 - alpha, k * L) +
               std::pow(base, k) * std::pow(L, -alpha) * rgamma(1.0 - alpha);
      }
      return unsupported();
    }
  }
  return unsupported();
}

}  // namespace fvp
