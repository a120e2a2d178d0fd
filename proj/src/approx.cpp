#include "fvp/approx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fvp/error.hpp"
#include "fvp/numerics.hpp"

namespace fvp {

namespace {

// Γ(x) / (Γ(y) m!) through logs; Γ(y) may be negative.
double gamma_term(double x, double y, int m) {
  return gamma_sign(x) * gamma_sign(y) *
         std::exp(log_gamma(x) - log_gamma(y) - log_gamma(m + 1.0));
}

bool is_integral(CoeffKind k) {
  return k == CoeffKind::integral || k == CoeffKind::hadamard_integral;
}

void check_order(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError(fmt::format("order {} not in (0,1)", alpha));
}

// 0^negative is taken as 0 (Diethelm weights at α > 1).
double pw(double base, double e) { return base == 0.0 ? 0.0 : std::pow(base, e); }

}  // namespace

MomentCoeffs moment_coeffs(double alpha, int n, int N, CoeffKind kind) {
  check_order(alpha);
  if (n < 0 || N < n + 1)
    throw UsageError(fmt::format("moment expansion needs n >= 0 and N >= n+1 (got n={}, N={})", n, N));
  MomentCoeffs c;
  c.alpha = alpha;
  c.n = n;
  c.N = N;
  c.kind = kind;
  // The integral expansions are the derivative ones with α -> -α.
  const double s = is_integral(kind) ? -alpha : alpha;
  for (int i = 0; i <= n; ++i) {
    double sum = 1.0;
    for (int p = n - i + 1; p <= N; ++p) sum += gamma_term(p - n + s, s - i, p - n + i);
    c.A.push_back(sum * rgamma(i + 1.0 - s));
  }
  const double pre = rgamma(-s) * rgamma(1.0 + s);
  for (int p = n + 1; p <= N; ++p) c.B.push_back(pre * gamma_term(p - n + s, 1.0, p - n));
  return c;
}

double coeff_truncation_error(double alpha, int i, int m, TailKind kind) {
  if (m < 0 || i < 0) throw UsageError("coeff_truncation_error: need i >= 0 and m >= 0");
  double sum = 0.0;
  switch (kind) {
    case TailKind::derivative:
      for (int q = 0; q <= m + i + 1; ++q) sum += gamma_term(q + alpha - i, alpha - i, q);
      return -sum * rgamma(i + 1.0 - alpha);
    case TailKind::integral:
      for (int p = 0; p <= m + i + 1; ++p) sum += gamma_term(p - alpha - i, -alpha - i, p);
      return -sum * rgamma(alpha + i + 1.0);
    case TailKind::integral_B:
      for (int p = 0; p <= m + 1; ++p) sum += gamma_term(p - alpha, 1.0, p);
      return -sum * rgamma(alpha) * rgamma(1.0 - alpha);
  }
  return 0.0;
}

TabularFunction frac_deriv_grid(const TabularFunction& samples, double alpha, GlScheme scheme,
                                std::optional<double> x_dot_a) {
  samples.check_uniform();
  const auto& x = samples.x;
  const std::size_t n = x.size() - 1;
  const double h = samples.h();
  TabularFunction out;
  out.t = samples.t;
  out.x.assign(n + 1, 0.0);

  if (scheme == GlScheme::diethelm_caputo) {
    if (!(alpha > 0.0 && alpha < 2.0) || alpha == 1.0)
      throw UsageError("Diethelm scheme needs 0 < alpha < 2, alpha != 1");
    if (alpha > 1.0 && !x_dot_a) throw UsageError("Diethelm scheme with alpha > 1 needs x'(a)");
    const double xa = x[0];
    const double xda = x_dot_a.value_or(0.0);
    const double scale = std::pow(h, -alpha) * rgamma(2.0 - alpha);
    const double e = 1.0 - alpha;
    for (std::size_t i = 1; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < i; ++j) {  // j = i multiplies x_0 - x(a) = 0
        const double dj = static_cast<double>(j);
        const double w = j == 0 ? 1.0 : pw(dj + 1.0, e) - 2.0 * pw(dj, e) + pw(dj - 1.0, e);
        double v = x[i - j] - xa;
        if (alpha > 1.0) v -= static_cast<double>(i - j) * h * xda;
        s += w * v;
      }
      out.x[i] = scale * s;
    }
    return out;
  }

  check_order(alpha);
  const auto w = gl_weights(alpha, n + 1);
  const double scale = std::pow(h, -alpha);
  switch (scheme) {
    case GlScheme::gl_left:
      for (std::size_t i = 0; i <= n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += w[k] * x[i - k];
        out.x[i] = scale * s;
      }
      break;
    case GlScheme::gl_right:
      for (std::size_t i = 0; i <= n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k + i <= n; ++k) s += w[k] * x[i + k];
        out.x[i] = scale * s;
      }
      break;
    case GlScheme::gl_shifted_left: {
      // One node beyond the grid is needed at i = n; extrapolate quadratically.
      std::vector<double> xe(x);
      if (n >= 2)
        xe.push_back(3.0 * x[n] - 3.0 * x[n - 1] + x[n - 2]);
      else
        xe.push_back(2.0 * x[n] - x[n - 1]);
      for (std::size_t i = 0; i <= n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += w[k] * xe[i + 1 - k];
        out.x[i] = scale * s;
      }
      break;
    }
    default: break;
  }
  return out;
}

double hadamard_power(const FunctionModel& f, int k, double t) {
  // (t d/dt)^k = Σ_j c_{k,j} t^j d^j/dt^j with c_{k+1,j} = j c_{k,j} + c_{k,j-1}.
  std::vector<double> c{1.0};
  for (int step = 0; step < k; ++step) {
    std::vector<double> nc(c.size() + 1, 0.0);
    for (std::size_t j = 0; j < nc.size(); ++j) {
      if (j < c.size()) nc[j] += static_cast<double>(j) * c[j];
      if (j >= 1) nc[j] += c[j - 1];
    }
    c = std::move(nc);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j)
    if (c[j] != 0.0) s += c[j] * std::pow(t, static_cast<double>(j)) * f.deriv(static_cast<int>(j), t);
  return s;
}

std::vector<std::vector<double>> moment_states(const FunctionModel& f, double a, double b, int n,
                                               int N, Side side, bool hadamard,
                                               const std::vector<double>& grid, double tol) {
  const int dim = N - n;
  if (dim <= 0) return std::vector<std::vector<double>>(grid.size());
  auto kernel = [&](double tau) {
    if (side == Side::left) return hadamard ? std::log(tau / a) : tau - a;
    return hadamard ? std::log(b / tau) : b - tau;
  };
  VecIntegrand g = [&](double tau, double* out) {
    const double k = kernel(tau);
    double v = f(tau);
    if (hadamard) v /= tau;
    double kp = 1.0;  // k^{p-n-1}
    for (int j = 0; j < dim; ++j) {
      out[j] = (j + 1) * kp * v;
      kp *= k;
    }
  };
  // Accumulate outward from the terminal whatever the grid order: small moments near
  // the terminal must not come out as differences of large ones.
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return kernel(grid[i]) < kernel(grid[j]); });
  std::vector<double> sorted(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = grid[order[i]];
  const auto r = cumulative_integrals(g, dim, side == Side::left ? a : b, sorted, tol);
  std::vector<std::vector<double>> out(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out[order[i]] = r[i];
    if (side == Side::right)
      for (auto& v : out[order[i]]) v = -v;
  }
  return out;
}

namespace {

double kernel_dist(double t, double a, double b, Side side, bool hadamard) {
  if (side == Side::left) return hadamard ? std::log(t / a) : t - a;
  return hadamard ? std::log(b / t) : b - t;
}

void check_grid(const std::vector<double>& grid, double a, double b, Side side) {
  for (double t : grid) {
    if (side == Side::left && !(t > a))
      throw DomainError(fmt::format("expansion evaluated at t = {} <= base point {}", t, a));
    if (side == Side::right && !(t < b))
      throw DomainError(fmt::format("expansion evaluated at t = {} >= terminal {}", t, b));
  }
}

// Moment expansion shared by derivatives (sign = +1) and integrals (sign = -1).
std::vector<double> moment_eval(const FunctionModel& f, double alpha, double a, double b, Side side,
                                bool hadamard, bool integral, int n, int N,
                                const std::vector<double>& grid, bool retain_A) {
  const CoeffKind kind = hadamard ? (integral ? CoeffKind::hadamard_integral : CoeffKind::hadamard_derivative)
                                  : (integral ? CoeffKind::integral : CoeffKind::derivative);
  const auto c = moment_coeffs(alpha, n, N, kind);
  const auto V = moment_states(f, a, b, n, N, side, hadamard, grid);
  const double s = integral ? alpha : -alpha;
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = grid[j];
    const double k = kernel_dist(t, a, b, side, hadamard);
    double v = 0.0;
    if (retain_A) {
      for (int i = 0; i <= n; ++i) {
        const double xi = hadamard ? hadamard_power(f, i, t) : f.deriv(i, t);
        const double sign = (side == Side::right && (i % 2 == 1)) ? -1.0 : 1.0;
        v += sign * c.A[static_cast<std::size_t>(i)] * std::pow(k, i + s) * xi;
      }
    }
    for (int p = n + 1; p <= N; ++p)
      v += c.Bp(p) * std::pow(k, n - p + s) * V[j][static_cast<std::size_t>(p - n - 1)];
    out[j] = v;
  }
  return out;
}

}  // namespace

std::vector<double> frac_deriv_expansion(const FunctionModel& f, double alpha, double a, double b,
                                         Side side, Family family, const ExpansionMethod& method,
                                         const std::vector<double>& grid) {
  check_order(alpha);
  const bool hadamard = family == Family::hadamard;
  std::vector<double> out(grid.size());
  if (method.kind == ExpansionMethod::Kind::taylor) {
    if (method.N < 0) throw UsageError("taylor expansion needs N >= 0");
    if (f.n_max() < method.N)
      throw DomainError(fmt::format("taylor N={} needs {} derivatives, model has {}", method.N,
                                    method.N, f.n_max()));
    if (hadamard) {
      if (a != 0.0 || side != Side::left)
        throw UsageError("the Stirling series expansion is for the left operator with base 0");
      for (std::size_t j = 0; j < grid.size(); ++j) {
        double v = 0.0;
        for (int k = 1; k <= method.N; ++k)
          v += stirling(alpha, k) * std::pow(grid[j], k) * f.deriv(k, grid[j]);
        out[j] = v;
      }
      return out;
    }
    check_grid(grid, a, b, side);
    const double g = rgamma(1.0 - alpha);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double t = grid[j];
      const double k = kernel_dist(t, a, b, side, false);
      double v = 0.0, fact = 1.0;
      for (int m = 0; m <= method.N; ++m) {
        if (m > 0) fact *= m;
        const double sign = side == Side::left ? ((m % 2 == 0) ? -1.0 : 1.0) : -1.0;
        v += sign * alpha * f.deriv(m, t) * std::pow(k, m - alpha) / (fact * (m - alpha)) * g;
      }
      out[j] = v;
    }
  } else {
    check_grid(grid, a, b, side);
    if (f.n_max() < method.n)
      throw DomainError(fmt::format("moment n={} needs {} derivatives, model has {}", method.n,
                                    method.n, f.n_max()));
    out = moment_eval(f, alpha, a, b, side, hadamard, false, method.n, method.N, grid, true);
  }
  if (family == Family::caputo) {
    const double end = side == Side::left ? a : b;
    const double xe = f(end);
    for (std::size_t j = 0; j < grid.size(); ++j)
      out[j] -= xe * std::pow(kernel_dist(grid[j], a, b, side, false), -alpha) * rgamma(1.0 - alpha);
  }
  return out;
}

std::vector<double> frac_integral_expansion(const FunctionModel& f, double alpha, double a,
                                            double b, Side side, Family family,
                                            const ExpansionMethod& method,
                                            const std::vector<double>& grid, bool retain_A) {
  check_order(alpha);
  if (family == Family::caputo) throw UsageError("there is no Caputo fractional integral");
  const bool hadamard = family == Family::hadamard;
  std::vector<double> out(grid.size());
  if (method.kind == ExpansionMethod::Kind::taylor) {
    if (f.n_max() < method.N)
      throw DomainError(fmt::format("taylor N={} exceeds model derivative order {}", method.N, f.n_max()));
    if (hadamard) {
      if (a != 0.0 || side != Side::left)
        throw UsageError("the Stirling series expansion is for the left operator with base 0");
      for (std::size_t j = 0; j < grid.size(); ++j) {
        double v = 0.0;
        for (int k = 1; k <= method.N; ++k)
          v += stirling(-alpha, k) * std::pow(grid[j], k) * f.deriv(k, grid[j]);
        out[j] = v;
      }
      return out;
    }
    check_grid(grid, a, b, side);
    const double g = rgamma(alpha);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double t = grid[j];
      const double k = kernel_dist(t, a, b, side, false);
      double v = 0.0, fact = 1.0;
      for (int m = 0; m <= method.N; ++m) {
        if (m > 0) fact *= m;
        const double sign = (side == Side::left && m % 2 == 1) ? -1.0 : 1.0;
        v += sign * std::pow(k, m + alpha) * f.deriv(m, t) / ((m + alpha) * fact);
      }
      out[j] = g * v;
    }
    return out;
  }
  check_grid(grid, a, b, side);
  if (f.n_max() < method.n)
    throw DomainError(fmt::format("moment n={} exceeds model derivative order {}", method.n, f.n_max()));
  return moment_eval(f, alpha, a, b, side, hadamard, true, method.n, method.N, grid, retain_A);
}

TruncationBound truncation_bound(double alpha, int n, int N, const FunctionModel& f, double t,
                                 double a, BoundKind kind) {
  check_order(alpha);
  TruncationBound tb;
  tb.alpha = alpha;
  tb.n = n;
  tb.N = N;
  const double k = t - a;
  auto sup = [&](const std::function<double(double)>& g) {
    double m = 0.0;
    for (int i = 0; i < 1000; ++i) m = std::max(m, std::fabs(g(a + k * i / 999.0)));
    return m;
  };
  // x_{n,1} = x_{n+1,0} / t
  auto had_sup = [&](int order) { return sup([&](double s) { return hadamard_power(f, order + 1, s) / s; }); };
  switch (kind) {
    case BoundKind::deriv_taylor: {
      tb.L = f.sup_abs(N + 1, a, t);
      tb.value = tb.L * std::pow(k, N + 1 - alpha) * rgamma(1.0 - alpha) * rgamma(N + 2.0);
      break;
    }
    case BoundKind::deriv_moment: {
      const double e = n - alpha;
      if (!(e > 0.0)) throw UsageError("derivative moment bound needs n >= 1");
      tb.L = f.sup_abs(n + 1, a, t);
      tb.value = tb.L * std::exp(e * e + e) * rgamma(n + 1.0 - alpha) / (e * std::pow(N, e)) *
                 std::pow(k, n + 1 - alpha);
      break;
    }
    case BoundKind::integral_moment: {
      const double e = alpha + n;
      tb.L = f.sup_abs(n + 1, a, t);
      tb.value = tb.L * std::pow(k, e + 1.0) * std::exp(e * e + e) * rgamma(e + 1.0) /
                 (e * std::pow(N, e));
      break;
    }
    case BoundKind::hadamard_deriv: {
      const double e = n - alpha;
      if (!(e > 0.0)) throw UsageError("Hadamard derivative bound needs n >= 1");
      tb.L = had_sup(n);
      tb.value = tb.L * std::exp(e * e + e) * rgamma(n + 1.0 - alpha) / (e * std::pow(N, e)) *
                 std::pow(std::log(t / a), e) * k;
      break;
    }
    case BoundKind::hadamard_integral: {
      const double e = alpha + n;
      tb.L = had_sup(n);
      tb.value = tb.L * std::exp(e * e + e) * rgamma(e + 1.0) / (e * std::pow(N, e)) *
                 std::pow(std::log(t / a), e) * k;
      break;
    }
  }
  return tb;
}

TabularDerivResult tabular_frac_deriv(const TabularFunction& data, double alpha, double epsilon,
                                      int N_start, int N_max) {
  check_order(alpha);
  if (!(epsilon > 0.0)) throw UsageError("tabular_frac_deriv: epsilon must be positive");
  if (N_start < 2 || N_max < N_start) throw UsageError("tabular_frac_deriv: need 2 <= N_start <= N_max");
  data.check_uniform();
  const auto xd = tabular_first_derivative(data);
  const double a = data.t.front();
  const std::size_t m = data.size();

  // W[p-2][i] = k_i^{1-p} V_p(t_i), with x linear between samples and the
  // weight (p-1) s^{p-2} integrated exactly. Plain trapezoid on the product
  // cannot resolve the weight near a once p reaches a few tens.
  std::vector<std::vector<double>> W;
  auto moment = [&](int p) -> const std::vector<double>& {
    while (static_cast<int>(W.size()) < p - 1) {
      const int q = static_cast<int>(W.size()) + 2;
      std::vector<double> w(m, 0.0);
      for (std::size_t i = 1; i < m; ++i) {
        const double k = data.t[i] - a;
        double sum = 0.0;
        double u0 = 0.0, P0 = 0.0, R0 = 0.0;  // P = u^{q-1}, R = (q-1)/q u^q
        for (std::size_t j = 0; j < i; ++j) {
          const double u1 = (data.t[j + 1] - a) / k;
          const double P1 = std::pow(u1, q - 1);
          const double R1 = (q - 1.0) / q * P1 * u1;
          const double du = u1 - u0;
          // ∫ w(u) (u1 - u)/du and ∫ w(u) (u - u0)/du over [u0, u1]
          const double lo = (u1 * (P1 - P0) - (R1 - R0)) / du;
          const double hi = ((R1 - R0) - u0 * (P1 - P0)) / du;
          sum += lo * data.x[j] + hi * data.x[j + 1];
          u0 = u1;
          P0 = P1;
          R0 = R1;
        }
        w[i] = sum;
      }
      W.push_back(std::move(w));
    }
    return W[static_cast<std::size_t>(p - 2)];
  };

  auto evaluate = [&](int N) {
    const auto c = moment_coeffs(alpha, 1, N, CoeffKind::derivative);
    TabularFunction d;
    for (std::size_t i = 1; i < m; ++i) {
      const double k = data.t[i] - a;
      double v = c.A[0] * std::pow(k, -alpha) * data.x[i] + c.A[1] * std::pow(k, 1.0 - alpha) * xd.x[i];
      for (int p = 2; p <= N; ++p) v += c.Bp(p) * std::pow(k, -alpha) * moment(p)[i];
      d.t.push_back(data.t[i]);
      d.x.push_back(v);
    }
    return d;
  };

  TabularDerivResult res;
  TabularFunction cur = evaluate(N_start);
  for (int N = N_start; N < N_max; ++N) {
    TabularFunction next = evaluate(N + 1);
    double dist = 0.0;
    for (std::size_t i = 0; i < cur.x.size(); ++i) dist += (next.x[i] - cur.x[i]) * (next.x[i] - cur.x[i]);
    if (std::sqrt(dist) < epsilon) {
      res.d = std::move(cur);
      res.N = N;
      res.converged = true;
      return res;
    }
    cur = std::move(next);
  }
  res.d = std::move(cur);
  res.N = N_max;
  res.converged = false;
  return res;
}

}  // namespace fvp
