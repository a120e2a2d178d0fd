#include "fvp/direct.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fvp/approx.hpp"
#include "fvp/error.hpp"
#include "fvp/funcmodel.hpp"
#include "fvp/special.hpp"

namespace fvp {

UniformGrid::UniformGrid(double a_, double b_, int n_) : a(a_), b(b_), n(n_) {
  if (n < 2) throw UsageError(fmt::format("grid needs n >= 2, got {}", n));
  if (!(b > a)) throw UsageError(fmt::format("grid needs b > a, got [{}, {}]", a, b));
}

std::vector<double> UniformGrid::nodes() const { return uniform_nodes(a, b, n); }

LagrangianDerivs::LagrangianDerivs(const Expr& e) : L(e) {
  Lx = diff_expr(L, Var::x);
  Lp = diff_expr(L, Var::xp);
  LD = diff_expr(L, Var::Dx);
  Lxx = diff_expr(Lx, Var::x);
  Lxp = diff_expr(Lx, Var::xp);
  LxD = diff_expr(Lx, Var::Dx);
  Lpp = diff_expr(Lp, Var::xp);
  LpD = diff_expr(Lp, Var::Dx);
  LDD = diff_expr(LD, Var::Dx);
}

namespace {

void check_vars(const Expr& e, bool allow_lambda, const char* what) {
  for (Var v : {Var::u, Var::lambda}) {
    if (v == Var::lambda && allow_lambda) continue;
    if (e.depends_on(v))
      throw UsageError(fmt::format("{} may not depend on '{}'", what, var_name(v)));
  }
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw UsageError(fmt::format("direct methods need 0 < alpha < 1, got {}", alpha));
}

// Per-node quantities shared by residuals and Jacobians.
struct Discretization {
  UniformGrid grid;
  double alpha;
  GLWeights w;
  double scale;  // h^{-α}

  Discretization(const UniformGrid& g, double a)
      : grid(g), alpha(a), w(gl_weights(a, static_cast<std::size_t>(g.n) + 1)),
        scale(std::pow(g.h(), -a)) {}

  // D[m] for m = 0..n (D[0] is the left value h^{-α} x_0, unused by the sums).
  std::vector<double> frac(const std::vector<double>& x) const {
    const int n = grid.n;
    std::vector<double> D(n + 1, 0.0);
    for (int m = 0; m <= n; ++m) {
      double s = 0.0;
      for (int k = 0; k <= m; ++k) s += w[k] * x[m - k];
      D[m] = scale * s;
    }
    return D;
  }

  VarEnv env(const std::vector<double>& x, const std::vector<double>& D, int m,
             double lambda) const {
    VarEnv e{};
    e[static_cast<int>(Var::t)] = grid.t(m);
    e[static_cast<int>(Var::x)] = x[m];
    e[static_cast<int>(Var::xp)] = (x[m] - x[m - 1]) / grid.h();
    e[static_cast<int>(Var::Dx)] = D[m];
    e[static_cast<int>(Var::lambda)] = lambda;
    return e;
  }
};

void check_candidate(const UniformGrid& grid, const std::vector<double>& x) {
  if (x.size() != static_cast<std::size_t>(grid.n) + 1)
    throw UsageError(fmt::format("candidate has {} values, grid needs {}", x.size(), grid.n + 1));
}

// Gradient of Σ_{m=1..n} L_m with respect to x_1..x_{n-1}.
std::vector<double> gradient(const LagrangianDerivs& d, const Discretization& disc,
                             const std::vector<double>& x, double lambda) {
  const int n = disc.grid.n;
  const double h = disc.grid.h();
  const auto D = disc.frac(x);
  std::vector<double> Lx(n + 2, 0.0), Lp(n + 2, 0.0), LD(n + 1, 0.0);
  for (int m = 1; m <= n; ++m) {
    const VarEnv e = disc.env(x, D, m, lambda);
    Lx[m] = d.Lx.eval(e);
    Lp[m] = d.Lp.eval(e);
    LD[m] = d.LD.eval(e);
  }
  std::vector<double> r(n - 1);
  for (int i = 1; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k <= n - i; ++k) s += disc.w[k] * LD[i + k];
    r[i - 1] = Lx[i] + disc.scale * s + (Lp[i] - Lp[i + 1]) / h;
  }
  return r;
}

// Hessian of Σ_{m=1..n} L_m over the interior unknowns.
Eigen::MatrixXd hessian(const LagrangianDerivs& d, const Discretization& disc,
                        const std::vector<double>& x, double lambda) {
  const int n = disc.grid.n;
  const int u = n - 1;
  const double h = disc.grid.h();
  const auto D = disc.frac(x);
  Eigen::VectorXd Hxx(n + 1), Hxp(n + 1), HxD(n + 1), Hpp(n + 1), HpD(n + 1), HDD(n + 1);
  Hxx.setZero(), Hxp.setZero(), HxD.setZero(), Hpp.setZero(), HpD.setZero(), HDD.setZero();
  for (int m = 1; m <= n; ++m) {
    const VarEnv e = disc.env(x, D, m, lambda);
    Hxx[m] = d.Lxx.eval(e);
    Hxp[m] = d.Lxp.eval(e);
    HxD[m] = d.LxD.eval(e);
    Hpp[m] = d.Lpp.eval(e);
    HpD[m] = d.LpD.eval(e);
    HDD[m] = d.LDD.eval(e);
  }
  // Column c of the interior block is node c+1.
  auto inside = [&](int node) { return node >= 1 && node <= n - 1; };
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(u, u);

  // G restricted to rows 1..n and interior columns.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, u);
  for (int m = 1; m <= n; ++m)
    for (int k = 1; k <= std::min(m, n - 1); ++k) G(m - 1, k - 1) = disc.scale * disc.w[m - k];

  for (int m = 1; m <= n; ++m) {
    // Sparse rows: X has (m, 1); P has (m-1, -1/h), (m, 1/h).
    const int pn[2] = {m - 1, m};
    const double pv[2] = {-1.0 / h, 1.0 / h};
    if (inside(m)) J(m - 1, m - 1) += Hxx[m];
    for (int s = 0; s < 2; ++s) {
      if (!inside(pn[s])) continue;
      for (int r = 0; r < 2; ++r)
        if (inside(pn[r])) J(pn[s] - 1, pn[r] - 1) += Hpp[m] * pv[s] * pv[r];
      if (inside(m)) {
        J(m - 1, pn[s] - 1) += Hxp[m] * pv[s];
        J(pn[s] - 1, m - 1) += Hxp[m] * pv[s];
      }
    }
    if (HxD[m] != 0.0 && inside(m)) {
      for (int c = 0; c < u; ++c) {
        const double v = HxD[m] * G(m - 1, c);
        J(m - 1, c) += v;
        J(c, m - 1) += v;
      }
    }
    if (HpD[m] != 0.0) {
      for (int s = 0; s < 2; ++s) {
        if (!inside(pn[s])) continue;
        for (int c = 0; c < u; ++c) {
          const double v = HpD[m] * pv[s] * G(m - 1, c);
          J(pn[s] - 1, c) += v;
          J(c, pn[s] - 1) += v;
        }
      }
    }
  }
  const Eigen::VectorXd hdd = HDD.tail(n);
  if (hdd.cwiseAbs().maxCoeff() > 0.0) J.noalias() += G.transpose() * hdd.asDiagonal() * G;
  return J;
}

std::vector<double> assemble(const BasicFvp& p, const UniformGrid& grid, const Eigen::VectorXd& z) {
  std::vector<double> x(grid.n + 1);
  x.front() = p.xa;
  x.back() = p.xb;
  for (int i = 1; i < grid.n; ++i) x[i] = z[i - 1];
  return x;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd linear_guess(const BasicFvp& p, const UniformGrid& grid) {
  Eigen::VectorXd z(grid.n - 1);
  for (int i = 1; i < grid.n; ++i) z[i - 1] = p.xa + (p.xb - p.xa) * (grid.t(i) - p.a) / (p.b - p.a);
  return z;
}

// Interior values on `fine` interpolated linearly from a solution on a coarser grid.
Eigen::VectorXd interpolate(const DiscreteSolution& coarse, const UniformGrid& fine) {
  const auto tc = coarse.grid.nodes();
  Eigen::VectorXd z(fine.n - 1);
  for (int i = 1; i < fine.n; ++i) {
    const double t = fine.t(i);
    auto it = std::upper_bound(tc.begin(), tc.end(), t);
    std::size_t j = static_cast<std::size_t>(it - tc.begin());
    j = std::clamp<std::size_t>(j, 1, tc.size() - 1);
    const double w = (t - tc[j - 1]) / (tc[j] - tc[j - 1]);
    z[i - 1] = (1.0 - w) * coarse.x[j - 1] + w * coarse.x[j];
  }
  return z;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

using Residual = std::function<std::vector<double>(const UniformGrid&, const std::vector<double>&)>;

// Newton on the interior unknowns; on failure, solve on a grid of half the size
// and start again from its interpolant.
DiscreteSolution solve_with_continuation(const BasicFvp& p, int n, const NewtonOptions& opts,
                                         const LagrangianDerivs& d, const Residual& residual) {
  const auto t0 = std::chrono::steady_clock::now();
  const UniformGrid grid(p.a, p.b, n);
  const Discretization disc(grid, p.alpha);
  VecFn F = [&](const Eigen::VectorXd& z) { return to_eigen(residual(grid, assemble(p, grid, z))); };
  JacFn J = [&](const Eigen::VectorXd& z) { return hessian(d, disc, assemble(p, grid, z), 0.0); };

  auto finish = [&](const NewtonResult& r, bool continued) {
    DiscreteSolution s;
    s.grid = grid;
    s.x = assemble(p, grid, r.x);
    s.info.iterations = r.iterations;
    s.info.residual = r.residual;
    s.info.continued = continued;
    s.info.wall_ms = elapsed_ms(t0);
    return s;
  };

  try {
    return finish(newton_solve(F, linear_guess(p, grid), opts, J), false);
  } catch (const SolverError& e) {
    if (n < 8) throw;
    spdlog::debug("direct: n = {} failed from the linear guess ({}), continuing from n = {}", n,
                  e.what(), n / 2);
  }
  const DiscreteSolution coarse = solve_with_continuation(p, n / 2, opts, d, residual);
  return finish(newton_solve(F, interpolate(coarse, grid), opts, J), true);
}

}  // namespace

BasicFvp BasicFvp::make(double alpha, double a, double b, const std::string& L, double xa,
                        double xb) {
  check_alpha(alpha);
  if (!(b > a)) throw UsageError(fmt::format("need b > a, got [{}, {}]", a, b));
  BasicFvp p;
  p.alpha = alpha;
  p.a = a;
  p.b = b;
  p.lagrangian = parse_expr(L);
  check_vars(p.lagrangian, false, "Lagrangian");
  p.xa = xa;
  p.xb = xb;
  p.uses_xp = p.lagrangian.depends_on(Var::xp);
  return p;
}

std::vector<double> euler_like_residual(const BasicFvp& p, const UniformGrid& grid,
                                        const std::vector<double>& candidate) {
  check_alpha(p.alpha);
  check_candidate(grid, candidate);
  const LagrangianDerivs d(p.lagrangian);
  return gradient(d, Discretization(grid, p.alpha), candidate, 0.0);
}

DiscreteSolution solve_euler_like(const BasicFvp& p, int n, const NewtonOptions& opts) {
  check_alpha(p.alpha);
  const LagrangianDerivs d(p.lagrangian);
  Residual r = [&](const UniformGrid& g, const std::vector<double>& x) {
    return gradient(d, Discretization(g, p.alpha), x, 0.0);
  };
  return solve_with_continuation(p, n, opts, d, r);
}

std::vector<double> first_variation_residual(const BasicFvp& p, const UniformGrid& grid,
                                             const std::vector<double>& candidate) {
  check_alpha(p.alpha);
  check_candidate(grid, candidate);
  if (p.uses_xp)
    throw UsageError("first-variation method does not support Lagrangians with xp");
  const int n = grid.n;
  const double h = grid.h();
  const LagrangianDerivs d(p.lagrangian);
  const auto nodes = grid.nodes();
  const TabularFunction xs{nodes, candidate};
  const auto D = frac_deriv_grid(xs, p.alpha, GlScheme::gl_left).x;
  std::vector<double> Lx(n + 1, 0.0), LD(n + 1, 0.0);
  for (int m = 1; m <= n; ++m) {
    VarEnv e{};
    e[static_cast<int>(Var::t)] = nodes[m];
    e[static_cast<int>(Var::x)] = candidate[m];
    e[static_cast<int>(Var::Dx)] = D[m];
    Lx[m] = d.Lx.eval(e);
    LD[m] = d.LD.eval(e);
  }
  std::vector<double> out(n - 1);
  TabularFunction eta{nodes, std::vector<double>(n + 1, 0.0)};
  for (int j = 1; j < n; ++j) {
    eta.x.assign(n + 1, 0.0);
    eta.x[j] = 1.0;  // hat function centred at t_j, sampled on the grid
    const auto Deta = frac_deriv_grid(eta, p.alpha, GlScheme::gl_left).x;
    double s = 0.0;
    for (int m = 1; m <= n; ++m) s += Lx[m] * eta.x[m] + LD[m] * Deta[m];
    out[j - 1] = h * s;
  }
  return out;
}

DiscreteSolution first_variation_solve(const BasicFvp& p, int n, const NewtonOptions& opts) {
  check_alpha(p.alpha);
  if (p.uses_xp)
    throw UsageError("first-variation method does not support Lagrangians with xp");
  const LagrangianDerivs d(p.lagrangian);
  Residual r = [&](const UniformGrid& g, const std::vector<double>& x) {
    auto v = first_variation_residual(p, g, x);
    for (double& e : v) e /= g.h();
    return v;
  };
  return solve_with_continuation(p, n, opts, d, r);
}

IsoResult isoperimetric_solve(const IsoperimetricFvp& p, int n, const NewtonOptions& opts) {
  const BasicFvp& b = p.base;
  check_alpha(b.alpha);
  check_vars(p.g, false, "constraint integrand");
  if (p.g.depends_on(Var::xp) || b.uses_xp)
    throw UsageError("isoperimetric problems with xp are not supported");
  const auto t0 = std::chrono::steady_clock::now();
  const UniformGrid grid(b.a, b.b, n);
  const Discretization disc(grid, b.alpha);
  const LagrangianDerivs dF(b.lagrangian + Expr::var(Var::lambda) * p.g);
  const LagrangianDerivs dg(p.g);
  const double h = grid.h();

  auto constraint = [&](const std::vector<double>& x) {
    const auto D = disc.frac(x);
    double s = 0.0;
    for (int m = 1; m <= n; ++m) s += p.g.eval(disc.env(x, D, m, 0.0));
    return h * s - p.K;
  };
  auto split = [&](const Eigen::VectorXd& z) {
    return std::pair{assemble(b, grid, z.head(n - 1)), z[n - 1]};
  };
  VecFn F = [&](const Eigen::VectorXd& z) {
    const auto [x, lambda] = split(z);
    Eigen::VectorXd r(n);
    r.head(n - 1) = to_eigen(gradient(dF, disc, x, lambda));
    r[n - 1] = constraint(x);
    return r;
  };
  JacFn J = [&](const Eigen::VectorXd& z) {
    const auto [x, lambda] = split(z);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    M.topLeftCorner(n - 1, n - 1) = hessian(dF, disc, x, lambda);
    const Eigen::VectorXd gg = to_eigen(gradient(dg, disc, x, 0.0));
    M.col(n - 1).head(n - 1) = gg;
    M.row(n - 1).head(n - 1) = h * gg.transpose();
    return M;
  };

  Eigen::VectorXd guess(n);
  guess.head(n - 1) = linear_guess(b, grid);
  guess[n - 1] = 1.0;
  const NewtonResult r = newton_solve(F, guess, opts, J);
  IsoResult out;
  out.sol.grid = grid;
  out.sol.x = assemble(b, grid, r.x.head(n - 1));
  out.lambda = r.x[n - 1];
  out.constraint_residual = constraint(out.sol.x);
  out.sol.info.iterations = r.iterations;
  out.sol.info.residual = r.residual;
  out.sol.info.wall_ms = elapsed_ms(t0);
  return out;
}

}  // namespace fvp
