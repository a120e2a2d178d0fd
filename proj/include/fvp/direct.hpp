#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fvp/expr.hpp"
#include "fvp/numerics.hpp"

namespace fvp {

struct UniformGrid {
  double a = 0.0, b = 1.0;
  int n = 2;

  UniformGrid() = default;
  UniformGrid(double a, double b, int n);  // throws UsageError unless n >= 2, b > a
  double h() const { return (b - a) / n; }
  double t(int i) const { return i == n ? b : a + i * h(); }
  std::vector<double> nodes() const;
};

// L and its first and second partials in (x, xp, Dx), symbolic.
struct LagrangianDerivs {
  Expr L, Lx, Lp, LD, Lxx, Lxp, LxD, Lpp, LpD, LDD;

  LagrangianDerivs() = default;
  explicit LagrangianDerivs(const Expr& L);
};

struct BasicFvp {
  double alpha = 0.5;
  double a = 0.0, b = 1.0;
  Expr lagrangian;  // over t, x, xp, Dx
  double xa = 0.0, xb = 1.0;
  bool uses_xp = false;

  static BasicFvp make(double alpha, double a, double b, const std::string& L, double xa, double xb);
};

struct IsoperimetricFvp {
  BasicFvp base;
  Expr g;  // over t, x, Dx
  double K = 0.0;
};

struct SolveInfo {
  int iterations = 0;
  double residual = 0.0;
  double wall_ms = 0.0;
  bool continued = false;  // reached through grid continuation
};

struct DiscreteSolution {
  UniformGrid grid;
  std::vector<double> x;  // n+1 values including both boundaries
  SolveInfo info;
};

// Gradient of h Σ_{i=1..n} L(t_i, x_i, (x_i - x_{i-1})/h, D_i) divided by h, at the
// interior nodes, with D_i the left Grünwald-Letnikov sum.
std::vector<double> euler_like_residual(const BasicFvp& p, const UniformGrid& grid,
                                        const std::vector<double>& candidate);

DiscreteSolution solve_euler_like(const BasicFvp& p, int n, const NewtonOptions& opts = {});

// Discrete first variation J'[x, η_j], j = 1..n-1, with hat functions η_j.
std::vector<double> first_variation_residual(const BasicFvp& p, const UniformGrid& grid,
                                             const std::vector<double>& candidate);

DiscreteSolution first_variation_solve(const BasicFvp& p, int n, const NewtonOptions& opts = {});

struct IsoResult {
  DiscreteSolution sol;
  double lambda = 0.0;
  double constraint_residual = 0.0;  // h Σ g - K at the solution
};

IsoResult isoperimetric_solve(const IsoperimetricFvp& p, int n, const NewtonOptions& opts = {});

}  // namespace fvp
