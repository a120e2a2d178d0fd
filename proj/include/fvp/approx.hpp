#pragma once

#include <optional>
#include <vector>

#include "fvp/funcmodel.hpp"
#include "fvp/special.hpp"

namespace fvp {

enum class Side { left, right };
enum class Family { rl, caputo, hadamard };
enum class CoeffKind { derivative, integral, hadamard_derivative, hadamard_integral };

// Throughout, n is the highest integer derivative kept and N >= n+1 the
// truncation order. Derivative terms:
//   Σ_{i=0..n} A_i k^{i-α} x^(i)  +  Σ_{p=n+1..N} B_p k^{n-p-α} V_p,
//   V_p = (p-n) ∫_a^t (τ-a)^{p-n-1} x(τ) dτ,   k = t-a.
// Integral terms use k^{α+i} and k^{α+n-p}. Hadamard replaces t-a by ln(t/a),
// x^(i) by (t d/dt)^i x and dτ by dτ/τ.
struct MomentCoeffs {
  double alpha = 0.5;
  int n = 1;
  int N = 2;
  CoeffKind kind = CoeffKind::derivative;
  std::vector<double> A;  // A_0..A_n
  std::vector<double> B;  // B_{n+1}..B_N

  double Bp(int p) const { return B[static_cast<std::size_t>(p - n - 1)]; }

  // Named scalars of the n = 1 derivative expansion:
  //   D^α x ≈ A t^{-α} x + B t^{1-α} ẋ - Σ_p C_p t^{1-p-α} Ṽ_p,  Ṽ_p = (1-p)∫ τ^{p-2} x.
  double A_named() const { return A.at(0); }
  double B_named() const { return A.at(1); }
  double C_named(int p) const { return Bp(p); }
};

MomentCoeffs moment_coeffs(double alpha, int n, int N, CoeffKind kind);

// Tails of the coefficient series dropped by truncation. m = N - n - 1 >= 0 counts
// the moment terms kept beyond the first.
enum class TailKind { derivative, integral, integral_B };
double coeff_truncation_error(double alpha, int i, int m, TailKind kind);

enum class GlScheme { gl_left, gl_right, gl_shifted_left, diethelm_caputo };

// Grid schemes on uniform samples. x_dot_a is needed by Diethelm for 1 < α < 2.
TabularFunction frac_deriv_grid(const TabularFunction& samples, double alpha, GlScheme scheme,
                                std::optional<double> x_dot_a = std::nullopt);

struct ExpansionMethod {
  enum class Kind { taylor, moment };
  Kind kind = Kind::moment;
  int n = 1;  // moment only
  int N = 4;

  static ExpansionMethod taylor(int N) { return {Kind::taylor, 0, N}; }
  static ExpansionMethod moment(int n, int N) { return {Kind::moment, n, N}; }
};

// For side = left, `a` is the lower terminal and f.b() the right end; for
// side = right the terminal is `b` and the grid must lie in [a, b).
// Taylor with family hadamard is the base-0 Stirling series (a = 0 only).
std::vector<double> frac_deriv_expansion(const FunctionModel& f, double alpha, double a, double b,
                                         Side side, Family family, const ExpansionMethod& method,
                                         const std::vector<double>& grid);

std::vector<double> frac_integral_expansion(const FunctionModel& f, double alpha, double a,
                                            double b, Side side, Family family,
                                            const ExpansionMethod& method,
                                            const std::vector<double>& grid,
                                            bool retain_A = true);

// Moment states on the grid. Row j holds V_{n+1..N}(grid[j]) (left, from a) or
// W_{n+1..N}(grid[j]) (right, from b).
std::vector<std::vector<double>> moment_states(const FunctionModel& f, double a, double b, int n,
                                               int N, Side side, bool hadamard,
                                               const std::vector<double>& grid,
                                               double tol = 1e-12);

// (t d/dt)^k x at t, from ordinary derivatives.
double hadamard_power(const FunctionModel& f, int k, double t);

enum class BoundKind { deriv_taylor, deriv_moment, integral_moment, hadamard_deriv, hadamard_integral };

struct TruncationBound {
  double alpha = 0.5;
  int n = 1, N = 2;
  double L = 0.0;  // sampled sup norm of the derivative the bound needs
  double value = 0.0;
};

// Bound on |exact - truncated expansion| at t (left side, lower terminal a).
TruncationBound truncation_bound(double alpha, int n, int N, const FunctionModel& f, double t,
                                 double a, BoundKind kind);

struct TabularDerivResult {
  TabularFunction d;
  int N = 0;
  bool converged = false;
};

// Moment (n = 1) expansion on tabular data, raising N from N_start by one
// until successive results differ by less than epsilon in the Euclidean norm.
// The first node (t = a) is excluded from the returned table.
TabularDerivResult tabular_frac_deriv(const TabularFunction& data, double alpha, double epsilon,
                                      int N_start, int N_max);

}  // namespace fvp
