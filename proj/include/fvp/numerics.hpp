#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace fvp {

enum class QuadRule { left_rect, trapezoid };

// Composite rule on a uniform grid; throws UsageError otherwise.
double quad(const std::vector<double>& nodes, const std::vector<double>& values, QuadRule rule);

// Trapezoid on arbitrary increasing nodes, total and running.
double trapz(const std::vector<double>& t, const std::vector<double>& y);
std::vector<double> cumulative_trapz(const std::vector<double>& t, const std::vector<double>& y);

struct GaussRule {
  std::vector<double> x, w;  // on [-1,1]
};
const GaussRule& gauss_legendre(int n);

// Adaptive Gauss-Legendre (8 vs 16 points, bisection) of a vector integrand.
using VecIntegrand = std::function<void(double t, double* out)>;
std::vector<double> integrate(const VecIntegrand& f, int dim, double lo, double hi,
                              double tol = 1e-12);
double integrate(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12);

// Running integrals from `from` to every node (nodes monotone, either direction).
// Row i holds the dim components of the integral over [from, nodes[i]].
std::vector<std::vector<double>> cumulative_integrals(const VecIntegrand& f, int dim, double from,
                                                      const std::vector<double>& nodes,
                                                      double tol = 1e-12);

using State = std::vector<double>;
using Rhs = std::function<void(double t, const State& y, State& dy)>;

struct OdeSystem {
  int dim = 1;
  Rhs rhs;
  bool singular_start = false;
  double delta = 1e-8;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<State> y;

  std::vector<double> component(std::size_t k) const;
};

// Classical RK4. With singular_start the integration begins at t0 + delta.
Trajectory rk4_solve(const OdeSystem& sys, double t0, double t1, const State& y0, int steps);
// RK4 through the given nodes (first node carries y0).
Trajectory rk4_solve(const OdeSystem& sys, const std::vector<double>& nodes, const State& y0);

// Nodes covering [t0,t1] with roughly uniform spacing (t1-t0)/steps, refined
// geometrically (ratio 1+kappa) toward singular ends. A singular end is offset by delta.
std::vector<double> graded_mesh(double t0, double t1, int steps, bool singular_left,
                                bool singular_right, double delta = 1e-8, double kappa = 0.25);

struct NewtonOptions {
  int max_iter = 100;
  double tol = 1e-10;
  double fd_step = 1e-7;
  int max_halvings = 30;
  // A full step below step_tol (1 + |x|∞) that cannot reduce the residual ends
  // the iteration as converged: the residual is at its rounding floor.
  double step_tol = 1e-12;
};

struct NewtonResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> history;  // ‖F‖∞ after every accepted iterate, starting with the guess
};

using VecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Damped Newton. Forward-difference Jacobian unless `jac` is given.
// Throws SingularJacobian or SolverError with the last iterate attached.
NewtonResult newton_solve(const VecFn& F, const Eigen::VectorXd& guess,
                          const NewtonOptions& opts = {}, const JacFn& jac = nullptr);

// Central-difference Jacobian, as used by newton_solve.
Eigen::MatrixXd fd_jacobian(const VecFn& F, const Eigen::VectorXd& x, double step);

// Shooting on unknown initial values plus trailing parameters.
struct BvpSpec {
  int dim = 1;
  int n_unknowns = 0;
  int n_params = 0;  // trailing entries of the unknown vector passed to rhs
  std::function<void(double t, const State& y, State& dy, const std::vector<double>& params)> rhs;
  std::vector<double> nodes;
  // Full initial state at nodes.front() from the unknown vector.
  std::function<State(const std::vector<double>& z)> initial;
  // Residuals at nodes.back(); size n_unknowns.
  std::function<std::vector<double>(const State& yT, const std::vector<double>& z)> terminal;
};

struct ShootResult {
  Trajectory traj;
  std::vector<double> z;
  int iterations = 0;
  double residual = 0.0;
  bool multiple_shooting = false;
  bool collocation = false;
};

// Single shooting; after a failure retries with 4-segment multiple shooting.
ShootResult shoot_bvp(const BvpSpec& spec, const std::vector<double>& guess,
                      const NewtonOptions& opts = {});

// Hermite-Simpson collocation on spec.nodes: Newton over every nodal state and the
// unknown vector at once, with a sparse LU. y_guess seeds the nodal states.
// Convergence is on defects relative to 1 + the magnitude of the terms in each row;
// boundary rows are absolute.
// Suited to systems whose modes grow in both directions, where shooting fails.
ShootResult collocation_bvp(const BvpSpec& spec, const std::vector<double>& guess,
                            const std::function<State(double)>& y_guess,
                            const NewtonOptions& opts = {});

}  // namespace fvp
