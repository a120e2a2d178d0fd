#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fvp/approx.hpp"
#include "fvp/direct.hpp"
#include "fvp/expr.hpp"
#include "fvp/numerics.hpp"

namespace fvp {

enum class Terminal { fixed, free_state, free_time };

// min ∫_a^T L(t,x,u) dt + φ(T,x(T))  s.t.  m_int ẋ + m_frac ᶜD^α x = f(t,x,u), x(a) = xa.
struct OcProblem {
  double alpha = 0.5;
  double a = 0.0;
  Expr L;    // t, x, u
  Expr phi;  // t, x; literal 0 when absent
  Expr f;    // t, x, u
  double m_int = 1.0, m_frac = 1.0;
  double xa = 0.0;
  Terminal terminal = Terminal::fixed;
  double T = 1.0;   // final time; the starting guess when terminal == free_time
  double xT = 0.0;  // prescribed x(T) unless terminal == free_state

  // Throws UsageError on bad coefficients or foreign variables.
  void validate() const;
};

// Fractional problem rewritten with the n = 1 moment expansion
//   D^α x ≈ A k^{-α} x + B k^{1-α} ẋ - Σ_{p=2..N} C_p k^{1-p-α} Ṽ_p,
//   dṼ_p/dt = (1-p) k^{p-2} x,  Ṽ_p(a) = 0,  k = t - a,
// as a classical optimal control problem. y = (x, Ṽ_2..Ṽ_N, λ_1..λ_N).
class TransformedProblem {
 public:
  static TransformedProblem from_basic(const BasicFvp& p, int N);  // control u = ẋ
  static TransformedProblem from_oc(const OcProblem& p, int N);

  int N() const { return N_; }
  int state_dim() const { return N_; }
  int costate_dim() const { return N_; }
  double alpha() const { return alpha_; }
  double a() const { return a_; }
  double T() const { return T_; }
  bool from_basic_problem() const { return basic_; }
  const MomentCoeffs& coeffs() const { return c_; }

  // The substitute for D^α x given x, ẋ and Ṽ_2..Ṽ_N.
  double frac_term(double t, double x, double xdot, const double* V) const;

  double xdot(double t, const State& y, double u) const;
  double hamiltonian(double t, const State& y, double u) const;
  double dH_du(double t, const State& y, double u) const;
  // Solves ∂H/∂u = 0 by Newton with the symbolic ∂²H/∂u².
  double control(double t, const State& y) const;
  void rhs(double t, const State& y, State& dy) const;
  double running_cost(double t, const State& y, double u) const;
  double terminal_cost(double T, double xT) const;
  double terminal_cost_dt(double T, double xT) const;
  // N residuals at the final time: x or transversality of λ_1, then λ_p = 0.
  std::vector<double> terminal_residuals(const State& yT) const;

  double initial_x() const { return oc_.xa; }
  // Prescribed x(T), or x(a) when x(T) is free.
  double guess_final_x() const {
    return !basic_ && oc_.terminal == Terminal::free_state ? oc_.xa : xend_;
  }
  void set_final_time(double T) { T_ = T; }

 private:
  struct Terms;
  Terms terms(double t, const State& y, double u) const;

  bool basic_ = true;
  int N_ = 2;
  double alpha_ = 0.5, a_ = 0.0, T_ = 1.0;
  MomentCoeffs c_;
  // basic problems
  LagrangianDerivs Ld_;
  double xend_ = 0.0;
  // optimal control problems
  OcProblem oc_;
  Expr Lx_, Lu_, Luu_, fx_, fu_, fuu_, phix_, phit_;
};

struct IndirectSolution {
  Trajectory traj;        // y along the mesh, in the original time
  std::vector<double> u;  // control at the mesh nodes
  double T = 1.0;
  double cost = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool multiple_shooting = false;

  std::vector<double> x() const { return traj.component(0); }
};

// Hamiltonian two-point BVP of the transformed problem. Collocation, with shooting
// on λ(a) as the fallback.
IndirectSolution solve_indirect_bvp(const TransformedProblem& tp, int steps,
                                    const NewtonOptions& opts = {});

// x(t) for the moment-transformed problem of ∫ (Dx - ẋ²) dt, x(0) = 0, x(1) = 1.
std::function<double(double)> closed_form_indirect_example2(double alpha, int N);

enum class OcMethod { transformed, fractional_conditions };

// Fractional necessary conditions with left (state) and right (costate) moment
// expansions: y = (x, Ṽ_2..Ṽ_N, λ, W_2..W_N), W_p(T) = 0.
IndirectSolution solve_fractional_conditions(const OcProblem& p, int N, int steps,
                                             const NewtonOptions& opts = {});

// Free final time: time rescaled to s ∈ [0,1] with T a shooting parameter.
IndirectSolution solve_free_time(const OcProblem& p, int N, int steps,
                                 OcMethod method = OcMethod::transformed,
                                 const NewtonOptions& opts = {});

// H at the final node of a solution (the free-time transversality quantity).
double final_hamiltonian(const OcProblem& p, int N, const IndirectSolution& s,
                         OcMethod method = OcMethod::transformed);

struct FdeSpec {
  Family family = Family::rl;  // rl or hadamard
  double alpha = 0.5;
  double a = 0.0, b = 1.0;
  Expr g;              // D^α x = g(t, x) - m_int ẋ
  double m_int = 0.0;
  double xa = 0.0;
  ExpansionMethod method = ExpansionMethod::moment(1, 2);  // moment(1,N) or taylor(1)
};

Trajectory solve_fde(const FdeSpec& spec, int steps);

// I^α x = rhs(t) on [a,b] by the n = 1 integral moment expansion.
struct FieSpec {
  double alpha = 0.5;
  double a = 0.0, b = 1.0;
  Expr rhs;  // t only
  double xa = 0.0;
  int N = 2;
};

// Returned nodes are uniform. The growing homogeneous mode of the reduced system
// is avoided by starting on the local power-law solution fitted to rhs.
Trajectory solve_fie(const FieSpec& spec, int steps);

// ∂L/∂x + tD_b^α ∂L/∂Dx - d/dt ∂L/∂ẋ along a candidate, at the given nodes.
// Dx of the candidate is computed by quadrature; the right derivative of ∂L/∂Dx
// uses the right moment expansion of order N.
std::vector<double> el_residual(const BasicFvp& p, const FunctionModel& candidate,
                                const std::vector<double>& nodes, int N = 8);

// min ∫_0^1 [(ᶜD^α x - g(t))² + z(t)] dt,  z(t) = ∫_0^t (x - h(τ))² dτ,  x(0) = 0, x(1) = xb,
// through the moment expansion and the classical maximum principle.
// y = (x, v_2..v_N, z, p_1, p_2..p_N, p_z).
struct IndIntProblem {
  double alpha = 0.5;
  Expr g;  // t
  Expr h;  // t
  double xb = 1.0;
};

IndirectSolution solve_indint(const IndIntProblem& p, int N, int steps,
                              const NewtonOptions& opts = {});

}  // namespace fvp
