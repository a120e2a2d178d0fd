#include "fvp/indirect.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fvp/error.hpp"
#include "fvp/special.hpp"

namespace fvp {

namespace {

constexpr double kDelta = 1e-8;

VarEnv make_env(double t, double x, double u = 0.0) {
  VarEnv e{};
  e[static_cast<int>(Var::t)] = t;
  e[static_cast<int>(Var::x)] = x;
  e[static_cast<int>(Var::u)] = u;
  return e;
}

void require_only(const Expr& e, std::initializer_list<Var> allowed, const char* what) {
  for (Var v : {Var::t, Var::x, Var::xp, Var::Dx, Var::u, Var::lambda}) {
    if (std::find(allowed.begin(), allowed.end(), v) != allowed.end()) continue;
    if (e.depends_on(v))
      throw UsageError(fmt::format("{} may not depend on '{}'", what, var_name(v)));
  }
}

void check_N(int N) {
  if (N < 2) throw UsageError(fmt::format("moment expansion needs N >= 2, got {}", N));
}


// Newton on a scalar equation g(u) = 0 with derivative dg. Stops once the step
// is at rounding level or has stopped shrinking there.
template <class G, class DG>
double scalar_newton(G g, DG dg, double u) {
  double last = HUGE_VAL;
  for (int it = 0; it < 60; ++it) {
    const double d = dg(u);
    if (!(std::fabs(d) > 0.0) || !std::isfinite(d))
      throw SolverError(fmt::format("control elimination: ∂²H/∂u² = {} at u = {}", d, u));
    const double step = g(u) / d;
    u -= step;
    if (!std::isfinite(u)) throw SolverError("control elimination diverged");
    const double size = std::fabs(step) / (1.0 + std::fabs(u));
    if (size <= 1e-14 || (size <= 1e-9 && size >= 0.5 * last)) return u;
    last = size;
  }
  throw SolverError("control elimination: Newton did not settle");
}

}  // namespace

void OcProblem::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw UsageError(fmt::format("optimal control needs 0 < alpha < 1, got {}", alpha));
  if (m_int == 0.0 && m_frac == 0.0) throw UsageError("dynamics need m_int or m_frac nonzero");
  if (!(T > a)) throw UsageError(fmt::format("final time {} must exceed a = {}", T, a));
  require_only(L, {Var::t, Var::x, Var::u}, "running cost");
  require_only(f, {Var::t, Var::x, Var::u}, "dynamics");
  require_only(phi, {Var::t, Var::x}, "terminal cost");
}

struct TransformedProblem::Terms {
  double ell, ell_u, ell_uu, ell_x;
  std::vector<double> ell_V;
  double xd, xd_u, xd_uu, xd_x;
  std::vector<double> xd_V;
};

TransformedProblem TransformedProblem::from_basic(const BasicFvp& p, int N) {
  check_N(N);
  TransformedProblem tp;
  tp.basic_ = true;
  tp.N_ = N;
  tp.alpha_ = p.alpha;
  tp.a_ = p.a;
  tp.T_ = p.b;
  tp.c_ = moment_coeffs(p.alpha, 1, N, CoeffKind::derivative);
  tp.Ld_ = LagrangianDerivs(p.lagrangian);
  tp.oc_.xa = p.xa;
  tp.xend_ = p.xb;
  return tp;
}

TransformedProblem TransformedProblem::from_oc(const OcProblem& p, int N) {
  check_N(N);
  p.validate();
  TransformedProblem tp;
  tp.basic_ = false;
  tp.N_ = N;
  tp.alpha_ = p.alpha;
  tp.a_ = p.a;
  tp.T_ = p.T;
  tp.c_ = moment_coeffs(p.alpha, 1, N, CoeffKind::derivative);
  tp.oc_ = p;
  tp.xend_ = p.xT;
  tp.Lx_ = diff_expr(p.L, Var::x);
  tp.Lu_ = diff_expr(p.L, Var::u);
  tp.Luu_ = diff_expr(tp.Lu_, Var::u);
  tp.fx_ = diff_expr(p.f, Var::x);
  tp.fu_ = diff_expr(p.f, Var::u);
  tp.fuu_ = diff_expr(tp.fu_, Var::u);
  tp.phix_ = diff_expr(p.phi, Var::x);
  tp.phit_ = diff_expr(p.phi, Var::t);
  return tp;
}

double TransformedProblem::frac_term(double t, double x, double xdot, const double* V) const {
  const double k = t - a_;
  double s = c_.A_named() * std::pow(k, -alpha_) * x + c_.B_named() * std::pow(k, 1.0 - alpha_) * xdot;
  for (int p = 2; p <= N_; ++p) s -= c_.C_named(p) * std::pow(k, 1.0 - p - alpha_) * V[p - 2];
  return s;
}

TransformedProblem::Terms TransformedProblem::terms(double t, const State& y, double u) const {
  const double k = t - a_;
  const double x = y[0];
  const double ka = std::pow(k, -alpha_);
  const double b1 = c_.B_named() * std::pow(k, 1.0 - alpha_);
  std::vector<double> ck(static_cast<std::size_t>(N_ - 1));
  double zeta0 = c_.A_named() * ka * x;
  for (int p = 2; p <= N_; ++p) {
    ck[static_cast<std::size_t>(p - 2)] = c_.C_named(p) * std::pow(k, 1.0 - p - alpha_);
    zeta0 -= ck[static_cast<std::size_t>(p - 2)] * y[static_cast<std::size_t>(p - 1)];
  }
  Terms r;
  r.ell_V.assign(ck.size(), 0.0);
  r.xd_V.assign(ck.size(), 0.0);
  if (basic_) {
    VarEnv e{};
    e[static_cast<int>(Var::t)] = t;
    e[static_cast<int>(Var::x)] = x;
    e[static_cast<int>(Var::xp)] = u;
    e[static_cast<int>(Var::Dx)] = zeta0 + b1 * u;
    const double LD = Ld_.LD.eval(e);
    r.ell = Ld_.L.eval(e);
    r.ell_u = Ld_.Lp.eval(e) + LD * b1;
    r.ell_uu = Ld_.Lpp.eval(e) + 2.0 * Ld_.LpD.eval(e) * b1 + Ld_.LDD.eval(e) * b1 * b1;
    r.ell_x = Ld_.Lx.eval(e) + LD * c_.A_named() * ka;
    for (std::size_t j = 0; j < ck.size(); ++j) r.ell_V[j] = -LD * ck[j];
    r.xd = u;
    r.xd_u = 1.0;
    r.xd_uu = 0.0;
    r.xd_x = 0.0;
  } else {
    const VarEnv e = make_env(t, x, u);
    const double mf = oc_.m_frac;
    const double den = oc_.m_int + mf * b1;
    if (den == 0.0 || !std::isfinite(den))
      throw DomainError(fmt::format("vanishing coefficient of x' at t = {}", t));
    const double caputo = oc_.xa * ka * rgamma(1.0 - alpha_);
    r.ell = oc_.L.eval(e);
    r.ell_u = Lu_.eval(e);
    r.ell_uu = Luu_.eval(e);
    r.ell_x = Lx_.eval(e);
    r.xd = (oc_.f.eval(e) - mf * (zeta0 - caputo)) / den;
    r.xd_u = fu_.eval(e) / den;
    r.xd_uu = fuu_.eval(e) / den;
    r.xd_x = (fx_.eval(e) - mf * c_.A_named() * ka) / den;
    for (std::size_t j = 0; j < ck.size(); ++j) r.xd_V[j] = mf * ck[j] / den;
  }
  return r;
}

double TransformedProblem::xdot(double t, const State& y, double u) const { return terms(t, y, u).xd; }

double TransformedProblem::hamiltonian(double t, const State& y, double u) const {
  const auto r = terms(t, y, u);
  const double k = t - a_;
  double H = r.ell + y[static_cast<std::size_t>(N_)] * r.xd;
  for (int p = 2; p <= N_; ++p)
    H += y[static_cast<std::size_t>(N_ + p - 1)] * (1.0 - p) * std::pow(k, p - 2.0) * y[0];
  return H;
}

double TransformedProblem::dH_du(double t, const State& y, double u) const {
  const auto r = terms(t, y, u);
  return r.ell_u + y[static_cast<std::size_t>(N_)] * r.xd_u;
}

double TransformedProblem::control(double t, const State& y) const {
  const double l1 = y[static_cast<std::size_t>(N_)];
  return scalar_newton([&](double u) { return dH_du(t, y, u); },
                       [&](double u) {
                         const auto r = terms(t, y, u);
                         return r.ell_uu + l1 * r.xd_uu;
                       },
                       0.0);
}

void TransformedProblem::rhs(double t, const State& y, State& dy) const {
  const double u = control(t, y);
  const auto r = terms(t, y, u);
  const double k = t - a_;
  const auto n = static_cast<std::size_t>(N_);
  const double l1 = y[n];
  dy[0] = r.xd;
  double hx = r.ell_x + l1 * r.xd_x;
  for (int p = 2; p <= N_; ++p) {
    const double kp = (1.0 - p) * std::pow(k, p - 2.0);
    dy[static_cast<std::size_t>(p - 1)] = kp * y[0];
    hx += y[n + static_cast<std::size_t>(p - 1)] * kp;
    dy[n + static_cast<std::size_t>(p - 1)] =
        -(r.ell_V[static_cast<std::size_t>(p - 2)] + l1 * r.xd_V[static_cast<std::size_t>(p - 2)]);
  }
  dy[n] = -hx;
}

double TransformedProblem::running_cost(double t, const State& y, double u) const {
  return terms(t, y, u).ell;
}

double TransformedProblem::terminal_cost(double T, double xT) const {
  return basic_ ? 0.0 : oc_.phi.eval(make_env(T, xT));
}

double TransformedProblem::terminal_cost_dt(double T, double xT) const {
  return basic_ ? 0.0 : phit_.eval(make_env(T, xT));
}

std::vector<double> TransformedProblem::terminal_residuals(const State& yT) const {
  const auto n = static_cast<std::size_t>(N_);
  std::vector<double> r;
  if (!basic_ && oc_.terminal == Terminal::free_state)
    r.push_back(yT[n] - phix_.eval(make_env(T_, yT[0])));
  else
    r.push_back(yT[0] - xend_);
  for (std::size_t p = 1; p < n; ++p) r.push_back(yT[n + p]);
  return r;
}


namespace {

std::vector<double> zeros(int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); }

// Shooting result mapped back to original time t = a + scale * s.
IndirectSolution finish_transformed(const TransformedProblem& tp, const ShootResult& sr, double a,
                                    double scale) {
  IndirectSolution s;
  s.traj = sr.traj;
  for (double& t : s.traj.t) t = a + scale * t;
  s.T = a + scale * sr.traj.t.back();
  std::vector<double> ell;
  for (std::size_t i = 0; i < s.traj.t.size(); ++i) {
    const double u = tp.control(s.traj.t[i], s.traj.y[i]);
    s.u.push_back(u);
    ell.push_back(tp.running_cost(s.traj.t[i], s.traj.y[i], u));
  }
  s.cost = trapz(s.traj.t, ell) + tp.terminal_cost(s.T, s.traj.y.back()[0]);
  s.iterations = sr.iterations;
  s.residual = sr.residual;
  s.multiple_shooting = sr.multiple_shooting;
  return s;
}

State start_state(int dim, double x0, const std::vector<double>& z, std::size_t at, std::size_t count) {
  State y(static_cast<std::size_t>(dim), 0.0);
  y[0] = x0;
  for (std::size_t j = 0; j < count; ++j) y[at + j] = z[j];
  return y;
}

// Slot j is carried as (τ - origin)^{e_j} y_j, which tames costates that blow up
// like (τ - origin)^{-e_j} at a singular start. Unknowns written into weighted slots
// by spec.initial are taken in the weighted scale.
struct Weighting {
  double origin = 0.0;
  std::vector<double> e;
};

// Collocation first; shooting on the unweighted system if collocation fails.
ShootResult run_bvp(const BvpSpec& spec, const std::vector<double>& guess,
                    const std::function<State(double)>& y_guess, const Weighting& wt,
                    const NewtonOptions& opts) {
  const auto d = static_cast<std::size_t>(spec.dim);
  auto factor = [&](double tau, std::size_t j) {
    return wt.e.empty() || wt.e[j] == 0.0 ? 1.0 : std::pow(tau - wt.origin, wt.e[j]);
  };
  auto unweight = [&](double tau, State w) {
    for (std::size_t j = 0; j < d; ++j) w[j] /= factor(tau, j);
    return w;
  };
  BvpSpec ws = spec;
  ws.rhs = [&](double tau, const State& w, State& dw, const std::vector<double>& params) {
    const State y = unweight(tau, w);
    spec.rhs(tau, y, dw, params);
    for (std::size_t j = 0; j < d; ++j) {
      if (wt.e.empty() || wt.e[j] == 0.0) continue;
      const double k = tau - wt.origin;
      dw[j] = wt.e[j] * std::pow(k, wt.e[j] - 1.0) * y[j] + std::pow(k, wt.e[j]) * dw[j];
    }
  };
  const double t_end = spec.nodes.back();
  ws.terminal = [&](const State& wT, const std::vector<double>& z) {
    return spec.terminal(unweight(t_end, wT), z);
  };
  auto w_guess = [&](double tau) {
    State y = y_guess(tau);
    for (std::size_t j = 0; j < d; ++j) y[j] *= factor(tau, j);
    return y;
  };
  try {
    auto r = collocation_bvp(ws, guess, w_guess, opts);
    for (std::size_t i = 0; i < r.traj.t.size(); ++i) r.traj.y[i] = unweight(r.traj.t[i], r.traj.y[i]);
    return r;
  } catch (const SolverError& e) {
    spdlog::info("collocation failed ({}); trying shooting", e.what());
  }
  return shoot_bvp(spec, guess, opts);
}

// Unknown costates at the start, x interpolated linearly toward its target.
std::function<State(double)> linear_guess(int dim, double t0, double x0, double t1, double x1) {
  return [=](double t) {
    State y(static_cast<std::size_t>(dim), 0.0);
    y[0] = x0 + (x1 - x0) * (t - t0) / (t1 - t0);
    return y;
  };
}

// λ_p ~ k^{2-p-α} near the start for the moment-transformed problems.
Weighting costate_weights(int dim, std::size_t first, int N, double alpha, double origin) {
  Weighting w{origin, std::vector<double>(static_cast<std::size_t>(dim), 0.0)};
  for (int p = 2; p <= N; ++p) w.e[first + static_cast<std::size_t>(p - 2)] = p - 2.0 + alpha;
  return w;
}

}  // namespace

namespace {

ShootResult fixed_time_bvp(const TransformedProblem& tp, int steps, const NewtonOptions& opts) {
  const int N = tp.N();
  const auto n = static_cast<std::size_t>(N);
  BvpSpec spec;
  spec.dim = 2 * N;
  spec.n_unknowns = N;
  spec.rhs = [&tp](double t, const State& y, State& dy, const std::vector<double>&) { tp.rhs(t, y, dy); };
  spec.nodes = graded_mesh(tp.a(), tp.T(), steps, true, false, kDelta);
  spec.initial = [&](const std::vector<double>& z) {
    return start_state(2 * N, tp.initial_x(), z, n, n);
  };
  spec.terminal = [&tp](const State& yT, const std::vector<double>&) {
    return tp.terminal_residuals(yT);
  };
  return run_bvp(spec, zeros(N), linear_guess(2 * N, tp.a(), tp.initial_x(), tp.T(), tp.guess_final_x()),
                 costate_weights(2 * N, n + 1, N, tp.alpha(), tp.a()), opts);
}

}  // namespace

IndirectSolution solve_indirect_bvp(const TransformedProblem& tp, int steps, const NewtonOptions& opts) {
  return finish_transformed(tp, fixed_time_bvp(tp, steps, opts), 0.0, 1.0);
}

std::function<double(double)> closed_form_indirect_example2(double alpha, int N) {
  check_N(N);
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("closed form needs 0 < alpha < 1");
  const auto c = moment_coeffs(alpha, 1, N, CoeffKind::derivative);
  double sum_m = 0.0;
  std::vector<double> q(static_cast<std::size_t>(N + 1), 0.0);
  double sum_q = 0.0;
  for (int p = 2; p <= N; ++p) {
    sum_m += c.C_named(p) * (1.0 - p) / ((1.0 - alpha) * (2.0 - p - alpha));
    q[static_cast<std::size_t>(p)] = c.C_named(p) / (2.0 * p * (2.0 - p - alpha));
    sum_q += q[static_cast<std::size_t>(p)];
  }
  const double M = (c.B_named() - c.A_named() / (1.0 - alpha) - sum_m) / (2.0 * (2.0 - alpha));
  return [=](double t) {
    double x = M * std::pow(t, 2.0 - alpha) + (1.0 - M + sum_q) * t;
    for (int p = 2; p <= N; ++p) x -= q[static_cast<std::size_t>(p)] * std::pow(t, p);
    return x;
  };
}

namespace {

// Fractional necessary conditions with the moment expansions substituted.
// y = (x, Ṽ_2..Ṽ_N, λ, W_2..W_N); s_right = T - t.
struct FncSystem {
  OcProblem p;
  int N;
  MomentCoeffs c;
  Expr Lx, Lu, Luu, fx, fu, fuu, phix;

  FncSystem(const OcProblem& prob, int N_) : p(prob), N(N_) {
    check_N(N);
    p.validate();
    c = moment_coeffs(p.alpha, 1, N, CoeffKind::derivative);
    Lx = diff_expr(p.L, Var::x);
    Lu = diff_expr(p.L, Var::u);
    Luu = diff_expr(Lu, Var::u);
    fx = diff_expr(p.f, Var::x);
    fu = diff_expr(p.f, Var::u);
    fuu = diff_expr(fu, Var::u);
    phix = diff_expr(p.phi, Var::x);
  }

  std::size_t lam() const { return static_cast<std::size_t>(N); }

  double control(double t, const State& y) const {
    const double l = y[lam()];
    return scalar_newton(
        [&](double u) {
          const auto e = make_env(t, y[0], u);
          return Lu.eval(e) + l * fu.eval(e);
        },
        [&](double u) {
          const auto e = make_env(t, y[0], u);
          return Luu.eval(e) + l * fuu.eval(e);
        },
        0.0);
  }

  double hamiltonian(double t, const State& y) const {
    const double u = control(t, y);
    const auto e = make_env(t, y[0], u);
    return p.L.eval(e) + y[lam()] * p.f.eval(e);
  }

  void rhs(double t, double T, const State& y, State& dy) const {
    const double al = p.alpha;
    const double k = t - p.a, s = T - t;
    const double u = control(t, y);
    const auto e = make_env(t, y[0], u);
    const double l = y[lam()];
    double zeta = c.A_named() * std::pow(k, -al) * y[0] - p.xa * std::pow(k, -al) * rgamma(1.0 - al);
    double zr = c.A_named() * std::pow(s, -al) * l;
    for (int q = 2; q <= N; ++q) {
      const auto j = static_cast<std::size_t>(q - 1);
      zeta -= c.C_named(q) * std::pow(k, 1.0 - q - al) * y[j];
      zr -= c.C_named(q) * std::pow(s, 1.0 - q - al) * y[lam() + j];
      dy[j] = (1.0 - q) * std::pow(k, q - 2.0) * y[0];
      dy[lam() + j] = -(1.0 - q) * std::pow(s, q - 2.0) * l;
    }
    const double den_l = p.m_int + p.m_frac * c.B_named() * std::pow(k, 1.0 - al);
    const double den_r = p.m_int + p.m_frac * c.B_named() * std::pow(s, 1.0 - al);
    if (den_l == 0.0 || den_r == 0.0) throw DomainError("vanishing coefficient of a first derivative");
    dy[0] = (p.f.eval(e) - p.m_frac * zeta) / den_l;
    const double Hx = Lx.eval(e) + l * fx.eval(e);
    dy[lam()] = (-Hx + p.m_frac * zr) / den_r;
  }
};

IndirectSolution finish_fnc(const FncSystem& sys, const ShootResult& sr, double a, double scale) {
  IndirectSolution s;
  s.traj = sr.traj;
  for (double& t : s.traj.t) t = a + scale * t;
  s.T = a + scale * 1.0;
  std::vector<double> ell;
  for (std::size_t i = 0; i < s.traj.t.size(); ++i) {
    const double u = sys.control(s.traj.t[i], s.traj.y[i]);
    s.u.push_back(u);
    ell.push_back(sys.p.L.eval(make_env(s.traj.t[i], s.traj.y[i][0], u)));
  }
  s.cost = trapz(s.traj.t, ell) + sys.p.phi.eval(make_env(s.T, s.traj.y.back()[0]));
  s.iterations = sr.iterations;
  s.residual = sr.residual;
  s.multiple_shooting = sr.multiple_shooting;
  return s;
}

// Shared by fixed and free final time: time is s ∈ [0,1], t = a + (T - a) s.
IndirectSolution fnc_shoot(const OcProblem& p, int N, int steps, bool free_T,
                           const NewtonOptions& opts) {
  const FncSystem sys(p, N);
  const auto n = static_cast<std::size_t>(N);
  BvpSpec spec;
  spec.dim = 2 * N;
  spec.n_unknowns = N + (free_T ? 1 : 0);
  spec.n_params = free_T ? 1 : 0;
  auto final_time = [&](const std::vector<double>& params) { return free_T ? params[0] : p.T; };
  spec.rhs = [&](double s, const State& y, State& dy, const std::vector<double>& params) {
    const double T = final_time(params);
    sys.rhs(p.a + (T - p.a) * s, T, y, dy);
    for (double& v : dy) v *= T - p.a;
  };
  // Offsets scale with T, so the relative offset is fixed in s.
  spec.nodes = graded_mesh(0.0, 1.0, steps, true, true, kDelta);
  spec.initial = [&](const std::vector<double>& z) { return start_state(2 * N, p.xa, z, n, n); };
  spec.terminal = [&](const State& yT, const std::vector<double>& z) {
    std::vector<double> r;
    const double T = free_T ? z.back() : p.T;
    if (p.terminal == Terminal::free_state)
      r.push_back(p.m_int * yT[n] - sys.phix.eval(make_env(T, yT[0])));
    else
      r.push_back(yT[0] - p.xT);
    for (std::size_t j = 1; j < n; ++j) r.push_back(yT[n + j]);
    if (free_T) r.push_back(yT[n]);
    return r;
  };
  auto guess = zeros(N);
  if (free_T) guess.push_back(p.T);
  const double x1 = p.terminal == Terminal::free_state ? p.xa : p.xT;
  const auto sr = run_bvp(spec, guess, linear_guess(2 * N, 0.0, p.xa, 1.0, x1), Weighting{}, opts);
  const double T = free_T ? sr.z.back() : p.T;
  return finish_fnc(sys, sr, p.a, T - p.a);
}

}  // namespace

IndirectSolution solve_fractional_conditions(const OcProblem& p, int N, int steps,
                                             const NewtonOptions& opts) {
  if (p.terminal == Terminal::free_time) return fnc_shoot(p, N, steps, true, opts);
  return fnc_shoot(p, N, steps, false, opts);
}

IndirectSolution solve_free_time(const OcProblem& p, int N, int steps, OcMethod method,
                                 const NewtonOptions& opts) {
  if (p.terminal != Terminal::free_time)
    throw UsageError("solve_free_time needs a free final time problem");
  if (method == OcMethod::fractional_conditions) return fnc_shoot(p, N, steps, true, opts);

  TransformedProblem tp = TransformedProblem::from_oc(p, N);
  const auto n = static_cast<std::size_t>(N);
  BvpSpec spec;
  spec.dim = 2 * N;
  spec.n_unknowns = N + 1;
  spec.n_params = 1;
  spec.rhs = [&](double s, const State& y, State& dy, const std::vector<double>& params) {
    const double T = params[0];
    tp.rhs(p.a + (T - p.a) * s, y, dy);
    for (double& v : dy) v *= T - p.a;
  };
  spec.nodes = graded_mesh(0.0, 1.0, steps, true, false, kDelta);
  spec.initial = [&](const std::vector<double>& z) { return start_state(2 * N, p.xa, z, n, n); };
  spec.terminal = [&](const State& yT, const std::vector<double>& z) {
    const double T = z.back();
    std::vector<double> r{yT[0] - p.xT};
    for (std::size_t j = 1; j < n; ++j) r.push_back(yT[n + j]);
    const double u = tp.control(T, yT);
    r.push_back(tp.hamiltonian(T, yT, u) + tp.terminal_cost_dt(T, yT[0]));
    return r;
  };
  const auto wt = costate_weights(2 * N, n + 1, N, p.alpha, 0.0);
  const double span = p.T - p.a;

  // Start from the fixed-time solution at the initial T, mapped to s.
  std::optional<ShootResult> seed;
  try {
    OcProblem fixed = p;
    fixed.terminal = Terminal::fixed;
    seed = fixed_time_bvp(TransformedProblem::from_oc(fixed, N), steps, opts);
  } catch (const SolverError& e) {
    spdlog::info("free time: no fixed-time seed at T = {} ({})", p.T, e.what());
  }
  std::optional<ShootResult> solved;
  if (seed) {
    const Trajectory& tr = seed->traj;
    const State& y0 = tr.y.front();
    std::vector<double> guess;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = wt.e[n + j];
      guess.push_back(y0[n + j] * std::pow((tr.t.front() - p.a) / span, e));
    }
    guess.push_back(p.T);
    auto y_guess = [&](double s) {
      const double t = std::clamp(p.a + span * s, tr.t.front(), tr.t.back());
      const auto it = std::upper_bound(tr.t.begin(), tr.t.end(), t);
      const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - tr.t.begin()), 1, tr.t.size() - 1);
      const double w = (t - tr.t[j - 1]) / (tr.t[j] - tr.t[j - 1]);
      State y(tr.y[j].size());
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = (1 - w) * tr.y[j - 1][k] + w * tr.y[j][k];
      return y;
    };
    try {
      solved = run_bvp(spec, guess, y_guess, wt, opts);
    } catch (const SolverError& e) {
      spdlog::info("free time: seeded solve failed ({}); retrying from a linear guess", e.what());
    }
  }
  if (!solved) {
    auto guess = zeros(N);
    guess.push_back(p.T);
    solved = run_bvp(spec, guess, linear_guess(2 * N, 0.0, p.xa, 1.0, p.xT), wt, opts);
  }
  const ShootResult& sr = *solved;
  const double T = sr.z.back();
  tp.set_final_time(T);
  return finish_transformed(tp, sr, p.a, T - p.a);
}

double final_hamiltonian(const OcProblem& p, int N, const IndirectSolution& s, OcMethod method) {
  const double t = s.traj.t.back();
  const State& y = s.traj.y.back();
  if (method == OcMethod::fractional_conditions) return FncSystem(p, N).hamiltonian(t, y);
  const auto tp = TransformedProblem::from_oc(p, N);
  return tp.hamiltonian(t, y, tp.control(t, y)) + tp.terminal_cost_dt(t, y[0]);
}

Trajectory solve_fde(const FdeSpec& spec, int steps) {
  const bool had = spec.family == Family::hadamard;
  if (spec.family == Family::caputo) throw UsageError("solve_fde supports the rl and hadamard families");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw UsageError("solve_fde needs 0 < alpha < 1");
  if (had && !(spec.a > 0.0)) throw DomainError("Hadamard equations need a > 0");
  require_only(spec.g, {Var::t, Var::x}, "right-hand side");
  const double al = spec.alpha;
  const auto kernel = [&](double t) { return had ? std::log(t / spec.a) : t - spec.a; };

  double c0 = 0.0, c1 = 0.0;
  std::vector<double> Bp;
  int N = 1;
  if (spec.method.kind == ExpansionMethod::Kind::taylor) {
    if (spec.method.N != 1)
      throw UsageError("integer-order reduction needs one condition per derivative; only N = 1 is supported");
    if (had) throw UsageError("integer-order reduction is implemented for the rl family only");
    c0 = rgamma(1.0 - al);
    c1 = al / ((1.0 - al) * fvp::gamma(1.0 - al));
  } else {
    if (spec.method.n != 1) throw UsageError("solve_fde uses the expansion with n = 1");
    N = spec.method.N;
    check_N(N);
    const auto c = moment_coeffs(al, 1, N, had ? CoeffKind::hadamard_derivative : CoeffKind::derivative);
    c0 = c.A[0];
    c1 = c.A[1];
    for (int p = 2; p <= N; ++p) Bp.push_back(c.Bp(p));
  }

  OdeSystem sys;
  sys.dim = N;
  sys.rhs = [&](double t, const State& y, State& dy) {
    const double k = kernel(t);
    const double g = spec.g.eval(make_env(t, y[0]));
    double s = g - c0 * std::pow(k, -al) * y[0];
    for (int p = 2; p <= N; ++p) s -= Bp[static_cast<std::size_t>(p - 2)] * std::pow(k, 1.0 - p - al) * y[static_cast<std::size_t>(p - 1)];
    const double coef = spec.m_int + c1 * std::pow(k, 1.0 - al) * (had ? t : 1.0);
    if (coef == 0.0) throw DomainError(fmt::format("vanishing coefficient of x' at t = {}", t));
    dy[0] = s / coef;
    for (int p = 2; p <= N; ++p)
      dy[static_cast<std::size_t>(p - 1)] = (p - 1.0) * std::pow(k, p - 2.0) * y[0] / (had ? t : 1.0);
  };
  State y0(static_cast<std::size_t>(N), 0.0);
  y0[0] = spec.xa;
  const auto nodes = graded_mesh(spec.a, spec.b, steps, true, false, kDelta);
  return rk4_solve(sys, nodes, y0);
}

Trajectory solve_fie(const FieSpec& spec, int steps) {
  const double al = spec.alpha;
  if (!(al > 0.0 && al < 1.0)) throw UsageError("solve_fie needs 0 < alpha < 1");
  if (!(spec.b > spec.a)) throw UsageError("solve_fie needs b > a");
  if (steps < 2) throw UsageError("solve_fie needs at least two steps");
  require_only(spec.rhs, {Var::t}, "right-hand side");
  const int N = spec.N;
  check_N(N);
  const auto c = moment_coeffs(al, 1, N, CoeffKind::integral);
  const double A0 = c.A[0], A1 = c.A[1];
  // Power-law solutions x = c k^μ satisfy Φ(μ) c k^{μ+α} = rhs.
  auto Phi = [&](double mu) {
    double s = A0 + A1 * mu;
    for (int p = 2; p <= N; ++p) s += c.Bp(p) * (p - 1.0) / (mu + p - 1.0);
    return s;
  };
  const double L = spec.b - spec.a;
  auto r = [&](double k) { return spec.rhs.eval_t(spec.a + k); };

  // Local exponent of rhs; β = ν - α is the exponent of the wanted solution.
  const double kfit = 1e-6 * L;
  const double r1 = r(kfit), r2 = r(2.0 * kfit);
  if (r1 == 0.0 || r2 == 0.0 || (r1 > 0) != (r2 > 0))
    throw UsageError("solve_fie: right-hand side must keep one sign near a");
  const double nu = std::log(r2 / r1) / std::log(2.0);
  const double beta = nu - al;
  if (beta < -1e-9) throw DomainError("solve_fie: solution is unbounded at a");
  if (beta > 1e-9 && spec.xa != 0.0)
    throw UsageError(fmt::format("initial value {} is inconsistent with the right-hand side", spec.xa));

  // Growth exponent of the homogeneous mode relative to k^β: largest root of Φ above β.
  double growth = 0.0;
  for (double mu = beta + 60.0; mu > beta + 1e-6; mu -= 0.01) {
    if ((Phi(mu) > 0) != (Phi(mu - 0.01) > 0)) {
      growth = mu - beta;
      break;
    }
  }
  // Start where the amplification over the rest of the interval stays near 1e3.
  const double frac = growth > 0.0 ? std::clamp(std::pow(10.0, -3.0 / growth), 1e-8, 0.5) : 1e-8;
  const auto nodes = uniform_nodes(spec.a, spec.b, steps);
  std::size_t i0 = 1;
  while (i0 + 1 < nodes.size() && nodes[i0] - spec.a < frac * L) ++i0;

  auto power_state = [&](double k) {
    const double r0 = r(k) / std::pow(k, nu);
    const double cc = r0 / Phi(beta);
    State y(static_cast<std::size_t>(N));
    y[0] = cc * std::pow(k, beta);
    for (int p = 2; p <= N; ++p)
      y[static_cast<std::size_t>(p - 1)] = cc * (p - 1.0) * std::pow(k, beta + p - 1.0) / (beta + p - 1.0);
    return y;
  };

  OdeSystem sys;
  sys.dim = N;
  sys.rhs = [&](double t, const State& y, State& dy) {
    const double k = t - spec.a;
    double s = r(k) - A0 * std::pow(k, al) * y[0];
    for (int p = 2; p <= N; ++p)
      s -= c.Bp(p) * std::pow(k, al + 1.0 - p) * y[static_cast<std::size_t>(p - 1)];
    dy[0] = s / (A1 * std::pow(k, al + 1.0));
    for (int p = 2; p <= N; ++p)
      dy[static_cast<std::size_t>(p - 1)] = (p - 1.0) * std::pow(k, p - 2.0) * y[0];
  };
  // Fine substeps keep the RK4 error small next to the amplification.
  std::vector<double> fine;
  const int sub = 50;
  for (std::size_t i = i0; i + 1 < nodes.size(); ++i)
    for (int j = 0; j < sub; ++j) fine.push_back(nodes[i] + (nodes[i + 1] - nodes[i]) * j / sub);
  fine.push_back(nodes.back());
  const auto tr = rk4_solve(sys, fine, power_state(nodes[i0] - spec.a));

  Trajectory out;
  out.t = nodes;
  for (std::size_t i = 0; i < i0; ++i) {
    State y = i == 0 ? State(static_cast<std::size_t>(N), 0.0) : power_state(nodes[i] - spec.a);
    if (i == 0 && beta <= 1e-9) y[0] = power_state(kfit)[0];
    out.y.push_back(y);
  }
  for (std::size_t i = i0; i < nodes.size(); ++i)
    out.y.push_back(tr.y[(i - i0) * static_cast<std::size_t>(sub)]);
  return out;
}

std::vector<double> el_residual(const BasicFvp& p, const FunctionModel& candidate,
                                const std::vector<double>& nodes, int N) {
  check_N(N);
  const LagrangianDerivs d(p.lagrangian);
  const bool need_D = d.Lx.depends_on(Var::Dx) || d.LD.depends_on(Var::Dx) || d.Lp.depends_on(Var::Dx);
  const auto method = ExpansionMethod::moment(1, N);
  // Left RL derivative of the candidate by quadrature of its Caputo form plus the
  // boundary term; s = (t - τ)^{1-α} removes the kernel singularity.
  const double al = p.alpha;
  auto left_rl = [&](double t) {
    const double k = t - p.a;
    const double q = integrate(
        [&](double s) { return candidate.deriv(1, t - std::pow(s, 1.0 / (1.0 - al))); }, 0.0,
        std::pow(k, 1.0 - al), 1e-13);
    return (candidate(p.a) * std::pow(k, -al) + q / (1.0 - al)) * rgamma(1.0 - al);
  };
  auto env_at = [&](double t) {
    VarEnv e{};
    e[static_cast<int>(Var::t)] = t;
    e[static_cast<int>(Var::x)] = candidate(t);
    e[static_cast<int>(Var::xp)] = candidate.deriv(1, t);
    if (need_D) e[static_cast<int>(Var::Dx)] = left_rl(t);
    return e;
  };
  const double h = 1e-5 * (p.b - p.a);
  auto central = [&](const std::function<double(double)>& q, double t) {
    const double lo = std::max(t - h, p.a + 1e-12), hi = std::min(t + h, p.b - 1e-12);
    return (q(hi) - q(lo)) / (hi - lo);
  };
  const std::function<double(double)> LD = [&](double t) { return d.LD.eval(env_at(t)); };
  const std::function<double(double)> Lp = [&](double t) { return d.Lp.eval(env_at(t)); };
  const FunctionModel q(p.a, p.b, 1, [&](int k, double t) { return k == 0 ? LD(t) : central(LD, t); });
  const auto right = frac_deriv_expansion(q, p.alpha, p.a, p.b, Side::right, Family::rl, method, nodes);
  std::vector<double> r(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    r[i] = d.Lx.eval(env_at(nodes[i])) + right[i];
    if (p.uses_xp) r[i] -= central(Lp, nodes[i]);
  }
  return r;
}

IndirectSolution solve_indint(const IndIntProblem& p, int N, int steps, const NewtonOptions& opts) {
  check_N(N);
  const double al = p.alpha;
  if (!(al > 0.0 && al < 1.0)) throw UsageError("solve_indint needs 0 < alpha < 1");
  require_only(p.g, {Var::t}, "target g");
  require_only(p.h, {Var::t}, "target h");
  const auto c = moment_coeffs(al, 1, N, CoeffKind::derivative);
  const double A = c.A_named(), B = c.B_named();
  const auto n = static_cast<std::size_t>(N);
  // Indices: x 0, v_p p-1, z N; p_1 N+1, p_p N+p, p_z 2N+1.
  const std::size_t iz = n, ip1 = n + 1, ipz = 2 * n + 1;
  auto control = [&](double t, const State& y) {
    return p.g.eval_t(t) + 0.5 * y[ip1] / B * std::pow(t, al - 1.0);
  };
  BvpSpec spec;
  spec.dim = 2 * (N + 1);
  spec.n_unknowns = N + 1;
  spec.rhs = [&](double t, const State& y, State& dy, const std::vector<double>&) {
    const double u = control(t, y);
    const double dev = y[0] - p.h.eval_t(t);
    double xd = -A / B / t * y[0] + std::pow(t, al - 1.0) * u / B;
    double p1d = A / B / t * y[ip1] - 2.0 * y[ipz] * dev;
    for (int q = 2; q <= N; ++q) {
      const auto j = static_cast<std::size_t>(q - 1);
      xd += c.C_named(q) / B * std::pow(t, -q) * y[j];
      dy[j] = (1.0 - q) * std::pow(t, q - 2.0) * y[0];
      p1d -= (1.0 - q) * std::pow(t, q - 2.0) * y[ip1 + j];
      dy[ip1 + j] = -y[ip1] * c.C_named(q) / B * std::pow(t, -q);
    }
    dy[0] = xd;
    dy[iz] = dev * dev;
    dy[ip1] = p1d;
    dy[ipz] = 1.0;
  };
  spec.nodes = graded_mesh(0.0, 1.0, steps, true, false, kDelta);
  spec.initial = [&](const std::vector<double>& z) {
    State y(static_cast<std::size_t>(spec.dim), 0.0);
    for (std::size_t j = 0; j <= n; ++j) y[ip1 + j] = z[j];
    return y;
  };
  spec.terminal = [&](const State& yT, const std::vector<double>&) {
    std::vector<double> r{yT[0] - p.xb};
    for (std::size_t j = 1; j < n; ++j) r.push_back(yT[ip1 + j]);
    r.push_back(yT[ipz]);
    return r;
  };
  Weighting wt = costate_weights(spec.dim, ip1 + 1, N, al, 0.0);
  const auto sr = run_bvp(spec, zeros(N + 1), linear_guess(spec.dim, 0.0, 0.0, 1.0, p.xb), wt, opts);
  IndirectSolution s;
  s.traj = sr.traj;
  s.T = 1.0;
  std::vector<double> ell;
  for (std::size_t i = 0; i < s.traj.t.size(); ++i) {
    const double t = s.traj.t[i];
    const double u = control(t, s.traj.y[i]);
    s.u.push_back(u);
    const double e = u - p.g.eval_t(t);
    ell.push_back(e * e + s.traj.y[i][iz]);
  }
  s.cost = trapz(s.traj.t, ell);
  s.iterations = sr.iterations;
  s.residual = sr.residual;
  s.multiple_shooting = sr.multiple_shooting;
  return s;
}

}  // namespace fvp
