#include "fvp/numerics.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Sparse>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fvp/error.hpp"

namespace fvp {

namespace {

void require_uniform(const std::vector<double>& t) {
  if (t.size() < 2) throw UsageError("quadrature needs at least two nodes");
  const double h = t[1] - t[0];
  if (!(h > 0.0)) throw UsageError("quadrature nodes must be increasing");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::fabs((t[i] - t[i - 1]) - h) > 1e-9 * h) throw UsageError("quadrature grid is not uniform");
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace

double quad(const std::vector<double>& nodes, const std::vector<double>& values, QuadRule rule) {
  require_uniform(nodes);
  if (values.size() != nodes.size()) throw UsageError("quad: size mismatch");
  const double h = nodes[1] - nodes[0];
  double s = 0.0;
  if (rule == QuadRule::left_rect) {
    for (std::size_t i = 0; i + 1 < values.size(); ++i) s += values[i];
    return h * s;
  }
  for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
  return h * (s + 0.5 * (values.front() + values.back()));
}

double trapz(const std::vector<double>& t, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

std::vector<double> cumulative_trapz(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<double> c(t.size(), 0.0);
  for (std::size_t i = 1; i < t.size(); ++i)
    c[i] = c[i - 1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return c;
}

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule r;
  r.x.resize(static_cast<std::size_t>(n));
  r.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::fabs(dz) < 1e-16) break;
    }
    const auto ui = static_cast<std::size_t>(i);
    const auto uj = static_cast<std::size_t>(n - 1 - i);
    r.x[ui] = -z;
    r.x[uj] = z;
    r.w[ui] = r.w[uj] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

namespace {

void gl_apply(const VecIntegrand& f, int dim, double lo, double hi, const GaussRule& g,
              std::vector<double>& out, std::vector<double>& buf) {
  std::fill(out.begin(), out.end(), 0.0);
  const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
  for (std::size_t k = 0; k < g.x.size(); ++k) {
    f(c + r * g.x[k], buf.data());
    for (int d = 0; d < dim; ++d) out[static_cast<std::size_t>(d)] += g.w[k] * buf[static_cast<std::size_t>(d)];
  }
  for (auto& v : out) v *= r;
}

void adapt(const VecIntegrand& f, int dim, double lo, double hi, double tol, int depth,
           std::vector<double>& acc) {
  const auto ud = static_cast<std::size_t>(dim);
  std::vector<double> i8(ud), i16(ud), buf(ud);
  gl_apply(f, dim, lo, hi, gauss_legendre(8), i8, buf);
  gl_apply(f, dim, lo, hi, gauss_legendre(16), i16, buf);
  double err = 0.0, scale = 0.0;
  for (std::size_t d = 0; d < ud; ++d) {
    err = std::max(err, std::fabs(i16[d] - i8[d]));
    scale = std::max(scale, std::fabs(i16[d]));
  }
  if (err <= tol * std::max(1.0, scale) || depth >= 40) {
    for (std::size_t d = 0; d < ud; ++d) acc[d] += i16[d];
    return;
  }
  const double mid = 0.5 * (lo + hi);
  adapt(f, dim, lo, mid, tol, depth + 1, acc);
  adapt(f, dim, mid, hi, tol, depth + 1, acc);
}

}  // namespace

std::vector<double> integrate(const VecIntegrand& f, int dim, double lo, double hi, double tol) {
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  if (lo == hi) return acc;
  adapt(f, dim, lo, hi, tol, 0, acc);
  return acc;
}

double integrate(const std::function<double(double)>& f, double lo, double hi, double tol) {
  return integrate([&f](double t, double* o) { o[0] = f(t); }, 1, lo, hi, tol)[0];
}

std::vector<std::vector<double>> cumulative_integrals(const VecIntegrand& f, int dim, double from,
                                                      const std::vector<double>& nodes,
                                                      double tol) {
  std::vector<std::vector<double>> out;
  out.reserve(nodes.size());
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  double prev = from;
  for (double t : nodes) {
    const auto piece = integrate(f, dim, prev, t, tol);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += piece[d];
    out.push_back(acc);
    prev = t;
  }
  return out;
}

std::vector<double> Trajectory::component(std::size_t k) const {
  std::vector<double> c;
  c.reserve(y.size());
  for (const auto& s : y) c.push_back(s[k]);
  return c;
}

Trajectory rk4_solve(const OdeSystem& sys, double t0, double t1, const State& y0, int steps) {
  if (steps < 1) throw UsageError("rk4_solve: steps must be positive");
  const double start = sys.singular_start ? t0 + sys.delta : t0;
  std::vector<double> nodes(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) nodes[static_cast<std::size_t>(i)] = start + (t1 - start) * i / steps;
  nodes.back() = t1;
  return rk4_solve(sys, nodes, y0);
}

Trajectory rk4_solve(const OdeSystem& sys, const std::vector<double>& nodes, const State& y0) {
  const auto n = static_cast<std::size_t>(sys.dim);
  if (y0.size() != n) throw UsageError("rk4_solve: initial state has wrong dimension");
  Trajectory tr;
  tr.t = nodes;
  tr.y.reserve(nodes.size());
  tr.y.push_back(y0);
  State y = y0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t = nodes[i], h = nodes[i + 1] - nodes[i];
    sys.rhs(t, y, k1);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
    sys.rhs(t + 0.5 * h, tmp, k2);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
    sys.rhs(t + 0.5 * h, tmp, k3);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + h * k3[j];
    sys.rhs(t + h, tmp, k4);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (!std::isfinite(y[j]))
        throw SolverError(fmt::format("rk4: non-finite state at t = {}", nodes[i + 1]), y);
    }
    tr.y.push_back(y);
  }
  return tr;
}

std::vector<double> graded_mesh(double t0, double t1, int steps, bool singular_left,
                                bool singular_right, double delta, double kappa) {
  if (steps < 1 || !(t1 > t0)) throw UsageError("graded_mesh: need t1 > t0 and steps >= 1");
  const double h = (t1 - t0) / steps;
  // Geometric run from the singular end until the spacing reaches h.
  auto graded = [&](double offset_limit) {
    std::vector<double> d{delta};
    while (d.back() < offset_limit) {
      const double step = std::min(h, kappa * d.back());
      d.push_back(d.back() + step);
      if (step >= h) break;
    }
    return d;  // distances from the end
  };
  const double half = 0.5 * (t1 - t0);
  std::vector<double> left, right;
  if (singular_left) left = graded(half);
  if (singular_right) right = graded(half);
  const double lo = singular_left ? t0 + left.back() : t0;
  const double hi = singular_right ? t1 - right.back() : t1;

  std::vector<double> nodes;
  if (singular_left)
    for (std::size_t i = 0; i + 1 < left.size(); ++i) nodes.push_back(t0 + left[i]);
  if (hi > lo) {
    const int m = std::max(1, static_cast<int>(std::ceil((hi - lo) / h - 1e-9)));
    for (int i = 0; i <= m; ++i) nodes.push_back(i == m ? hi : lo + (hi - lo) * i / m);
  } else {
    nodes.push_back(0.5 * (lo + hi));
  }
  if (singular_right)
    for (std::size_t i = right.size() - 1; i-- > 0;) nodes.push_back(t1 - right[i]);
  return nodes;
}

Eigen::MatrixXd fd_jacobian(const VecFn& F, const Eigen::VectorXd& x, double step) {
  Eigen::MatrixXd J;
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hj = step * std::max(1.0, std::fabs(x[j]));
    xp[j] = x[j] + hj;
    const Eigen::VectorXd fp = F(xp);
    xp[j] = x[j] - hj;
    const Eigen::VectorXd fm = F(xp);
    xp[j] = x[j];
    if (j == 0) J.resize(fp.size(), x.size());
    J.col(j) = (fp - fm) / (2 * hj);
  }
  return J;
}

NewtonResult newton_solve(const VecFn& F, const Eigen::VectorXd& guess, const NewtonOptions& opts,
                          const JacFn& jac) {
  NewtonResult res;
  res.x = guess;
  Eigen::VectorXd fx = F(res.x);
  if (fx.size() != guess.size())
    throw UsageError(fmt::format("newton_solve: {} residuals for {} unknowns", fx.size(), guess.size()));
  double norm = inf_norm(fx);
  res.history.push_back(norm);
  auto fail = [&](const std::string& msg, bool singular) {
    std::vector<double> last(res.x.data(), res.x.data() + res.x.size());
    if (singular) throw SingularJacobian(msg, last, res.history);
    throw SolverError(msg, last, res.history);
  };
  for (int it = 0; it < opts.max_iter; ++it) {
    if (norm <= opts.tol) {
      res.residual = norm;
      return res;
    }
    const Eigen::MatrixXd J = jac ? jac(res.x) : fd_jacobian(F, res.x, opts.fd_step);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const double rc = J.size() ? lu.rcond() : 0.0;
    if (!(rc > 1e-15) || !J.allFinite())
      fail(fmt::format("newton: singular Jacobian (rcond {:.3g}) at iteration {}", rc, it), true);
    const Eigen::VectorXd dx = lu.solve(-fx);
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opts.max_halvings; ++k, lambda *= 0.5) {
      const Eigen::VectorXd xt = res.x + lambda * dx;
      Eigen::VectorXd ft;
      try {
        ft = F(xt);
      } catch (const Error& e) {
        spdlog::debug("newton: trial step failed ({}), halving", e.what());
        continue;
      }
      const double nt = inf_norm(ft);
      if (std::isfinite(nt) && (nt < norm || nt <= opts.tol)) {
        res.x = xt;
        fx = ft;
        norm = nt;
        accepted = true;
        break;
      }
    }
    res.iterations = it + 1;
    if (!accepted && dx.lpNorm<Eigen::Infinity>() <= opts.step_tol * (1.0 + res.x.lpNorm<Eigen::Infinity>())) {
      spdlog::debug("newton: stopped at rounding floor, residual {:.3e}", norm);
      res.residual = norm;
      return res;
    }
    if (!accepted) fail(fmt::format("newton: no decrease after {} halvings (residual {:.3e})",
                                    opts.max_halvings, norm), false);
    res.history.push_back(norm);
    spdlog::debug("newton it {} residual {:.3e} lambda {}", it + 1, norm, lambda);
  }
  res.residual = norm;
  if (norm <= opts.tol) return res;
  fail(fmt::format("newton: {} iterations exceeded (residual {:.3e})", opts.max_iter, norm), false);
  return res;
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

OdeSystem bind_params(const BvpSpec& spec, const std::vector<double>& z) {
  std::vector<double> params(z.end() - spec.n_params, z.end());
  OdeSystem sys;
  sys.dim = spec.dim;
  sys.rhs = [&spec, params](double t, const State& y, State& dy) { spec.rhs(t, y, dy, params); };
  return sys;
}

ShootResult single_shooting(const BvpSpec& spec, const std::vector<double>& guess,
                            const NewtonOptions& opts) {
  auto F = [&](const Eigen::VectorXd& zv) {
    const auto z = to_std(zv);
    const auto tr = rk4_solve(bind_params(spec, z), spec.nodes, spec.initial(z));
    return to_eigen(spec.terminal(tr.y.back(), z));
  };
  const auto nr = newton_solve(F, to_eigen(guess), opts);
  ShootResult r;
  r.z = to_std(nr.x);
  r.traj = rk4_solve(bind_params(spec, r.z), spec.nodes, spec.initial(r.z));
  r.iterations = nr.iterations;
  r.residual = nr.residual;
  return r;
}

ShootResult multiple_shooting(const BvpSpec& spec, const std::vector<double>& guess,
                              const NewtonOptions& opts) {
  constexpr int kSegments = 4;
  const std::size_t m = spec.nodes.size();
  if (m < 2 * kSegments + 1) throw SolverError("multiple shooting: too few nodes");
  std::vector<std::vector<double>> seg;
  std::vector<std::size_t> cut{0};
  for (int s = 1; s < kSegments; ++s) cut.push_back(s * (m - 1) / kSegments);
  cut.push_back(m - 1);
  for (int s = 0; s < kSegments; ++s)
    seg.emplace_back(spec.nodes.begin() + static_cast<long>(cut[static_cast<std::size_t>(s)]),
                     spec.nodes.begin() + static_cast<long>(cut[static_cast<std::size_t>(s) + 1]) + 1);
  const auto nz = static_cast<std::size_t>(spec.n_unknowns);
  const auto d = static_cast<std::size_t>(spec.dim);

  auto run = [&](const std::vector<double>& w, bool keep) {
    const std::vector<double> z(w.begin(), w.begin() + static_cast<long>(nz));
    const auto sys = bind_params(spec, z);
    std::vector<double> res;
    Trajectory full;
    for (int s = 0; s < kSegments; ++s) {
      State y0 = s == 0 ? spec.initial(z)
                        : State(w.begin() + static_cast<long>(nz + (s - 1) * d),
                                w.begin() + static_cast<long>(nz + s * d));
      auto tr = rk4_solve(sys, seg[static_cast<std::size_t>(s)], y0);
      if (s + 1 < kSegments) {
        for (std::size_t j = 0; j < d; ++j) res.push_back(tr.y.back()[j] - w[nz + s * d + j]);
      } else {
        const auto term = spec.terminal(tr.y.back(), z);
        res.insert(res.end(), term.begin(), term.end());
      }
      if (keep) {
        const std::size_t skip = s == 0 ? 0 : 1;
        full.t.insert(full.t.end(), tr.t.begin() + static_cast<long>(skip), tr.t.end());
        full.y.insert(full.y.end(), tr.y.begin() + static_cast<long>(skip), tr.y.end());
      }
    }
    return std::make_pair(res, full);
  };

  // Seed interior states by integrating each segment from the previous guess end.
  std::vector<double> w = guess;
  {
    const auto sys = bind_params(spec, guess);
    State y = spec.initial(guess);
    for (int s = 0; s + 1 < kSegments; ++s) {
      try {
        y = rk4_solve(sys, seg[static_cast<std::size_t>(s)], y).y.back();
      } catch (const Error&) {
      }
      w.insert(w.end(), y.begin(), y.end());
    }
  }
  auto F = [&](const Eigen::VectorXd& wv) { return to_eigen(run(to_std(wv), false).first); };
  const auto nr = newton_solve(F, to_eigen(w), opts);
  ShootResult r;
  const auto sol = to_std(nr.x);
  r.z.assign(sol.begin(), sol.begin() + static_cast<long>(nz));
  r.traj = run(sol, true).second;
  r.iterations = nr.iterations;
  r.residual = nr.residual;
  r.multiple_shooting = true;
  return r;
}

}  // namespace

ShootResult shoot_bvp(const BvpSpec& spec, const std::vector<double>& guess,
                      const NewtonOptions& opts) {
  if (static_cast<int>(guess.size()) != spec.n_unknowns)
    throw UsageError("shoot_bvp: guess size differs from the unknown count");
  if (spec.nodes.size() < 2) throw UsageError("shoot_bvp: need at least two nodes");
  try {
    return single_shooting(spec, guess, opts);
  } catch (const SolverError& e) {
    spdlog::info("single shooting failed ({}); trying 4-segment multiple shooting", e.what());
    try {
      return multiple_shooting(spec, guess, opts);
    } catch (const SolverError&) {
      throw e;
    }
  }
}

namespace {

struct RhsLinearization {
  State f;
  Eigen::MatrixXd J;  // ∂f/∂y
  Eigen::MatrixXd P;  // ∂f/∂params
};

// Central differences: the rhs of singular systems is too noisy for one-sided ones.
RhsLinearization linearize(const BvpSpec& spec, double t, const State& y,
                           const std::vector<double>& params) {
  constexpr double kStep = 6e-6;  // about cbrt(machine epsilon)
  const auto d = static_cast<std::size_t>(spec.dim);
  RhsLinearization r;
  r.f.assign(d, 0.0);
  spec.rhs(t, y, r.f, params);
  r.J.resize(spec.dim, spec.dim);
  r.P.resize(spec.dim, spec.n_params);
  State yp = y, fp(d), fm(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double hj = kStep * std::max(1.0, std::fabs(y[j]));
    yp[j] = y[j] + hj;
    spec.rhs(t, yp, fp, params);
    yp[j] = y[j] - hj;
    spec.rhs(t, yp, fm, params);
    for (std::size_t i = 0; i < d; ++i)
      r.J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * hj);
    yp[j] = y[j];
  }
  std::vector<double> pp = params;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double hj = kStep * std::max(1.0, std::fabs(params[j]));
    pp[j] = params[j] + hj;
    spec.rhs(t, y, fp, pp);
    pp[j] = params[j] - hj;
    spec.rhs(t, y, fm, pp);
    for (std::size_t i = 0; i < d; ++i)
      r.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * hj);
    pp[j] = params[j];
  }
  return r;
}

Eigen::Map<const Eigen::VectorXd> as_vec(const State& s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

}  // namespace

ShootResult collocation_bvp(const BvpSpec& spec, const std::vector<double>& guess,
                            const std::function<State(double)>& y_guess, const NewtonOptions& opts) {
  if (static_cast<int>(guess.size()) != spec.n_unknowns)
    throw UsageError("collocation_bvp: guess size differs from the unknown count");
  if (spec.nodes.size() < 2) throw UsageError("collocation_bvp: need at least two nodes");
  const Eigen::Index d = spec.dim, nz = spec.n_unknowns, np = spec.n_params;
  const auto M = static_cast<Eigen::Index>(spec.nodes.size()) - 1;
  const Eigen::Index n = (M + 1) * d + nz, zoff = (M + 1) * d;
  const auto& tn = spec.nodes;

  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i <= M; ++i) {
    const State y = y_guess(tn[static_cast<std::size_t>(i)]);
    if (static_cast<Eigen::Index>(y.size()) != d) throw UsageError("collocation_bvp: guess state has the wrong size");
    w.segment(i * d, d) = as_vec(y);
  }
  w.tail(nz) = to_eigen(guess);

  auto node = [&](const Eigen::VectorXd& v, Eigen::Index i) {
    return State(v.data() + i * d, v.data() + (i + 1) * d);
  };
  auto unknowns = [&](const Eigen::VectorXd& v) { return to_std(v.tail(nz)); };
  auto params_of = [&](const std::vector<double>& z) {
    return std::vector<double>(z.end() - np, z.end());
  };

  // Defect rows are compared with the size of the terms they difference.
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(n);
  auto residual = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd F(n);
    const auto z = unknowns(v);
    const auto prm = params_of(z);
    F.head(d) = v.head(d) - as_vec(spec.initial(z));
    State fi(static_cast<std::size_t>(d)), fj(fi), fm(fi);
    spec.rhs(tn[0], node(v, 0), fi, prm);
    for (Eigen::Index i = 0; i < M; ++i) {
      const double t0 = tn[static_cast<std::size_t>(i)], t1 = tn[static_cast<std::size_t>(i) + 1], h = t1 - t0;
      spec.rhs(t1, node(v, i + 1), fj, prm);
      const Eigen::VectorXd ym = 0.5 * (v.segment(i * d, d) + v.segment((i + 1) * d, d)) -
                                 h / 8.0 * (as_vec(fj) - as_vec(fi));
      spec.rhs(t0 + 0.5 * h, State(ym.data(), ym.data() + d), fm, prm);
      F.segment(d + i * d, d) = v.segment((i + 1) * d, d) - v.segment(i * d, d) -
                                h / 6.0 * (as_vec(fi) + 4.0 * as_vec(fm) + as_vec(fj));
      scale.segment(d + i * d, d) =
          Eigen::VectorXd::Ones(d) + v.segment(i * d, d).cwiseAbs() + v.segment((i + 1) * d, d).cwiseAbs() +
          h / 6.0 * (as_vec(fi).cwiseAbs() + 4.0 * as_vec(fm).cwiseAbs() + as_vec(fj).cwiseAbs());
      std::swap(fi, fj);
    }
    F.tail(nz) = to_eigen(spec.terminal(node(v, M), z));
    return F;
  };

  auto jacobian = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& Fv) {
    std::vector<Eigen::Triplet<double>> trip;
    const auto z = unknowns(v);
    const auto prm = params_of(z);
    auto put = [&](Eigen::Index r0, Eigen::Index c0, const Eigen::MatrixXd& B) {
      for (Eigen::Index c = 0; c < B.cols(); ++c)
        for (Eigen::Index r = 0; r < B.rows(); ++r)
          if (B(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, B(r, c));
    };
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    put(0, 0, I);
    // Initial and terminal blocks by forward differences on their own maps.
    Eigen::VectorXd vp = v;
    for (Eigen::Index j = 0; j < nz; ++j) {
      const double hj = opts.fd_step * std::max(1.0, std::fabs(v[zoff + j]));
      vp[zoff + j] = v[zoff + j] + hj;
      const auto zp = unknowns(vp);
      put(0, zoff + j, -(as_vec(spec.initial(zp)) - as_vec(spec.initial(z))) / hj);
      put(n - nz, zoff + j, (to_eigen(spec.terminal(node(v, M), zp)) - Fv.tail(nz)) / hj);
      vp[zoff + j] = v[zoff + j];
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      const double hj = opts.fd_step * std::max(1.0, std::fabs(v[M * d + j]));
      vp[M * d + j] = v[M * d + j] + hj;
      put(n - nz, M * d + j, (to_eigen(spec.terminal(node(vp, M), z)) - Fv.tail(nz)) / hj);
      vp[M * d + j] = v[M * d + j];
    }
    auto lin_i = linearize(spec, tn[0], node(v, 0), prm);
    for (Eigen::Index i = 0; i < M; ++i) {
      const double t0 = tn[static_cast<std::size_t>(i)], t1 = tn[static_cast<std::size_t>(i) + 1], h = t1 - t0;
      auto lin_j = linearize(spec, t1, node(v, i + 1), prm);
      const Eigen::VectorXd ym = 0.5 * (v.segment(i * d, d) + v.segment((i + 1) * d, d)) -
                                 h / 8.0 * (as_vec(lin_j.f) - as_vec(lin_i.f));
      const auto lin_m = linearize(spec, t0 + 0.5 * h, State(ym.data(), ym.data() + d), prm);
      const Eigen::Index r0 = d + i * d;
      put(r0, i * d, -I - h / 6.0 * (lin_i.J + 4.0 * lin_m.J * (0.5 * I + h / 8.0 * lin_i.J)));
      put(r0, (i + 1) * d, I - h / 6.0 * (lin_j.J + 4.0 * lin_m.J * (0.5 * I - h / 8.0 * lin_j.J)));
      if (np > 0)
        put(r0, n - np,
            -h / 6.0 * (lin_i.P + 4.0 * (lin_m.P - h / 8.0 * lin_m.J * (lin_j.P - lin_i.P)) + lin_j.P));
      lin_i = std::move(lin_j);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
  };

  std::vector<double> history;
  auto fail = [&](const std::string& msg, bool singular) {
    const auto last = to_std(w);
    if (singular) throw SingularJacobian(msg, last, history);
    throw SolverError(msg, last, history);
  };
  auto measure = [&](const Eigen::VectorXd& Fv) { return inf_norm(Fv.cwiseQuotient(scale)); };
  Eigen::VectorXd F = residual(w);
  double norm = measure(F);
  history.push_back(norm);
  int it = 0;
  for (; it < opts.max_iter && norm > opts.tol; ++it) {
    Eigen::SparseMatrix<double> A = jacobian(w, F);
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
      fail(fmt::format("collocation: singular Jacobian at iteration {} ({})", it, lu.lastErrorMessage()), true);
    const Eigen::VectorXd dx = lu.solve(-F);
    if (!dx.allFinite()) fail(fmt::format("collocation: non-finite Newton step at iteration {}", it), true);
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opts.max_halvings; ++k, lambda *= 0.5) {
      const Eigen::VectorXd wt = w + lambda * dx;
      Eigen::VectorXd Ft;
      try {
        Ft = residual(wt);
      } catch (const Error& e) {
        spdlog::debug("collocation: trial step failed ({}), halving", e.what());
        continue;
      }
      const double nt = measure(Ft);
      if (std::isfinite(nt) && (nt < norm || nt <= opts.tol)) {
        w = wt;
        F = Ft;
        norm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (inf_norm(dx) <= opts.step_tol * (1.0 + inf_norm(w))) break;
      fail(fmt::format("collocation: no decrease after {} halvings (residual {:.3e})", opts.max_halvings, norm),
           false);
    }
    history.push_back(norm);
    spdlog::debug("collocation it {} residual {:.3e} lambda {}", it + 1, norm, lambda);
  }
  if (norm > opts.tol && it >= opts.max_iter)
    fail(fmt::format("collocation: {} iterations exceeded (residual {:.3e})", opts.max_iter, norm), false);

  ShootResult r;
  r.z = unknowns(w);
  r.traj.t = tn;
  for (Eigen::Index i = 0; i <= M; ++i) r.traj.y.push_back(node(w, i));
  r.iterations = it;
  r.residual = norm;
  r.collocation = true;
  return r;
}

}  // namespace fvp
