#include "fvp/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fvp/error.hpp"
#include "fvp/special.hpp"

namespace fvp {

namespace {

std::vector<BenchmarkProblem> build_registry() {
  std::vector<BenchmarkProblem> r;
  const std::string quartic_L =
      "(Dx - 16*gamma(6)/gamma(5.5)*t^4.5 + 20*gamma(4)/gamma(3.5)*t^2.5 - 5/gamma(1.5)*t^0.5)^4";
  const std::string quartic = "16*t^5 - 20*t^3 + 5*t";
  const std::string ex2_exact = "-(1-t)^1.5/(2*gamma(2.5)) + (1 - 1/(2*gamma(2.5)))*t + 1/(2*gamma(2.5))";

  auto add = [&](std::string id, ProblemPayload p, std::optional<std::string> exact, std::string anchor,
                 std::string method, std::map<std::string, int> params, std::string notes = {}) {
    BenchmarkProblem b{std::move(id), std::move(p), std::nullopt, std::move(anchor), std::move(notes),
                       std::move(method), std::move(params)};
    if (exact) b.exact = parse_expr(*exact);
    r.push_back(std::move(b));
  };

  add("direct-example-1", BasicFvp::make(0.5, 0, 1, "(Dx - 2/gamma(2.5)*t^1.5)^2", 0, 1), "t^2",
      "direct-method error table, Example 1", "euler-like", {{"n", 30}});
  add("direct-example-2", BasicFvp::make(0.5, 0, 1, "Dx - xp^2", 0, 1), ex2_exact,
      "direct-method error table, Example 2", "euler-like", {{"n", 30}});
  add("direct-example-3", BasicFvp::make(0.5, 0, 1, quartic_L, 0, 1), quartic,
      "direct-method error table, Example 3", "euler-like", {{"n", 20}});
  add("first-variation-ex1", BasicFvp::make(0.5, 0, 1, "(Dx - 2/gamma(2.5)*t^1.5)^2", 0, 1), "t^2",
      "first-variation figure, quadratic Lagrangian", "first-variation", {{"n", 30}});
  add("first-variation-ex2", BasicFvp::make(0.5, 0, 1, quartic_L, 0, 1), quartic,
      "first-variation figure, quartic Lagrangian", "first-variation", {{"n", 20}});
  {
    IsoperimetricFvp ip{BasicFvp::make(0.5, 0, 1, "t^4 + Dx^2", 0, 16.0 / (15.0 * fvp::gamma(0.5))),
                        parse_expr("t^2*Dx"), 0.2};
    add("iso-ex3", ip, "16*t^2.5/(15*gamma(0.5))", "isoperimetric figure", "isoperimetric", {{"n", 20}},
        "convex in Dx; the multiplier is not unique in the continuous problem");
  }
  add("indirect-example-2", BasicFvp::make(0.5, 0, 1, "Dx - xp^2", 0, 1), ex2_exact,
      "moment-expansion figure for the linear-quadratic example", "indirect", {{"N", 2}, {"steps", 400}},
      "convex in xp; sufficient conditions hold");
  add("indirect-example-4", BasicFvp::make(0.5, 0, 1, "(Dx-1)^2", 0, 1 / fvp::gamma(1.5)),
      "t^0.5/gamma(1.5)", "moment-expansion figure, L = (Dx - 1)^2", "indirect", {{"N", 2}, {"steps", 400}},
      "convex; sufficient conditions hold");
  {
    OcProblem p;
    p.alpha = 0.5;
    p.L = parse_expr("(t*u - 2.5*x)^2");
    p.f = parse_expr("u + t^2");
    p.xT = 2 / fvp::gamma(3.5);
    add("exm41", p, "2*t^2.5/gamma(3.5)", "fixed final time figures", "indirect", {{"N", 3}, {"steps", 400}},
        "J >= 0 and the exact pair attains 0; no convexity check is run");
    p.terminal = Terminal::free_time;
    p.xT = 1.0;
    add("exm42", p, std::nullopt, "free final time figures", "free-time", {{"N", 2}, {"steps", 400}},
        "no exact solution; checked through transversality residuals");
  }
  {
    FdeSpec f;
    f.alpha = 0.5;
    f.g = parse_expr("t^2 + 2/gamma(2.5)*t^1.5 - x");
    f.method = ExpansionMethod::moment(1, 7);
    add("fde-ex1", f, "t^2", "FDE figure, moment expansion", "fde", {{"N", 7}, {"steps", 1000}});
    FdeSpec h;
    h.family = Family::hadamard;
    h.alpha = 0.5;
    h.a = 1.0;
    h.b = std::exp(1.0);
    h.g = parse_expr("sqrt(x)/gamma(1.5) + ln(t) - x");
    h.method = ExpansionMethod::moment(1, 2);
    add("fde-hadamard", h, "ln(t)", "Hadamard FDE figure", "fde", {{"N", 2}, {"steps", 1000}});
  }
  {
    FieSpec f;
    f.alpha = 0.5;
    f.rhs = parse_expr("gamma(4.5)/24*t^4");
    f.N = 2;
    add("fie-system", f, "t^3.5", "integral equation example, fitted constant", "fie", {{"N", 2}, {"steps", 200}});
  }
  {
    IndIntProblem p;
    p.alpha = 0.5;
    p.g = parse_expr("gamma(2.5)*t");
    p.h = parse_expr("t^1.5");
    p.xb = 1.0;
    add("indint-example-bra", p, "t^1.5", "indefinite-integral chapter, first BVP system", "indint",
        {{"N", 2}, {"steps", 400}});
    IndIntProblem q;
    q.alpha = 0.5;
    q.g = parse_expr("1");
    q.h = parse_expr("t^0.5/gamma(1.5)");
    q.xb = 1 / fvp::gamma(1.5);
    add("indint-example-1", q, "t^0.5/gamma(1.5)", "indefinite-integral chapter, second BVP system", "indint",
        {{"N", 2}, {"steps", 400}}, "minimizer is not Lipschitz at 0");
  }
  {
    OperatorCase op;
    op.fn = parse_expr("t^4");
    op.method = ExpansionMethod::taylor(4);
    add("op-taylor-t4", op, "gamma(5)/gamma(4.5)*t^3.5", "Taylor expansion figure, exact at N = 4", "operator",
        {{"N", 4}, {"grid", 100}});
    op.method = ExpansionMethod::moment(1, 7);
    add("op-moment-t4", op, "gamma(5)/gamma(4.5)*t^3.5", "moment expansion figure", "operator",
        {{"N", 7}, {"grid", 100}});
    OperatorCase hd;
    hd.family = Family::hadamard;
    hd.a = 1.0;
    hd.b = std::exp(1.0);
    hd.fn = parse_expr("ln(t)");
    hd.method = ExpansionMethod::moment(1, 4);
    add("op-hadamard-ln", hd, "ln(t)^0.5/gamma(1.5)", "Hadamard expansion figure for ln t", "operator",
        {{"N", 4}, {"grid", 100}});
  }
  return r;
}

int param(const std::map<std::string, int>& m, const char* key, int fallback) {
  const auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

std::string params_string(const std::map<std::string, int>& m) {
  std::string s;
  for (const auto& [k, v] : m) s += fmt::format("{}{}={}", s.empty() ? "" : ";", k, v);
  return s;
}

template <class T>
const T& payload_as(const BenchmarkProblem& p, const std::string& method) {
  if (const T* v = std::get_if<T>(&p.payload)) return *v;
  throw UsageError(fmt::format("method '{}' does not apply to problem '{}'", method, p.id));
}

RunOutput from_discrete(const DiscreteSolution& s) {
  return {s.grid.nodes(), s.x, std::nullopt, s.grid.b, s.info.iterations, s.info.residual};
}

RunOutput from_indirect(const IndirectSolution& s) {
  return {s.traj.t, s.x(), std::nullopt, s.T, s.iterations, s.residual};
}

RunOutput from_traj(const Trajectory& tr) { return {tr.t, tr.component(0), std::nullopt, tr.t.back(), 0, 0.0}; }

}  // namespace

const std::vector<BenchmarkProblem>& registry() {
  static const std::vector<BenchmarkProblem> r = build_registry();
  return r;
}

const BenchmarkProblem& find_problem(const std::string& id) {
  for (const auto& p : registry())
    if (p.id == id) return p;
  throw NotFound(fmt::format("no problem with id '{}'", id));
}

ErrorMetrics error_metrics(const std::vector<double>& t, const std::vector<double>& x,
                           const std::vector<double>& x_exact) {
  if (t.size() != x.size() || t.size() != x_exact.size())
    throw UsageError(fmt::format("error_metrics: grid sizes differ ({}, {}, {})", t.size(), x.size(),
                                 x_exact.size()));
  if (t.size() < 2) throw UsageError("error_metrics: need at least two nodes");
  ErrorMetrics m;
  std::vector<double> sq(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = std::fabs(x[i] - x_exact[i]);
    m.E_max = std::max(m.E_max, d);
    sq[i] = d * d;
  }
  m.E_L2 = std::sqrt(trapz(t, sq));
  return m;
}

ErrorMetrics error_metrics(const std::vector<double>& t, const std::vector<double>& x,
                           const FunctionModel& exact) {
  std::vector<double> ex(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) ex[i] = exact(t[i]);
  return error_metrics(t, x, ex);
}

ErrorMetrics error_metrics(const DiscreteSolution& s, const FunctionModel& exact) {
  return error_metrics(s.grid.nodes(), s.x, exact);
}

RunOutput run_problem(const BenchmarkProblem& p, const std::string& method_in,
                      const std::map<std::string, int>& params) {
  const std::string method = method_in.empty() ? p.default_method : method_in;
  auto get = [&](const char* key) { return param(params, key, param(p.default_params, key, 0)); };
  RunOutput out;
  if (method == "euler-like") {
    out = from_discrete(solve_euler_like(payload_as<BasicFvp>(p, method), get("n")));
  } else if (method == "first-variation") {
    out = from_discrete(first_variation_solve(payload_as<BasicFvp>(p, method), get("n")));
  } else if (method == "isoperimetric") {
    out = from_discrete(isoperimetric_solve(payload_as<IsoperimetricFvp>(p, method), get("n")).sol);
  } else if (method == "indirect") {
    const int N = get("N"), steps = param(params, "steps", param(p.default_params, "steps", 400));
    if (const auto* b = std::get_if<BasicFvp>(&p.payload))
      out = from_indirect(solve_indirect_bvp(TransformedProblem::from_basic(*b, N), steps));
    else
      out = from_indirect(solve_indirect_bvp(TransformedProblem::from_oc(payload_as<OcProblem>(p, method), N), steps));
  } else if (method == "fractional-conditions") {
    out = from_indirect(solve_fractional_conditions(payload_as<OcProblem>(p, method), get("N"),
                                                    param(params, "steps", 400)));
  } else if (method == "free-time") {
    out = from_indirect(solve_free_time(payload_as<OcProblem>(p, method), get("N"), param(params, "steps", 400)));
  } else if (method == "fde" || method == "fde-integer") {
    FdeSpec f = payload_as<FdeSpec>(p, method);
    f.method = method == "fde" ? ExpansionMethod::moment(1, get("N")) : ExpansionMethod::taylor(1);
    out = from_traj(solve_fde(f, param(params, "steps", param(p.default_params, "steps", 1000))));
  } else if (method == "fie") {
    FieSpec f = payload_as<FieSpec>(p, method);
    f.N = get("N");
    out = from_traj(solve_fie(f, param(params, "steps", param(p.default_params, "steps", 200))));
  } else if (method == "indint") {
    out = from_indirect(solve_indint(payload_as<IndIntProblem>(p, method), get("N"), param(params, "steps", 400)));
  } else if (method == "operator") {
    const auto& op = payload_as<OperatorCase>(p, method);
    ExpansionMethod m = op.method;
    m.N = get("N");
    const int n = param(params, "grid", op.grid);
    auto nodes = uniform_nodes(op.a, op.b, n);
    if (op.side == Side::left)
      nodes.erase(nodes.begin());
    else
      nodes.pop_back();
    const auto f = FunctionModel::from_expr(op.fn, op.a, op.b);
    out.t = nodes;
    out.x = op.integral ? frac_integral_expansion(f, op.alpha, op.a, op.b, op.side, op.family, m, nodes)
                        : frac_deriv_expansion(f, op.alpha, op.a, op.b, op.side, op.family, m, nodes);
  } else {
    throw UsageError(fmt::format("unknown method '{}'", method));
  }
  if (p.exact) {
    std::vector<double> ex(out.t.size());
    for (std::size_t i = 0; i < out.t.size(); ++i) ex[i] = p.exact->eval_t(out.t[i]);
    out.x_exact = std::move(ex);
  }
  return out;
}

BenchReport run_suite(const std::vector<SuiteItem>& items, const SuiteOptions& opts) {
  BenchReport rep;
  rep.rows.resize(items.size());
  auto run_one = [&](std::size_t k) {
    const SuiteItem& it = items[k];
    BenchRow& row = rep.rows[k];
    row.id = it.id;
    try {
      const auto& p = find_problem(it.id);
      row.method = it.method.empty() ? p.default_method : it.method;
      auto params = p.default_params;
      for (const auto& [key, v] : it.params) params[key] = v;
      row.params = params_string(params);
      const auto t0 = std::chrono::steady_clock::now();
      const RunOutput out = run_problem(p, row.method, params);
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (out.x_exact) row.metrics = error_metrics(out.t, out.x, *out.x_exact);
    } catch (const Error& e) {
      row.error = e.what();
      spdlog::warn("bench row {} ({}) failed: {}", it.id, row.method, e.what());
    }
  };
  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t k = 0; k < items.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < items.size(); k = next++) run_one(k);
      });
    for (auto& th : pool) th.join();
  }
  if (!opts.timing)
    for (auto& row : rep.rows) row.wall_ms = 0.0;
  return rep;
}

std::vector<SuiteItem> named_suite(const std::string& name) {
  std::vector<SuiteItem> s;
  auto sweep = [&](const std::string& id, const std::string& method, const char* key, std::vector<int> values) {
    for (int v : values) s.push_back({id, method, {{key, v}}});
  };
  const bool all = name == "all";
  bool known = all;
  if (all || name == "direct") {
    known = true;
    sweep("direct-example-1", "euler-like", "n", {5, 10, 30});
    sweep("direct-example-2", "euler-like", "n", {5, 10, 30});
    sweep("direct-example-3", "euler-like", "n", {5, 10, 30});
  }
  if (all || name == "first-variation") {
    known = true;
    sweep("first-variation-ex1", "first-variation", "n", {5, 10, 30});
    sweep("first-variation-ex2", "first-variation", "n", {5, 20});
    sweep("iso-ex3", "isoperimetric", "n", {5, 20});
  }
  if (all || name == "indirect") {
    known = true;
    sweep("indirect-example-2", "indirect", "N", {2, 4, 8});
    sweep("indirect-example-4", "indirect", "N", {2, 3});
    sweep("exm41", "indirect", "N", {2, 3});
    sweep("exm41", "fractional-conditions", "N", {2, 3});
    sweep("exm42", "free-time", "N", {2});
  }
  if (all || name == "fde") {
    known = true;
    sweep("fde-ex1", "fde", "N", {2, 4, 7});
    s.push_back({"fde-ex1", "fde-integer", {}});
    sweep("fde-hadamard", "fde", "N", {2, 3});
  }
  if (all || name == "fie") {
    known = true;
    sweep("fie-system", "fie", "N", {2, 3});
  }
  if (all || name == "indint") {
    known = true;
    sweep("indint-example-bra", "indint", "N", {2, 3});
    sweep("indint-example-1", "indint", "N", {2, 3});
  }
  if (all || name == "operators") {
    known = true;
    sweep("op-taylor-t4", "operator", "N", {2, 3, 4});
    sweep("op-moment-t4", "operator", "N", {4, 7, 15});
    sweep("op-hadamard-ln", "operator", "N", {2, 4});
  }
  if (!known) throw UsageError(fmt::format("unknown suite '{}'", name));
  return s;
}

BenchReport coefficient_suite() {
  const auto& ref = reference_tables();
  BenchReport rep;
  for (std::size_t i = 0; i < ref.b_alpha.size(); ++i)
    for (std::size_t j = 0; j < ref.b_N.size(); ++j) {
      BenchRow row;
      row.id = "coeff-B";
      row.method = "moment";
      row.params = fmt::format("alpha={};N={}", ref.b_alpha[i], ref.b_N[j]);
      const double d =
          std::fabs(moment_coeffs(ref.b_alpha[i], 1, ref.b_N[j], CoeffKind::derivative).B_named() - ref.B[i][j]);
      row.metrics = ErrorMetrics{d, d};
      rep.rows.push_back(row);
    }
  return rep;
}

std::string to_csv(const BenchReport& r, bool timing) {
  std::string s = "id,method,params,E_L2,E_max,wall_ms\n";
  for (const auto& row : r.rows) {
    s += fmt::format("{},{},{},", row.id, row.method, row.params);
    if (row.metrics)
      s += fmt::format("{:.6e},{:.6e},", row.metrics->E_L2, row.metrics->E_max);
    else
      s += ",,";
    if (timing && row.error.empty()) s += fmt::format("{:.3f}", row.wall_ms);
    s += '\n';
  }
  return s;
}

std::string to_markdown(const BenchReport& r) {
  std::string s = "| id | method | params | E_L2 | E_max | wall_ms | note |\n|---|---|---|---|---|---|---|\n";
  for (const auto& row : r.rows) {
    const std::string l2 = row.metrics ? fmt::format("{:.4e}", row.metrics->E_L2) : "";
    const std::string mx = row.metrics ? fmt::format("{:.4e}", row.metrics->E_max) : "";
    const std::string ms = row.error.empty() ? fmt::format("{:.1f}", row.wall_ms) : "";
    s += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", row.id, row.method, row.params, l2, mx, ms,
                     row.error.empty() ? "" : "failed: " + row.error);
  }
  return s;
}

const ReferenceTables& reference_tables() {
  static const ReferenceTables t = [] {
    ReferenceTables r;
    r.b_alpha = {0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
    r.b_N = {4, 7, 15, 30, 70, 120, 170};
    r.B = {{0.0310, 0.0188, 0.0095, 0.0051, 0.0024, 0.0015, 0.0011},
           {0.1357, 0.0928, 0.0549, 0.0339, 0.0188, 0.0129, 0.0101},
           {0.3085, 0.2364, 0.1630, 0.1157, 0.0760, 0.0581, 0.0488},
           {0.5519, 0.4717, 0.3783, 0.3083, 0.2396, 0.2040, 0.1838},
           {0.8470, 0.8046, 0.7481, 0.6990, 0.6428, 0.6092, 0.5884},
           {0.9849, 0.9799, 0.9728, 0.9662, 0.9582, 0.9531, 0.9498}};
    r.tail_i = {1, 2, 3, 4};
    r.tail_m = {0, 5, 10, 15, 20};
    r.tail = {{-0.4231, -0.2364, -0.1819, -0.1533, -0.1350},
              {0.04702, 0.009849, 0.004663, 0.002838, 0.001956},
              {-0.007052, -0.0006566, -0.0001999, -0.00008963, -0.00004890},
              {0.001007, 0.00004690, 0.000009517, 0.000003201, 0.000001397}};
    r.integral_tail = {{-0.5642, -0.4231, -0.3526, -0.3085, -0.2777},
              {0.09403, 0.04702, 0.02938, 0.02057, 0.01543},
              {-0.01881, -0.007052, -0.003526, -0.002057, -0.001322},
              {0.003358, 0.001007, 0.0004198, 0.0002099, 0.0001181},
              {-0.0005224, -0.0001306, -0.00004664, -0.00002041, -0.00001020},
              {7.12e-5, 1.52e-5, 4.77e-6, 1.85e-6, 8.34e-7}};
    r.integral_b_tail = {0.5642, 0.4231, 0.3526, 0.3085, 0.2777};
    r.direct = {{1, 5, 0.0264}, {1, 10, 0.0158}, {1, 30, 0.0065}, {2, 5, 0.0070},
                {2, 10, 0.0035}, {2, 30, 0.0012}, {3, 5, 1.4787}, {3, 20, 0.3006}, {3, 90, 0.0618}};
    return r;
  }();
  return t;
}

}  // namespace fvp
