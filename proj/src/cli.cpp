#include "fvp/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fvp/error.hpp"
#include "fvp/log.hpp"

namespace fvp {

namespace {

using json = nlohmann::json;

const char* kGrammar = R"ebnf(EXPR grammar (whitespace is ignored):
  expr    = term { ("+" | "-") term } ;
  term    = unary { ("*" | "/") unary } ;
  unary   = "-" unary | power ;
  power   = primary [ "^" unary ] ;
  primary = number | constant | variable | function "(" expr ")" | "(" expr ")" ;
  number  = digits [ "." [ digits ] ] [ ("e" | "E") [ "+" | "-" ] digits ]
          | "." digits [ ("e" | "E") [ "+" | "-" ] digits ] ;
  constant = "pi" ;
  variable = "t" | "x" | "xp" | "Dx" | "u" | "lambda" ;
  function = "exp" | "ln" | "sin" | "cos" | "sqrt" | "gamma" ;
"^" is right-associative and binds tighter than unary minus: -t^2 = -(t^2).
Lagrangians use t, x, xp (first derivative), Dx (fractional derivative);
optimal control costs and dynamics use t, x, u; operator inputs use t only.
)ebnf";

// ---------------------------------------------------------------- JSON specs

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw UsageError(fmt::format("spec: '{}' must be an object", where));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) throw UsageError(fmt::format("spec: unknown key '{}' in {}", key, where));
}

const json& need(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw UsageError(fmt::format("spec: {} needs '{}'", where, key));
  return obj.at(key);
}

double number_at(const json& obj, const std::string& where, const char* key) {
  const json& v = need(obj, where, key);
  if (!v.is_number()) throw UsageError(fmt::format("spec: {}.{} must be a number", where, key));
  return v.get<double>();
}

double number_or(const json& obj, const std::string& where, const char* key, double fallback) {
  return obj.contains(key) ? number_at(obj, where, key) : fallback;
}

Expr expr_at(const json& obj, const std::string& where, const char* key) {
  const json& v = need(obj, where, key);
  if (!v.is_string()) throw UsageError(fmt::format("spec: {}.{} must be an expression string", where, key));
  return parse_expr(v.get<std::string>());
}

void only_vars(const Expr& e, const std::string& what, std::initializer_list<Var> allowed) {
  for (std::size_t i = 0; i < kVarCount; ++i) {
    const auto v = static_cast<Var>(i);
    if (e.depends_on(v) && std::find(allowed.begin(), allowed.end(), v) == allowed.end())
      throw UsageError(fmt::format("spec: {} may not use '{}'", what, var_name(v)));
  }
}

}  // namespace

BenchmarkProblem problem_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("spec: invalid JSON ({})", e.what()));
  }
  if (!doc.is_object()) throw UsageError("spec: the document must be an object");
  const json& kind_v = need(doc, "spec", "kind");
  if (!kind_v.is_string()) throw UsageError("spec: 'kind' must be a string");
  const std::string kind = kind_v.get<std::string>();

  const double alpha = number_at(doc, "spec", "alpha");
  const json& iv = need(doc, "spec", "interval");
  if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
    throw UsageError("spec: 'interval' must be [a, b]");
  const double a = iv[0].get<double>(), b = iv[1].get<double>();
  if (!(b > a)) throw UsageError("spec: interval needs b > a");

  BenchmarkProblem p;
  p.id = "spec";
  if (doc.contains("exact")) {
    p.exact = expr_at(doc, "spec", "exact");
    only_vars(*p.exact, "exact", {Var::t});
  }

  if (kind == "basic" || kind == "isoperimetric") {
    if (kind == "basic")
      check_keys(doc, "spec", {"kind", "alpha", "interval", "lagrangian", "boundary", "exact"});
    else
      check_keys(doc, "spec", {"kind", "alpha", "interval", "lagrangian", "boundary", "constraint", "exact"});
    const json& bd = need(doc, "spec", "boundary");
    check_keys(bd, "boundary", {"xa", "xb"});
    const json& L = need(doc, "spec", "lagrangian");
    if (!L.is_string()) throw UsageError("spec: 'lagrangian' must be an expression string");
    BasicFvp base = BasicFvp::make(alpha, a, b, L.get<std::string>(), number_at(bd, "boundary", "xa"),
                                   number_at(bd, "boundary", "xb"));
    if (kind == "basic") {
      p.payload = base;
      p.default_method = "euler-like";
    } else {
      const json& c = need(doc, "spec", "constraint");
      check_keys(c, "constraint", {"g", "K"});
      IsoperimetricFvp iso{base, expr_at(c, "constraint", "g"), number_at(c, "constraint", "K")};
      only_vars(iso.g, "constraint.g", {Var::t, Var::x, Var::Dx});
      p.payload = iso;
      p.default_method = "isoperimetric";
    }
  } else if (kind == "optimal_control") {
    check_keys(doc, "spec", {"kind", "alpha", "interval", "lagrangian", "boundary", "dynamics", "terminal", "exact"});
    OcProblem oc;
    oc.alpha = alpha;
    oc.a = a;
    oc.T = b;
    oc.L = expr_at(doc, "spec", "lagrangian");
    const json& dyn = need(doc, "spec", "dynamics");
    check_keys(dyn, "dynamics", {"f", "m_int", "m_frac"});
    oc.f = expr_at(dyn, "dynamics", "f");
    oc.m_int = number_or(dyn, "dynamics", "m_int", 0.0);
    oc.m_frac = number_or(dyn, "dynamics", "m_frac", 1.0);
    const json& bd = need(doc, "spec", "boundary");
    check_keys(bd, "boundary", {"xa", "xb"});
    oc.xa = number_at(bd, "boundary", "xa");
    std::string type = "fixed";
    if (doc.contains("terminal")) {
      const json& term = doc.at("terminal");
      check_keys(term, "terminal", {"type", "phi"});
      if (term.contains("type")) {
        if (!term.at("type").is_string()) throw UsageError("spec: terminal.type must be a string");
        type = term.at("type").get<std::string>();
      }
      if (term.contains("phi")) oc.phi = expr_at(term, "terminal", "phi");
    }
    if (type == "fixed") {
      oc.terminal = Terminal::fixed;
      oc.xT = number_at(bd, "boundary", "xb");
    } else if (type == "free_state") {
      oc.terminal = Terminal::free_state;
    } else if (type == "free_time") {
      oc.terminal = Terminal::free_time;
      oc.xT = number_at(bd, "boundary", "xb");
    } else {
      throw UsageError(fmt::format("spec: terminal.type must be fixed, free_state or free_time, not '{}'", type));
    }
    oc.validate();
    p.payload = oc;
    p.default_method = type == "free_time" ? "free-time" : "indirect";
  } else if (kind == "fde") {
    check_keys(doc, "spec", {"kind", "alpha", "interval", "family", "equation", "m_int", "boundary", "exact"});
    FdeSpec f;
    f.alpha = alpha;
    f.a = a;
    f.b = b;
    const std::string family = doc.value("family", std::string("rl"));
    if (family == "rl")
      f.family = Family::rl;
    else if (family == "hadamard")
      f.family = Family::hadamard;
    else
      throw UsageError(fmt::format("spec: family must be rl or hadamard, not '{}'", family));
    f.g = expr_at(doc, "spec", "equation");
    only_vars(f.g, "equation", {Var::t, Var::x});
    f.m_int = number_or(doc, "spec", "m_int", 0.0);
    const json& bd = need(doc, "spec", "boundary");
    check_keys(bd, "boundary", {"xa"});
    f.xa = number_at(bd, "boundary", "xa");
    p.payload = f;
    p.default_method = "fde";
  } else if (kind == "fie") {
    check_keys(doc, "spec", {"kind", "alpha", "interval", "rhs", "boundary", "exact"});
    FieSpec f;
    f.alpha = alpha;
    f.a = a;
    f.b = b;
    f.rhs = expr_at(doc, "spec", "rhs");
    only_vars(f.rhs, "rhs", {Var::t});
    if (doc.contains("boundary")) {
      const json& bd = doc.at("boundary");
      check_keys(bd, "boundary", {"xa"});
      f.xa = number_at(bd, "boundary", "xa");
    }
    p.payload = f;
    p.default_method = "fie";
  } else {
    throw UsageError(fmt::format(
        "spec: kind must be basic, isoperimetric, optimal_control, fde or fie, not '{}'", kind));
  }
  return p;
}

namespace {

// ---------------------------------------------------------------- output

std::string num(double v) { return fmt::format("{:.12g}", v); }

std::string solution_csv(const std::vector<double>& t, const std::vector<double>& x,
                         const std::optional<std::vector<double>>& exact) {
  std::string s = "t,x_num,x_exact,abs_err\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    s += num(t[i]) + ',' + num(x[i]) + ',';
    if (exact) s += num((*exact)[i]) + ',' + num(std::fabs(x[i] - (*exact)[i]));
    else s += ',';
    s += '\n';
  }
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError(fmt::format("cannot open '{}' for writing", path));
  out << text;
  if (!out) throw UsageError(fmt::format("failed writing '{}'", path));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot read '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool to_stdout(const std::string& out) { return out == "csv" || out == "-"; }

// ---------------------------------------------------------------- eval op

struct EvalArgs {
  std::string family = "rl", op = "deriv", side = "left", method = "moment";
  double alpha = 0.5, a = 0.0, b = 1.0;
  int n = 1, N = 4, grid = 100;
  std::string fn, out = "csv", err_against;
};

// c * probe when the expression has one of the probe shapes with a closed-form operator.
struct ProbeMatch {
  double scale = 1.0;
  Probe probe;
};

std::optional<double> literal(const Expr& e) {
  if (e.kind() == Expr::Kind::num) return e.value();
  if (e.kind() == Expr::Kind::neg && e.lhs().kind() == Expr::Kind::num) return -e.lhs().value();
  return std::nullopt;
}

bool is_t(const Expr& e) { return e.kind() == Expr::Kind::var && e.variable() == Var::t; }

// c when e is c*t.
std::optional<double> linear_coef(const Expr& e) {
  if (is_t(e)) return 1.0;
  if (e.kind() == Expr::Kind::neg)
    if (auto c = linear_coef(e.lhs())) return -*c;
  if (e.kind() == Expr::Kind::mul) {
    if (auto l = literal(e.lhs()))
      if (auto c = linear_coef(e.rhs())) return *l * *c;
    if (auto r = literal(e.rhs()))
      if (auto c = linear_coef(e.lhs())) return *r * *c;
  }
  return std::nullopt;
}

// `shift` is the expected terminal inside (t - shift) or (shift - t).
bool is_shifted_t(const Expr& e, double shift, bool reflected) {
  if (!reflected && shift == 0.0 && is_t(e)) return true;
  if (e.kind() != Expr::Kind::sub) return false;
  const Expr l = e.lhs(), r = e.rhs();
  if (!reflected) return is_t(l) && literal(r) && *literal(r) == shift;
  return literal(l) && *literal(l) == shift && is_t(r);
}

// Probes in t for left operators; for right operators the argument is b - t.
std::optional<ProbeMatch> match_probe(const Expr& e, double terminal, bool hadamard, bool reflected) {
  using K = Expr::Kind;
  if (auto c = literal(e)) return ProbeMatch{1.0, Probe::constant(*c)};
  if (e.kind() == K::mul) {
    const auto lc = literal(e.lhs()), rc = literal(e.rhs());
    if (lc)
      if (auto m = match_probe(e.rhs(), terminal, hadamard, reflected)) return ProbeMatch{*lc * m->scale, m->probe};
    if (rc)
      if (auto m = match_probe(e.lhs(), terminal, hadamard, reflected)) return ProbeMatch{*rc * m->scale, m->probe};
    return std::nullopt;
  }
  if (e.kind() == K::neg) {
    if (auto m = match_probe(e.lhs(), terminal, hadamard, reflected)) return ProbeMatch{-m->scale, m->probe};
    return std::nullopt;
  }
  if (hadamard) {
    if (reflected) return std::nullopt;
    auto is_log = [&](const Expr& x) {
      return terminal == 1.0 && x.kind() == K::call && x.fn() == Fn::ln && is_t(x.lhs());
    };
    if (is_log(e)) return ProbeMatch{1.0, Probe::log_power(1.0)};
    if (e.kind() == K::pow && literal(e.rhs())) {
      if (is_log(e.lhs())) return ProbeMatch{1.0, Probe::log_power(*literal(e.rhs()))};
      if (is_t(e.lhs())) return ProbeMatch{1.0, Probe::monomial(*literal(e.rhs()))};
    }
    if (is_t(e)) return ProbeMatch{1.0, Probe::monomial(1.0)};
    return std::nullopt;
  }
  if (is_shifted_t(e, terminal, reflected)) return ProbeMatch{1.0, Probe::power(1.0)};
  if (e.kind() == K::pow && literal(e.rhs()) && is_shifted_t(e.lhs(), terminal, reflected))
    return ProbeMatch{1.0, Probe::power(*literal(e.rhs()))};
  if (!reflected && e.kind() == K::call && e.fn() == Fn::exp)
    if (auto c = linear_coef(e.lhs())) return ProbeMatch{1.0, Probe::exp(*c)};
  return std::nullopt;
}

std::optional<std::vector<double>> exact_operator(const EvalArgs& ea, const Expr& fn,
                                                  const std::vector<double>& nodes) {
  const bool hadamard = ea.family == "hadamard";
  const bool right = ea.side == "right";
  if (right && hadamard) return std::nullopt;
  const auto m = match_probe(fn, right ? ea.b : ea.a, hadamard, right);
  if (!m) return std::nullopt;
  OpFamily fam;
  if (hadamard)
    fam = ea.op == "integral" ? OpFamily::hadamard_integral : OpFamily::hadamard_deriv;
  else if (ea.op == "integral")
    fam = OpFamily::rl_integral;
  else
    fam = ea.family == "caputo" ? OpFamily::caputo_deriv : OpFamily::rl_deriv;
  std::vector<double> v(nodes.size());
  try {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      // A right operator of g(b - t) is the left operator of g(s - a) at s = a + b - t.
      const double s = right ? ea.a + ea.b - nodes[i] : nodes[i];
      v[i] = m->scale * reference_frac_op(fam, ea.alpha, ea.a, m->probe, s);
    }
  } catch (const UsageError&) {
    return std::nullopt;
  }
  return v;
}

int run_eval(const EvalArgs& ea) {
  if (!(ea.alpha > 0.0)) throw UsageError("--alpha must be positive");
  if (!(ea.b > ea.a)) throw UsageError("--b must exceed --a");
  if (ea.grid < 2) throw UsageError("--grid must be at least 2");
  if (!ea.err_against.empty() && ea.err_against != "exact")
    throw UsageError("--err-against accepts only 'exact'");
  const Family family = ea.family == "rl" ? Family::rl : ea.family == "caputo" ? Family::caputo : Family::hadamard;
  const Side side = ea.side == "left" ? Side::left : Side::right;
  const bool integral = ea.op == "integral";
  const Expr fn = parse_expr(ea.fn);
  only_vars(fn, "--fn", {Var::t});

  const auto all = uniform_nodes(ea.a, ea.b, ea.grid);
  std::vector<double> nodes = all;
  if (side == Side::left)
    nodes.erase(nodes.begin());
  else
    nodes.pop_back();

  std::vector<double> value;
  if (ea.method == "taylor" || ea.method == "moment") {
    const ExpansionMethod m =
        ea.method == "taylor" ? ExpansionMethod::taylor(ea.N) : ExpansionMethod::moment(ea.n, ea.N);
    const auto f = FunctionModel::from_expr(fn, ea.a, ea.b, std::max(12, ea.N + 2));
    value = integral ? frac_integral_expansion(f, ea.alpha, ea.a, ea.b, side, family, m, nodes)
                     : frac_deriv_expansion(f, ea.alpha, ea.a, ea.b, side, family, m, nodes);
  } else {
    if (integral) throw UsageError("grid methods approximate derivatives only");
    GlScheme scheme;
    if (ea.method == "diethelm") {
      if (family != Family::caputo || side != Side::left)
        throw UsageError("diethelm is a left Caputo scheme");
      scheme = GlScheme::diethelm_caputo;
    } else {
      if (family != Family::rl) throw UsageError(fmt::format("{} is a Riemann-Liouville scheme", ea.method));
      if (ea.method == "shifted-gl") {
        if (side != Side::left) throw UsageError("shifted-gl is left-sided");
        scheme = GlScheme::gl_shifted_left;
      } else {
        scheme = side == Side::left ? GlScheme::gl_left : GlScheme::gl_right;
      }
    }
    std::optional<double> xdot_a;
    if (scheme == GlScheme::diethelm_caputo && ea.alpha > 1.0)
      xdot_a = diff_expr(fn, Var::t).eval_t(ea.a);
    const auto d = frac_deriv_grid(TabularFunction::sample([&](double t) { return fn.eval_t(t); }, all),
                                   ea.alpha, scheme, xdot_a);
    value.assign(d.x.begin(), d.x.end());
    if (side == Side::left)
      value.erase(value.begin());
    else
      value.pop_back();
  }

  std::optional<std::vector<double>> exact;
  if (!ea.err_against.empty()) {
    exact = exact_operator(ea, fn, nodes);
    if (!exact) spdlog::warn("no closed form known for '{}'; error columns left empty", ea.fn);
  }
  const std::string csv = solution_csv(nodes, value, exact);
  if (to_stdout(ea.out))
    std::cout << csv;
  else
    write_text(ea.out, csv);
  return 0;
}

// ---------------------------------------------------------------- solve

struct SolveArgs {
  std::string problem, spec, out, err_against, method;
  std::optional<int> n, N, steps;
};

std::string method_for(const std::string& sub, const SolveArgs& sa) {
  if (sub == "direct") return "euler-like";
  if (sub == "first-variation") return "first-variation";
  if (sub == "iso") return "isoperimetric";
  if (sub == "free-time") return "free-time";
  if (sub == "fie") return "fie";
  if (sub == "indirect") {
    if (sa.method.empty() || sa.method == "transformed") return "indirect";
    if (sa.method == "fnc") return "fractional-conditions";
    throw UsageError("solve indirect --method must be transformed or fnc");
  }
  if (sub == "fde") {
    if (sa.method.empty() || sa.method == "moment") return "fde";
    if (sa.method == "integer") return "fde-integer";
    throw UsageError("solve fde --method must be moment or integer");
  }
  throw UsageError(fmt::format("unknown solve target '{}'", sub));
}

int run_solve(const std::string& sub, const SolveArgs& sa) {
  if (sa.problem.empty() == sa.spec.empty()) throw UsageError("give exactly one of --problem or --spec");
  if (!sa.err_against.empty() && sa.err_against != "exact")
    throw UsageError("--err-against accepts only 'exact'");
  const std::string method = method_for(sub, sa);
  BenchmarkProblem p = sa.problem.empty() ? problem_from_json(read_text(sa.spec)) : find_problem(sa.problem);

  std::map<std::string, int> params;
  if (sa.n) params["n"] = *sa.n;
  if (sa.N) params["N"] = *sa.N;
  if (sa.steps) params["steps"] = *sa.steps;
  for (const auto& [k, v] : params)
    if (v < 1) throw UsageError(fmt::format("--{} must be positive", k));
  // Spec files carry no default sizes.
  if (sa.problem.empty()) p.default_params = {{"n", 30}, {"N", 4}};

  const RunOutput out = run_problem(p, method, params);

  const bool csv_stdout = !sa.out.empty() && to_stdout(sa.out);
  std::FILE* summary = csv_stdout ? stderr : stdout;
  std::string params_str;
  for (const auto& [k, v] : params) params_str += fmt::format(" {}={}", k, v);
  fmt::print(summary, "problem {} method {}{}\n", p.id, method, params_str);
  if (method == "free-time") fmt::print(summary, "T = {}\n", num(out.T));
  if (out.iterations > 0) fmt::print(summary, "iterations = {}\nresidual = {:.3e}\n", out.iterations, out.residual);
  if (out.x_exact) {
    const ErrorMetrics m = error_metrics(out.t, out.x, *out.x_exact);
    fmt::print(summary, "E_L2 = {:.6g}\nE_max = {:.6g}\n", m.E_L2, m.E_max);
  }
  std::fflush(summary);

  if (!sa.out.empty()) {
    const auto exact = sa.err_against.empty() ? std::nullopt : out.x_exact;
    if (!sa.err_against.empty() && !exact) spdlog::warn("problem '{}' has no exact solution; error columns left empty", p.id);
    const std::string csv = solution_csv(out.t, out.x, exact);
    if (csv_stdout)
      std::cout << csv;
    else
      write_text(sa.out, csv);
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string suite, out, format;
  int jobs = 1;
  bool no_timing = false;
};

int run_bench(const BenchArgs& ba) {
  if (ba.jobs < 1) throw UsageError("--jobs must be at least 1");
  std::string format = ba.format;
  if (format.empty())
    format = ba.out.size() > 3 && ba.out.substr(ba.out.size() - 3) == ".md" ? "md" : "csv";
  const BenchReport rep = ba.suite == "coefficients"
                              ? coefficient_suite()
                              : run_suite(named_suite(ba.suite), {!ba.no_timing, ba.jobs});
  const std::string text = format == "md" ? to_markdown(rep) : to_csv(rep, !ba.no_timing);
  if (ba.out.empty() || ba.out == "-")
    std::cout << text;
  else
    write_text(ba.out, text);
  int failed = 0;
  for (const auto& row : rep.rows)
    if (!row.error.empty()) ++failed;
  if (failed) spdlog::error("{} of {} rows failed", failed, rep.rows.size());
  return failed ? 1 : 0;
}

}  // namespace

const std::string& expr_grammar_help() {
  static const std::string s = kGrammar;
  return s;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Fractional variational problems: operators, solvers and benchmarks", "fvp"};
  app.require_subcommand(1);
  app.footer(kGrammar);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate fractional operators");
  eval->require_subcommand(1);
  eval->footer(kGrammar);
  auto* op = eval->add_subcommand("op", "Apply an operator to a function on a uniform grid");
  op->footer(kGrammar);
  op->add_option("--family", ea.family, "rl | caputo | hadamard")
      ->check(CLI::IsMember({"rl", "caputo", "hadamard"}));
  op->add_option("--op", ea.op, "deriv | integral")->check(CLI::IsMember({"deriv", "integral"}));
  op->add_option("--side", ea.side, "left | right")->check(CLI::IsMember({"left", "right"}));
  op->add_option("--alpha", ea.alpha, "Order");
  op->add_option("--method", ea.method, "gl | shifted-gl | diethelm | taylor | moment")
      ->check(CLI::IsMember({"gl", "shifted-gl", "diethelm", "taylor", "moment"}));
  op->add_option("--n", ea.n, "Highest integer derivative kept (moment)");
  op->add_option("--N", ea.N, "Truncation order (taylor, moment)");
  op->add_option("--fn", ea.fn, "EXPR in t")->required();
  op->add_option("--a", ea.a, "Left end");
  op->add_option("--b", ea.b, "Right end");
  op->add_option("--grid", ea.grid, "Number of subintervals");
  op->add_option("--out", ea.out, "csv (standard output) or a file path");
  op->add_option("--err-against", ea.err_against, "exact: fill the error columns from the closed form");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve a registry problem or a JSON spec");
  solve->require_subcommand(1);
  solve->footer(kGrammar);
  const std::pair<const char*, const char*> targets[] = {
      {"direct", "Direct method on the Euler-like discretization"},
      {"first-variation", "Direct method on the discretized first variation"},
      {"iso", "Isoperimetric problem"},
      {"indirect", "Indirect method (--method transformed | fnc)"},
      {"free-time", "Optimal control with free final time"},
      {"fde", "Fractional differential equation (--method moment | integer)"},
      {"fie", "Fractional integral equation"}};
  std::vector<CLI::App*> solve_subs;
  for (const auto& [name, desc] : targets) {
    auto* s = solve->add_subcommand(name, desc);
    s->footer(kGrammar);
    auto* prob = s->add_option("--problem", sa.problem, "Registry id");
    auto* spec = s->add_option("--spec", sa.spec, "JSON problem file");
    prob->excludes(spec);
    s->add_option("--n", sa.n, "Mesh subintervals (direct methods)");
    s->add_option("--N", sa.N, "Expansion order");
    s->add_option("--steps", sa.steps, "Integration steps");
    s->add_option("--out", sa.out, "Write the solution CSV to a file, or csv for standard output");
    s->add_option("--err-against", sa.err_against, "exact: fill the error columns from the exact solution");
    if (std::string(name) == "indirect" || std::string(name) == "fde")
      s->add_option("--method", sa.method, "Variant");
    solve_subs.push_back(s);
  }

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite");
  bench->footer(kGrammar);
  bench->add_option("--suite", ba.suite,
                    "direct | first-variation | indirect | fde | fie | indint | operators | coefficients | all")
      ->required();
  bench->add_option("--out", ba.out, "Output path (standard output when absent)");
  bench->add_option("--format", ba.format, "csv | md (default from the --out extension)")
      ->check(CLI::IsMember({"csv", "md"}));
  bench->add_option("--jobs", ba.jobs, "Rows run in parallel");
  bench->add_flag("--no-timing", ba.no_timing, "Leave wall_ms empty for reproducible output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    init_logging();
    if (op->parsed()) return run_eval(ea);
    for (auto* s : solve_subs)
      if (s->parsed()) return run_solve(s->get_name(), sa);
    if (bench->parsed()) return run_bench(ba);
    return 2;
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const SyntaxError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const Error& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return 1;
  }
}

}  // namespace fvp
