#include "fvp/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fvp/error.hpp"
#include "fvp/special.hpp"

namespace fvp {

struct Expr::Node {
  Kind kind = Kind::num;
  double value = 0.0;
  Var var = Var::t;
  Fn fn = Fn::exp;
  std::shared_ptr<const Node> a, b;
};

namespace {

const char* fn_name(Fn f) {
  switch (f) {
    case Fn::exp: return "exp";
    case Fn::ln: return "ln";
    case Fn::sin: return "sin";
    case Fn::cos: return "cos";
    case Fn::sqrt: return "sqrt";
    case Fn::gamma: return "gamma";
  }
  return "?";
}

}  // namespace

const char* var_name(Var v) {
  switch (v) {
    case Var::t: return "t";
    case Var::x: return "x";
    case Var::xp: return "xp";
    case Var::Dx: return "Dx";
    case Var::u: return "u";
    case Var::lambda: return "lambda";
  }
  return "?";
}

Expr::Expr() : Expr(num(0.0)) {}
Expr::Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

Expr Expr::num(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::num;
  n->value = v;
  return Expr(std::move(n));
}

Expr Expr::var(Var v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::var;
  n->var = v;
  return Expr(std::move(n));
}

Expr Expr::call(Fn f, Expr arg) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::call;
  n->fn = f;
  n->a = std::move(arg.node_);
  return Expr(std::move(n));
}

Expr Expr::raw(Kind k, Expr a, Expr b) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a.node_);
  n->b = std::move(b.node_);
  return Expr(std::move(n));
}

Expr::Kind Expr::kind() const { return node_->kind; }
double Expr::value() const { return node_->value; }
Var Expr::variable() const { return node_->var; }
Fn Expr::fn() const { return node_->fn; }
Expr Expr::lhs() const { return Expr(node_->a); }
Expr Expr::rhs() const { return Expr(node_->b); }

double Expr::eval(const VarEnv& env) const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::num: return n.value;
    case Kind::var: return env[static_cast<std::size_t>(n.var)];
    case Kind::add: return lhs().eval(env) + rhs().eval(env);
    case Kind::sub: return lhs().eval(env) - rhs().eval(env);
    case Kind::mul: return lhs().eval(env) * rhs().eval(env);
    case Kind::div: {
      const double d = rhs().eval(env);
      if (d == 0.0) throw EvalError("division by zero");
      return lhs().eval(env) / d;
    }
    case Kind::neg: return -lhs().eval(env);
    case Kind::pow: {
      const double base = lhs().eval(env);
      const double ex = rhs().eval(env);
      if (base < 0.0 && ex != std::nearbyint(ex))
        throw EvalError(fmt::format("negative base {} with non-integer exponent {}", base, ex));
      if (base == 0.0 && ex < 0.0) throw EvalError("zero raised to a negative power");
      return std::pow(base, ex);
    }
    case Kind::call: {
      const double v = lhs().eval(env);
      switch (n.fn) {
        case Fn::exp: return std::exp(v);
        case Fn::ln:
          if (!(v > 0.0)) throw EvalError(fmt::format("ln of non-positive value {}", v));
          return std::log(v);
        case Fn::sin: return std::sin(v);
        case Fn::cos: return std::cos(v);
        case Fn::sqrt:
          if (v < 0.0) throw EvalError(fmt::format("sqrt of negative value {}", v));
          return std::sqrt(v);
        case Fn::gamma:
          try {
            return fvp::gamma(v);
          } catch (const DomainError& e) {
            throw EvalError(e.what());
          }
      }
    }
  }
  return 0.0;
}

double Expr::eval_t(double t) const {
  VarEnv env{};
  env[0] = t;
  return eval(env);
}

bool Expr::depends_on(Var v) const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::num: return false;
    case Kind::var: return n.var == v;
    case Kind::neg:
    case Kind::call: return lhs().depends_on(v);
    default: return lhs().depends_on(v) || rhs().depends_on(v);
  }
}

bool Expr::is_constant() const {
  for (std::size_t i = 0; i < kVarCount; ++i)
    if (depends_on(static_cast<Var>(i))) return false;
  return true;
}

bool operator==(const Expr& x, const Expr& y) {
  if (x.node_ == y.node_) return true;
  const auto& a = *x.node_;
  const auto& b = *y.node_;
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::num: return a.value == b.value;
    case Expr::Kind::var: return a.var == b.var;
    case Expr::Kind::neg: return x.lhs() == y.lhs();
    case Expr::Kind::call: return a.fn == b.fn && x.lhs() == y.lhs();
    default: return x.lhs() == y.lhs() && x.rhs() == y.rhs();
  }
}

namespace {

bool is_num(const Expr& e, double v) { return e.kind() == Expr::Kind::num && e.value() == v; }
bool is_lit(const Expr& e) { return e.kind() == Expr::Kind::num; }

}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  if (is_lit(a) && is_lit(b)) return Expr::num(a.value() + b.value());
  if (is_num(a, 0.0)) return b;
  if (is_num(b, 0.0)) return a;
  return Expr::raw(Expr::Kind::add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (is_lit(a) && is_lit(b)) return Expr::num(a.value() - b.value());
  if (is_num(b, 0.0)) return a;
  if (is_num(a, 0.0)) return -b;
  return Expr::raw(Expr::Kind::sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (is_lit(a) && is_lit(b)) return Expr::num(a.value() * b.value());
  if (is_num(a, 0.0) || is_num(b, 0.0)) return Expr::num(0.0);
  if (is_num(a, 1.0)) return b;
  if (is_num(b, 1.0)) return a;
  if (is_lit(b)) return b * a;
  if (is_lit(a) && b.kind() == Expr::Kind::mul && is_lit(b.lhs()))
    return Expr::num(a.value() * b.lhs().value()) * b.rhs();
  return Expr::raw(Expr::Kind::mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (is_lit(a) && is_lit(b) && b.value() != 0.0) return Expr::num(a.value() / b.value());
  if (is_num(a, 0.0)) return Expr::num(0.0);
  if (is_num(b, 1.0)) return a;
  return Expr::raw(Expr::Kind::div, a, b);
}

Expr operator-(const Expr& a) {
  if (is_lit(a)) return Expr::num(-a.value());
  if (a.kind() == Expr::Kind::neg) return a.lhs();
  return Expr::raw(Expr::Kind::neg, a);
}

Expr pow(const Expr& a, const Expr& b) {
  if (is_num(b, 0.0)) return Expr::num(1.0);
  if (is_num(b, 1.0)) return a;
  if (is_lit(a) && is_lit(b) && (a.value() > 0.0 || b.value() == std::nearbyint(b.value())))
    return Expr::num(std::pow(a.value(), b.value()));
  return Expr::raw(Expr::Kind::pow, a, b);
}

Expr diff_expr(const Expr& e, Var v) {
  using K = Expr::Kind;
  if (!e.depends_on(v)) return Expr::num(0.0);
  switch (e.kind()) {
    case K::num: return Expr::num(0.0);
    case K::var: return Expr::num(e.variable() == v ? 1.0 : 0.0);
    case K::add: return diff_expr(e.lhs(), v) + diff_expr(e.rhs(), v);
    case K::sub: return diff_expr(e.lhs(), v) - diff_expr(e.rhs(), v);
    case K::neg: return -diff_expr(e.lhs(), v);
    case K::mul: {
      const Expr a = e.lhs(), b = e.rhs();
      return diff_expr(a, v) * b + a * diff_expr(b, v);
    }
    case K::div: {
      const Expr a = e.lhs(), b = e.rhs();
      if (!b.depends_on(v)) return diff_expr(a, v) / b;
      return (diff_expr(a, v) * b - a * diff_expr(b, v)) / pow(b, Expr::num(2.0));
    }
    case K::pow: {
      const Expr a = e.lhs(), b = e.rhs();
      if (!b.depends_on(v)) return b * pow(a, b - Expr::num(1.0)) * diff_expr(a, v);
      const Expr lna = Expr::call(Fn::ln, a);
      if (!a.depends_on(v)) return e * lna * diff_expr(b, v);
      return e * (diff_expr(b, v) * lna + b * diff_expr(a, v) / a);
    }
    case K::call: {
      const Expr a = e.lhs();
      const Expr da = diff_expr(a, v);
      switch (e.fn()) {
        case Fn::exp: return e * da;
        case Fn::ln: return da / a;
        case Fn::sin: return Expr::call(Fn::cos, a) * da;
        case Fn::cos: return -(Expr::call(Fn::sin, a) * da);
        case Fn::sqrt: return da / (Expr::num(2.0) * e);
        case Fn::gamma:
          throw UsageError("gamma() may only be applied to arguments that do not depend on "
                           "the differentiation variable");
      }
    }
  }
  return Expr::num(0.0);
}

namespace {

int prec(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::add:
    case Expr::Kind::sub: return 1;
    case Expr::Kind::mul:
    case Expr::Kind::div: return 2;
    case Expr::Kind::neg: return 3;
    case Expr::Kind::pow: return 4;
    default: return 5;
  }
}

std::string fmt_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, std::fabs(v));
  std::string s(buf, res.ptr);
  if (std::signbit(v)) return "(-" + s + ")";
  return s;
}

std::string paren(const std::string& s, bool p) { return p ? "(" + s + ")" : s; }

}  // namespace

std::string to_string(const Expr& e) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::num: return fmt_number(e.value());
    case K::var: return var_name(e.variable());
    case K::call: return std::string(fn_name(e.fn())) + "(" + to_string(e.lhs()) + ")";
    case K::neg: return "-" + paren(to_string(e.lhs()), prec(e.lhs()) < 3);
    case K::pow:
      return paren(to_string(e.lhs()), prec(e.lhs()) <= 4) + "^" +
             paren(to_string(e.rhs()), prec(e.rhs()) < 3);
    default: {
      const int p = prec(e);
      const char* op = e.kind() == K::add ? "+" : e.kind() == K::sub ? "-" : e.kind() == K::mul ? "*" : "/";
      return paren(to_string(e.lhs()), prec(e.lhs()) < p) + op +
             paren(to_string(e.rhs()), prec(e.rhs()) <= p);
    }
  }
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view s) : src_(s) {}

  Expr parse() {
    skip_ws();
    if (pos_ == src_.size()) throw SyntaxError("empty expression", pos_);
    Expr e = expr();
    skip_ws();
    if (pos_ != src_.size())
      throw SyntaxError(fmt::format("unexpected '{}'", src_[pos_]), pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = Expr::raw(Expr::Kind::add, lhs, term());
      else if (accept('-'))
        lhs = Expr::raw(Expr::Kind::sub, lhs, term());
      else
        return lhs;
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = Expr::raw(Expr::Kind::mul, lhs, unary());
      else if (accept('/'))
        lhs = Expr::raw(Expr::Kind::div, lhs, unary());
      else
        return lhs;
    }
  }

  Expr unary() {
    if (accept('-')) {
      Expr operand = unary();
      if (operand.kind() == Expr::Kind::num) return Expr::num(-operand.value());
      return Expr::raw(Expr::Kind::neg, operand);
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) return Expr::raw(Expr::Kind::pow, base, unary());
    return base;
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) throw SyntaxError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw SyntaxError(fmt::format("unexpected '{}'", c), pos_);
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
        digits();
      else
        pos_ = save;
    }
    double v = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
      throw SyntaxError("malformed number", start);
    return Expr::num(v);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string_view id = src_.substr(start, pos_ - start);
    static constexpr std::pair<std::string_view, Fn> fns[] = {
        {"exp", Fn::exp}, {"ln", Fn::ln},     {"sin", Fn::sin},
        {"cos", Fn::cos}, {"sqrt", Fn::sqrt}, {"gamma", Fn::gamma}};
    for (const auto& [name, f] : fns) {
      if (id == name) {
        if (!accept('(')) throw SyntaxError(fmt::format("expected '(' after {}", id), pos_);
        Expr arg = expr();
        if (!accept(')')) throw SyntaxError("expected ')'", pos_);
        return Expr::call(f, arg);
      }
    }
    if (id == "pi") return Expr::num(std::numbers::pi);
    for (std::size_t i = 0; i < kVarCount; ++i)
      if (id == var_name(static_cast<Var>(i))) return Expr::var(static_cast<Var>(i));
    throw SyntaxError(fmt::format("unknown identifier '{}'", id), start);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view src) { return Parser(src).parse(); }

}  // namespace fvp
