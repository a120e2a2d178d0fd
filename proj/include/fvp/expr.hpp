#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>

namespace fvp {

// Variables available to every expression. Lagrangians see xp (first
// derivative) and Dx (fractional derivative) as plain inputs.
enum class Var { t = 0, x, xp, Dx, u, lambda };
inline constexpr std::size_t kVarCount = 6;
using VarEnv = std::array<double, kVarCount>;

const char* var_name(Var v);

enum class Fn { exp, ln, sin, cos, sqrt, gamma };

class Expr {
 public:
  enum class Kind { num, var, add, sub, mul, div, pow, neg, call };

  Expr();  // literal 0

  static Expr num(double v);
  static Expr var(Var v);
  static Expr call(Fn f, Expr arg);
  // Unsimplified node; the parser uses this to keep the tree as written.
  static Expr raw(Kind k, Expr a, Expr b = Expr::num(0.0));

  Kind kind() const;
  double value() const;  // num only
  Var variable() const;  // var only
  Fn fn() const;         // call only
  Expr lhs() const;
  Expr rhs() const;  // binary only

  double eval(const VarEnv& env) const;
  double eval_t(double t) const;  // all other variables zero

  bool depends_on(Var v) const;
  bool is_constant() const;

  friend bool operator==(const Expr& a, const Expr& b);

  // Simplifying constructors (literal folding, 0/1 identities).
  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr pow(const Expr& a, const Expr& b);

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> n);
  std::shared_ptr<const Node> node_;
};

// Grammar (whitespace is ignored):
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | power ;
//   power   = primary [ "^" unary ] ;
//   primary = number | ident | ident "(" expr ")" | "(" expr ")" ;
// Throws SyntaxError with the byte offset of the offending token.
Expr parse_expr(std::string_view src);

Expr diff_expr(const Expr& e, Var v);

// Minimal-parenthesis printer; parse_expr(to_string(e)) == e.
std::string to_string(const Expr& e);

}  // namespace fvp
