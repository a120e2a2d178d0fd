#pragma once

#include <cstddef>
#include <vector>

namespace fvp {

// Gamma function; throws DomainError at 0, -1, -2, ...
double gamma(double x);

// log|Γ(x)| and the sign of Γ(x).
double log_gamma(double x);
int gamma_sign(double x);

// Γ(x)/Γ(y) without intermediate overflow.
double gamma_ratio(double x, double y);

// 1/Γ(x), zero at the poles.
double rgamma(double x);

// Two-parameter Mittag-Leffler function E_{α,β}(z) by its power series.
// Throws EvalError when |z| exceeds max_abs_z or the series fails to settle.
double mittag_leffler(double alpha, double beta, double z, double max_abs_z = 50.0);

struct GLWeights {
  double alpha = 0.0;
  std::vector<double> w;  // ω_0 .. ω_K

  double operator[](std::size_t k) const { return w[k]; }
  std::size_t size() const { return w.size(); }
};

// Grünwald-Letnikov weights ω_k = (-1)^k C(α,k) by recurrence.
GLWeights gl_weights(double alpha, std::size_t K);

// Generalized binomial coefficient through gamma ratios (validation path).
double binomial_gamma(double a, int k);

// Stirling function S(α,k) = (1/k!) Σ_{j=1..k} (-1)^{k-j} C(k,j) j^α.
// S(α,0) is the empty sum, 0.
double stirling(double alpha, int k);

}  // namespace fvp
