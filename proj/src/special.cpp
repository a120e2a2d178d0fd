#include "fvp/special.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fvp/error.hpp"

namespace fvp {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

bool is_pole(double x) { return x <= 0.0 && x == std::nearbyint(x); }

// sin(πx) with exact zeros at integers.
double sinpi(double x) {
  const double n = std::nearbyint(x);
  const double r = x - n;
  const double s = std::sin(std::numbers::pi * r);
  return (static_cast<long long>(n) % 2 == 0) ? s : -s;
}

double lanczos_sum(double xm1) {
  double a = kLanczos[0];
  for (std::size_t i = 1; i < kLanczos.size(); ++i) a += kLanczos[i] / (xm1 + static_cast<double>(i));
  return a;
}

// Γ(x) for x >= 0.5.
double gamma_pos(double x) {
  const double xm1 = x - 1.0;
  const double t = xm1 + kLanczosG + 0.5;
  const double r = std::pow(t, 0.5 * (xm1 + 0.5));
  return std::sqrt(2.0 * std::numbers::pi) * r * (r * std::exp(-t)) * lanczos_sum(xm1);
}

double log_gamma_pos(double x) {
  const double xm1 = x - 1.0;
  const double t = xm1 + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (xm1 + 0.5) * std::log(t) - t +
         std::log(lanczos_sum(xm1));
}

}  // namespace

double gamma(double x) {
  if (std::isnan(x)) return x;
  if (is_pole(x)) throw DomainError(fmt::format("gamma: pole at {}", x));
  if (x < 0.5) return std::numbers::pi / (sinpi(x) * gamma_pos(1.0 - x));
  if (x > 171.7) return INFINITY;
  return gamma_pos(x);
}

double log_gamma(double x) {
  if (is_pole(x)) throw DomainError(fmt::format("log_gamma: pole at {}", x));
  if (x < 0.5) return std::log(std::numbers::pi / std::fabs(sinpi(x))) - log_gamma_pos(1.0 - x);
  if (x < 100.0) return std::log(gamma_pos(x));
  return log_gamma_pos(x);
}

int gamma_sign(double x) {
  if (is_pole(x)) throw DomainError(fmt::format("gamma_sign: pole at {}", x));
  if (x > 0.0) return 1;
  // Γ alternates sign between consecutive negative integers.
  const long long k = static_cast<long long>(std::floor(x));
  return (k % 2 == 0) ? 1 : -1;
}

double gamma_ratio(double x, double y) {
  if (std::fabs(x) < 150.0 && std::fabs(y) < 150.0) return gamma(x) / gamma(y);
  return gamma_sign(x) * gamma_sign(y) * std::exp(log_gamma(x) - log_gamma(y));
}

double rgamma(double x) {
  if (is_pole(x)) return 0.0;
  if (x > 171.0) return std::exp(-log_gamma(x));
  return 1.0 / gamma(x);
}

double mittag_leffler(double alpha, double beta, double z, double max_abs_z) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw DomainError("mittag_leffler: alpha and beta must be positive");
  if (std::fabs(z) > max_abs_z)
    throw EvalError(fmt::format("mittag_leffler: |z| = {} exceeds series budget {}", std::fabs(z),
                                max_abs_z));
  if (z == 0.0) return rgamma(beta);

  // Long double terms with Neumaier compensation keep the alternating case
  // (z < 0) accurate to about 1e-12 relative for |z| <= 10.
  long double sum = 0.0L, comp = 0.0L, prev = INFINITY;
  const long double az = std::fabs(static_cast<long double>(z));
  int small_run = 0;
  for (int j = 0; j < 20000; ++j) {
    const long double arg = static_cast<long double>(alpha) * j + beta;
    long double term;
    if (arg < 1700.0L)
      term = std::pow(az, static_cast<long double>(j)) / std::tgamma(arg);
    else
      term = std::exp(j * std::log(az) - std::lgamma(arg));
    if (z < 0.0 && (j % 2 == 1)) term = -term;

    const long double s = sum + term;
    if (std::fabs(sum) >= std::fabs(term))
      comp += (sum - s) + term;
    else
      comp += (term - s) + sum;
    sum = s;

    const long double total = std::fabs(sum + comp);
    if (!std::isfinite(static_cast<double>(sum)))
      throw EvalError("mittag_leffler: non-finite accumulation");
    if (std::fabs(term) <= 1e-17L * total && std::fabs(term) < prev) {
      if (++small_run >= 2) return static_cast<double>(sum + comp);
    } else {
      small_run = 0;
    }
    prev = std::fabs(term);
  }
  throw EvalError("mittag_leffler: series did not converge");
}

GLWeights gl_weights(double alpha, std::size_t K) {
  GLWeights g;
  g.alpha = alpha;
  g.w.resize(K + 1);
  g.w[0] = 1.0;
  for (std::size_t k = 1; k <= K; ++k)
    g.w[k] = g.w[k - 1] * (static_cast<double>(k) - 1.0 - alpha) / static_cast<double>(k);
  return g;
}

double binomial_gamma(double a, int k) {
  if (k < 0) return 0.0;
  // C(a,k) = Γ(a+1) / (Γ(k+1) Γ(a-k+1)); integer a with k > a gives 0.
  return gamma(a + 1.0) * rgamma(k + 1.0) * rgamma(a - k + 1.0);
}

double stirling(double alpha, int k) {
  if (k < 0) throw DomainError("stirling: k must be non-negative");
  if (k == 0) return 0.0;
  long double sum = 0.0L;
  long double binom = 1.0L;  // C(k,0)
  long double fact = 1.0L;
  for (int j = 1; j <= k; ++j) {
    binom = binom * static_cast<long double>(k - j + 1) / j;
    fact *= j;
    const long double sign = ((k - j) % 2 == 0) ? 1.0L : -1.0L;
    sum += sign * binom * std::pow(static_cast<long double>(j), static_cast<long double>(alpha));
  }
  return static_cast<double>(sum / fact);
}

}  // namespace fvp
