#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fvp/approx.hpp"
#include "fvp/direct.hpp"
#include "fvp/funcmodel.hpp"
#include "fvp/indirect.hpp"

namespace fvp {

// A fractional operator applied to a known function on a uniform grid.
struct OperatorCase {
  Family family = Family::rl;
  Side side = Side::left;
  bool integral = false;
  double alpha = 0.5;
  double a = 0.0, b = 1.0;
  Expr fn;
  ExpansionMethod method = ExpansionMethod::moment(1, 4);
  int grid = 100;
};

using ProblemPayload = std::variant<BasicFvp, IsoperimetricFvp, OcProblem, FdeSpec, FieSpec,
                                    IndIntProblem, OperatorCase>;

struct BenchmarkProblem {
  std::string id;
  ProblemPayload payload;
  std::optional<Expr> exact;  // over t
  std::string anchor;         // which table or figure the entry reproduces
  std::string notes;
  std::string default_method;
  std::map<std::string, int> default_params;
};

const std::vector<BenchmarkProblem>& registry();
// Throws NotFound.
const BenchmarkProblem& find_problem(const std::string& id);

struct ErrorMetrics {
  double E_L2 = 0.0;   // sqrt of the trapezoid integral of the squared deviation
  double E_max = 0.0;  // largest nodal deviation
};

// Throws UsageError when the sizes differ or fewer than two nodes are given.
ErrorMetrics error_metrics(const std::vector<double>& t, const std::vector<double>& x,
                           const std::vector<double>& x_exact);
ErrorMetrics error_metrics(const std::vector<double>& t, const std::vector<double>& x,
                           const FunctionModel& exact);
ErrorMetrics error_metrics(const DiscreteSolution& s, const FunctionModel& exact);

// Numerical solution of one registry entry on its own nodes.
struct RunOutput {
  std::vector<double> t, x;
  std::optional<std::vector<double>> x_exact;
  double T = 0.0;  // final time for free-time problems
  int iterations = 0;
  double residual = 0.0;
};

// Methods: euler-like, first-variation, isoperimetric, indirect, fractional-conditions,
// free-time, fde, fie, indint, operator. Params: n, N, steps.
RunOutput run_problem(const BenchmarkProblem& p, const std::string& method,
                      const std::map<std::string, int>& params);

struct SuiteItem {
  std::string id;
  std::string method;  // empty: the entry's default
  std::map<std::string, int> params;
};

struct BenchRow {
  std::string id, method, params;
  std::optional<ErrorMetrics> metrics;
  double wall_ms = 0.0;
  std::string error;  // non-empty when the row failed
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

struct SuiteOptions {
  bool timing = true;  // false leaves wall_ms empty, making CSV output reproducible
  int jobs = 1;
};

// Rows keep the order of `items`; a failing row records its error and the suite continues.
BenchReport run_suite(const std::vector<SuiteItem>& items, const SuiteOptions& opts = {});

// Named suites: direct, first-variation, indirect, fde, fie, indint, operators, coefficients.
std::vector<SuiteItem> named_suite(const std::string& name);
// The coefficient table is not a solve; its rows compare B(α,N) with the reference values.
BenchReport coefficient_suite();

std::string to_csv(const BenchReport& r, bool timing = true);
std::string to_markdown(const BenchReport& r);

// Reference values printed in the source tables.
struct ReferenceTables {
  std::vector<double> b_alpha;           // 6 rows
  std::vector<int> b_N;                  // 7 columns
  std::vector<std::vector<double>> B;    // B(α,N)
  std::vector<int> tail_i;               // derivative tail rows i = 1..4
  std::vector<int> tail_m;               // columns N - n
  std::vector<std::vector<double>> tail;
  std::vector<std::vector<double>> integral_tail;  // i = 0..5 by N - n = 0..4
  std::vector<double> integral_b_tail;             // N - n = 0..4
  // (example, n, E) rows of the direct-method table.
  struct DirectRow {
    int example, n;
    double E;
  };
  std::vector<DirectRow> direct;
};

const ReferenceTables& reference_tables();

}  // namespace fvp
