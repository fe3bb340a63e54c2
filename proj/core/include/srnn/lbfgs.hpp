#pragma once

#include <functional>
#include <span>
#include <vector>

namespace srnn::training {

/// Evaluate f(x) and write the gradient into g (same length as x).
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> g)>;

struct LbfgsOptions {
  int max_iters = 20;
  int history = 10;
  double c1 = 1e-4;        // sufficient decrease
  double c2 = 0.9;         // curvature
  double grad_tol = 1e-12; // stop when |g|_inf falls below
  int max_line_search = 25;
};

struct LbfgsResult {
  double f = 0.0;
  int iters = 0;
  bool converged = false;          // gradient tolerance reached
  bool line_search_failed = false; // stopped at the best iterate found
};

/// Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search.
/// Minimizes in place; on line-search failure the best iterate seen is kept.
LbfgsResult lbfgs_minimize(const ObjectiveFn& fg, std::vector<double>& x,
                           const LbfgsOptions& opts = {});

}  // namespace srnn::training
