#include "srnn/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "srnn/util.hpp"

namespace srnn::training {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct Pair {
  std::vector<double> s;
  std::vector<double> y;
  double rho = 0.0;
};

// Strong-Wolfe line search (bracket + zoom, cubic-free bisection refinement).
// phi(a) = f(x + a d). Returns the accepted step or 0 on failure; on success
// x, f, g hold the accepted point.
double wolfe_line_search(const ObjectiveFn& fg, std::vector<double>& x, double& f,
                         std::vector<double>& g, const std::vector<double>& d,
                         const LbfgsOptions& opts) {
  const std::size_t n = x.size();
  const std::vector<double> x0 = x;
  const double f0 = f;
  const double dg0 = dot(g, d);
  if (dg0 >= 0.0) return 0.0;  // not a descent direction

  auto eval = [&](double a) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x0[i] + a * d[i];
    f = fg(x, g);
    return dot(g, d);
  };

  double a_prev = 0.0, f_prev = f0, dg_prev = dg0;
  double a = 1.0;
  double a_lo = 0.0, a_hi = 0.0, f_lo = f0, dg_lo = dg0;
  bool bracketed = false;

  int evals = 0;
  for (; evals < opts.max_line_search; ++evals) {
    const double dg = eval(a);
    if (f > f0 + opts.c1 * a * dg0 || (evals > 0 && f >= f_prev)) {
      a_lo = a_prev;
      f_lo = f_prev;
      dg_lo = dg_prev;
      a_hi = a;
      bracketed = true;
      break;
    }
    if (std::abs(dg) <= -opts.c2 * dg0) return a;  // strong Wolfe satisfied
    if (dg >= 0.0) {
      a_lo = a;
      f_lo = f;
      dg_lo = dg;
      a_hi = a_prev;
      bracketed = true;
      break;
    }
    a_prev = a;
    f_prev = f;
    dg_prev = dg;
    a *= 2.0;
  }
  if (!bracketed) return 0.0;

  // Zoom.
  for (; evals < opts.max_line_search; ++evals) {
    const double mid = 0.5 * (a_lo + a_hi);
    const double dg = eval(mid);
    if (f > f0 + opts.c1 * mid * dg0 || f >= f_lo) {
      a_hi = mid;
    } else {
      if (std::abs(dg) <= -opts.c2 * dg0) return mid;
      if (dg * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
      a_lo = mid;
      f_lo = f;
      dg_lo = dg;
    }
    if (std::abs(a_hi - a_lo) < 1e-16) break;
  }
  (void)dg_lo;
  // Failed to satisfy strong Wolfe; fall back to the best sufficient-decrease
  // point if one was found.
  if (a_lo > 0.0 && f_lo < f0) {
    eval(a_lo);
    return a_lo;
  }
  return 0.0;
}

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& fg, std::vector<double>& x,
                           const LbfgsOptions& opts) {
  const std::size_t n = x.size();
  LbfgsResult res;
  std::vector<double> g(n), d(n), x_prev(n), g_prev(n);
  double f = fg(x, g);
  if (!std::isfinite(f)) fail("lbfgs: non-finite objective at the start");

  std::vector<double> best_x = x;
  double best_f = f;

  std::deque<Pair> pairs;
  std::vector<double> alpha_buf;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (inf_norm(g) <= opts.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion.
    d.assign(g.begin(), g.end());
    alpha_buf.assign(pairs.size(), 0.0);
    for (std::size_t k = pairs.size(); k-- > 0;) {
      const Pair& pr = pairs[k];
      alpha_buf[k] = pr.rho * dot(pr.s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha_buf[k] * pr.y[i];
    }
    if (!pairs.empty()) {
      const Pair& last = pairs.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Pair& pr = pairs[k];
      const double beta = pr.rho * dot(pr.y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha_buf[k] - beta) * pr.s[i];
    }
    for (double& v : d) v = -v;

    x_prev = x;
    g_prev = g;
    const double step = wolfe_line_search(fg, x, f, g, d, opts);
    ++res.iters;
    if (step == 0.0) {
      res.line_search_failed = true;
      x = best_x;  // keep the best iterate
      f = best_f;
      break;
    }
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }

    Pair pr;
    pr.s.resize(n);
    pr.y.resize(n);
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pr.s[i] = x[i] - x_prev[i];
      pr.y[i] = g[i] - g_prev[i];
      sy += pr.s[i] * pr.y[i];
    }
    if (sy > 1e-14) {  // keep the inverse-Hessian estimate positive definite
      pr.rho = 1.0 / sy;
      pairs.push_back(std::move(pr));
      if (pairs.size() > static_cast<std::size_t>(opts.history)) pairs.pop_front();
    }
  }

  if (f > best_f) {
    x = best_x;
    f = best_f;
  }
  res.f = f;
  return res;
}

}  // namespace srnn::training
