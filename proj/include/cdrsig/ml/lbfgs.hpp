// Box-projected limited-memory BFGS with backtracking line search.
#pragma once

#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Dense>

namespace cdrsig::ml {

template <typename Scalar>
struct LbfgsOptions {
  int max_iterations = 100;
  int memory = 7;
  Scalar gradient_tolerance = Scalar(1e-5);
  Scalar relative_tolerance = Scalar(1e-10);
  Scalar lower = -std::numeric_limits<Scalar>::infinity();
  Scalar upper = std::numeric_limits<Scalar>::infinity();
};

template <typename Scalar>
struct LbfgsResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Scalar value = std::numeric_limits<Scalar>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Minimizes f. `f(x, grad)` returns the objective and writes the gradient;
// returning a non-finite value marks x infeasible and shortens the step.
template <typename Scalar, typename Objective>
LbfgsResult<Scalar> minimize_lbfgs(Objective&& f, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x0,
                                   const LbfgsOptions<Scalar>& opt = {}) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  auto project = [&](Vec v) { return v.cwiseMax(opt.lower).cwiseMin(opt.upper).eval(); };
  auto projected_gradient_norm = [&](const Vec& x, const Vec& g) {
    Scalar m = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const bool at_lo = x(i) <= opt.lower && g(i) > 0;
      const bool at_hi = x(i) >= opt.upper && g(i) < 0;
      if (!at_lo && !at_hi) m = std::max(m, std::abs(g(i)));
    }
    return m;
  };

  LbfgsResult<Scalar> res;
  Vec x = project(std::move(x0));
  Vec g(x.size());
  Scalar fx = f(x, g);
  if (!std::isfinite(fx)) {
    res.x = x;
    return res;
  }
  std::deque<Vec> s_hist, y_hist;
  std::deque<Scalar> rho_hist;

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    if (projected_gradient_norm(x, g) < opt.gradient_tolerance) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Vec q = g;
    std::vector<Scalar> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const Scalar beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec d = -q;
    if (g.dot(d) >= 0) {
      d = -g;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    Scalar step = s_hist.empty() ? std::min<Scalar>(Scalar(1), Scalar(1) / std::max(g.norm(), Scalar(1e-12))) : Scalar(1);
    Vec x_new, g_new(x.size());
    Scalar f_new = std::numeric_limits<Scalar>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * d);
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + Scalar(1e-4) * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= Scalar(0.5);
    }
    if (!accepted) break;

    const Vec s = x_new - x;
    const Vec yv = g_new - g;
    const Scalar sy = s.dot(yv);
    const Scalar rel = std::abs(fx - f_new) / (Scalar(1) + std::abs(fx));
    x = x_new;
    g = g_new;
    fx = f_new;
    if (sy > Scalar(1e-12) * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(Scalar(1) / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if (rel < opt.relative_tolerance) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.value = fx;
  return res;
}

}  // namespace cdrsig::ml
