#include "judgecal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "judgecal/error.hpp"

namespace judgecal {

namespace {

struct Correction {
  std::vector<double> s;
  std::vector<double> y;
  double rho = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void project(std::span<double> x, std::span<const double> lower, std::span<const double> upper) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
}

// Coordinates a descent step would push further into an active bound.
std::vector<char> free_mask(std::span<const double> x, std::span<const double> g,
                            std::span<const double> lower, std::span<const double> upper) {
  std::vector<char> free(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) free[i] = 0;
  }
  return free;
}

double projected_gradient_norm(std::span<const double> x, std::span<const double> g,
                               std::span<const double> lower, std::span<const double> upper) {
  double norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double moved = std::clamp(x[i] - g[i], lower[i], upper[i]) - x[i];
    norm = std::max(norm, std::abs(moved));
  }
  return norm;
}

// Two-loop recursion restricted to the free coordinates; returns -H g.
std::vector<double> lbfgs_direction(std::span<const double> g, const std::vector<char>& free,
                                    const std::deque<Correction>& history) {
  const std::size_t n = g.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = free[i] ? g[i] : 0.0;

  auto masked_dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (free[i]) sum += a[i] * b[i];
    }
    return sum;
  };

  std::vector<double> alpha(history.size());
  for (std::size_t k = history.size(); k-- > 0;) {
    const auto& c = history[k];
    alpha[k] = c.rho * masked_dot(c.s, q);
    for (std::size_t i = 0; i < n; ++i) {
      if (free[i]) q[i] -= alpha[k] * c.y[i];
    }
  }
  double gamma = 1.0;
  if (!history.empty()) {
    const auto& last = history.back();
    const double yy = masked_dot(last.y, last.y);
    const double sy = masked_dot(last.s, last.y);
    if (yy > 0.0 && sy > 0.0) gamma = sy / yy;
  }
  for (auto& v : q) v *= gamma;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const auto& c = history[k];
    const double beta = c.rho * masked_dot(c.y, q);
    for (std::size_t i = 0; i < n; ++i) {
      if (free[i]) q[i] += c.s[i] * (alpha[k] - beta);
    }
  }
  for (auto& v : q) v = -v;
  return q;
}

}  // namespace

BoxSolverResult minimize_box(const Objective& objective, std::vector<double> x0,
                             std::span<const double> lower, std::span<const double> upper,
                             const BoxSolverOptions& options) {
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "bounds do not match the variable count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lower[i] <= upper[i])) throw Error(ErrorKind::DomainError, "empty box");
  }

  BoxSolverResult result;
  std::vector<double> x = std::move(x0);
  project(x, lower, upper);
  std::vector<double> g(n);
  double f = objective(x, g);
  result.evaluations = 1;

  std::deque<Correction> history;
  std::vector<double> x_new(n);
  std::vector<double> g_new(n);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.projected_gradient_norm = projected_gradient_norm(x, g, lower, upper);
    if (result.projected_gradient_norm < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    result.iterations = iter;

    const auto free = free_mask(x, g, lower, upper);
    std::vector<double> d = lbfgs_direction(g, free, history);
    if (dot(g, d) >= 0.0) {
      history.clear();
      d = lbfgs_direction(g, free, history);
    }

    bool accepted = false;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = 1.0;
      if (history.empty()) {
        const double dmax = std::abs(*std::max_element(d.begin(), d.end(), [](double a, double b) {
          return std::abs(a) < std::abs(b);
        }));
        if (dmax > 0.0) step = std::min(1.0, 0.1 / dmax);
      }
      for (int backtrack = 0; backtrack < 60; ++backtrack, step *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
        project(x_new, lower, upper);
        double decrease = 0.0;
        bool moved = false;
        for (std::size_t i = 0; i < n; ++i) {
          const double dx = x_new[i] - x[i];
          decrease += g[i] * dx;
          moved = moved || dx != 0.0;
        }
        if (!moved) break;
        f_new = objective(x_new, g_new);
        ++result.evaluations;
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * decrease) {
          accepted = true;
          break;
        }
      }
      if (!accepted && !history.empty()) {
        // The quasi-Newton model misled the search; retry along -g.
        history.clear();
        d = lbfgs_direction(g, free, history);
      } else {
        break;
      }
    }

    if (!accepted) {
      // No representable decrease remains: the loss no longer changes.
      result.converged = true;
      break;
    }

    Correction c;
    c.s.resize(n);
    c.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c.s[i] = x_new[i] - x[i];
      c.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(c.s, c.y);
    if (sy > 1e-12 * dot(c.y, c.y) && sy > 0.0) {
      c.rho = 1.0 / sy;
      history.push_back(std::move(c));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }

    const double change = f - f_new;
    std::swap(x, x_new);
    std::swap(g, g_new);
    f = f_new;
    result.projected_gradient_norm = projected_gradient_norm(x, g, lower, upper);
    if (std::abs(change) < options.loss_tolerance &&
        result.projected_gradient_norm < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
  }

  result.x = std::move(x);
  result.value = f;
  return result;
}

}  // namespace judgecal
