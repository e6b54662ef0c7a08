#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace judgecal {

// Objective: returns f(x) and writes the gradient into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct BoxSolverOptions {
  // A loss change below this ends the run only once the projected gradient
  // inf-norm is also below gradient_tolerance.
  double loss_tolerance = 1e-6;
  double gradient_tolerance = 1e-6;
  int max_iterations = 1000;
  // Number of correction pairs kept by the limited-memory update.
  int memory = 10;
};

struct BoxSolverResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double projected_gradient_norm = 0.0;
};

// Projected limited-memory quasi-Newton descent with box constraints
// lower <= x <= upper. Variables pinned at a bound by the gradient are held
// fixed for the step; the search direction comes from the two-loop
// recursion on the free variables and is followed along the projected path
// with Armijo backtracking.
BoxSolverResult minimize_box(const Objective& objective, std::vector<double> x0,
                             std::span<const double> lower, std::span<const double> upper,
                             const BoxSolverOptions& options = {});

}  // namespace judgecal
