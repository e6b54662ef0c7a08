#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "judgecal/core_model.hpp"

namespace judgecal {

// Fitted or true model parameters: generator precisions and validator
// TPR/TNR. Flattened as [g..., v_plus..., v_minus...].
struct Params {
  std::vector<double> g;
  std::vector<double> v_plus;
  std::vector<double> v_minus;

  std::size_t size() const { return g.size() + v_plus.size() + v_minus.size(); }
  std::vector<double> flatten() const;
  static Params unflatten(std::span<const double> x, std::size_t generators, std::size_t validators);
};

struct LossWeights {
  double lambda_g = 2.0;
  double lambda_v_plus = 1.0;
  double lambda_v_minus = 10.0;
};

// Ground-truth targets for the calibration loss. Generator targets are
// (row index, precision) pairs for the calibration set H; validator targets
// are measured on H and are unset where the validator had no support.
struct Anchors {
  std::vector<std::pair<std::size_t, double>> generator_targets;
  std::vector<std::optional<double>> v_plus;
  std::vector<std::optional<double>> v_minus;

  bool empty() const { return generator_targets.empty(); }
};

struct SolverConfig {
  double tolerance = 1e-6;
  int max_iterations = 1000;
  int restarts = 10;
  double clamp_epsilon = 1e-9;
  double sqrt_epsilon = 1e-12;
  double init_delta_max = 0.05;
  std::uint64_t seed = 0;

  // Throws InvalidConfig.
  void validate() const;
};

struct RestartSummary {
  std::uint64_t seed = 0;
  double training_loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct CalibrationEstimate {
  Params params;
  double training_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  int restart_index = 0;
  std::uint64_t seed = 0;
  std::vector<RestartSummary> restarts;
};

// Observed valid fractions with a mask of cells that participate.
struct Observations {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> p;
  std::vector<char> mask;

  static Observations from_matrix(const ValidationMatrix& matrix);
  std::size_t active_cells() const;
};

// Probability a validator labels an output of the generator valid:
// g * v_plus + (1 - g) * (1 - v_minus). Throws DomainError outside [0, 1].
double predict_cell(double g, double v_plus, double v_minus);

// Row-major predicted matrix for the given parameters.
std::vector<double> predict_matrix(const Params& params);

// Mean binary cross-entropy over the active cells, predictions clamped to
// [eps, 1 - eps]. Throws ShapeMismatch, or EmptyMatrix with no active cell.
double loss_pred(const Observations& observed, std::span<const double> predicted,
                 double clamp_epsilon = 1e-9);

// Weighted smoothed-RMSE penalty toward the anchors; zero when H is empty.
double loss_cal(const Params& params, const Anchors& anchors, const LossWeights& weights,
                double sqrt_epsilon = 1e-12);

double total_loss(const Params& params, const Observations& observed, const Anchors& anchors,
                  const LossWeights& weights, const SolverConfig& config = {});

// Analytic gradient of total_loss, flattened like Params.
std::vector<double> gradient(const Params& params, const Observations& observed,
                             const Anchors& anchors, const LossWeights& weights,
                             const SolverConfig& config = {});

// Anchors for the calibration generators: precision from annotations and
// validator TPR/TNR measured on those generators only.
Anchors make_anchors(const ValidationMatrix& matrix, std::span<const Judgment> judgments,
                     std::span<const AnnotationRecord> annotations,
                     std::span<const std::string> calibration_generators);

// Multi-start box-constrained fit; returns the restart with the lowest
// training loss. Non-convergence is reported through `converged`.
CalibrationEstimate fit(const ValidationMatrix& matrix, const Anchors& anchors,
                        const LossWeights& weights, const SolverConfig& config);
CalibrationEstimate fit(const Observations& observed, const Anchors& anchors,
                        const LossWeights& weights, const SolverConfig& config);

// Joint re-fit with the new generator's row present; returns its precision.
// Throws EmptyRow when the row has no labeled cell.
double predict_new_generator(const ValidationMatrix& matrix, const std::string& generator,
                             const Anchors& anchors, const LossWeights& weights,
                             const SolverConfig& config);

}  // namespace judgecal
