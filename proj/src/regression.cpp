#include "judgecal/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "judgecal/error.hpp"
#include "judgecal/random.hpp"
#include "judgecal/solver.hpp"

namespace judgecal {

std::vector<double> Params::flatten() const {
  std::vector<double> x;
  x.reserve(size());
  x.insert(x.end(), g.begin(), g.end());
  x.insert(x.end(), v_plus.begin(), v_plus.end());
  x.insert(x.end(), v_minus.begin(), v_minus.end());
  return x;
}

Params Params::unflatten(std::span<const double> x, std::size_t generators, std::size_t validators) {
  if (x.size() != generators + 2 * validators) {
    throw Error(ErrorKind::ShapeMismatch, "parameter vector has the wrong length");
  }
  Params p;
  p.g.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(generators));
  p.v_plus.assign(x.begin() + static_cast<std::ptrdiff_t>(generators),
                  x.begin() + static_cast<std::ptrdiff_t>(generators + validators));
  p.v_minus.assign(x.begin() + static_cast<std::ptrdiff_t>(generators + validators), x.end());
  return p;
}

void SolverConfig::validate() const {
  if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidConfig, "tolerance must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::InvalidConfig, "max_iterations must be >= 1");
  if (restarts < 1) throw Error(ErrorKind::InvalidConfig, "restarts must be >= 1");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.5)) {
    throw Error(ErrorKind::InvalidConfig, "clamp_epsilon must be in (0, 0.5)");
  }
  if (!(sqrt_epsilon > 0.0)) throw Error(ErrorKind::InvalidConfig, "sqrt_epsilon must be positive");
  if (!(init_delta_max >= 0.0 && init_delta_max < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "init_delta_max must be in [0, 1)");
  }
}

Observations Observations::from_matrix(const ValidationMatrix& matrix) {
  Observations o;
  o.rows = matrix.rows();
  o.cols = matrix.cols();
  o.p.assign(o.rows * o.cols, 0.0);
  o.mask.assign(o.rows * o.cols, 0);
  for (std::size_t i = 0; i < o.rows; ++i) {
    for (std::size_t j = 0; j < o.cols; ++j) {
      if (const auto& f = matrix.cell(i, j).fraction) {
        o.p[i * o.cols + j] = *f;
        o.mask[i * o.cols + j] = 1;
      }
    }
  }
  return o;
}

std::size_t Observations::active_cells() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

double predict_cell(double g, double v_plus, double v_minus) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(g) || !in_unit(v_plus) || !in_unit(v_minus)) {
    throw Error(ErrorKind::DomainError, "predict_cell arguments must lie in [0, 1]");
  }
  return g * v_plus + (1.0 - g) * (1.0 - v_minus);
}

std::vector<double> predict_matrix(const Params& params) {
  const std::size_t rows = params.g.size();
  const std::size_t cols = params.v_plus.size();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = params.g[i];
      out[i * cols + j] = g * params.v_plus[j] + (1.0 - g) * (1.0 - params.v_minus[j]);
    }
  }
  return out;
}

namespace {

// Cross-entropy of one cell; 0 * log(.) terms are dropped.
double cell_bce(double p, double q) {
  double loss = 0.0;
  if (p > 0.0) loss -= p * std::log(q);
  if (p < 1.0) loss -= (1.0 - p) * std::log(1.0 - q);
  return loss;
}

void check_shape(const Params& params, const Observations& observed) {
  if (params.g.size() != observed.rows || params.v_plus.size() != observed.cols ||
      params.v_minus.size() != observed.cols) {
    throw Error(ErrorKind::ShapeMismatch, "parameters do not match the observation matrix");
  }
}

// Accumulates one smoothed-RMSE term and its gradient.
// Returns weight * sqrt(mean((estimate - target)^2) + eps).
template <typename Targets>
double rmse_term(double weight, const Targets& targets, std::span<const double> estimate,
                 double sqrt_epsilon, std::span<double> grad) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [index, target] : targets) {
    const double d = estimate[index] - target;
    sum += d * d;
    ++n;
  }
  if (n == 0) return 0.0;
  const double root = std::sqrt(sum / static_cast<double>(n) + sqrt_epsilon);
  if (!grad.empty()) {
    const double scale = weight / (static_cast<double>(n) * root);
    for (const auto& [index, target] : targets) grad[index] += scale * (estimate[index] - target);
  }
  return weight * root;
}

std::vector<std::pair<std::size_t, double>> defined_targets(const std::vector<std::optional<double>>& v) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j]) out.emplace_back(j, *v[j]);
  }
  return out;
}

// Prepared calibration targets so the objective does not rebuild them.
struct CalibrationTerms {
  std::vector<std::pair<std::size_t, double>> g;
  std::vector<std::pair<std::size_t, double>> v_plus;
  std::vector<std::pair<std::size_t, double>> v_minus;
  bool active = false;

  CalibrationTerms(const Anchors& anchors, std::size_t rows, std::size_t cols) {
    if (anchors.empty()) return;
    if ((!anchors.v_plus.empty() && anchors.v_plus.size() != cols) ||
        (!anchors.v_minus.empty() && anchors.v_minus.size() != cols)) {
      throw Error(ErrorKind::ShapeMismatch, "validator anchors do not match the matrix");
    }
    for (const auto& [i, target] : anchors.generator_targets) {
      if (i >= rows) throw Error(ErrorKind::ShapeMismatch, "anchored generator out of range");
    }
    g = anchors.generator_targets;
    v_plus = defined_targets(anchors.v_plus);
    v_minus = defined_targets(anchors.v_minus);
    active = true;
  }
};

double calibration_value(const Params& params, const CalibrationTerms& terms,
                         const LossWeights& weights, double sqrt_epsilon, std::span<double> grad) {
  if (!terms.active) return 0.0;
  const std::size_t rows = params.g.size();
  const std::size_t cols = params.v_plus.size();
  std::span<double> grad_g;
  std::span<double> grad_vp;
  std::span<double> grad_vm;
  if (!grad.empty()) {
    grad_g = grad.subspan(0, rows);
    grad_vp = grad.subspan(rows, cols);
    grad_vm = grad.subspan(rows + cols, cols);
  }
  return rmse_term(weights.lambda_g, terms.g, params.g, sqrt_epsilon, grad_g) +
         rmse_term(weights.lambda_v_plus, terms.v_plus, params.v_plus, sqrt_epsilon, grad_vp) +
         rmse_term(weights.lambda_v_minus, terms.v_minus, params.v_minus, sqrt_epsilon, grad_vm);
}

// Prediction loss and (optionally) its gradient.
double prediction_value(const Params& params, const Observations& observed, double clamp_epsilon,
                        std::span<double> grad) {
  const std::size_t rows = observed.rows;
  const std::size_t cols = observed.cols;
  const std::size_t active = observed.active_cells();
  if (active == 0) throw Error(ErrorKind::EmptyMatrix, "no labeled cell to fit");
  const double inv_n = 1.0 / static_cast<double>(active);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double g = params.g[i];
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      if (!observed.mask[k]) continue;
      const double vp = params.v_plus[j];
      const double vm = params.v_minus[j];
      const double raw = g * vp + (1.0 - g) * (1.0 - vm);
      const double q = std::clamp(raw, clamp_epsilon, 1.0 - clamp_epsilon);
      const double p = observed.p[k];
      loss += cell_bce(p, q);
      if (grad.empty() || raw != q) continue;
      const double dq = inv_n * ((1.0 - p) / (1.0 - q) - p / q);
      grad[i] += dq * (vp + vm - 1.0);
      grad[rows + j] += dq * g;
      grad[rows + cols + j] -= dq * (1.0 - g);
    }
  }
  return loss * inv_n;
}

}  // namespace

double loss_pred(const Observations& observed, std::span<const double> predicted,
                 double clamp_epsilon) {
  if (predicted.size() != observed.rows * observed.cols || observed.p.size() != predicted.size()) {
    throw Error(ErrorKind::ShapeMismatch, "observed and predicted matrices differ in shape");
  }
  const std::size_t active = observed.active_cells();
  if (active == 0) throw Error(ErrorKind::EmptyMatrix, "no labeled cell");
  double loss = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (!observed.mask[k]) continue;
    loss += cell_bce(observed.p[k], std::clamp(predicted[k], clamp_epsilon, 1.0 - clamp_epsilon));
  }
  return loss / static_cast<double>(active);
}

double loss_cal(const Params& params, const Anchors& anchors, const LossWeights& weights,
                double sqrt_epsilon) {
  const CalibrationTerms terms(anchors, params.g.size(), params.v_plus.size());
  return calibration_value(params, terms, weights, sqrt_epsilon, {});
}

double total_loss(const Params& params, const Observations& observed, const Anchors& anchors,
                  const LossWeights& weights, const SolverConfig& config) {
  check_shape(params, observed);
  return loss_pred(observed, predict_matrix(params), config.clamp_epsilon) +
         loss_cal(params, anchors, weights, config.sqrt_epsilon);
}

std::vector<double> gradient(const Params& params, const Observations& observed,
                             const Anchors& anchors, const LossWeights& weights,
                             const SolverConfig& config) {
  check_shape(params, observed);
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (double v : params.flatten()) {
    if (!in_unit(v)) throw Error(ErrorKind::DomainError, "parameters must lie in [0, 1]");
  }
  std::vector<double> grad(params.size(), 0.0);
  prediction_value(params, observed, config.clamp_epsilon, grad);
  const CalibrationTerms terms(anchors, observed.rows, observed.cols);
  calibration_value(params, terms, weights, config.sqrt_epsilon, grad);
  return grad;
}

Anchors make_anchors(const ValidationMatrix& matrix, std::span<const Judgment> judgments,
                     std::span<const AnnotationRecord> annotations,
                     std::span<const std::string> calibration_generators) {
  Anchors anchors;
  if (calibration_generators.empty()) return anchors;

  const auto truth = ground_truth_precision(annotations);
  for (const auto& id : calibration_generators) {
    auto row = matrix.generator_index(id);
    if (!row) throw Error(ErrorKind::NoAnnotations, "calibration generator " + id + " is not in the matrix");
    auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorKind::NoAnnotations, "generator " + id + " has no annotations");
    anchors.generator_targets.emplace_back(*row, it->second);
  }

  std::vector<ConfusionCounts> per_validator(matrix.cols());
  const std::set<std::string> in_h(calibration_generators.begin(), calibration_generators.end());
  for (const auto& [cell, counts] : confusion_by_cell(judgments, annotations)) {
    if (!in_h.contains(cell.first)) continue;
    if (auto col = matrix.validator_index(cell.second)) per_validator[*col] += counts;
  }
  anchors.v_plus.resize(matrix.cols());
  anchors.v_minus.resize(matrix.cols());
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    const auto r = reliability_from_counts(matrix.validators()[j], per_validator[j]);
    anchors.v_plus[j] = r.v_plus;
    anchors.v_minus[j] = r.v_minus;
  }
  return anchors;
}

CalibrationEstimate fit(const Observations& observed, const Anchors& anchors,
                        const LossWeights& weights, const SolverConfig& config) {
  config.validate();
  if (observed.rows == 0 || observed.cols == 0 || observed.active_cells() == 0) {
    throw Error(ErrorKind::EmptyMatrix, "nothing to fit");
  }
  const std::size_t rows = observed.rows;
  const std::size_t cols = observed.cols;
  const std::size_t n = rows + 2 * cols;
  const double lo = config.clamp_epsilon;
  const double hi = 1.0 - config.clamp_epsilon;
  const std::vector<double> lower(n, lo);
  const std::vector<double> upper(n, hi);
  const CalibrationTerms terms(anchors, rows, cols);

  const Objective objective = [&](std::span<const double> x, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const Params p = Params::unflatten(x, rows, cols);
    return prediction_value(p, observed, config.clamp_epsilon, grad) +
           calibration_value(p, terms, weights, config.sqrt_epsilon, grad);
  };

  std::vector<double> row_mean(rows, 0.5);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (observed.mask[i * cols + j]) {
        sum += observed.p[i * cols + j];
        ++count;
      }
    }
    if (count > 0) row_mean[i] = sum / static_cast<double>(count);
  }

  BoxSolverOptions options;
  options.loss_tolerance = config.tolerance;
  options.max_iterations = config.max_iterations;

  CalibrationEstimate best;
  best.training_loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    Rng rng(seed);
    std::vector<double> x0(n);
    for (std::size_t i = 0; i < rows; ++i) x0[i] = row_mean[i];
    for (std::size_t k = rows; k < n; ++k) x0[k] = 1.0 - rng.uniform(0.0, config.init_delta_max);

    BoxSolverResult run = minimize_box(objective, std::move(x0), lower, upper, options);
    best.restarts.push_back({seed, run.value, run.iterations, run.converged});
    if (run.value < best.training_loss) {
      best.params = Params::unflatten(run.x, rows, cols);
      best.training_loss = run.value;
      best.iterations = run.iterations;
      best.converged = run.converged;
      best.restart_index = r;
      best.seed = seed;
    }
  }
  return best;
}

CalibrationEstimate fit(const ValidationMatrix& matrix, const Anchors& anchors,
                        const LossWeights& weights, const SolverConfig& config) {
  if (matrix.rows() == 0 || matrix.cols() == 0) throw Error(ErrorKind::EmptyMatrix, "empty matrix");
  return fit(Observations::from_matrix(matrix), anchors, weights, config);
}

double predict_new_generator(const ValidationMatrix& matrix, const std::string& generator,
                             const Anchors& anchors, const LossWeights& weights,
                             const SolverConfig& config) {
  auto row = matrix.generator_index(generator);
  if (!row) throw Error(ErrorKind::EmptyRow, "generator " + generator + " is not in the matrix");
  bool labeled = false;
  for (std::size_t j = 0; j < matrix.cols(); ++j) labeled = labeled || !matrix.cell(*row, j).empty();
  if (!labeled) throw Error(ErrorKind::EmptyRow, "generator " + generator + " has no labeled cell");
  return fit(matrix, anchors, weights, config).params.g[*row];
}

}  // namespace judgecal
