#include <gtest/gtest.h>

#include <cmath>

#include "judgecal/error.hpp"
#include "judgecal/harness.hpp"
#include "judgecal/random.hpp"
#include "judgecal/regression.hpp"
#include "support.hpp"

using namespace judgecal;
using judgecal::testing::annotation;
using judgecal::testing::judgment;

namespace {

// Multiples of 2^-20: 1 - x and every product in the cell model are exact.
double dyadic(Rng& rng) { return std::ldexp(static_cast<double>(rng.index(1u << 20) + 1), -20) - 0x1.0p-21; }

Observations observe(const Params& p) {
  Observations o;
  o.rows = p.g.size();
  o.cols = p.v_plus.size();
  o.p = predict_matrix(p);
  o.mask.assign(o.p.size(), 1);
  return o;
}

Params random_params(Rng& rng, std::size_t rows, std::size_t cols) {
  Params p;
  for (std::size_t i = 0; i < rows; ++i) p.g.push_back(rng.uniform(0.05, 0.95));
  for (std::size_t j = 0; j < cols; ++j) p.v_plus.push_back(rng.uniform(0.05, 0.95));
  for (std::size_t j = 0; j < cols; ++j) p.v_minus.push_back(rng.uniform(0.05, 0.95));
  return p;
}

Anchors exact_anchors(const Params& p, std::vector<std::size_t> rows) {
  Anchors a;
  for (auto i : rows) a.generator_targets.emplace_back(i, p.g[i]);
  a.v_plus.assign(p.v_plus.begin(), p.v_plus.end());
  a.v_minus.assign(p.v_minus.begin(), p.v_minus.end());
  return a;
}

Params profile_params(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  const auto cfg = default_profile(rows, cols, seed);
  return {cfg.g, cfg.v_plus, cfg.v_minus};
}

SolverConfig quick() {
  SolverConfig c;
  c.restarts = 3;
  return c;
}

}  // namespace

TEST(PredictCell, Examples) {
  EXPECT_DOUBLE_EQ(predict_cell(1.0, 0.97, 0.3), 0.97);
  EXPECT_DOUBLE_EQ(predict_cell(0.0, 0.5, 0.2), 0.8);
  EXPECT_NEAR(predict_cell(0.9, 0.96, 0.25), 0.939, 1e-12);
  EXPECT_THROW(predict_cell(1.1, 0.5, 0.5), Error);
  EXPECT_THROW(predict_cell(0.5, -0.1, 0.5), Error);
  EXPECT_THROW(predict_cell(0.5, 0.5, std::nan("")), Error);
}

TEST(PredictCell, LabelFlipSymmetryIsExact) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double g = dyadic(rng), vp = dyadic(rng), vm = dyadic(rng);
    EXPECT_EQ(predict_cell(g, vp, vm), predict_cell(1.0 - g, 1.0 - vm, 1.0 - vp));
  }
}

TEST(PredictCell, IncreasingInGWhenInformative) {
  Rng rng(2);
  int checked = 0;
  while (checked < 1000) {
    const double vp = dyadic(rng), vm = dyadic(rng);
    if (vp + vm <= 1.0) continue;
    double a = dyadic(rng), b = dyadic(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    EXPECT_LT(predict_cell(a, vp, vm), predict_cell(b, vp, vm));
    ++checked;
  }
}

TEST(LossPred, Examples) {
  Observations ones{1, 2, {1.0, 1.0}, {1, 1}};
  EXPECT_NEAR(loss_pred(ones, std::vector<double>{1.0, 1.0}), 0.0, 1e-8);

  Observations one{1, 1, {0.8}, {1}};
  EXPECT_NEAR(loss_pred(one, std::vector<double>{0.9}), 0.5448, 1e-4);

  Observations masked{1, 2, {0.8, 0.1}, {1, 0}};
  EXPECT_DOUBLE_EQ(loss_pred(masked, std::vector<double>{0.9, 0.5}), loss_pred(one, std::vector<double>{0.9}));

  EXPECT_THROW(loss_pred(one, std::vector<double>{0.9, 0.9}), Error);
  Observations none{1, 1, {0.8}, {0}};
  EXPECT_THROW(loss_pred(none, std::vector<double>{0.9}), Error);
}

TEST(LossPred, MinimumIsMeanEntropy) {
  Observations o{2, 2, {0.8, 0.3, 0.55, 0.95}, {1, 1, 1, 1}};
  double entropy = 0.0;
  for (double p : o.p) entropy -= p * std::log(p) + (1 - p) * std::log(1 - p);
  entropy /= 4.0;
  EXPECT_NEAR(loss_pred(o, o.p), entropy, 1e-12);

  // Cells are independent terms, so a per-cell grid search finds the minimum.
  double best = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    double cell_best = INFINITY;
    for (int q = 1; q < 1000; ++q) {
      Observations c{1, 1, {o.p[k]}, {1}};
      cell_best = std::min(cell_best, loss_pred(c, std::vector<double>{q / 1000.0}));
    }
    best += cell_best / 4.0;
  }
  EXPECT_LE(loss_pred(o, o.p), best + 1e-12);
  EXPECT_NEAR(loss_pred(o, o.p), best, 1e-5);
}

TEST(LossCal, Examples) {
  Params p{{0.8, 0.6}, {0.9, 0.95}, {0.2, 0.3}};
  const LossWeights w;
  const double eps = 1e-12;

  const auto same = exact_anchors(p, {0, 1});
  EXPECT_LE(loss_cal(p, same, w, eps), 3 * 10.0 * std::sqrt(eps));

  auto a = exact_anchors(p, {});
  a.generator_targets = {{0, 0.9}};
  EXPECT_NEAR(loss_cal(p, a, w, eps), 0.2, 1e-4);

  EXPECT_EQ(loss_cal(p, Anchors{}, w, eps), 0.0);

  auto off = exact_anchors(p, {0});
  off.v_minus = {0.5, 0.5};
  LossWeights none = w;
  none.lambda_v_minus = 0.0;
  LossWeights doubled = w;
  doubled.lambda_v_minus = 20.0;
  const double base = loss_cal(p, off, none, eps);
  const double third = loss_cal(p, off, w, eps) - base;
  EXPECT_NEAR(loss_cal(p, off, doubled, eps) - base, 2.0 * third, 1e-12);
}

TEST(LossCal, UnsupportedValidatorsAreSkipped) {
  Params p{{0.8}, {0.9, 0.95}, {0.2, 0.3}};
  Anchors a;
  a.generator_targets = {{0, 0.8}};
  a.v_plus = {0.9, 0.95};
  a.v_minus = {std::nullopt, 0.3};
  EXPECT_LE(loss_cal(p, a, LossWeights{}, 1e-12), 3 * 10.0 * 1e-6);
}

TEST(Gradient, PerfectValidatorsPassThrough) {
  // With v+ = v- = 1 the prediction is g itself, so dL/dg is the BCE slope.
  for (double g : {0.2, 0.5, 0.9}) {
    Params p{{g}, {1.0}, {1.0}};
    Observations o{1, 1, {0.7}, {1}};
    const auto grad = gradient(p, o, Anchors{}, LossWeights{});
    EXPECT_NEAR(grad[0], (g - 0.7) / (g * (1 - g)), 1e-9);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(17);
  const LossWeights w;
  const SolverConfig cfg;
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 3 + rng.index(4), cols = 3 + rng.index(4);
    auto p = random_params(rng, rows, cols);
    Observations o = observe(random_params(rng, rows, cols));
    for (auto& m : o.mask) m = rng.bernoulli(0.9);
    o.mask[0] = 1;
    auto a = exact_anchors(random_params(rng, rows, cols), {0, rows - 1});
    a.v_minus[0].reset();

    const auto analytic = gradient(p, o, a, w, cfg);
    auto x = p.flatten();
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto up = x, down = x;
      up[k] += h;
      down[k] -= h;
      const double fd = (total_loss(Params::unflatten(up, rows, cols), o, a, w, cfg) -
                         total_loss(Params::unflatten(down, rows, cols), o, a, w, cfg)) /
                        (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(analytic[k]), 1e-4});
      worst = std::max(worst, std::abs(fd - analytic[k]) / scale);
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Gradient, VanishesAtAnchoredTruth) {
  const auto p = profile_params(3, 6, 6);
  const auto grad = gradient(p, observe(p), exact_anchors(p, {0, 1}), LossWeights{});
  for (double v : grad) EXPECT_LT(std::abs(v), 1e-6);
  EXPECT_THROW(gradient(Params{{1.2}, {0.5}, {0.5}}, Observations{1, 1, {0.5}, {1}}, Anchors{}, LossWeights{}), Error);
}

TEST(Fit, NoiselessRecoveryWithTwoAnchors) {
  const auto p = profile_params(5, 8, 8);
  const auto matrix = expected_matrix(p.g, p.v_plus, p.v_minus);
  const auto anchors = exact_anchors(p, {0, 1});
  const auto est = fit(matrix, anchors, LossWeights{}, quick());
  for (std::size_t i = 2; i < p.g.size(); ++i) EXPECT_NEAR(est.params.g[i], p.g[i], 0.005) << i;

  const SolverConfig cfg = quick();
  const double at_truth = total_loss(p, Observations::from_matrix(matrix), anchors, LossWeights{}, cfg);
  EXPECT_LE(est.training_loss, at_truth + cfg.tolerance);
}

TEST(Fit, RangeDominanceAndDeterminism) {
  const auto p = profile_params(6, 5, 6);
  const auto matrix = expected_matrix(p.g, p.v_plus, p.v_minus);
  SolverConfig cfg;
  cfg.restarts = 4;
  cfg.seed = 99;
  const auto a = fit(matrix, exact_anchors(p, {0, 1}), LossWeights{}, cfg);
  const auto b = fit(matrix, exact_anchors(p, {0, 1}), LossWeights{}, cfg);
  EXPECT_EQ(a.training_loss, b.training_loss);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  ASSERT_EQ(a.restarts.size(), 4u);
  for (const auto& r : a.restarts) EXPECT_LE(a.training_loss, r.training_loss);
  EXPECT_EQ(a.restarts[a.restart_index].seed, a.seed);
  for (double v : a.params.flatten()) {
    EXPECT_GE(v, cfg.clamp_epsilon);
    EXPECT_LE(v, 1.0 - cfg.clamp_epsilon);
  }
}

TEST(Fit, UnanchoredFitIsNotIdentifiable) {
  const auto p = profile_params(7, 4, 5);
  Params flipped;
  for (double g : p.g) flipped.g.push_back(1.0 - g);
  for (double v : p.v_minus) flipped.v_plus.push_back(1.0 - v);
  for (double v : p.v_plus) flipped.v_minus.push_back(1.0 - v);
  const auto o = observe(p);
  EXPECT_NEAR(loss_pred(o, predict_matrix(flipped)), loss_pred(o, predict_matrix(p)), 1e-12);
}

TEST(Fit, ConfigAndMatrixErrors) {
  SolverConfig c;
  c.restarts = 0;
  EXPECT_THROW(c.validate(), Error);
  c = SolverConfig{};
  c.clamp_epsilon = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = SolverConfig{};
  c.tolerance = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(fit(ValidationMatrix{}, Anchors{}, LossWeights{}, SolverConfig{}), Error);
}

TEST(MakeAnchors, MeasuredOnCalibrationOnly) {
  std::vector<AnnotationRecord> a = {annotation("G1", "t", 1, FeedbackCategory::TP),
                                     annotation("G1", "t", 2, FeedbackCategory::FP_I),
                                     annotation("G2", "t", 1, FeedbackCategory::TP)};
  std::vector<Judgment> j = {judgment("G1", "V1", "t", 1, Label::valid()),
                             judgment("G1", "V1", "t", 2, Label::invalid()),
                             judgment("G2", "V1", "t", 1, Label::invalid())};
  const auto m = build_matrix(j);
  const std::vector<std::string> h = {"G1"};
  const auto anchors = make_anchors(m, j, a, h);
  ASSERT_EQ(anchors.generator_targets.size(), 1u);
  EXPECT_EQ(anchors.generator_targets[0], (std::pair<std::size_t, double>{0, 0.5}));
  EXPECT_EQ(anchors.v_plus[0], 1.0);
  EXPECT_EQ(anchors.v_minus[0], 1.0);
  const std::vector<std::string> unknown = {"G9"};
  EXPECT_THROW(make_anchors(m, j, a, unknown), Error);
}

TEST(PredictNewGenerator, SampledRow) {
  auto cfg = default_profile(6, 14, 8, 1000);
  cfg.g.back() = 0.88;
  cfg.missing_rate = 0.0;
  const auto c = synth_generate(cfg);
  const auto m = build_matrix(c.judgments);
  const std::vector<std::string> h = {"G01", "G02", "G03", "G04", "G05"};
  const auto anchors = make_anchors(m, c.judgments, c.annotations, h);
  EXPECT_NEAR(predict_new_generator(m, "G06", anchors, LossWeights{}, quick()), 0.88, 0.02);
}

TEST(PredictNewGenerator, DuplicateRowAndAllOnes) {
  auto p = profile_params(9, 5, 6);
  p.g.push_back(p.g[0]);
  const auto m = expected_matrix(p.g, p.v_plus, p.v_minus);
  const auto anchors = exact_anchors(p, {0, 1});
  const auto est = fit(m, anchors, LossWeights{}, quick());
  EXPECT_NEAR(predict_new_generator(m, m.generators().back(), anchors, LossWeights{}, quick()),
              est.params.g[0], 1e-4);

  Params perfect{{0.9, 0.8, 1.0}, std::vector<double>(4, 1.0), std::vector<double>(4, 1.0)};
  const auto pm = expected_matrix(perfect.g, perfect.v_plus, perfect.v_minus);
  const double g = predict_new_generator(pm, pm.generators().back(), exact_anchors(perfect, {0, 1}),
                                         LossWeights{}, quick());
  EXPECT_GT(g, 1.0 - 1e-3);
}

TEST(PredictNewGenerator, EmptyRow) {
  std::vector<Judgment> j = {judgment("G1", "V1", "t", 1, Label::valid()),
                             judgment("G2", "V1", "t", 1, Label::missing(MissingKind::LabelMismatch))};
  const auto m = build_matrix(j);
  try {
    predict_new_generator(m, "G2", Anchors{}, LossWeights{}, quick());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyRow);
  }
}
