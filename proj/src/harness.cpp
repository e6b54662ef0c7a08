#include "judgecal/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "judgecal/error.hpp"
#include "judgecal/random.hpp"

namespace judgecal {

namespace {

constexpr std::array<std::string_view, 48> kVocabulary = {
    "the",      "loop",      "variable", "index",     "function", "returns",  "value",
    "before",   "after",     "list",     "string",    "condition", "check",   "missing",
    "update",   "counter",   "inside",   "outside",   "range",     "bound",   "off",
    "by",       "one",       "error",    "input",     "output",    "print",   "statement",
    "should",   "use",       "instead",  "of",        "compare",   "equal",   "operator",
    "boolean",  "flag",      "initialize", "sum",     "total",     "result",  "append",
    "element",  "call",      "argument", "parameter", "case",      "empty"};

std::string sentence(Rng& rng) {
  const std::size_t words = 9 + rng.index(5);
  std::string out;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out.push_back(' ');
    out += kVocabulary[rng.index(kVocabulary.size())];
  }
  out.push_back('.');
  return out;
}

// One or two character substitutions; never returns the input unchanged.
std::string near_duplicate(const std::string& text, Rng& rng) {
  std::string out = text;
  const std::size_t edits = 1 + rng.index(2);
  for (std::size_t e = 0; e < edits; ++e) {
    const std::size_t pos = rng.index(out.size());
    char replacement = static_cast<char>('a' + rng.index(26));
    if (replacement == out[pos]) replacement = replacement == 'z' ? 'a' : static_cast<char>(replacement + 1);
    out[pos] = replacement;
  }
  return out;
}

template <std::size_t N>
std::string pick(Rng& rng, const std::array<std::string_view, N>& options) {
  return std::string(options[rng.index(N)]);
}

FeedbackCategory draw_category(bool valid, Rng& rng) {
  const double u = rng.uniform();
  if (valid) {
    if (u < 0.80) return FeedbackCategory::TP;
    if (u < 0.95) return FeedbackCategory::TP_E;
    return FeedbackCategory::TP_R;
  }
  return u < 0.75 ? FeedbackCategory::FP_I : FeedbackCategory::FP_H;
}

std::string padded(char prefix, std::size_t number, int width) {
  std::string digits = std::to_string(number);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

void apply_fault(FaultKind kind, Verdict drawn, std::uint32_t line, RawValidatorOutput& raw, Rng& rng) {
  static constexpr std::array<std::string_view, 6> kValidSynonyms = {
      "Valid", "VALID", "correct", "Correct", "true positive", " valid "};
  static constexpr std::array<std::string_view, 6> kInvalidSynonyms = {
      "Invalid", "incorrect", "wrong", "false positive", "partially valid", "INVALID"};
  static constexpr std::array<std::string_view, 4> kUnknownLabels = {"true", "N/A", "unsure",
                                                                     "needs review"};
  static constexpr std::array<std::string_view, 2> kLineKeys = {"line_number", "line_num"};

  switch (kind) {
    case FaultKind::LabelSynonym:
      raw.raw_label = drawn == Verdict::Valid ? pick(rng, kValidSynonyms) : pick(rng, kInvalidSynonyms);
      break;
    case FaultKind::LineFormat: {
      const auto n = std::to_string(line);
      switch (rng.index(3)) {
        case 0: raw.raw_line = "line " + n; break;
        case 1: raw.raw_line = "Line: " + n; break;
        default: raw.raw_line = n + "-" + std::to_string(line + 1); break;
      }
      break;
    }
    case FaultKind::LineKey:
      raw.line_key = pick(rng, kLineKeys);
      break;
    case FaultKind::NearDuplicateFeedback:
      raw.raw_feedback = near_duplicate(raw.raw_feedback, rng);
      break;
    case FaultKind::UnknownLabel:
      raw.raw_label = pick(rng, kUnknownLabels);
      break;
    case FaultKind::UnknownLine:
      raw.raw_line = rng.bernoulli(0.5) ? "n/a" : "line " + std::to_string(900 + rng.index(99));
      break;
    case FaultKind::UnrelatedFeedback:
      raw.raw_feedback = sentence(rng);
      break;
    case FaultKind::MissingIdentifier:
      raw.task.clear();
      break;
  }
}

}  // namespace

void SynthConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (g.empty() || v_plus.empty()) throw Error(ErrorKind::InvalidConfig, "empty population");
  if (v_plus.size() != v_minus.size()) {
    throw Error(ErrorKind::InvalidConfig, "v_plus and v_minus differ in length");
  }
  for (const auto* v : {&g, &v_plus, &v_minus}) {
    if (!std::all_of(v->begin(), v->end(), unit)) {
      throw Error(ErrorKind::InvalidConfig, "rates must lie in [0, 1]");
    }
  }
  if (items_per_generator < 1) throw Error(ErrorKind::InvalidConfig, "items_per_generator must be >= 1");
  if (!unit(missing_rate) || !unit(repairable_fraction) || !unit(missing_item_dropout)) {
    throw Error(ErrorKind::InvalidConfig, "rates must lie in [0, 1]");
  }
  if (!(missing_generator_share > 0.0 && missing_generator_share <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "missing_generator_share must be in (0, 1]");
  }
  const auto affected = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(missing_generator_share * static_cast<double>(g.size()))));
  if (missing_rate * static_cast<double>(g.size()) / static_cast<double>(affected) > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "missing_rate too high for the affected generator share");
  }
}

SynthConfig default_profile(std::size_t generators, std::size_t validators, std::uint64_t seed,
                            std::size_t items_per_generator) {
  Rng rng(derive_seed(seed, 0xB1A5));
  SynthConfig c;
  c.seed = seed;
  c.items_per_generator = items_per_generator;
  for (std::size_t i = 0; i < generators; ++i) c.g.push_back(rng.uniform(0.85, 0.95));
  for (std::size_t j = 0; j < validators; ++j) {
    c.v_plus.push_back(rng.uniform(0.96, 0.99));
    c.v_minus.push_back(rng.uniform(0.10, 0.30));
  }
  if (validators > 1) {
    c.v_plus.back() = 0.838;
    c.v_minus.back() = 0.535;
  }
  c.missing_generator_share = 5.0 / 14.0;
  c.missing_item_dropout = 0.85;
  return c;
}

std::string generator_id(std::size_t index) { return padded('G', index + 1, 2); }
std::string validator_id(std::size_t index) { return padded('V', index + 1, 2); }

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::LabelSynonym: return "label-synonym";
    case FaultKind::LineFormat: return "line-format";
    case FaultKind::LineKey: return "line-key";
    case FaultKind::NearDuplicateFeedback: return "near-duplicate-feedback";
    case FaultKind::UnknownLabel: return "unknown-label";
    case FaultKind::UnknownLine: return "unknown-line";
    case FaultKind::UnrelatedFeedback: return "unrelated-feedback";
    case FaultKind::MissingIdentifier: return "missing-identifier";
  }
  return "?";
}

bool is_repairable(FaultKind kind) {
  return kind == FaultKind::LabelSynonym || kind == FaultKind::LineFormat ||
         kind == FaultKind::LineKey || kind == FaultKind::NearDuplicateFeedback;
}

MissingKind missing_kind_of(FaultKind kind) {
  switch (kind) {
    case FaultKind::LabelSynonym:
    case FaultKind::UnknownLabel: return MissingKind::LabelMismatch;
    case FaultKind::LineFormat:
    case FaultKind::LineKey:
    case FaultKind::UnknownLine: return MissingKind::LineMismatch;
    case FaultKind::NearDuplicateFeedback:
    case FaultKind::UnrelatedFeedback: return MissingKind::MissingFeedback;
    case FaultKind::MissingIdentifier: return MissingKind::MalformedRecord;
  }
  return MissingKind::MalformedRecord;
}

SynthCorpus synth_generate(const SynthConfig& config) {
  config.validate();
  const std::size_t generators = config.g.size();
  const std::size_t validators = config.v_plus.size();

  Rng item_rng(derive_seed(config.seed, 1));
  Rng label_rng(derive_seed(config.seed, 2));
  Rng missing_rng(derive_seed(config.seed, 3));
  Rng fault_rng(derive_seed(config.seed, 4));

  // Generators that carry the missing judgments.
  std::vector<std::size_t> order(generators);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng(derive_seed(config.seed, 5)).shuffle(order);
  const auto affected_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::lround(config.missing_generator_share * static_cast<double>(generators))));
  std::vector<char> affected(generators, 0);
  for (std::size_t k = 0; k < affected_count; ++k) affected[order[k]] = 1;
  const double affected_rate =
      config.missing_rate * static_cast<double>(generators) / static_cast<double>(affected_count);
  const bool clustered = config.missing_item_dropout > 0.0;
  const double fragile_rate =
      clustered ? std::min(1.0, affected_rate / config.missing_item_dropout) : 0.0;

  static constexpr std::array<FaultKind, 4> kRepairable = {
      FaultKind::LabelSynonym, FaultKind::LineFormat, FaultKind::LineKey,
      FaultKind::NearDuplicateFeedback};
  static constexpr std::array<FaultKind, 4> kUnrepairable = {
      FaultKind::UnknownLabel, FaultKind::UnknownLine, FaultKind::UnrelatedFeedback,
      FaultKind::MissingIdentifier};

  SynthCorpus corpus;
  const std::size_t total = generators * config.items_per_generator * validators;
  corpus.raw.reserve(total);
  corpus.drawn.reserve(total);
  corpus.items.reserve(generators * config.items_per_generator);
  corpus.annotations.reserve(generators * config.items_per_generator);

  for (std::size_t i = 0; i < generators; ++i) {
    const std::string gid = generator_id(i);
    for (std::size_t k = 0; k < config.items_per_generator; ++k) {
      FeedbackItem item;
      item.generator = gid;
      item.task = padded('T', k / 3 + 1, 4);
      item.line = static_cast<std::uint32_t>(2 + 5 * (k % 3) + item_rng.index(3));
      item.feedback = sentence(item_rng);
      const bool valid = item_rng.bernoulli(config.g[i]);
      const FeedbackCategory category = draw_category(valid, item_rng);
      corpus.annotations.push_back({gid, item.task, item.line, item.feedback, category});

      double miss_probability = 0.0;
      if (affected[i]) {
        if (!clustered) {
          miss_probability = affected_rate;
        } else if (missing_rng.bernoulli(fragile_rate)) {
          miss_probability = config.missing_item_dropout;
        }
      }

      for (std::size_t j = 0; j < validators; ++j) {
        const double p_valid = valid ? config.v_plus[j] : 1.0 - config.v_minus[j];
        const Verdict verdict = label_rng.bernoulli(p_valid) ? Verdict::Valid : Verdict::Invalid;

        RawValidatorOutput raw;
        raw.generator = gid;
        raw.validator = validator_id(j);
        raw.task = item.task;
        raw.raw_line = std::to_string(item.line);
        raw.raw_feedback = item.feedback;
        raw.raw_label = std::string(to_string(verdict));

        if (missing_rng.bernoulli(miss_probability)) {
          const bool repairable = fault_rng.bernoulli(config.repairable_fraction);
          const FaultKind kind = repairable ? kRepairable[fault_rng.index(kRepairable.size())]
                                            : kUnrepairable[fault_rng.index(kUnrepairable.size())];
          apply_fault(kind, verdict, item.line, raw, fault_rng);
          ++corpus.ledger.injected;
          if (repairable) ++corpus.ledger.repairable;
          ++corpus.ledger.per_fault[static_cast<std::size_t>(kind)];
        }
        corpus.raw.push_back(std::move(raw));
        corpus.drawn.push_back(verdict);
      }
      corpus.items.push_back(std::move(item));
    }
  }
  corpus.ledger.judgments = corpus.raw.size();

  const FeedbackCorpus lookup(corpus.items);
  corpus.judgments.reserve(corpus.raw.size());
  for (const auto& raw : corpus.raw) corpus.judgments.push_back(parse_exact(raw, lookup));
  return corpus;
}

ValidationMatrix expected_matrix(std::span<const double> g, std::span<const double> v_plus,
                                 std::span<const double> v_minus) {
  if (v_plus.size() != v_minus.size()) {
    throw Error(ErrorKind::ShapeMismatch, "v_plus and v_minus differ in length");
  }
  constexpr std::uint64_t kWeight = 1'000'000;
  std::vector<std::string> gen_ids;
  std::vector<std::string> val_ids;
  for (std::size_t i = 0; i < g.size(); ++i) gen_ids.push_back(generator_id(i));
  for (std::size_t j = 0; j < v_plus.size(); ++j) val_ids.push_back(validator_id(j));
  ValidationMatrix m(std::move(gen_ids), std::move(val_ids));
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < v_plus.size(); ++j) {
      const double p = predict_cell(g[i], v_plus[j], v_minus[j]);
      auto& cell = m.cell(i, j);
      cell.valid_count = static_cast<std::uint64_t>(std::llround(p * static_cast<double>(kWeight)));
      cell.invalid_count = kWeight - cell.valid_count;
      cell.fraction = p;
    }
  }
  return m;
}

Method Method::single_judge(std::string validator) {
  Method m;
  m.kind = MethodKind::SingleJudge;
  m.label = "single-judge:" + validator;
  m.validator = std::move(validator);
  return m;
}

Method Method::mean_baseline() {
  Method m;
  m.kind = MethodKind::MeanBaseline;
  m.label = "mean-baseline";
  return m;
}

Method Method::ensemble(VotingStrategy strategy, std::string label) {
  Method m;
  m.kind = MethodKind::FixedEnsemble;
  m.strategy = strategy;
  m.label = std::move(label);
  return m;
}

Method Method::calibrated(StrategyFamily family, std::string label) {
  Method m;
  m.kind = MethodKind::CalibratedEnsemble;
  m.strategy.family = family;
  m.label = std::move(label);
  return m;
}

Method Method::regression() {
  Method m;
  m.kind = MethodKind::Regression;
  m.label = "regression";
  return m;
}

std::uint32_t default_supermajority_threshold(std::uint32_t panel_size) {
  // 10 of 14, scaled to the panel.
  return std::max<std::uint32_t>(1, (5 * panel_size + 6) / 7);
}

ExperimentData::ExperimentData(std::span<const Judgment> judgments,
                               std::span<const AnnotationRecord> annotations,
                               std::span<const FeedbackItem> universe, MissingPolicy policy)
    : matrix_(build_matrix(judgments, policy)),
      observations_(Observations::from_matrix(matrix_)),
      truth_(ground_truth_precision(annotations)),
      tallies_(judgments, matrix_.validators(), universe),
      confusion_(confusion_by_cell(judgments, annotations)),
      policy_(policy) {}

Anchors ExperimentData::anchors_for(std::span<const std::string> calibration) const {
  Anchors anchors;
  if (calibration.empty()) return anchors;
  std::vector<ConfusionCounts> per_validator(matrix_.cols());
  for (const auto& id : calibration) {
    auto row = matrix_.generator_index(id);
    auto truth = truth_.find(id);
    if (!row || truth == truth_.end()) {
      throw Error(ErrorKind::NoAnnotations, "generator " + id + " is not annotated in the matrix");
    }
    anchors.generator_targets.emplace_back(*row, truth->second);
    for (std::size_t j = 0; j < matrix_.cols(); ++j) {
      auto it = confusion_.find({id, matrix_.validators()[j]});
      if (it != confusion_.end()) per_validator[j] += it->second;
    }
  }
  anchors.v_plus.resize(matrix_.cols());
  anchors.v_minus.resize(matrix_.cols());
  for (std::size_t j = 0; j < matrix_.cols(); ++j) {
    const auto r = reliability_from_counts(matrix_.validators()[j], per_validator[j], policy_);
    anchors.v_plus[j] = r.v_plus;
    anchors.v_minus[j] = r.v_minus;
  }
  return anchors;
}

namespace {

// Stable across runs and independent of the order ids were listed in.
std::uint64_t combination_stream(std::size_t s, const std::vector<std::string>& calibration) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ s;
  for (const auto& id : calibration) {
    for (unsigned char c : id) h = (h ^ c) * 0x100000001B3ULL;
    h = (h ^ 0xFF) * 0x100000001B3ULL;
  }
  return h;
}

// Advances to the next lexicographic s-combination of {0..n-1}.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t s = idx.size();
  for (std::size_t k = s; k-- > 0;) {
    if (idx[k] < n - s + k) {
      ++idx[k];
      for (std::size_t m = k + 1; m < s; ++m) idx[m] = idx[m - 1] + 1;
      return true;
    }
  }
  return false;
}

GeneratorValues restrict_to(const GeneratorValues& values, const std::vector<std::string>& ids) {
  GeneratorValues out;
  for (const auto& id : ids) {
    auto it = values.find(id);
    if (it == values.end()) throw Error(ErrorKind::MismatchedGenerators, "no value for " + id);
    out[id] = it->second;
  }
  return out;
}

}  // namespace

ExperimentResult leave_s_out(const ExperimentData& data, std::span<const std::string> annotated,
                             std::size_t s, const Method& method, const ExperimentConfig& config) {
  std::vector<std::string> ids(annotated.begin(), annotated.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t k = ids.size();
  if (k == 0 || s >= k) {
    throw Error(ErrorKind::InvalidS, "s = " + std::to_string(s) + " with " + std::to_string(k) +
                                         " annotated generators");
  }
  for (const auto& id : ids) {
    if (!data.truth().contains(id) || !data.matrix().generator_index(id)) {
      throw Error(ErrorKind::NoAnnotations, "generator " + id + " lacks annotations or judgments");
    }
  }

  const auto& matrix = data.matrix();
  std::optional<std::size_t> judge_column;
  if (method.kind == MethodKind::SingleJudge) {
    judge_column = matrix.validator_index(method.validator);
    if (!judge_column) throw Error(ErrorKind::MismatchedGenerators, "unknown validator " + method.validator);
  }
  GeneratorValues baseline;
  if (method.kind == MethodKind::MeanBaseline) baseline = mean_baseline(matrix);

  ExperimentResult result;
  result.s = s;
  result.method = method;

  std::vector<std::size_t> idx(s);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  do {
    CombinationResult combo;
    std::vector<char> in_h(k, 0);
    for (auto x : idx) in_h[x] = 1;
    for (std::size_t x = 0; x < k; ++x) (in_h[x] ? combo.calibration : combo.held_out).push_back(ids[x]);

    GeneratorValues predicted;
    switch (method.kind) {
      case MethodKind::SingleJudge:
        for (const auto& id : combo.held_out) {
          const auto& cell = matrix.cell(*matrix.generator_index(id), *judge_column);
          if (!cell.fraction) throw Error(ErrorKind::EmptyRow, id + " has no labels from " + method.validator);
          predicted[id] = *cell.fraction;
        }
        break;
      case MethodKind::MeanBaseline:
        predicted = restrict_to(baseline, combo.held_out);
        break;
      case MethodKind::FixedEnsemble:
        for (const auto& id : combo.held_out) predicted[id] = data.tallies().precision(id, method.strategy);
        break;
      case MethodKind::CalibratedEnsemble: {
        // With no calibration set the threshold is picked on every annotated
        // generator, the way a published operating point is.
        const auto& basis = combo.calibration.empty() ? ids : combo.calibration;
        const VotingStrategy strategy =
            calibrate_threshold(data.tallies(), restrict_to(data.truth(), basis), method.strategy.family)
                .strategy;
        combo.threshold = strategy.threshold;
        for (const auto& id : combo.held_out) predicted[id] = data.tallies().precision(id, strategy);
        break;
      }
      case MethodKind::Regression: {
        SolverConfig solver = config.solver;
        solver.seed = derive_seed(config.seed, combination_stream(s, combo.calibration));
        const auto estimate =
            fit(data.observations(), data.anchors_for(combo.calibration), config.weights, solver);
        for (const auto& id : combo.held_out) {
          predicted[id] = estimate.params.g[*matrix.generator_index(id)];
        }
        break;
      }
    }
    combo.report = error_metrics(predicted, restrict_to(data.truth(), combo.held_out));
    result.combinations.push_back(std::move(combo));
  } while (next_combination(idx, k));

  double sum_max = 0.0;
  double sum_mean = 0.0;
  for (const auto& c : result.combinations) {
    sum_max += c.report.max_abs_error;
    sum_mean += c.report.mean_abs_error;
  }
  const auto n = static_cast<double>(result.combinations.size());
  result.mean_max_ae = sum_max / n;
  result.mean_mean_ae = sum_mean / n;
  return result;
}

ComparisonReport compare_methods(const ExperimentData& data, std::span<const std::string> annotated,
                                 const ExperimentConfig& config, std::size_t s_min,
                                 std::optional<std::size_t> s_max) {
  std::set<std::string> distinct(annotated.begin(), annotated.end());
  const std::size_t k = distinct.size();
  if (k == 0) throw Error(ErrorKind::NoAnnotations, "no annotated generators");
  const std::size_t last = s_max.value_or(k - 1);
  if (last >= k || s_min > last) {
    throw Error(ErrorKind::InvalidS, "s range " + std::to_string(s_min) + ".." + std::to_string(last) +
                                         " with " + std::to_string(k) + " annotated generators");
  }
  const auto panel = data.tallies().panel_size();
  const auto majority = default_majority_threshold(panel);
  const auto super = default_supermajority_threshold(panel);

  ComparisonReport report;
  auto add = [&](ExperimentResult r, std::string name, std::string detail) {
    report.summary.push_back({r.s, std::move(name), std::move(detail), r.mean_max_ae, r.mean_mean_ae,
                              r.combinations.size()});
    report.results.push_back(std::move(r));
  };

  for (std::size_t s = s_min; s <= last; ++s) {
    std::vector<ExperimentResult> judges;
    for (const auto& v : data.matrix().validators()) {
      judges.push_back(leave_s_out(data, annotated, s, Method::single_judge(v), config));
    }
    auto by_error = [](const ExperimentResult& a, const ExperimentResult& b) {
      return std::tie(a.mean_max_ae, a.method.validator) < std::tie(b.mean_max_ae, b.method.validator);
    };
    const auto best = *std::min_element(judges.begin(), judges.end(), by_error);
    const auto worst = *std::max_element(judges.begin(), judges.end(), by_error);
    add(best, "best-single-judge", best.method.validator);
    add(worst, "worst-single-judge", worst.method.validator);

    add(leave_s_out(data, annotated, s,
                    Method::ensemble(VotingStrategy::valid_threshold(majority), "simple-majority"), config),
        "simple-majority", "m=" + std::to_string(majority));
    add(leave_s_out(data, annotated, s,
                    Method::ensemble(VotingStrategy::valid_threshold(super), "super-majority"), config),
        "super-majority", "m=" + std::to_string(super));
    add(leave_s_out(data, annotated, s,
                    Method::calibrated(StrategyFamily::InvalidVeto, "minority-veto"), config),
        "minority-veto", s == 0 ? "n=all-annotated" : "n=calibrated");
    add(leave_s_out(data, annotated, s, Method::mean_baseline(), config), "mean-baseline", "");
    add(leave_s_out(data, annotated, s, Method::regression(), config), "regression", "");
  }
  return report;
}

}  // namespace judgecal
