#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgecal/core_model.hpp"
#include "judgecal/ensemble.hpp"
#include "judgecal/regression.hpp"
#include "judgecal/repair.hpp"

namespace judgecal {

// Parameters of the synthetic generator/validator population.
//
// Each item is valid with probability g_i; a validator labels a valid item
// Valid with probability v_plus_j and an invalid item Valid with probability
// 1 - v_minus_j. Judgments are then turned into faulted (missing) records so
// that, on average, a missing_rate share of all judgments is missing.
//
// Missing judgments land on a missing_generator_share of the generators.
// With missing_item_dropout == 0 they are spread independently over those
// generators' judgments; otherwise whole items turn fragile and each
// validator drops a fragile item with probability missing_item_dropout.
struct SynthConfig {
  std::vector<double> g;
  std::vector<double> v_plus;
  std::vector<double> v_minus;
  std::size_t items_per_generator = 1000;
  double missing_rate = 0.097;
  double repairable_fraction = 0.64;
  double missing_generator_share = 1.0;
  double missing_item_dropout = 0.0;
  std::uint64_t seed = 0;

  // Throws InvalidConfig.
  void validate() const;
};

// Draws a population with the agreeable-judge bias profile: v_plus in
// [0.96, 0.99], v_minus in [0.10, 0.30], g in [0.85, 0.95], and the last
// validator an outlier at (0.838, 0.535). Missing judgments cluster on items
// of about a third of the generators.
SynthConfig default_profile(std::size_t generators = 14, std::size_t validators = 14,
                            std::uint64_t seed = 0, std::size_t items_per_generator = 1000);

std::string generator_id(std::size_t index);
std::string validator_id(std::size_t index);

enum class FaultKind {
  LabelSynonym,
  LineFormat,
  LineKey,
  NearDuplicateFeedback,
  UnknownLabel,
  UnknownLine,
  UnrelatedFeedback,
  MissingIdentifier,
};

inline constexpr std::size_t kFaultKinds = 8;
std::string_view to_string(FaultKind kind);
bool is_repairable(FaultKind kind);
MissingKind missing_kind_of(FaultKind kind);

struct InjectionLedger {
  std::size_t judgments = 0;
  std::size_t injected = 0;
  std::size_t repairable = 0;
  std::array<std::size_t, kFaultKinds> per_fault{};

  std::size_t unrepairable() const { return injected - repairable; }
  std::size_t count(FaultKind k) const { return per_fault[static_cast<std::size_t>(k)]; }
};

struct SynthCorpus {
  std::vector<FeedbackItem> items;
  std::vector<AnnotationRecord> annotations;
  // Validator records as emitted, faults included.
  std::vector<RawValidatorOutput> raw;
  // The raw records read without repair.
  std::vector<Judgment> judgments;
  // Verdict drawn for each raw record before any fault was injected.
  std::vector<Verdict> drawn;
  InjectionLedger ledger;
};

// Deterministic given config.seed.
SynthCorpus synth_generate(const SynthConfig& config);

// Noiseless matrix with P_ij = predict_cell(g_i, v_plus_j, v_minus_j);
// tallies carry a nominal weight of 10^6 labeled items per cell.
ValidationMatrix expected_matrix(std::span<const double> g, std::span<const double> v_plus,
                                 std::span<const double> v_minus);

enum class MethodKind { SingleJudge, MeanBaseline, FixedEnsemble, CalibratedEnsemble, Regression };

struct Method {
  MethodKind kind = MethodKind::MeanBaseline;
  std::string validator;      // SingleJudge
  VotingStrategy strategy;    // FixedEnsemble; family only for CalibratedEnsemble
  std::string label;          // report name

  static Method single_judge(std::string validator);
  static Method mean_baseline();
  static Method ensemble(VotingStrategy strategy, std::string label);
  static Method calibrated(StrategyFamily family, std::string label);
  static Method regression();
};

struct ExperimentConfig {
  LossWeights weights;
  SolverConfig solver;
  MissingPolicy policy = MissingPolicy::Exclude;
  std::uint64_t seed = 0;
};

// Precomputed views of one corpus shared by every method and combination.
class ExperimentData {
 public:
  ExperimentData(std::span<const Judgment> judgments, std::span<const AnnotationRecord> annotations,
                 std::span<const FeedbackItem> universe = {},
                 MissingPolicy policy = MissingPolicy::Exclude);

  const ValidationMatrix& matrix() const { return matrix_; }
  const Observations& observations() const { return observations_; }
  const GeneratorValues& truth() const { return truth_; }
  const ItemTallies& tallies() const { return tallies_; }

  Anchors anchors_for(std::span<const std::string> calibration) const;

 private:
  ValidationMatrix matrix_;
  Observations observations_;
  GeneratorValues truth_;
  ItemTallies tallies_;
  std::map<std::pair<std::string, std::string>, ConfusionCounts> confusion_;
  MissingPolicy policy_;
};

struct CombinationResult {
  std::vector<std::string> calibration;
  std::vector<std::string> held_out;
  ErrorReport report;
  // Threshold chosen by a calibrated ensemble.
  std::optional<std::uint32_t> threshold;
};

struct ExperimentResult {
  std::size_t s = 0;
  Method method;
  std::vector<CombinationResult> combinations;
  double mean_max_ae = 0.0;
  double mean_mean_ae = 0.0;
};

// Calibrates on every s-subset of the annotated generators (lexicographic
// over the sorted ids) and scores the rest. At s = 0 a calibrated ensemble
// takes its threshold from all annotated generators. Throws InvalidS unless
// s < |annotated|.
ExperimentResult leave_s_out(const ExperimentData& data, std::span<const std::string> annotated,
                             std::size_t s, const Method& method, const ExperimentConfig& config);

struct ComparisonRow {
  std::size_t s = 0;
  std::string method;
  std::string detail;
  double mean_max_ae = 0.0;
  double mean_mean_ae = 0.0;
  std::size_t combinations = 0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> summary;
  std::vector<ExperimentResult> results;
};

// Every s in s_min..s_max (default 0..K-1) against the single judges (best
// and worst reported), Simple and Super Majority, calibrated Minority Veto,
// the mean baseline and the regression.
ComparisonReport compare_methods(const ExperimentData& data, std::span<const std::string> annotated,
                                 const ExperimentConfig& config, std::size_t s_min = 0,
                                 std::optional<std::size_t> s_max = std::nullopt);

std::uint32_t default_supermajority_threshold(std::uint32_t panel_size);

}  // namespace judgecal
