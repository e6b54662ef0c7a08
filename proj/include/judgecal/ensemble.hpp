#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgecal/core_model.hpp"
#include "judgecal/types.hpp"

namespace judgecal {

struct VoteTally {
  std::uint32_t valid_votes = 0;
  std::uint32_t invalid_votes = 0;
  std::uint32_t missing_votes = 0;
  std::uint32_t panel_size = 0;

  bool consistent() const {
    return panel_size > 0 && valid_votes + invalid_votes + missing_votes == panel_size;
  }
};

enum class StrategyFamily { ValidThreshold, InvalidVeto };

std::string_view to_string(StrategyFamily family);

// ValidThreshold(m): valid iff at least m valid votes (Simple Majority,
// Super Majority). InvalidVeto(n): invalid iff at least n invalid votes
// (Minority Veto). Missing votes abstain under both.
struct VotingStrategy {
  StrategyFamily family = StrategyFamily::InvalidVeto;
  std::uint32_t threshold = 1;

  static VotingStrategy valid_threshold(std::uint32_t m) { return {StrategyFamily::ValidThreshold, m}; }
  static VotingStrategy invalid_veto(std::uint32_t n) { return {StrategyFamily::InvalidVeto, n}; }

  bool operator==(const VotingStrategy&) const = default;
};

std::string to_string(const VotingStrategy& s);

// Simple Majority threshold for a panel: ceil(panel / 2 + 1), 8 of 14.
std::uint32_t default_majority_threshold(std::uint32_t panel_size);
// Minority Veto operating point: 4, capped at the panel size.
std::uint32_t default_veto_threshold(std::uint32_t panel_size);

// Throws ThresholdOutOfRange unless 1 <= threshold <= panel_size.
Verdict vote(const VoteTally& tally, const VotingStrategy& strategy);

// Cross-validator tallies per item, grouped by generator. The panel is fixed:
// validators with no usable judgment on an item count as missing votes.
class ItemTallies {
 public:
  // The panel is every validator seen in the judgments. When an item
  // universe is given, items come from it; otherwise from the resolved
  // (numeric line) judgments.
  ItemTallies(std::span<const Judgment> judgments, std::span<const FeedbackItem> universe = {});
  ItemTallies(std::span<const Judgment> judgments, std::vector<std::string> panel,
              std::span<const FeedbackItem> universe);

  std::uint32_t panel_size() const { return static_cast<std::uint32_t>(panel_.size()); }
  const std::vector<std::string>& panel() const { return panel_; }
  const std::map<std::string, std::vector<VoteTally>>& by_generator() const { return by_generator_; }

  // Fraction of each generator's items voted valid.
  GeneratorValues precision(const VotingStrategy& strategy) const;
  double precision(const std::string& generator, const VotingStrategy& strategy) const;

 private:
  void build(std::span<const Judgment> judgments, std::span<const FeedbackItem> universe);

  std::vector<std::string> panel_;
  std::map<std::string, std::vector<VoteTally>> by_generator_;
};

// Throws NoItems when a generator has no items.
GeneratorValues ensemble_precision(std::span<const Judgment> judgments, const VotingStrategy& strategy,
                                   std::span<const FeedbackItem> universe = {});

struct ThresholdCalibration {
  VotingStrategy strategy;
  ErrorReport report;
  // (threshold, report) for every threshold in 1..panel_size.
  std::vector<std::pair<std::uint32_t, ErrorReport>> sweep;
};

// Grid search over 1..panel_size minimizing MaxAE on the annotated
// generators, ties broken by MeanAE then by the smaller threshold. Items of
// annotated generators come from the annotations. Throws NoAnnotations.
ThresholdCalibration calibrate_threshold(std::span<const Judgment> judgments,
                                         std::span<const AnnotationRecord> annotations,
                                         StrategyFamily family);
ThresholdCalibration calibrate_threshold(const ItemTallies& tallies, const GeneratorValues& truth,
                                         StrategyFamily family);

// Row mean of P over the labeled cells. Throws EmptyRow.
GeneratorValues mean_baseline(const ValidationMatrix& matrix);

struct AgreementHistogram {
  // Index k counts items that exactly k validators labeled correctly.
  std::vector<std::uint64_t> valid_truth;
  std::vector<std::uint64_t> invalid_truth;
};

AgreementHistogram agreement_histogram(std::span<const Judgment> judgments,
                                       std::span<const AnnotationRecord> annotations);

}  // namespace judgecal
