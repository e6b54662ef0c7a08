#include "judgecal/ensemble.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "judgecal/error.hpp"

namespace judgecal {

std::string_view to_string(StrategyFamily family) {
  return family == StrategyFamily::ValidThreshold ? "valid-threshold" : "invalid-veto";
}

std::string to_string(const VotingStrategy& s) {
  return std::string(to_string(s.family)) + "(" + std::to_string(s.threshold) + ")";
}

std::uint32_t default_majority_threshold(std::uint32_t panel_size) {
  // ceil(panel / 2 + 1) == floor(panel / 2) + 1 for integral panels.
  return std::min(panel_size, panel_size / 2 + 1);
}

std::uint32_t default_veto_threshold(std::uint32_t panel_size) {
  return std::max<std::uint32_t>(1, std::min<std::uint32_t>(4, panel_size));
}

Verdict vote(const VoteTally& tally, const VotingStrategy& strategy) {
  if (strategy.threshold < 1 || strategy.threshold > tally.panel_size) {
    throw Error(ErrorKind::ThresholdOutOfRange,
                to_string(strategy) + " on a panel of " + std::to_string(tally.panel_size));
  }
  if (strategy.family == StrategyFamily::ValidThreshold) {
    return tally.valid_votes >= strategy.threshold ? Verdict::Valid : Verdict::Invalid;
  }
  return tally.invalid_votes >= strategy.threshold ? Verdict::Invalid : Verdict::Valid;
}

namespace {

std::vector<std::string> panel_of(std::span<const Judgment> judgments) {
  std::set<std::string> ids;
  for (const auto& j : judgments) ids.insert(j.validator);
  return {ids.begin(), ids.end()};
}

enum class Vote : std::uint8_t { Absent, Valid, Invalid };

}  // namespace

ItemTallies::ItemTallies(std::span<const Judgment> judgments, std::span<const FeedbackItem> universe)
    : panel_(panel_of(judgments)) {
  build(judgments, universe);
}

ItemTallies::ItemTallies(std::span<const Judgment> judgments, std::vector<std::string> panel,
                         std::span<const FeedbackItem> universe)
    : panel_(std::move(panel)) {
  build(judgments, universe);
}

void ItemTallies::build(std::span<const Judgment> judgments, std::span<const FeedbackItem> universe) {
  const std::size_t width = panel_.size();
  std::map<std::string, std::size_t> column;
  for (std::size_t k = 0; k < width; ++k) column[panel_[k]] = k;

  std::map<ItemKey, std::vector<Vote>> votes;
  const bool closed = !universe.empty();
  for (const auto& item : universe) votes.try_emplace(item.key(), width, Vote::Absent);

  for (const auto& j : judgments) {
    auto key = j.item_key();
    if (!key) continue;
    auto col = column.find(j.validator);
    if (col == column.end()) continue;
    auto it = votes.find(*key);
    if (it == votes.end()) {
      // Without a universe only labeled judgments introduce items.
      if (closed || j.label.is_missing()) continue;
      it = votes.emplace(std::move(*key), std::vector<Vote>(width, Vote::Absent)).first;
    }
    if (j.label.is_valid()) it->second[col->second] = Vote::Valid;
    else if (j.label.is_invalid()) it->second[col->second] = Vote::Invalid;
  }

  for (const auto& [key, row] : votes) {
    VoteTally t;
    t.panel_size = static_cast<std::uint32_t>(width);
    for (Vote v : row) {
      if (v == Vote::Valid) ++t.valid_votes;
      else if (v == Vote::Invalid) ++t.invalid_votes;
    }
    t.missing_votes = t.panel_size - t.valid_votes - t.invalid_votes;
    by_generator_[key.generator].push_back(t);
  }
}

double ItemTallies::precision(const std::string& generator, const VotingStrategy& strategy) const {
  auto it = by_generator_.find(generator);
  if (it == by_generator_.end() || it->second.empty()) {
    throw Error(ErrorKind::NoItems, "generator " + generator + " has no items");
  }
  std::size_t valid = 0;
  for (const auto& t : it->second) {
    if (vote(t, strategy) == Verdict::Valid) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(it->second.size());
}

GeneratorValues ItemTallies::precision(const VotingStrategy& strategy) const {
  GeneratorValues out;
  for (const auto& [generator, tallies] : by_generator_) out[generator] = precision(generator, strategy);
  return out;
}

GeneratorValues ensemble_precision(std::span<const Judgment> judgments, const VotingStrategy& strategy,
                                   std::span<const FeedbackItem> universe) {
  return ItemTallies(judgments, universe).precision(strategy);
}

ThresholdCalibration calibrate_threshold(const ItemTallies& tallies, const GeneratorValues& truth,
                                         StrategyFamily family) {
  GeneratorValues calibration_truth;
  for (const auto& [id, g] : truth) {
    if (tallies.by_generator().contains(id)) calibration_truth[id] = g;
  }
  if (calibration_truth.empty()) {
    throw Error(ErrorKind::NoAnnotations, "no annotated generator has judged items");
  }
  if (tallies.panel_size() == 0) throw Error(ErrorKind::NoItems, "empty validator panel");

  ThresholdCalibration out;
  std::optional<std::tuple<double, double, std::uint32_t>> best;
  for (std::uint32_t t = 1; t <= tallies.panel_size(); ++t) {
    const VotingStrategy strategy{family, t};
    GeneratorValues predicted;
    for (const auto& [id, g] : calibration_truth) predicted[id] = tallies.precision(id, strategy);
    ErrorReport report = error_metrics(predicted, calibration_truth);
    const auto key = std::make_tuple(report.max_abs_error, report.mean_abs_error, t);
    if (!best || key < *best) {
      best = key;
      out.strategy = strategy;
      out.report = report;
    }
    out.sweep.emplace_back(t, std::move(report));
  }
  return out;
}

ThresholdCalibration calibrate_threshold(std::span<const Judgment> judgments,
                                         std::span<const AnnotationRecord> annotations,
                                         StrategyFamily family) {
  if (annotations.empty()) throw Error(ErrorKind::NoAnnotations, "no annotations");
  std::vector<FeedbackItem> universe;
  universe.reserve(annotations.size());
  for (const auto& a : annotations) universe.push_back({a.generator, a.task, a.line, a.feedback});
  ItemTallies tallies(judgments, panel_of(judgments), universe);
  return calibrate_threshold(tallies, ground_truth_precision(annotations), family);
}

GeneratorValues mean_baseline(const ValidationMatrix& matrix) {
  GeneratorValues out;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (const auto& p = matrix.cell(i, j).fraction) {
        sum += *p;
        ++n;
      }
    }
    if (n == 0) throw Error(ErrorKind::EmptyRow, "generator " + matrix.generators()[i] + " has no labeled cell");
    out[matrix.generators()[i]] = sum / static_cast<double>(n);
  }
  return out;
}

AgreementHistogram agreement_histogram(std::span<const Judgment> judgments,
                                       std::span<const AnnotationRecord> annotations) {
  const auto panel = panel_of(judgments);
  std::map<std::string, std::size_t> column;
  for (std::size_t k = 0; k < panel.size(); ++k) column[panel[k]] = k;

  std::map<ItemKey, std::pair<bool, std::vector<bool>>> items;
  for (const auto& a : annotations) {
    items.try_emplace(a.key(), a.is_valid(), std::vector<bool>(panel.size(), false));
  }
  for (const auto& j : judgments) {
    auto key = j.item_key();
    if (!key || j.label.is_missing()) continue;
    auto it = items.find(*key);
    if (it == items.end()) continue;
    const bool truth_valid = it->second.first;
    it->second.second[column.at(j.validator)] = (j.label.is_valid() == truth_valid);
  }

  AgreementHistogram h;
  h.valid_truth.assign(panel.size() + 1, 0);
  h.invalid_truth.assign(panel.size() + 1, 0);
  for (const auto& [key, entry] : items) {
    const auto correct = static_cast<std::size_t>(
        std::count(entry.second.begin(), entry.second.end(), true));
    (entry.first ? h.valid_truth : h.invalid_truth)[correct] += 1;
  }
  return h;
}

}  // namespace judgecal
