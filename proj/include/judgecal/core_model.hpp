#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgecal/types.hpp"

namespace judgecal {

// Counts indexed by FeedbackCategory.
struct CategoryCounts {
  std::array<std::uint64_t, 5> counts{};

  std::uint64_t& operator[](FeedbackCategory c) { return counts[static_cast<std::size_t>(c)]; }
  std::uint64_t operator[](FeedbackCategory c) const { return counts[static_cast<std::size_t>(c)]; }
  std::uint64_t valid() const;
  std::uint64_t invalid() const;
  std::uint64_t total() const { return valid() + invalid(); }
};

// Fraction of valid feedback. Throws ZeroTotal when every count is zero.
double compute_precision(const CategoryCounts& counts);

struct GeneratorTruth {
  std::string generator;
  CategoryCounts counts;
  double precision = 0.0;
};

// Ground-truth precision per annotated generator, ordered by generator id.
std::vector<GeneratorTruth> ground_truth_summary(std::span<const AnnotationRecord> annotations);
GeneratorValues ground_truth_precision(std::span<const AnnotationRecord> annotations);

struct MatrixCell {
  std::uint64_t valid_count = 0;
  std::uint64_t invalid_count = 0;
  std::uint64_t missing_count = 0;
  // Empirical valid fraction; unset when the cell has no labeled items.
  std::optional<double> fraction;

  std::uint64_t labeled() const { return valid_count + invalid_count; }
  bool empty() const { return !fraction.has_value(); }
};

// Per (generator, validator) tallies and valid fractions P_ij. Rows are
// generators, columns validators, both in sorted identifier order unless
// given explicitly.
class ValidationMatrix {
 public:
  ValidationMatrix() = default;
  ValidationMatrix(std::vector<std::string> generators, std::vector<std::string> validators);

  const std::vector<std::string>& generators() const { return generators_; }
  const std::vector<std::string>& validators() const { return validators_; }
  std::size_t rows() const { return generators_.size(); }
  std::size_t cols() const { return validators_.size(); }

  const MatrixCell& cell(std::size_t i, std::size_t j) const { return cells_[i * cols() + j]; }
  MatrixCell& cell(std::size_t i, std::size_t j) { return cells_[i * cols() + j]; }

  std::optional<std::size_t> generator_index(const std::string& id) const;
  std::optional<std::size_t> validator_index(const std::string& id) const;

  // (row, col) of every cell with zero labeled items.
  std::vector<std::pair<std::size_t, std::size_t>> empty_cells() const;

  // Recomputes every fraction from the tallies under the given policy.
  void refresh_fractions(MissingPolicy policy);

 private:
  std::vector<std::string> generators_;
  std::vector<std::string> validators_;
  std::vector<MatrixCell> cells_;
};

ValidationMatrix build_matrix(std::span<const Judgment> judgments,
                              MissingPolicy policy = MissingPolicy::Exclude);
ValidationMatrix build_matrix(std::span<const Judgment> judgments,
                              std::vector<std::string> generators,
                              std::vector<std::string> validators,
                              MissingPolicy policy = MissingPolicy::Exclude);

// Label outcomes of one validator on annotated items, split by truth class.
struct ConfusionCounts {
  std::uint64_t valid_as_valid = 0;
  std::uint64_t valid_as_invalid = 0;
  std::uint64_t valid_as_missing = 0;
  std::uint64_t invalid_as_valid = 0;
  std::uint64_t invalid_as_invalid = 0;
  std::uint64_t invalid_as_missing = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

// Confusion counts per (generator, validator) over judgments that match an
// annotation. Judgments without a matching annotation are ignored.
std::map<std::pair<std::string, std::string>, ConfusionCounts> confusion_by_cell(
    std::span<const Judgment> judgments, std::span<const AnnotationRecord> annotations);

struct ValidatorReliability {
  std::string validator;
  // TPR and TNR; unset when the validator has no labeled item of that class.
  std::optional<double> v_plus;
  std::optional<double> v_minus;
  std::uint64_t n_valid_items = 0;
  std::uint64_t n_invalid_items = 0;
};

ValidatorReliability reliability_from_counts(std::string validator, const ConfusionCounts& c,
                                             MissingPolicy policy = MissingPolicy::Exclude);

// TPR/TNR per validator, ordered by validator id.
std::vector<ValidatorReliability> compute_reliability(std::span<const Judgment> judgments,
                                                      std::span<const AnnotationRecord> annotations,
                                                      MissingPolicy policy = MissingPolicy::Exclude);

struct ErrorReport {
  GeneratorValues abs_error;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
};

// Throws MismatchedGenerators unless both maps have the same non-empty key set.
ErrorReport error_metrics(const GeneratorValues& predicted, const GeneratorValues& truth);

// Drops exact duplicates. Throws DuplicateConflict when two records share a
// key but disagree on the label.
std::vector<Judgment> dedupe_judgments(std::span<const Judgment> judgments);

}  // namespace judgecal
