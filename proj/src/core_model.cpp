#include "judgecal/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "judgecal/error.hpp"

namespace judgecal {

std::uint64_t CategoryCounts::valid() const {
  return (*this)[FeedbackCategory::TP] + (*this)[FeedbackCategory::TP_E] +
         (*this)[FeedbackCategory::TP_R];
}

std::uint64_t CategoryCounts::invalid() const {
  return (*this)[FeedbackCategory::FP_I] + (*this)[FeedbackCategory::FP_H];
}

double compute_precision(const CategoryCounts& counts) {
  const auto total = counts.total();
  if (total == 0) throw Error(ErrorKind::ZeroTotal, "no annotated items");
  return static_cast<double>(counts.valid()) / static_cast<double>(total);
}

std::vector<GeneratorTruth> ground_truth_summary(std::span<const AnnotationRecord> annotations) {
  std::map<std::string, CategoryCounts> per_generator;
  for (const auto& a : annotations) per_generator[a.generator][a.category] += 1;

  std::vector<GeneratorTruth> out;
  out.reserve(per_generator.size());
  for (auto& [id, counts] : per_generator) {
    out.push_back({id, counts, compute_precision(counts)});
  }
  return out;
}

GeneratorValues ground_truth_precision(std::span<const AnnotationRecord> annotations) {
  GeneratorValues out;
  for (const auto& t : ground_truth_summary(annotations)) out[t.generator] = t.precision;
  return out;
}

ValidationMatrix::ValidationMatrix(std::vector<std::string> generators,
                                   std::vector<std::string> validators)
    : generators_(std::move(generators)),
      validators_(std::move(validators)),
      cells_(generators_.size() * validators_.size()) {}

std::optional<std::size_t> ValidationMatrix::generator_index(const std::string& id) const {
  auto it = std::find(generators_.begin(), generators_.end(), id);
  if (it == generators_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - generators_.begin());
}

std::optional<std::size_t> ValidationMatrix::validator_index(const std::string& id) const {
  auto it = std::find(validators_.begin(), validators_.end(), id);
  if (it == validators_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - validators_.begin());
}

std::vector<std::pair<std::size_t, std::size_t>> ValidationMatrix::empty_cells() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) {
      if (cell(i, j).empty()) out.emplace_back(i, j);
    }
  }
  return out;
}

void ValidationMatrix::refresh_fractions(MissingPolicy policy) {
  for (auto& c : cells_) {
    std::uint64_t denom = c.labeled();
    if (policy == MissingPolicy::CountAsInvalid) denom += c.missing_count;
    if (denom == 0) {
      c.fraction.reset();
    } else {
      c.fraction = static_cast<double>(c.valid_count) / static_cast<double>(denom);
    }
  }
}

namespace {

std::vector<std::string> sorted_unique(std::set<std::string> ids) { return {ids.begin(), ids.end()}; }

}  // namespace

ValidationMatrix build_matrix(std::span<const Judgment> judgments, MissingPolicy policy) {
  std::set<std::string> generators;
  std::set<std::string> validators;
  for (const auto& j : judgments) {
    generators.insert(j.generator);
    validators.insert(j.validator);
  }
  return build_matrix(judgments, sorted_unique(std::move(generators)),
                      sorted_unique(std::move(validators)), policy);
}

ValidationMatrix build_matrix(std::span<const Judgment> judgments,
                              std::vector<std::string> generators,
                              std::vector<std::string> validators, MissingPolicy policy) {
  if (generators.empty() || validators.empty()) {
    throw Error(ErrorKind::EmptyMatrix, "no generators or validators");
  }
  std::map<std::string, std::size_t> row_of;
  std::map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < generators.size(); ++i) row_of[generators[i]] = i;
  for (std::size_t j = 0; j < validators.size(); ++j) col_of[validators[j]] = j;

  ValidationMatrix m(std::move(generators), std::move(validators));
  for (const auto& jd : judgments) {
    auto r = row_of.find(jd.generator);
    auto c = col_of.find(jd.validator);
    if (r == row_of.end() || c == col_of.end()) continue;
    auto& cell = m.cell(r->second, c->second);
    if (jd.label.is_valid()) {
      ++cell.valid_count;
    } else if (jd.label.is_invalid()) {
      ++cell.invalid_count;
    } else {
      ++cell.missing_count;
    }
  }
  m.refresh_fractions(policy);
  return m;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  valid_as_valid += o.valid_as_valid;
  valid_as_invalid += o.valid_as_invalid;
  valid_as_missing += o.valid_as_missing;
  invalid_as_valid += o.invalid_as_valid;
  invalid_as_invalid += o.invalid_as_invalid;
  invalid_as_missing += o.invalid_as_missing;
  return *this;
}

std::map<std::pair<std::string, std::string>, ConfusionCounts> confusion_by_cell(
    std::span<const Judgment> judgments, std::span<const AnnotationRecord> annotations) {
  std::map<ItemKey, bool> truth;
  for (const auto& a : annotations) truth.emplace(a.key(), a.is_valid());

  std::map<std::pair<std::string, std::string>, ConfusionCounts> out;
  for (const auto& j : judgments) {
    auto key = j.item_key();
    if (!key) continue;
    auto it = truth.find(*key);
    if (it == truth.end()) continue;
    auto& c = out[{j.generator, j.validator}];
    if (it->second) {
      if (j.label.is_valid()) ++c.valid_as_valid;
      else if (j.label.is_invalid()) ++c.valid_as_invalid;
      else ++c.valid_as_missing;
    } else {
      if (j.label.is_valid()) ++c.invalid_as_valid;
      else if (j.label.is_invalid()) ++c.invalid_as_invalid;
      else ++c.invalid_as_missing;
    }
  }
  return out;
}

ValidatorReliability reliability_from_counts(std::string validator, const ConfusionCounts& c,
                                             MissingPolicy policy) {
  ValidatorReliability r;
  r.validator = std::move(validator);
  const bool count_missing = policy == MissingPolicy::CountAsInvalid;
  r.n_valid_items = c.valid_as_valid + c.valid_as_invalid + (count_missing ? c.valid_as_missing : 0);
  r.n_invalid_items =
      c.invalid_as_valid + c.invalid_as_invalid + (count_missing ? c.invalid_as_missing : 0);
  if (r.n_valid_items > 0) {
    r.v_plus = static_cast<double>(c.valid_as_valid) / static_cast<double>(r.n_valid_items);
  }
  if (r.n_invalid_items > 0) {
    const auto rejected = c.invalid_as_invalid + (count_missing ? c.invalid_as_missing : 0);
    r.v_minus = static_cast<double>(rejected) / static_cast<double>(r.n_invalid_items);
  }
  return r;
}

std::vector<ValidatorReliability> compute_reliability(std::span<const Judgment> judgments,
                                                      std::span<const AnnotationRecord> annotations,
                                                      MissingPolicy policy) {
  std::map<std::string, ConfusionCounts> per_validator;
  for (const auto& j : judgments) per_validator.try_emplace(j.validator);
  for (const auto& [cell, counts] : confusion_by_cell(judgments, annotations)) {
    per_validator[cell.second] += counts;
  }
  std::vector<ValidatorReliability> out;
  out.reserve(per_validator.size());
  for (const auto& [id, counts] : per_validator) {
    out.push_back(reliability_from_counts(id, counts, policy));
  }
  return out;
}

ErrorReport error_metrics(const GeneratorValues& predicted, const GeneratorValues& truth) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw Error(ErrorKind::MismatchedGenerators, "prediction and truth cover different generators");
  }
  ErrorReport report;
  double sum = 0.0;
  for (const auto& [id, value] : truth) {
    auto it = predicted.find(id);
    if (it == predicted.end()) {
      throw Error(ErrorKind::MismatchedGenerators, "no prediction for generator " + id);
    }
    const double e = std::abs(it->second - value);
    report.abs_error[id] = e;
    report.max_abs_error = std::max(report.max_abs_error, e);
    sum += e;
  }
  report.mean_abs_error = sum / static_cast<double>(truth.size());
  return report;
}

std::vector<Judgment> dedupe_judgments(std::span<const Judgment> judgments) {
  std::map<JudgmentKey, std::size_t> seen;
  std::vector<Judgment> out;
  out.reserve(judgments.size());
  for (std::size_t k = 0; k < judgments.size(); ++k) {
    const auto& j = judgments[k];
    auto [it, inserted] = seen.emplace(judgment_key(j), k);
    if (inserted) {
      out.push_back(j);
      continue;
    }
    if (!(judgments[it->second].label == j.label)) {
      throw Error(ErrorKind::DuplicateConflict,
                  "records " + std::to_string(it->second + 1) + " and " + std::to_string(k + 1) +
                      " share a key but disagree on the label");
    }
  }
  return out;
}

}  // namespace judgecal
