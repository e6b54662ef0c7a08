#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "judgecal/types.hpp"

namespace judgecal {

// A validator record exactly as read, before any repair.
struct RawValidatorOutput {
  std::string generator;
  std::string validator;
  std::string task;
  std::string raw_line;
  // Key the line was read from ("line" unless a variant spelling was used).
  std::string line_key = "line";
  std::string raw_feedback;
  std::string raw_label;
  // Unrecognized fields, kept verbatim (value is serialized JSON).
  std::vector<std::pair<std::string, std::string>> extras;
  // 1-based line in the source file, 0 when not read from a file.
  std::size_t source_line = 0;

  bool operator==(const RawValidatorOutput&) const = default;
};

std::map<std::string, Verdict> default_label_map();
std::vector<std::string> default_line_key_variants();

struct RepairConfig {
  int similarity_threshold = 85;
  std::map<std::string, Verdict> label_map = default_label_map();
  std::vector<std::string> line_key_variants = default_line_key_variants();
  // Downstream fractions count missing judgments as invalid.
  bool strict = false;

  // Throws InvalidConfig.
  void validate() const;
  MissingPolicy missing_policy() const {
    return strict ? MissingPolicy::CountAsInvalid : MissingPolicy::Exclude;
  }
};

// Lowercase, trim and collapse runs of whitespace.
std::string normalize_label_text(std::string_view raw);

// Unmapped text yields Missing(LabelMismatch).
Label standardize_label(std::string_view raw_label, const std::map<std::string, Verdict>& label_map);

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::u32string decode_utf8(std::string_view text);

// Normalized Levenshtein similarity over code points, as an integer percent
// rounded half up. Two empty strings are 100 similar.
int similarity(std::string_view a, std::string_view b);

// Index of the most similar candidate when it reaches the threshold. Ties go
// to the lowest index.
std::optional<std::size_t> align_feedback(std::string_view validator_feedback,
                                          std::span<const std::string> candidates, int threshold);

// Accepts "3", "line 3", "Line: 3" and ranges "2-3" (resolved to their
// start). The result must be a known line.
std::optional<std::uint32_t> repair_line_ref(std::string_view raw_line,
                                             const std::set<std::uint32_t>& known_lines);

// Generated feedback items grouped by (generator, task).
class FeedbackCorpus {
 public:
  FeedbackCorpus() = default;
  explicit FeedbackCorpus(std::span<const FeedbackItem> items);

  struct TaskItems {
    std::vector<std::string> feedback;
    std::vector<std::uint32_t> lines;
  };

  const TaskItems* find(const std::string& generator, const std::string& task) const;
  std::size_t size() const { return size_; }

 private:
  std::map<std::pair<std::string, std::string>, TaskItems> by_task_;
  std::size_t size_ = 0;
};

struct RepairKindStats {
  std::size_t count_before = 0;
  std::size_t count_repaired = 0;
  std::size_t count_remaining = 0;
};

struct RepairStats {
  std::size_t total = 0;
  std::size_t missing_before_count = 0;
  std::size_t missing_after_count = 0;
  // Indexed by MissingKind of the unrepaired failure.
  std::array<RepairKindStats, 4> per_kind{};

  double missing_before() const;
  double missing_after() const;
  RepairKindStats& operator[](MissingKind k) { return per_kind[static_cast<std::size_t>(k)]; }
  const RepairKindStats& operator[](MissingKind k) const {
    return per_kind[static_cast<std::size_t>(k)];
  }
};

struct RepairResult {
  std::vector<Judgment> judgments;
  RepairStats stats;
  // Canonical raw form of each repaired record; unrepaired records are
  // passed through unchanged. Feeding this back is a fixed point.
  std::vector<RawValidatorOutput> repaired_raw;
};

// Interprets a record without any repair: labels must be exactly "valid" or
// "invalid", the feedback must equal a generated item and the line must be a
// plain number under the canonical key.
Judgment parse_exact(const RawValidatorOutput& raw, const FeedbackCorpus& corpus);

// Single-record repair: label standardization, then feedback alignment, then
// line repair. The first failing stage decides the missing kind; later
// stages still run so the judgment keeps whatever identity resolved.
Judgment repair_record(const RawValidatorOutput& raw, const FeedbackCorpus& corpus,
                       const RepairConfig& config);

RepairResult repair_pipeline(std::span<const RawValidatorOutput> raw, const FeedbackCorpus& corpus,
                             const RepairConfig& config);

// Canonical raw record for a judgment (inverse of parse_exact on resolved records).
RawValidatorOutput to_raw(const Judgment& judgment);

}  // namespace judgecal
