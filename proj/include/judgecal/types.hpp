#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace judgecal {

// Human annotation scheme. TP, TP_E and TP_R are valid feedback;
// FP_I and FP_H are invalid.
enum class FeedbackCategory { TP, TP_E, TP_R, FP_I, FP_H };

inline constexpr std::array<FeedbackCategory, 5> kAllCategories = {
    FeedbackCategory::TP, FeedbackCategory::TP_E, FeedbackCategory::TP_R,
    FeedbackCategory::FP_I, FeedbackCategory::FP_H};

constexpr bool classify_as_valid(FeedbackCategory c) {
  return c == FeedbackCategory::TP || c == FeedbackCategory::TP_E || c == FeedbackCategory::TP_R;
}

std::string_view to_string(FeedbackCategory c);
std::optional<FeedbackCategory> parse_category(std::string_view text);

enum class Verdict { Valid, Invalid };

enum class MissingKind { MissingFeedback, LabelMismatch, LineMismatch, MalformedRecord };

inline constexpr std::array<MissingKind, 4> kAllMissingKinds = {
    MissingKind::MissingFeedback, MissingKind::LabelMismatch, MissingKind::LineMismatch,
    MissingKind::MalformedRecord};

std::string_view to_string(Verdict v);
std::string_view to_string(MissingKind k);
std::optional<MissingKind> parse_missing_kind(std::string_view text);

// A validator's outcome on one item: a verdict, or a missing value tagged
// with the failure that produced it.
class Label {
 public:
  static Label valid() { return Label(Verdict::Valid); }
  static Label invalid() { return Label(Verdict::Invalid); }
  static Label missing(MissingKind kind) { return Label(kind); }
  static Label of(Verdict v) { return Label(v); }

  bool is_missing() const { return std::holds_alternative<MissingKind>(value_); }
  bool is_valid() const { return value_ == Value(Verdict::Valid); }
  bool is_invalid() const { return value_ == Value(Verdict::Invalid); }
  std::optional<Verdict> verdict() const;
  std::optional<MissingKind> missing_kind() const;

  bool operator==(const Label&) const = default;

 private:
  using Value = std::variant<Verdict, MissingKind>;
  explicit Label(Value v) : value_(v) {}
  Value value_;
};

std::string to_string(const Label& label);

// A numeric line key, or the raw text when it could not be resolved.
using LineRef = std::variant<std::uint32_t, std::string>;

std::string to_string(const LineRef& line);
std::optional<std::uint32_t> line_number(const LineRef& line);
// A number when text is its canonical decimal spelling, otherwise the text.
LineRef line_ref(std::string text);

// Identity of one generated feedback item.
struct ItemKey {
  std::string generator;
  std::string task;
  std::uint32_t line = 0;
  std::string feedback;

  auto operator<=>(const ItemKey&) const = default;
};

// One generated feedback item of the generator corpus.
struct FeedbackItem {
  std::string generator;
  std::string task;
  std::uint32_t line = 0;
  std::string feedback;

  ItemKey key() const { return {generator, task, line, feedback}; }

  bool operator==(const FeedbackItem&) const = default;
};

struct Judgment {
  std::string generator;
  std::string validator;
  std::string task;
  LineRef line;
  std::string feedback;
  Label label = Label::missing(MissingKind::MalformedRecord);

  // Set only when the line resolved to a number.
  std::optional<ItemKey> item_key() const;

  bool operator==(const Judgment&) const = default;
};

// (generator, validator, task, line, feedback) as text; the judgment identity.
using JudgmentKey = std::array<std::string, 5>;
JudgmentKey judgment_key(const Judgment& j);

struct AnnotationRecord {
  std::string generator;
  std::string task;
  std::uint32_t line = 0;
  std::string feedback;
  FeedbackCategory category = FeedbackCategory::TP;

  ItemKey key() const { return {generator, task, line, feedback}; }
  bool is_valid() const { return classify_as_valid(category); }

  bool operator==(const AnnotationRecord&) const = default;
};

// How missing judgments enter fractions. Exclude drops them from the
// denominator; CountAsInvalid treats them as Invalid.
enum class MissingPolicy { Exclude, CountAsInvalid };

// Per-generator fractions keyed by generator id.
using GeneratorValues = std::map<std::string, double>;

}  // namespace judgecal
