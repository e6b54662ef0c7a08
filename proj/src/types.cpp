#include "judgecal/types.hpp"

#include <charconv>

#include "judgecal/error.hpp"

namespace judgecal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroTotal: return "ZeroTotal";
    case ErrorKind::MismatchedGenerators: return "MismatchedGenerators";
    case ErrorKind::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case ErrorKind::NoItems: return "NoItems";
    case ErrorKind::NoAnnotations: return "NoAnnotations";
    case ErrorKind::EmptyRow: return "EmptyRow";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidS: return "InvalidS";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateConflict: return "DuplicateConflict";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(FeedbackCategory c) {
  switch (c) {
    case FeedbackCategory::TP: return "TP";
    case FeedbackCategory::TP_E: return "TP-E";
    case FeedbackCategory::TP_R: return "TP-R";
    case FeedbackCategory::FP_I: return "FP-I";
    case FeedbackCategory::FP_H: return "FP-H";
  }
  return "?";
}

std::optional<FeedbackCategory> parse_category(std::string_view text) {
  for (auto c : kAllCategories) {
    if (to_string(c) == text) return c;
  }
  // Underscore spelling is accepted as well.
  if (text == "TP_E") return FeedbackCategory::TP_E;
  if (text == "TP_R") return FeedbackCategory::TP_R;
  if (text == "FP_I") return FeedbackCategory::FP_I;
  if (text == "FP_H") return FeedbackCategory::FP_H;
  return std::nullopt;
}

std::string_view to_string(Verdict v) { return v == Verdict::Valid ? "valid" : "invalid"; }

std::string_view to_string(MissingKind k) {
  switch (k) {
    case MissingKind::MissingFeedback: return "MissingFeedback";
    case MissingKind::LabelMismatch: return "LabelMismatch";
    case MissingKind::LineMismatch: return "LineMismatch";
    case MissingKind::MalformedRecord: return "MalformedRecord";
  }
  return "?";
}

std::optional<MissingKind> parse_missing_kind(std::string_view text) {
  for (auto k : kAllMissingKinds) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::optional<Verdict> Label::verdict() const {
  if (const auto* v = std::get_if<Verdict>(&value_)) return *v;
  return std::nullopt;
}

std::optional<MissingKind> Label::missing_kind() const {
  if (const auto* k = std::get_if<MissingKind>(&value_)) return *k;
  return std::nullopt;
}

std::string to_string(const Label& label) {
  if (auto v = label.verdict()) return std::string(to_string(*v));
  return "missing(" + std::string(to_string(*label.missing_kind())) + ")";
}

std::string to_string(const LineRef& line) {
  if (const auto* n = std::get_if<std::uint32_t>(&line)) return std::to_string(*n);
  return std::get<std::string>(line);
}

std::optional<std::uint32_t> line_number(const LineRef& line) {
  if (const auto* n = std::get_if<std::uint32_t>(&line)) return *n;
  return std::nullopt;
}

LineRef line_ref(std::string text) {
  std::uint32_t n = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (!text.empty() && ec == std::errc() && ptr == text.data() + text.size() && std::to_string(n) == text) return n;
  return text;
}

std::optional<ItemKey> Judgment::item_key() const {
  auto n = line_number(line);
  if (!n) return std::nullopt;
  return ItemKey{generator, task, *n, feedback};
}

JudgmentKey judgment_key(const Judgment& j) {
  return {j.generator, j.validator, j.task, to_string(j.line), j.feedback};
}

}  // namespace judgecal
