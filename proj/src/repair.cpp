#include "judgecal/repair.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

#include "judgecal/error.hpp"

namespace judgecal {

std::map<std::string, Verdict> default_label_map() {
  return {
      {"valid", Verdict::Valid},
      {"correct", Verdict::Valid},
      {"true positive", Verdict::Valid},
      {"invalid", Verdict::Invalid},
      {"incorrect", Verdict::Invalid},
      {"wrong", Verdict::Invalid},
      {"false positive", Verdict::Invalid},
      {"partially valid", Verdict::Invalid},
  };
}

std::vector<std::string> default_line_key_variants() {
  return {"line_number", "line_num", "line_no", "lineno", "line_numbers", "lines"};
}

void RepairConfig::validate() const {
  if (similarity_threshold <= 0 || similarity_threshold > 100) {
    throw Error(ErrorKind::InvalidConfig, "similarity_threshold must be in (0, 100]");
  }
}

std::string normalize_label_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char ch : raw) {
    if (std::isspace(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  // Quotes and a trailing period are decoration, not part of the label.
  auto is_decoration = [](char c) { return c == '"' || c == '\'' || c == '`' || c == '.'; };
  while (!out.empty() && is_decoration(out.back())) out.pop_back();
  std::size_t start = 0;
  while (start < out.size() && is_decoration(out[start])) ++start;
  return out.substr(start);
}

Label standardize_label(std::string_view raw_label, const std::map<std::string, Verdict>& label_map) {
  const auto key = normalize_label_text(raw_label);
  auto it = label_map.find(key);
  if (it == label_map.end()) return Label::missing(MissingKind::LabelMismatch);
  return Label::of(it->second);
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) {
      len = 4;
      cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    }
    bool ok = len == 1 || (b0 < 0xF8 && i + len <= text.size());
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      // Invalid sequences count as one unit per byte.
      out.push_back(b0);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    cur[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::size_t substitution = prev[j] + (a[i] == b[j] ? 0 : 1);
      cur[j + 1] = std::min({prev[j + 1] + 1, cur[j] + 1, substitution});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int similarity(std::string_view a, std::string_view b) {
  const auto ua = decode_utf8(a);
  const auto ub = decode_utf8(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 100;
  const std::size_t same = longest - levenshtein(ua, ub);
  // round(100 * same / longest), halves rounded up, in integer arithmetic.
  return static_cast<int>((200 * same + longest) / (2 * longest));
}

std::optional<std::size_t> align_feedback(std::string_view validator_feedback,
                                          std::span<const std::string> candidates, int threshold) {
  std::optional<std::size_t> best;
  int best_score = -1;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const int score = similarity(validator_feedback, candidates[k]);
    if (score > best_score) {
      best_score = score;
      best = k;
      if (score == 100) break;
    }
  }
  if (!best || best_score < threshold) return std::nullopt;
  return best;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<std::uint32_t> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::uint32_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool has_identifiers(const RawValidatorOutput& raw) {
  return !raw.generator.empty() && !raw.validator.empty() && !raw.task.empty();
}

}  // namespace

std::optional<std::uint32_t> repair_line_ref(std::string_view raw_line,
                                             const std::set<std::uint32_t>& known_lines) {
  std::string text(trim(raw_line));
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::string_view s = text;
  for (std::string_view word : {"lines", "line"}) {
    if (s.starts_with(word)) {
      s.remove_prefix(word.size());
      s = trim(s);
      if (!s.empty() && (s.front() == ':' || s.front() == '#')) s.remove_prefix(1);
      s = trim(s);
      break;
    }
  }
  std::optional<std::uint32_t> value = parse_uint(s);
  if (!value) {
    // Range "a-b": the exact range cannot be a numeric key, so use its start.
    const auto dash = s.find('-');
    if (dash != std::string_view::npos && parse_uint(trim(s.substr(dash + 1)))) {
      value = parse_uint(trim(s.substr(0, dash)));
    }
  }
  if (!value || !known_lines.contains(*value)) return std::nullopt;
  return value;
}

FeedbackCorpus::FeedbackCorpus(std::span<const FeedbackItem> items) {
  for (const auto& item : items) {
    auto& bucket = by_task_[{item.generator, item.task}];
    bucket.feedback.push_back(item.feedback);
    bucket.lines.push_back(item.line);
    ++size_;
  }
}

const FeedbackCorpus::TaskItems* FeedbackCorpus::find(const std::string& generator,
                                                      const std::string& task) const {
  auto it = by_task_.find({generator, task});
  return it == by_task_.end() ? nullptr : &it->second;
}

double RepairStats::missing_before() const {
  return total == 0 ? 0.0 : static_cast<double>(missing_before_count) / static_cast<double>(total);
}

double RepairStats::missing_after() const {
  return total == 0 ? 0.0 : static_cast<double>(missing_after_count) / static_cast<double>(total);
}

namespace {

Judgment assemble(const RawValidatorOutput& raw, std::optional<Verdict> verdict,
                  const FeedbackCorpus::TaskItems* items, std::optional<std::size_t> matched,
                  std::optional<std::uint32_t> line, std::optional<MissingKind> failure) {
  Judgment j;
  j.generator = raw.generator;
  j.validator = raw.validator;
  j.task = raw.task;
  j.feedback = matched ? items->feedback[*matched] : raw.raw_feedback;
  if (line) {
    j.line = *line;
  } else {
    j.line = line_ref(raw.raw_line);
  }
  if (failure) {
    j.label = Label::missing(*failure);
  } else {
    j.label = Label::of(*verdict);
  }
  return j;
}

void note_failure(std::optional<MissingKind>& failure, MissingKind kind) {
  if (!failure) failure = kind;
}

}  // namespace

Judgment parse_exact(const RawValidatorOutput& raw, const FeedbackCorpus& corpus) {
  if (!has_identifiers(raw)) {
    return assemble(raw, std::nullopt, nullptr, std::nullopt, std::nullopt,
                    MissingKind::MalformedRecord);
  }
  std::optional<MissingKind> failure;

  std::optional<Verdict> verdict;
  if (raw.raw_label == "valid") verdict = Verdict::Valid;
  else if (raw.raw_label == "invalid") verdict = Verdict::Invalid;
  else note_failure(failure, MissingKind::LabelMismatch);

  const auto* items = corpus.find(raw.generator, raw.task);
  std::optional<std::size_t> matched;
  if (items) {
    auto it = std::find(items->feedback.begin(), items->feedback.end(), raw.raw_feedback);
    if (it != items->feedback.end()) matched = static_cast<std::size_t>(it - items->feedback.begin());
  }
  if (!matched) note_failure(failure, MissingKind::MissingFeedback);

  std::optional<std::uint32_t> line;
  if (raw.line_key == "line" && all_digits(raw.raw_line) && items) {
    auto n = parse_uint(raw.raw_line);
    if (n && std::find(items->lines.begin(), items->lines.end(), *n) != items->lines.end()) line = n;
  }
  if (!line || (matched && items->lines[*matched] != *line)) {
    note_failure(failure, MissingKind::LineMismatch);
  }
  return assemble(raw, verdict, items, matched, line, failure);
}

Judgment repair_record(const RawValidatorOutput& raw, const FeedbackCorpus& corpus,
                       const RepairConfig& config) {
  if (!has_identifiers(raw)) {
    return assemble(raw, std::nullopt, nullptr, std::nullopt, std::nullopt,
                    MissingKind::MalformedRecord);
  }
  std::optional<MissingKind> failure;

  const Label label = standardize_label(raw.raw_label, config.label_map);
  if (label.is_missing()) note_failure(failure, MissingKind::LabelMismatch);

  const auto* items = corpus.find(raw.generator, raw.task);
  std::optional<std::size_t> matched;
  if (items) matched = align_feedback(raw.raw_feedback, items->feedback, config.similarity_threshold);
  if (!matched) note_failure(failure, MissingKind::MissingFeedback);

  const bool known_key =
      raw.line_key == "line" || std::find(config.line_key_variants.begin(),
                                          config.line_key_variants.end(),
                                          raw.line_key) != config.line_key_variants.end();
  std::optional<std::uint32_t> line;
  if (known_key && items) {
    std::set<std::uint32_t> known(items->lines.begin(), items->lines.end());
    line = repair_line_ref(raw.raw_line, known);
  }
  if (!line || (matched && items->lines[*matched] != *line)) {
    note_failure(failure, MissingKind::LineMismatch);
  }
  return assemble(raw, label.verdict(), items, matched, line, failure);
}

RawValidatorOutput to_raw(const Judgment& judgment) {
  RawValidatorOutput raw;
  raw.generator = judgment.generator;
  raw.validator = judgment.validator;
  raw.task = judgment.task;
  raw.raw_line = to_string(judgment.line);
  raw.raw_feedback = judgment.feedback;
  if (auto v = judgment.label.verdict()) {
    raw.raw_label = std::string(to_string(*v));
  } else {
    raw.raw_label = "missing";
  }
  return raw;
}

RepairResult repair_pipeline(std::span<const RawValidatorOutput> raw, const FeedbackCorpus& corpus,
                             const RepairConfig& config) {
  config.validate();
  RepairResult result;
  result.judgments.reserve(raw.size());
  result.repaired_raw.reserve(raw.size());
  result.stats.total = raw.size();

  for (const auto& record : raw) {
    Judgment exact = parse_exact(record, corpus);
    if (!exact.label.is_missing()) {
      result.repaired_raw.push_back(record);
      result.judgments.push_back(std::move(exact));
      continue;
    }
    const MissingKind before_kind = *exact.label.missing_kind();
    ++result.stats.missing_before_count;
    ++result.stats[before_kind].count_before;

    Judgment repaired = repair_record(record, corpus, config);
    if (repaired.label.is_missing()) {
      ++result.stats.missing_after_count;
      ++result.stats[before_kind].count_remaining;
      result.repaired_raw.push_back(record);
    } else {
      ++result.stats[before_kind].count_repaired;
      RawValidatorOutput canonical = to_raw(repaired);
      canonical.extras = record.extras;
      canonical.source_line = record.source_line;
      result.repaired_raw.push_back(std::move(canonical));
    }
    result.judgments.push_back(std::move(repaired));
  }
  return result;
}

}  // namespace judgecal
