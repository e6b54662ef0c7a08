#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "judgecal/repair.hpp"
#include "judgecal/types.hpp"

namespace judgecal::io {

// Line-delimited JSON, one object per line, UTF-8. Blank lines are skipped.
// Syntax errors and missing mandatory fields throw ParseError naming the
// 1-based line number.

// Fields: generator, validator, task, line, feedback, label. The line may
// sit under any key listed in line_keys ("line" is always tried first).
std::vector<RawValidatorOutput> read_raw_outputs(std::istream& in,
                                                 const std::vector<std::string>& line_keys = {});
std::vector<RawValidatorOutput> read_raw_outputs(const std::filesystem::path& path,
                                                 const std::vector<std::string>& line_keys = {});
void write_raw_outputs(std::ostream& out, const std::vector<RawValidatorOutput>& records);

// Judgment records: the label is "valid", "invalid" or "missing" (with an
// error_kind field). Any other label text reads as Missing(LabelMismatch).
std::vector<Judgment> read_judgments(std::istream& in);
std::vector<Judgment> read_judgments(const std::filesystem::path& path);
void write_judgments(std::ostream& out, const std::vector<Judgment>& judgments);

// Fields: generator, task, line, feedback, category (TP, TP-E, TP-R, FP-I, FP-H).
std::vector<AnnotationRecord> read_annotations(std::istream& in);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& annotations);

// Generated feedback items: generator, task, line, feedback. Annotation
// files are accepted as-is (the category is ignored).
std::vector<FeedbackItem> read_feedback_items(std::istream& in);
std::vector<FeedbackItem> read_feedback_items(const std::filesystem::path& path);
void write_feedback_items(std::ostream& out, const std::vector<FeedbackItem>& items);

// Raw-record duplicate check: identical key and label are dropped, identical
// key with a different label throws DuplicateConflict naming both lines.
std::vector<RawValidatorOutput> dedupe_raw_outputs(const std::vector<RawValidatorOutput>& records);

}  // namespace judgecal::io
