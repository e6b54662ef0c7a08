#include "judgecal/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "judgecal/error.hpp"

namespace judgecal::io {

using json = nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

// Calls fn(object, line_no) for each non-blank line.
void for_each_object(std::istream& in, const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) fail(line_no, "record is not an object");
    fn(obj, line_no);
  }
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

std::string optional_text(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? std::string() : scalar_text(*it);
}

std::string required_text(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(line_no, std::string("missing field '") + key + "'");
  return scalar_text(*it);
}

std::optional<std::uint32_t> as_line_number(const json& v) {
  if (v.is_number_unsigned()) {
    const auto n = v.get<std::uint64_t>();
    if (n <= UINT32_MAX) return static_cast<std::uint32_t>(n);
    return std::nullopt;
  }
  if (v.is_number_integer()) {
    const auto n = v.get<std::int64_t>();
    if (n >= 0 && n <= UINT32_MAX) return static_cast<std::uint32_t>(n);
    return std::nullopt;
  }
  if (v.is_string()) return line_number(line_ref(v.get<std::string>()));
  return std::nullopt;
}

std::uint32_t required_line(const json& obj, std::size_t line_no) {
  auto it = obj.find("line");
  if (it == obj.end()) fail(line_no, "missing field 'line'");
  auto n = as_line_number(*it);
  if (!n) fail(line_no, "line must be a nonnegative integer");
  return *n;
}

json line_json(const LineRef& line) {
  if (auto n = line_number(line)) return *n;
  return std::get<std::string>(line);
}

}  // namespace

std::vector<RawValidatorOutput> read_raw_outputs(std::istream& in,
                                                 const std::vector<std::string>& line_keys) {
  static const std::vector<std::string> kKnownFields = {"generator", "validator", "task",
                                                        "feedback", "label"};
  std::vector<RawValidatorOutput> out;
  for_each_object(in, [&](const json& obj, std::size_t line_no) {
    RawValidatorOutput r;
    r.source_line = line_no;
    r.generator = optional_text(obj, "generator");
    r.validator = optional_text(obj, "validator");
    r.task = optional_text(obj, "task");
    r.raw_feedback = optional_text(obj, "feedback");
    r.raw_label = optional_text(obj, "label");
    r.line_key.clear();
    if (obj.contains("line")) {
      r.line_key = "line";
    } else {
      for (const auto& key : line_keys) {
        if (obj.contains(key)) {
          r.line_key = key;
          break;
        }
      }
    }
    if (!r.line_key.empty()) r.raw_line = scalar_text(obj.at(r.line_key));
    for (const auto& [key, value] : obj.items()) {
      if (key == r.line_key) continue;
      if (std::find(kKnownFields.begin(), kKnownFields.end(), key) != kKnownFields.end()) continue;
      r.extras.emplace_back(key, value.dump());
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<RawValidatorOutput> read_raw_outputs(const std::filesystem::path& path,
                                                 const std::vector<std::string>& line_keys) {
  auto in = open_input(path);
  return read_raw_outputs(in, line_keys);
}

void write_raw_outputs(std::ostream& out, const std::vector<RawValidatorOutput>& records) {
  for (const auto& r : records) {
    json obj;
    obj["generator"] = r.generator;
    obj["validator"] = r.validator;
    obj["task"] = r.task;
    if (!r.line_key.empty()) obj[r.line_key] = r.raw_line;
    obj["feedback"] = r.raw_feedback;
    obj["label"] = r.raw_label;
    for (const auto& [key, value] : r.extras) {
      obj[key] = json::parse(value, nullptr, /*allow_exceptions=*/false);
    }
    out << obj.dump() << '\n';
  }
}

std::vector<Judgment> read_judgments(std::istream& in) {
  std::vector<Judgment> out;
  for_each_object(in, [&](const json& obj, std::size_t line_no) {
    Judgment j;
    j.generator = required_text(obj, "generator", line_no);
    j.validator = required_text(obj, "validator", line_no);
    j.task = required_text(obj, "task", line_no);
    j.feedback = required_text(obj, "feedback", line_no);
    auto line = obj.find("line");
    if (line == obj.end()) fail(line_no, "missing field 'line'");
    if (auto n = as_line_number(*line)) {
      j.line = *n;
    } else {
      j.line = scalar_text(*line);
    }
    const auto label = required_text(obj, "label", line_no);
    if (label == "valid") {
      j.label = Label::valid();
    } else if (label == "invalid") {
      j.label = Label::invalid();
    } else if (label == "missing") {
      auto kind = parse_missing_kind(optional_text(obj, "error_kind"));
      j.label = Label::missing(kind.value_or(MissingKind::MalformedRecord));
    } else {
      j.label = Label::missing(MissingKind::LabelMismatch);
    }
    out.push_back(std::move(j));
  });
  return out;
}

std::vector<Judgment> read_judgments(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_judgments(in);
}

void write_judgments(std::ostream& out, const std::vector<Judgment>& judgments) {
  for (const auto& j : judgments) {
    json obj;
    obj["generator"] = j.generator;
    obj["validator"] = j.validator;
    obj["task"] = j.task;
    obj["line"] = line_json(j.line);
    obj["feedback"] = j.feedback;
    if (auto v = j.label.verdict()) {
      obj["label"] = std::string(to_string(*v));
    } else {
      obj["label"] = "missing";
      obj["error_kind"] = std::string(to_string(*j.label.missing_kind()));
    }
    out << obj.dump() << '\n';
  }
}

std::vector<AnnotationRecord> read_annotations(std::istream& in) {
  std::vector<AnnotationRecord> out;
  std::map<ItemKey, std::size_t> seen;
  for_each_object(in, [&](const json& obj, std::size_t line_no) {
    AnnotationRecord a;
    a.generator = required_text(obj, "generator", line_no);
    a.task = required_text(obj, "task", line_no);
    a.line = required_line(obj, line_no);
    a.feedback = required_text(obj, "feedback", line_no);
    const auto category = required_text(obj, "category", line_no);
    auto parsed = parse_category(category);
    if (!parsed) fail(line_no, "unknown category '" + category + "'");
    a.category = *parsed;
    auto [it, inserted] = seen.emplace(a.key(), line_no);
    if (!inserted) {
      throw Error(ErrorKind::DuplicateConflict, "annotation on line " + std::to_string(line_no) +
                                                    " repeats the item on line " +
                                                    std::to_string(it->second));
    }
    out.push_back(std::move(a));
  });
  return out;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_annotations(in);
}

void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& annotations) {
  for (const auto& a : annotations) {
    json obj;
    obj["generator"] = a.generator;
    obj["task"] = a.task;
    obj["line"] = a.line;
    obj["feedback"] = a.feedback;
    obj["category"] = std::string(to_string(a.category));
    out << obj.dump() << '\n';
  }
}

std::vector<FeedbackItem> read_feedback_items(std::istream& in) {
  std::vector<FeedbackItem> out;
  for_each_object(in, [&](const json& obj, std::size_t line_no) {
    FeedbackItem item;
    item.generator = required_text(obj, "generator", line_no);
    item.task = required_text(obj, "task", line_no);
    item.line = required_line(obj, line_no);
    item.feedback = required_text(obj, "feedback", line_no);
    out.push_back(std::move(item));
  });
  return out;
}

std::vector<FeedbackItem> read_feedback_items(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_feedback_items(in);
}

void write_feedback_items(std::ostream& out, const std::vector<FeedbackItem>& items) {
  for (const auto& item : items) {
    json obj;
    obj["generator"] = item.generator;
    obj["task"] = item.task;
    obj["line"] = item.line;
    obj["feedback"] = item.feedback;
    out << obj.dump() << '\n';
  }
}

std::vector<RawValidatorOutput> dedupe_raw_outputs(const std::vector<RawValidatorOutput>& records) {
  using Key = std::array<std::string, 5>;
  std::map<Key, std::size_t> seen;
  std::vector<RawValidatorOutput> out;
  out.reserve(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    Key key{r.generator, r.validator, r.task, r.raw_line, r.raw_feedback};
    auto [it, inserted] = seen.emplace(std::move(key), k);
    if (inserted) {
      out.push_back(r);
      continue;
    }
    const auto& first = records[it->second];
    if (first.raw_label != r.raw_label) {
      auto where = [](const RawValidatorOutput& x, std::size_t index) {
        return x.source_line ? x.source_line : index + 1;
      };
      throw Error(ErrorKind::DuplicateConflict,
                  "lines " + std::to_string(where(first, it->second)) + " and " +
                      std::to_string(where(r, k)) + " judge the same item with different labels");
    }
  }
  return out;
}

}  // namespace judgecal::io
