#include <gtest/gtest.h>

#include <sstream>

#include "judgecal/error.hpp"
#include "judgecal/harness.hpp"
#include "judgecal/io.hpp"

using namespace judgecal;

namespace {

template <typename F>
std::string error_message(F&& f, ErrorKind expected) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

const SynthCorpus& corpus() {
  static const SynthCorpus c = synth_generate(default_profile(4, 4, 9, 60));
  return c;
}

}  // namespace

TEST(Io, SyntheticCorpusRoundTrips) {
  const auto& c = corpus();
  std::stringstream a, i, j, r;
  io::write_annotations(a, c.annotations);
  io::write_feedback_items(i, c.items);
  io::write_judgments(j, c.judgments);
  io::write_raw_outputs(r, c.raw);
  EXPECT_EQ(io::read_annotations(a), c.annotations);
  EXPECT_EQ(io::read_feedback_items(i), c.items);
  EXPECT_EQ(io::read_judgments(j), c.judgments);

  auto raw = io::read_raw_outputs(r, default_line_key_variants());
  ASSERT_EQ(raw.size(), c.raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    EXPECT_EQ(raw[k].source_line, k + 1);
    raw[k].source_line = 0;
    EXPECT_EQ(raw[k], c.raw[k]) << "record " << k;
  }
}

TEST(Io, TwoRecordFileAndBlankLines) {
  std::istringstream in(
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":3,\"feedback\":\"f\",\"label\":\"valid\"}\n"
      "\n"
      "{\"generator\":\"G1\",\"validator\":\"V2\",\"task\":\"t\",\"line\":\"3\",\"feedback\":\"f\",\"label\":\"Valid\"}\n");
  const auto j = io::read_judgments(in);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(line_number(j[1].line), 3u);
  EXPECT_EQ(j[0].label, Label::valid());
  EXPECT_EQ(j[1].label, Label::missing(MissingKind::LabelMismatch));
}

TEST(Io, ParseErrorsNameTheLine) {
  std::istringstream bad("{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"category\":\"TP\"}\n{oops\n");
  const auto msg = error_message([&] { io::read_annotations(bad); }, ErrorKind::ParseError);
  EXPECT_NE(msg.find("line 2"), std::string::npos);

  std::istringstream missing("\n{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"category\":\"TP\"}\n");
  const auto m2 = error_message([&] { io::read_annotations(missing); }, ErrorKind::ParseError);
  EXPECT_NE(m2.find("line 2"), std::string::npos);
  EXPECT_NE(m2.find("feedback"), std::string::npos);

  std::istringstream category("{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"category\":\"TN\"}\n");
  error_message([&] { io::read_annotations(category); }, ErrorKind::ParseError);

  EXPECT_THROW(io::read_judgments(std::filesystem::path("/nonexistent/judgments.jsonl")), Error);
}

TEST(Io, AnnotationCategorySpellings) {
  std::istringstream in(
      "{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"a\",\"category\":\"TP-E\"}\n"
      "{\"generator\":\"G1\",\"task\":\"t\",\"line\":2,\"feedback\":\"b\",\"category\":\"FP_H\"}\n");
  const auto a = io::read_annotations(in);
  EXPECT_EQ(a[0].category, FeedbackCategory::TP_E);
  EXPECT_EQ(a[1].category, FeedbackCategory::FP_H);
}

TEST(Io, RepeatedAnnotationIsAConflict) {
  std::istringstream in(
      "{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"a\",\"category\":\"TP\"}\n"
      "{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"a\",\"category\":\"FP-I\"}\n");
  const auto msg = error_message([&] { io::read_annotations(in); }, ErrorKind::DuplicateConflict);
  EXPECT_NE(msg.find("line 2"), std::string::npos);
  EXPECT_NE(msg.find("line 1"), std::string::npos);
}

TEST(Io, RawLineKeyVariantsAndExtras) {
  std::istringstream in(
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line_number\":4,"
      "\"feedback\":\"f\",\"label\":\"Correct\",\"model\":{\"temp\":0}}\n");
  const auto r = io::read_raw_outputs(in, {"line_number"});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].line_key, "line_number");
  EXPECT_EQ(r[0].raw_line, "4");
  EXPECT_EQ(r[0].raw_label, "Correct");
  ASSERT_EQ(r[0].extras.size(), 1u);
  EXPECT_EQ(r[0].extras[0].first, "model");

  std::stringstream out;
  io::write_raw_outputs(out, r);
  auto again = io::read_raw_outputs(out, {"line_number"});
  EXPECT_EQ(again, r);
}

TEST(Io, RawDuplicatesNameBothLines) {
  std::istringstream in(
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"label\":\"valid\"}\n"
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":2,\"feedback\":\"f\",\"label\":\"valid\"}\n"
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"label\":\"valid\"}\n"
      "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":2,\"feedback\":\"f\",\"label\":\"invalid\"}\n");
  const auto r = io::read_raw_outputs(in);
  EXPECT_EQ(io::dedupe_raw_outputs({r[0], r[1], r[2]}).size(), 2u);
  const auto msg = error_message([&] { io::dedupe_raw_outputs(r); }, ErrorKind::DuplicateConflict);
  EXPECT_NE(msg.find("lines 2 and 4"), std::string::npos);
}

TEST(Io, Utf8TextSurvives) {
  std::vector<FeedbackItem> items = {{"G1", "t", 1, "la variable « total » n'est jamais réinitialisée"}};
  std::stringstream s;
  io::write_feedback_items(s, items);
  EXPECT_EQ(io::read_feedback_items(s), items);
}
