#pragma once

#include <string>

#include "judgecal/types.hpp"

namespace judgecal::testing {

inline Judgment judgment(std::string gen, std::string val, std::string task, std::uint32_t line, Label label,
                         std::string feedback = "fb") {
  return Judgment{std::move(gen), std::move(val), std::move(task), LineRef{line}, std::move(feedback), label};
}

inline AnnotationRecord annotation(std::string gen, std::string task, std::uint32_t line, FeedbackCategory c,
                                   std::string feedback = "fb") {
  return AnnotationRecord{std::move(gen), std::move(task), line, std::move(feedback), c};
}

}  // namespace judgecal::testing
