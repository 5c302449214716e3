#pragma once

#include <string>

#include "protoflow/common/templates.hpp"
#include "protoflow/study/tre.hpp"

namespace protoflow::study {

/// Encouraging text for a success, informative text naming the duration and
/// the 9 to 11 hour target otherwise. Pack templates fast_success,
/// fast_too_long and fast_too_short override the built-in wording; they get
/// {duration}.
std::string feedback_message(const FastRecord& fast, const TemplateSet* templates = nullptr);

} // namespace protoflow::study
