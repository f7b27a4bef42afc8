// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "spt/patterns.hpp"
#include "spt/training.hpp"

namespace spt {

/// One line of line-delimited JSON for an evaluation record.
std::string eval_record_line(std::string_view phase, const EvalRecord& record);

/// Fixed-width summary table of a pattern report.
void print_patterns(std::ostream& os, const PatternReport& report);

/// Standalone SVG: accuracy per evaluation (left) and sensitivity proportions
/// per block and per role (right). Either part may be empty.
std::string render_svg(std::span<const EvalRecord> history, const PatternReport* patterns);

}  // namespace spt
