#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace toc::prompts {

// A JSON array of integers, optionally surrounded by whitespace, and nothing
// else. Returns the sorted, de-duplicated indices. With `strict` false the
// first bracketed span of the reply is parsed instead of the whole reply.
// Throws ParseError.
std::vector<int> parse_index_array(std::string_view reply, bool strict = true);

// First word of the reply, case-insensitively "yes" or "no".
// Throws ParseError otherwise.
bool parse_yes_no(std::string_view reply);

// Numbers k of every "Step k:" marker in order of appearance.
std::vector<int> find_step_markers(std::string_view text);

// Removes every "Step k:" marker and one following space, collapsing the
// double space a removal can leave behind. Idempotent.
std::string strip_step_markers(std::string_view text);

}  // namespace toc::prompts
