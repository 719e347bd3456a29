#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qcomp::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
// Unquoted fields are trimmed of surrounding blanks.
std::vector<std::string> split(std::string_view line);

// Reads the next non-empty line (handles \r\n). Returns false at end of input.
bool next_line(std::istream& in, std::string& line, std::size_t& line_no);

// Strict decimal parse of the whole field.
std::optional<double> parse_double(std::string_view text);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

// Quotes a field when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

}  // namespace qcomp::csv
