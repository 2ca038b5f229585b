#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace privprof::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes;
// embedded newlines are not supported.
std::vector<std::string> split_record(std::string_view line);

// Reads the next non-empty line, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

// Quotes a field when it contains a comma, quote, or surrounding whitespace.
std::string escape(std::string_view field);

std::string trim(std::string_view s);

// Shortest decimal form that reads back to the same double.
std::string number(double value);

}  // namespace privprof::csv
