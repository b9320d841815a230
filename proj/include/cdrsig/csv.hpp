// Minimal CSV helpers shared by readers and writers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdrsig::csv {

// Splits one line on commas. Double-quoted fields may contain commas and
// doubled quotes. Returned views point into `line` or `scratch`.
void split(std::string_view line, std::vector<std::string_view>& fields,
           std::string& scratch);

// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

// Shortest representation that round-trips through parse_double.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Line reader that strips a trailing '\r' and tracks the 1-based row number.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path);
  bool next(std::string& line);
  std::int64_t line_number() const { return line_no_; }

 private:
  std::ifstream in_;
  std::int64_t line_no_ = 0;
};

// Header lookup: returns the column index of `name` or nullopt.
std::optional<std::size_t> column_index(const std::vector<std::string>& header,
                                        std::string_view name);

}  // namespace cdrsig::csv
