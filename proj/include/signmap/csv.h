#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace signmap {

// Minimal reader for the comma separated files used throughout the map
// layers. Fields never contain quotes or embedded commas.
class CsvReader {
 public:
  // Reads the whole file and checks the header row verbatim.
  CsvReader(const std::filesystem::path& path, std::string_view header);

  // Advances to the next data row. Blank lines are skipped.
  bool next();

  const std::vector<std::string>& fields() const { return fields_; }
  int line() const { return line_; }
  const std::string& source() const { return source_; }

  double number(size_t column) const;
  long long integer(size_t column) const;

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string source_;
  std::vector<std::string> lines_;
  size_t cursor_ = 1;
  int line_ = 1;
  size_t expected_columns_ = 0;
  std::vector<std::string> fields_;
};

std::vector<std::string> split(std::string_view text, char delimiter);
std::string_view trim(std::string_view text);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
// Fixed-point with the given number of decimals.
std::string format_fixed(double value, int decimals);

double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see a
// half-written file.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace signmap
