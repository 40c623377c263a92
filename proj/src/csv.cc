#include "signmap/csv.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "signmap/common.h"

namespace signmap {

std::vector<std::string> split(std::string_view text, char delimiter) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    const size_t pos = text.find(delimiter, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view text) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::string format_fixed(double value, int decimals) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value,
                                    std::chars_format::fixed, decimals);
  return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto result =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    // from_chars rejects "nan"/"inf" spellings with a sign on some
    // libraries; those are never valid inputs here anyway.
    throw ValidationError("invalid number '" + std::string(text) + "'");
  }
  return value;
}

long long parse_integer(std::string_view text) {
  text = trim(text);
  long long value = 0;
  const auto result =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw ValidationError("invalid integer '" + std::string(text) + "'");
  }
  return value;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::string text(static_cast<size_t>(std::max<std::streamoff>(size, 0)), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw IoError("read failed for " + path.string());
  return text;
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

CsvReader::CsvReader(const std::filesystem::path& path,
                     std::string_view header)
    : source_(path.filename().string()) {
  lines_ = split(read_text_file(path), '\n');
  if (lines_.empty() || trim(lines_[0]) != header) {
    throw ParseError(source_, 1,
                     "expected header '" + std::string(header) + "'");
  }
  expected_columns_ = split(header, ',').size();
}

bool CsvReader::next() {
  while (cursor_ < lines_.size()) {
    const std::string_view row = trim(lines_[cursor_]);
    line_ = static_cast<int>(cursor_) + 1;
    ++cursor_;
    if (row.empty()) continue;
    fields_ = split(row, ',');
    if (fields_.size() != expected_columns_) {
      fail("expected " + std::to_string(expected_columns_) + " fields, got " +
           std::to_string(fields_.size()));
    }
    for (auto& field : fields_) field = std::string(trim(field));
    return true;
  }
  return false;
}

double CsvReader::number(size_t column) const {
  try {
    const double value = parse_double(fields_.at(column));
    if (!std::isfinite(value)) fail("non-finite value");
    return value;
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    fail(e.what());
  }
}

long long CsvReader::integer(size_t column) const {
  try {
    return parse_integer(fields_.at(column));
  } catch (const ValidationError& e) {
    fail(e.what());
  }
}

void CsvReader::fail(const std::string& what) const {
  throw ParseError(source_, line_, what);
}

}  // namespace signmap
