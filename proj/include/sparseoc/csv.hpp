#pragma once

#include "errors.hpp"

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sparseoc {

/// Shortest round-trip-safe text: 17 significant digits.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Row-at-a-time CSV writer with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : CsvWriter(path, std::vector<std::string>(header.begin(), header.end())) {}

  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path), columns_(header.size()) {
    if (!out_) throw ValidationError("cannot open " + path.string() + " for writing");
    write_row(header);
  }

  class Row {
   public:
    explicit Row(CsvWriter& w) : w_(w) {}
    Row& operator<<(double v) { return add(format_double(v)); }
    Row& operator<<(std::size_t v) { return add(std::to_string(v)); }
    Row& operator<<(int v) { return add(std::to_string(v)); }
    Row& operator<<(std::string_view s) { return add(std::string(s)); }
    Row& operator<<(const char* s) { return add(std::string(s)); }
    ~Row() noexcept(false) { w_.write_row(cells_); }

   private:
    Row& add(std::string s) {
      cells_.push_back(std::move(s));
      return *this;
    }
    CsvWriter& w_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

 private:
  void write_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw ValidationError("CSV row has the wrong number of columns");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_quote(cells[i]);
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace sparseoc
