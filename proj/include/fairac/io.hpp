#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "fairac/error.hpp"
#include "fairac/matrix.hpp"

namespace fairac::io {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::string hex64(std::uint64_t v) {
  std::array<char, 17> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, 16);
  return std::string(buf.data(), ptr);
}

// Rows of space-separated values, no header.
inline void write_matrix_body(std::ostream& os, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

inline Matrix read_matrix_body(std::istream& is, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::string tok;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(is >> tok)) throw DataError("matrix body truncated");
    m[i] = parse_double(tok);
  }
  return m;
}

}  // namespace fairac::io
