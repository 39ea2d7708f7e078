#pragma once

// Little-endian fixed-width encoding shared by the corpus and checkpoint
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "stddp/error.hpp"

namespace stddp::binary {

template <typename T>
  requires std::is_integral_v<T>
void put(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  }
  out.write(bytes, sizeof(T));
}

inline void put(std::ostream& out, double value) {
  put(out, std::bit_cast<std::uint64_t>(value));
}

inline void put_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) put(out, v);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw InvalidInput("unexpected end of binary file");
  }
}

template <typename T>
  requires std::is_integral_v<T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  read_exact(in, reinterpret_cast<char*>(bytes), sizeof(T));
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  }
  return static_cast<T>(u);
}

inline double get_double(std::istream& in) {
  return std::bit_cast<double>(get<std::uint64_t>(in));
}

inline void get_doubles(std::istream& in, std::span<double> values) {
  for (double& v : values) v = get_double(in);
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1 << 20) {
  const auto len = get<std::uint32_t>(in);
  if (len > max_len) throw InvalidInput("string field too long in binary file");
  std::string s(len, '\0');
  if (len > 0) read_exact(in, s.data(), len);
  return s;
}

inline void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic, const char* what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() || got != magic) {
    throw InvalidInput(std::string("not a ") + what + " file (bad magic)");
  }
}

}  // namespace stddp::binary
