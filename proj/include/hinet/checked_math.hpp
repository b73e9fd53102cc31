#pragma once

#include <cstdint>
#include <string>

#include "hinet/error.hpp"

namespace hinet {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw Error(ErrorKind::Numeric, std::string(what) + " overflows 64 bits");
  }
  return out;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t out;
  if (__builtin_add_overflow(a, b, &out)) {
    throw Error(ErrorKind::Numeric, std::string(what) + " overflows 64 bits");
  }
  return out;
}

inline std::uint64_t checked_pow(std::uint64_t base, std::uint64_t exponent, const char* what) {
  if (base <= 1) return exponent == 0 ? 1 : base;
  std::uint64_t out = 1;
  for (std::uint64_t i = 0; i < exponent; ++i) out = checked_mul(out, base, what);
  return out;
}

}  // namespace hinet
