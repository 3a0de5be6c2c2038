#pragma once

#include <cstdint>
#include <vector>

#include "nepadd/errors.hpp"

namespace nepadd::detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, const char* what = "file") {
  if (pos + sizeof(U) > in.size()) throw DataError(std::string(what) + " truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[pos + i]) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace nepadd::detail
