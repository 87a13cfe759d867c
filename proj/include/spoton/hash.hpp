// Copyright 2026 The spoton Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPOTON_HASH_HPP_
#define SPOTON_HASH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace spoton {

inline constexpr uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a, 64-bit. Used as the checkpoint payload checksum. Any change to a
/// single byte of a fixed-length input changes the digest.
constexpr uint64_t fnv1a64(std::span<const std::byte> data, uint64_t h = kFnvOffsetBasis) {
  for (std::byte b : data) {
    h ^= static_cast<uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffsetBasis) {
  return fnv1a64(std::as_bytes(std::span(s.data(), s.size())), h);
}

/// splitmix64 output finalizer (a bijection on 64-bit words).
constexpr uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Fixed-width lowercase hex.
std::string to_hex64(uint64_t v);
bool parse_hex64(std::string_view text, uint64_t* out);

}  // namespace spoton

#endif  // SPOTON_HASH_HPP_
