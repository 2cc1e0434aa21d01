// Copyright 2026 The kasr-sim Authors
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

#pragma once

#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "kasr/error.hpp"

// The SHA256_* entry points are deprecated in OpenSSL 3 but remain the
// cheapest way to fork a hashing context.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-declarations"

namespace kasr {

// 256-bit SHA-256 digest.
using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  SHA256(bytes.data(), bytes.size(), out.data());
  return out;
}

// Streams bytes from a fixed start and yields the digest of every requested
// prefix length without re-hashing the shared prefix. Used by database
// lookup, where many records share a first-range offset but differ in
// first-range length.
class PrefixHasher {
 public:
  explicit PrefixHasher(std::span<const std::uint8_t> bytes) : bytes_(bytes) { SHA256_Init(&ctx_); }

  // Lengths must be requested in non-decreasing order.
  Digest digest_of_prefix(std::size_t length) {
    length = std::min(length, bytes_.size());
    if (length < fed_) throw Error("PrefixHasher: lengths must be non-decreasing");
    if (length > fed_) {
      SHA256_Update(&ctx_, bytes_.data() + fed_, length - fed_);
      fed_ = length;
    }
    SHA256_CTX fork = ctx_;
    Digest out{};
    SHA256_Final(out.data(), &fork);
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  SHA256_CTX ctx_{};
  std::size_t fed_ = 0;
};

#pragma GCC diagnostic pop

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

inline std::string to_hex(const Digest& d) { return to_hex(std::span<const std::uint8_t>(d)); }

// Returns false on bad length or a non-hex character.
inline bool digest_from_hex(std::string_view hex, Digest& out) {
  if (hex.size() != out.size() * 2) return false;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return false;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return true;
}

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept {
    std::size_t h;
    static_assert(sizeof(h) <= sizeof(Digest));
    std::copy_n(d.data(), sizeof(h), reinterpret_cast<std::uint8_t*>(&h));
    return h;
  }
};

}  // namespace kasr
