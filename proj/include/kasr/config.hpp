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

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kasr/error.hpp"

namespace kasr {

// Raw bytes of one guest code page.
using PageContent = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class Origin : std::uint8_t { Image, Module };

enum class Phase : std::uint8_t { Startup, Runtime, Shutdown };

constexpr std::string_view to_string(Origin o) noexcept {
  return o == Origin::Image ? "image" : "module";
}

constexpr std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::Startup: return "startup";
    case Phase::Runtime: return "runtime";
    case Phase::Shutdown: return "shutdown";
  }
  return "?";
}

// Successor in the Startup -> Runtime -> Shutdown lifecycle.
constexpr bool is_successor(Phase from, Phase to) noexcept {
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

// Bit set over the three phases; bit0 STARTUP, bit1 RUNTIME, bit2 SHUTDOWN
// (the same layout the database file uses).
class PhaseFlags {
 public:
  static constexpr std::uint8_t kStartup = 1u << 0;
  static constexpr std::uint8_t kRuntime = 1u << 1;
  static constexpr std::uint8_t kShutdown = 1u << 2;
  static constexpr std::uint8_t kAll = kStartup | kRuntime | kShutdown;

  constexpr PhaseFlags() = default;
  constexpr explicit PhaseFlags(std::uint8_t bits) : bits_(bits) {}
  constexpr PhaseFlags(Phase p) : bits_(bit(p)) {}  // NOLINT: implicit by intent

  static constexpr std::uint8_t bit(Phase p) noexcept {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(p));
  }

  constexpr bool contains(Phase p) const noexcept { return (bits_ & bit(p)) != 0; }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr bool valid() const noexcept { return bits_ != 0 && (bits_ & ~kAll) == 0; }
  constexpr std::uint8_t bits() const noexcept { return bits_; }

  constexpr PhaseFlags& operator|=(PhaseFlags o) noexcept {
    bits_ |= o.bits_;
    return *this;
  }
  friend constexpr PhaseFlags operator|(PhaseFlags a, PhaseFlags b) noexcept { return a |= b; }
  friend constexpr bool operator==(PhaseFlags, PhaseFlags) = default;

  // Superset test, used for monotonicity checks.
  constexpr bool covers(PhaseFlags o) const noexcept { return (bits_ & o.bits_) == o.bits_; }

 private:
  std::uint8_t bits_ = 0;
};

inline std::string phase_flags_string(PhaseFlags f) {
  std::string s;
  for (Phase p : {Phase::Startup, Phase::Runtime, Phase::Shutdown}) {
    if (!f.contains(p)) continue;
    if (!s.empty()) s += '+';
    s += to_string(p);
  }
  return s.empty() ? "-" : s;
}

inline constexpr std::uint32_t kDefaultPageSize = 4096;
inline constexpr std::uint32_t kDefaultConstancy = 3366;
inline constexpr std::uint32_t kDefaultMaxDynamicRun = 4;

// Page identification parameters. Defaults are the 4 KiB values; other
// page sizes scale the constancy threshold proportionally (rounded up).
struct Thresholds {
  std::uint32_t page_size = kDefaultPageSize;
  std::uint32_t constancy = kDefaultConstancy;
  std::uint32_t max_dynamic_run = kDefaultMaxDynamicRun;

  static constexpr Thresholds for_page_size(std::uint32_t page_size) noexcept {
    const std::uint64_t num = std::uint64_t{page_size} * kDefaultConstancy;
    return Thresholds{page_size,
                      static_cast<std::uint32_t>((num + kDefaultPageSize - 1) / kDefaultPageSize),
                      kDefaultMaxDynamicRun};
  }

  void validate() const {
    if (page_size == 0) throw ConfigError("page_size must be positive");
    if (constancy > page_size) throw ConfigError("constancy threshold exceeds page_size");
    if (max_dynamic_run > page_size) throw ConfigError("dynamic run limit exceeds page_size");
  }

  friend constexpr bool operator==(const Thresholds&, const Thresholds&) = default;
};

}  // namespace kasr
