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

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kasr/base64.hpp"
#include "kasr/config.hpp"
#include "kasr/error.hpp"

namespace kasr {

using Pfn = std::uint64_t;

enum class EventKind : std::uint8_t { Exec, Syscall, ModLoad, ModUnload };
enum class Space : std::uint8_t { Kernel, User };

inline constexpr std::string_view kRebootSyscall = "reboot";

// One observable guest event. Which fields are meaningful depends on kind:
//   Exec:              pfn, space, origin (kernel only), content (optional)
//   Syscall:           name
//   ModLoad/ModUnload: name, pfns
struct TraceEvent {
  EventKind kind = EventKind::Exec;
  Pfn pfn = 0;
  Space space = Space::Kernel;
  std::optional<Origin> origin;
  std::optional<PageContent> content;
  std::string name;
  std::vector<Pfn> pfns;

  static TraceEvent kernel_exec(Pfn pfn, Origin origin, std::optional<PageContent> content = {}) {
    TraceEvent e;
    e.pfn = pfn;
    e.origin = origin;
    e.content = std::move(content);
    return e;
  }
  static TraceEvent user_exec(Pfn pfn) {
    TraceEvent e;
    e.pfn = pfn;
    e.space = Space::User;
    return e;
  }
  static TraceEvent syscall(std::string name) {
    TraceEvent e;
    e.kind = EventKind::Syscall;
    e.name = std::move(name);
    return e;
  }
  static TraceEvent mod_load(std::string name, std::vector<Pfn> pfns) {
    TraceEvent e;
    e.kind = EventKind::ModLoad;
    e.name = std::move(name);
    e.pfns = std::move(pfns);
    return e;
  }
  static TraceEvent mod_unload(std::string name, std::vector<Pfn> pfns) {
    TraceEvent e = mod_load(std::move(name), std::move(pfns));
    e.kind = EventKind::ModUnload;
    return e;
  }

  bool is_kernel_exec() const noexcept { return kind == EventKind::Exec && space == Space::Kernel; }
  bool is_user_exec() const noexcept { return kind == EventKind::Exec && space == Space::User; }
  bool is_reboot() const noexcept { return kind == EventKind::Syscall && name == kRebootSyscall; }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// One boot-to-shutdown trace.
struct Round {
  std::uint32_t page_size = kDefaultPageSize;
  std::string label;
  std::uint32_t round_index = 0;
  std::vector<TraceEvent> events;

  friend bool operator==(const Round&, const Round&) = default;
};

// Incremental checker for the per-event and per-round invariants. Returns
// an error message, or nullopt when the event is acceptable.
class RoundValidator {
 public:
  explicit RoundValidator(std::uint32_t page_size) : page_size_(page_size) {}

  std::optional<std::string> check(const TraceEvent& e) {
    switch (e.kind) {
      case EventKind::Exec:
        if (e.space == Space::User) {
          if (e.content || e.origin) return "user exec must not carry content or origin";
          return std::nullopt;
        }
        if (!e.origin) return "kernel exec without origin";
        if (e.content) {
          if (e.content->size() != page_size_) return "content length mismatch";
          seen_.insert(e.pfn);
        } else if (!seen_.contains(e.pfn)) {
          return "missing content on first kernel exec of pfn " + std::to_string(e.pfn);
        }
        return std::nullopt;
      case EventKind::Syscall:
        if (!valid_name(e.name)) return "invalid syscall name";
        if (e.is_reboot()) {
          if (rebooted_) return "second reboot syscall";
          rebooted_ = true;
        }
        return std::nullopt;
      case EventKind::ModLoad:
        if (!valid_name(e.name)) return "invalid module name";
        loaded_.insert(e.name);
        return std::nullopt;
      case EventKind::ModUnload:
        if (!valid_name(e.name)) return "invalid module name";
        if (loaded_.erase(e.name) == 0) return "unload of module '" + e.name + "' that is not loaded";
        return std::nullopt;
    }
    return "unknown event kind";
  }

  static bool valid_name(std::string_view s) {
    return !s.empty() && s != "-" && s.find_first_of("\t\n\r") == std::string_view::npos;
  }

 private:
  std::uint32_t page_size_;
  std::unordered_set<Pfn> seen_;
  std::set<std::string> loaded_;
  bool rebooted_ = false;
};

// Throws InvariantError naming the first offending event index.
inline void validate_round(const Round& round) {
  if (round.label.find_first_of("\n\r") != std::string::npos) {
    throw InvariantError("round label contains a line break");
  }
  RoundValidator v(round.page_size);
  for (std::size_t i = 0; i < round.events.size(); ++i) {
    if (auto err = v.check(round.events[i])) {
      throw InvariantError(*err + " (event " + std::to_string(i) + ")");
    }
  }
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_uint(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline std::string join_pfns(const std::vector<Pfn>& pfns) {
  std::string s;
  for (std::size_t i = 0; i < pfns.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(pfns[i]);
  }
  return s.empty() ? "-" : s;
}

}  // namespace detail

inline constexpr std::string_view kTraceMagic = "KASR-TRACE v1";

// Parses one trace file. Every structural invariant is checked as the
// events stream in; errors carry the 1-based line number.
inline Round parse_trace_round(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Round round;
  {
    std::string_view h = line;
    constexpr std::string_view kPs = " page_size=";
    constexpr std::string_view kLabel = " label=";
    constexpr std::string_view kRound = " round=";
    if (!h.starts_with(kTraceMagic)) throw ParseError("bad header", lineno);
    h.remove_prefix(kTraceMagic.size());
    if (!h.starts_with(kPs)) throw ParseError("bad header", lineno);
    h.remove_prefix(kPs.size());
    const auto label_pos = h.find(kLabel);
    const auto round_pos = h.rfind(kRound);
    if (label_pos == std::string_view::npos || round_pos == std::string_view::npos ||
        round_pos < label_pos + kLabel.size()) {
      throw ParseError("bad header", lineno);
    }
    if (!detail::parse_uint(h.substr(0, label_pos), round.page_size) || round.page_size == 0) {
      throw ParseError("bad page_size in header", lineno);
    }
    round.label = std::string(h.substr(label_pos + kLabel.size(), round_pos - label_pos - kLabel.size()));
    if (!detail::parse_uint(h.substr(round_pos + kRound.size()), round.round_index)) {
      throw ParseError("bad round index in header", lineno);
    }
  }

  RoundValidator validator(round.page_size);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto f = detail::split(line, '\t');
    TraceEvent e;
    if (f[0] == "EXEC") {
      if (f.size() != 5) throw ParseError("malformed EXEC line", lineno);
      if (!detail::parse_uint(f[1], e.pfn)) throw ParseError("bad pfn", lineno);
      if (f[2] == "kernel") {
        e.space = Space::Kernel;
      } else if (f[2] == "user") {
        e.space = Space::User;
      } else {
        throw ParseError("bad address space '" + std::string(f[2]) + "'", lineno);
      }
      if (f[3] == "image") {
        e.origin = Origin::Image;
      } else if (f[3] == "module") {
        e.origin = Origin::Module;
      } else if (f[3] != "-") {
        throw ParseError("bad origin '" + std::string(f[3]) + "'", lineno);
      }
      if (f[4] != "-") {
        auto bytes = base64_decode(f[4]);
        if (!bytes) throw ParseError("invalid base64 content", lineno);
        e.content = std::move(*bytes);
      }
    } else if (f[0] == "SYSCALL") {
      if (f.size() != 2) throw ParseError("malformed SYSCALL line", lineno);
      e.kind = EventKind::Syscall;
      e.name = std::string(f[1]);
    } else if (f[0] == "MODLOAD" || f[0] == "MODUNLOAD") {
      if (f.size() != 3) throw ParseError("malformed " + std::string(f[0]) + " line", lineno);
      e.kind = f[0] == "MODLOAD" ? EventKind::ModLoad : EventKind::ModUnload;
      e.name = std::string(f[1]);
      if (f[2] != "-") {
        for (auto tok : detail::split(f[2], ',')) {
          Pfn p = 0;
          if (!detail::parse_uint(tok, p)) throw ParseError("bad pfn list", lineno);
          e.pfns.push_back(p);
        }
      }
    } else {
      throw ParseError("unknown event kind '" + std::string(f[0]) + "'", lineno);
    }
    if (auto err = validator.check(e)) throw ParseError(*err, lineno);
    round.events.push_back(std::move(e));
  }
  return round;
}

// Emits the canonical text form; parse_trace_round inverts it exactly.
inline void write_trace_round(const Round& round, std::ostream& out) {
  validate_round(round);
  out << kTraceMagic << " page_size=" << round.page_size << " label=" << round.label
      << " round=" << round.round_index << '\n';
  for (const auto& e : round.events) {
    switch (e.kind) {
      case EventKind::Exec:
        out << "EXEC\t" << e.pfn << '\t' << (e.space == Space::Kernel ? "kernel" : "user") << '\t'
            << (e.origin ? to_string(*e.origin) : "-") << '\t';
        if (e.content) {
          out << base64_encode(*e.content);
        } else {
          out << '-';
        }
        break;
      case EventKind::Syscall:
        out << "SYSCALL\t" << e.name;
        break;
      case EventKind::ModLoad:
      case EventKind::ModUnload:
        out << (e.kind == EventKind::ModLoad ? "MODLOAD\t" : "MODUNLOAD\t") << e.name << '\t'
            << detail::join_pfns(e.pfns);
        break;
    }
    out << '\n';
  }
  if (!out) throw Error("trace write failed");
}

}  // namespace kasr
