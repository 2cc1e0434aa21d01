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

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/database.hpp"
#include "kasr/digest.hpp"
#include "kasr/error.hpp"
#include "kasr/trace.hpp"

namespace kasr {

enum class Policy : std::uint8_t { Log, Stop };
enum class ViolationReason : std::uint8_t { UnknownPage, WrongPhase };
enum class Disposition : std::uint8_t { Logged, Stopped };

constexpr std::string_view to_string(Policy p) noexcept { return p == Policy::Log ? "log" : "stop"; }
constexpr std::string_view to_string(ViolationReason r) noexcept {
  return r == ViolationReason::UnknownPage ? "unknown_page" : "wrong_phase";
}
constexpr std::string_view to_string(Disposition d) noexcept { return d == Disposition::Logged ? "logged" : "stopped"; }

struct ViolationRecord {
  std::size_t event_index = 0;
  Pfn pfn = 0;
  Phase phase = Phase::Startup;
  Origin origin = Origin::Image;
  Digest digest{};
  ViolationReason reason = ViolationReason::UnknownPage;
  Disposition disposition = Disposition::Logged;

  friend bool operator==(const ViolationRecord&, const ViolationRecord&) = default;
};

struct SwitchStats {
  Phase from = Phase::Startup;
  Phase to = Phase::Runtime;
  std::size_t revoked = 0;
  std::size_t granted = 0;
  std::size_t retained = 0;

  friend bool operator==(const SwitchStats&, const SwitchStats&) = default;
};

struct EnforcementOptions {
  Policy policy = Policy::Log;
  // Ignore phases: every trained page stays executable for the whole run.
  bool deprivation_only = false;
};

enum class ExecOutcome : std::uint8_t { Allowed, Violation };

// From-scratch executable set for a phase, indexed like
// EnforcementState::executable_now(): image records, then module records.
inline std::vector<std::uint8_t> executable_set_for(const CodeUsageDatabase& db, Phase phase,
                                                    bool deprivation_only = false) {
  std::vector<std::uint8_t> out;
  out.reserve(db.size());
  for (Origin o : {Origin::Image, Origin::Module}) {
    for (const auto& r : db.records(o)) out.push_back(deprivation_only || r.flags.contains(phase) ? 1 : 0);
  }
  return out;
}

// Runtime enforcement state machine over one replay. The database must
// outlive the state.
class EnforcementState {
 public:
  EnforcementState(const CodeUsageDatabase& db, EnforcementOptions opts = {})
      : db_(&db), opts_(opts), executable_(executable_set_for(db, Phase::Startup, opts.deprivation_only)) {
    module_base_ = static_cast<std::uint32_t>(db.records(Origin::Image).size());
    for (auto bit : executable_) executable_count_ += bit;
  }

  Phase phase() const noexcept { return phase_; }
  const EnforcementOptions& options() const noexcept { return opts_; }
  bool halted() const noexcept { return halted_; }
  const std::vector<std::uint8_t>& executable_now() const noexcept { return executable_; }
  std::size_t executable_count() const noexcept { return executable_count_; }
  const std::vector<ViolationRecord>& violations() const noexcept { return violations_; }
  const std::vector<SwitchStats>& switch_stats() const noexcept { return switches_; }

  // Moves to the next phase. Pages executable in both phases are left
  // untouched; revocations and grants are applied as one batch.
  void switch_phase(Phase to) {
    if (!is_successor(phase_, to)) {
      throw InvariantError("non-successor phase switch from " + std::string(to_string(phase_)) + " to " +
                           std::string(to_string(to)));
    }
    SwitchStats st{phase_, to, 0, 0, 0};
    std::vector<std::uint32_t> revoke, grant;
    std::uint32_t id = 0;
    for (Origin o : {Origin::Image, Origin::Module}) {
      for (const auto& r : db_->records(o)) {
        const bool now = opts_.deprivation_only || r.flags.contains(phase_);
        const bool next = opts_.deprivation_only || r.flags.contains(to);
        if (now && next) {
          ++st.retained;
        } else if (now) {
          revoke.push_back(id);
        } else if (next) {
          grant.push_back(id);
        }
        ++id;
      }
    }
    for (auto i : revoke) executable_[i] = 0;
    for (auto i : grant) executable_[i] = 1;
    st.revoked = revoke.size();
    st.granted = grant.size();
    executable_count_ = executable_count_ - st.revoked + st.granted;
    switches_.push_back(st);
    phase_ = to;
  }

  // Classifies one kernel exec. Resolved pfns are cached with their epoch
  // digest, so re-executions skip identity matching until the content
  // changes.
  ExecOutcome on_exec(std::size_t event_index, const TraceEvent& e) {
    if (!e.is_kernel_exec()) throw InvariantError("on_exec expects a kernel exec");
    if (halted_) throw InvariantError("enforcement already halted");
    const Origin origin = e.origin.value_or(Origin::Image);
    auto it = bindings_.find(e.pfn);
    if (e.content) {
      const Digest d = sha256(*e.content);
      if (it == bindings_.end() || it->second.digest != d || it->second.origin != origin) {
        Binding b{d, origin, resolve(*e.content, origin)};
        it = bindings_.insert_or_assign(e.pfn, b).first;
      }
    } else if (it == bindings_.end()) {
      throw InvariantError("kernel exec of unbound pfn " + std::to_string(e.pfn) + " without content");
    }
    const Binding& b = it->second;
    if (b.record && executable_[*b.record]) return ExecOutcome::Allowed;

    ViolationRecord v;
    v.event_index = event_index;
    v.pfn = e.pfn;
    v.phase = phase_;
    v.origin = origin;
    v.digest = b.digest;
    v.reason = b.record ? ViolationReason::WrongPhase : ViolationReason::UnknownPage;
    v.disposition = opts_.policy == Policy::Stop ? Disposition::Stopped : Disposition::Logged;
    violations_.push_back(v);
    if (opts_.policy == Policy::Stop) halted_ = true;
    return ExecOutcome::Violation;
  }

 private:
  struct Binding {
    Digest digest;
    Origin origin;
    std::optional<std::uint32_t> record;
  };

  std::optional<std::uint32_t> resolve(ByteView content, Origin origin) const {
    auto i = db_->lookup_index(content, origin);
    if (!i) return std::nullopt;
    return static_cast<std::uint32_t>(*i) + (origin == Origin::Module ? module_base_ : 0);
  }

  const CodeUsageDatabase* db_;
  EnforcementOptions opts_;
  Phase phase_ = Phase::Startup;
  std::vector<std::uint8_t> executable_;
  std::size_t executable_count_ = 0;
  std::uint32_t module_base_ = 0;
  std::unordered_map<Pfn, Binding> bindings_;
  std::vector<ViolationRecord> violations_;
  std::vector<SwitchStats> switches_;
  bool halted_ = false;
};

inline EnforcementState init_enforcement(const CodeUsageDatabase& db, EnforcementOptions opts = {}) {
  return EnforcementState(db, opts);
}

struct EnforcementReport {
  std::string label;
  std::uint32_t round_index = 0;
  Policy policy = Policy::Log;
  bool deprivation_only = false;
  std::size_t events = 0;
  std::size_t kernel_execs = 0;
  std::size_t allowed = 0;
  std::vector<ViolationRecord> violations;
  std::vector<SwitchStats> switch_stats;
  Phase final_phase = Phase::Startup;
  bool halted = false;
  std::optional<std::size_t> halted_at;

  friend bool operator==(const EnforcementReport&, const EnforcementReport&) = default;
};

// Replays a round: the first user exec switches to runtime, the reboot
// syscall to shutdown; every kernel exec is classified.
inline EnforcementReport replay(const CodeUsageDatabase& db, const Round& round, EnforcementOptions opts = {}) {
  if (round.page_size != db.page_size()) throw ConfigError("trace page_size differs from database page_size");
  EnforcementState st(db, opts);
  EnforcementReport rep;
  rep.label = round.label;
  rep.round_index = round.round_index;
  rep.policy = opts.policy;
  rep.deprivation_only = opts.deprivation_only;
  bool rebooted = false;
  for (std::size_t i = 0; i < round.events.size() && !st.halted(); ++i) {
    const auto& e = round.events[i];
    ++rep.events;
    if (e.is_kernel_exec()) {
      ++rep.kernel_execs;
      if (st.on_exec(i, e) == ExecOutcome::Allowed) ++rep.allowed;
      if (st.halted()) rep.halted_at = i;
    } else if (e.is_user_exec()) {
      if (st.phase() == Phase::Startup) st.switch_phase(Phase::Runtime);
    } else if (e.is_reboot()) {
      if (rebooted) throw InvariantError("second reboot syscall (event " + std::to_string(i) + ")");
      rebooted = true;
      if (st.phase() == Phase::Startup) st.switch_phase(Phase::Runtime);
      st.switch_phase(Phase::Shutdown);
    }
  }
  rep.violations = st.violations();
  rep.switch_stats = st.switch_stats();
  rep.final_phase = st.phase();
  rep.halted = st.halted();
  return rep;
}

namespace detail {

template <typename E, std::size_t N>
E enum_from_string(std::string_view s, const std::array<E, N>& values, std::string_view what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

}  // namespace detail

inline Phase phase_from_string(std::string_view s) {
  return detail::enum_from_string(s, std::array{Phase::Startup, Phase::Runtime, Phase::Shutdown}, "phase");
}

inline Policy policy_from_string(std::string_view s) {
  return detail::enum_from_string(s, std::array{Policy::Log, Policy::Stop}, "policy");
}

// nlohmann::json objects keep keys sorted, so the dump is stable.
inline nlohmann::json to_json(const EnforcementReport& r) {
  using nlohmann::json;
  json v = json::array();
  for (const auto& x : r.violations) {
    v.push_back(json{{"event_index", x.event_index},
                     {"pfn", x.pfn},
                     {"phase", to_string(x.phase)},
                     {"origin", to_string(x.origin)},
                     {"digest", to_hex(x.digest)},
                     {"reason", to_string(x.reason)},
                     {"disposition", to_string(x.disposition)}});
  }
  json s = json::array();
  for (const auto& x : r.switch_stats) {
    s.push_back(json{{"from", to_string(x.from)},
                     {"to", to_string(x.to)},
                     {"revoked", x.revoked},
                     {"granted", x.granted},
                     {"retained", x.retained}});
  }
  return json{{"label", r.label},
              {"round", r.round_index},
              {"policy", to_string(r.policy)},
              {"deprivation_only", r.deprivation_only},
              {"counts",
               {{"events", r.events},
                {"kernel_execs", r.kernel_execs},
                {"allowed", r.allowed},
                {"violations", r.violations.size()}}},
              {"violations", std::move(v)},
              {"switch_stats", std::move(s)},
              {"final_phase", to_string(r.final_phase)},
              {"halted", r.halted},
              {"halted_at", r.halted_at ? json(*r.halted_at) : json(nullptr)}};
}

inline EnforcementReport enforcement_report_from_json(const nlohmann::json& j) {
  EnforcementReport r;
  try {
    r.label = j.at("label").get<std::string>();
    r.round_index = j.at("round").get<std::uint32_t>();
    r.policy = policy_from_string(j.at("policy").get<std::string>());
    r.deprivation_only = j.at("deprivation_only").get<bool>();
    const auto& c = j.at("counts");
    r.events = c.at("events").get<std::size_t>();
    r.kernel_execs = c.at("kernel_execs").get<std::size_t>();
    r.allowed = c.at("allowed").get<std::size_t>();
    for (const auto& x : j.at("violations")) {
      ViolationRecord v;
      v.event_index = x.at("event_index").get<std::size_t>();
      v.pfn = x.at("pfn").get<Pfn>();
      v.phase = phase_from_string(x.at("phase").get<std::string>());
      v.origin = detail::enum_from_string(x.at("origin").get<std::string>(), std::array{Origin::Image, Origin::Module},
                                          "origin");
      if (!digest_from_hex(x.at("digest").get<std::string>(), v.digest)) throw Error("bad digest in report");
      v.reason = detail::enum_from_string(x.at("reason").get<std::string>(),
                                          std::array{ViolationReason::UnknownPage, ViolationReason::WrongPhase},
                                          "violation reason");
      v.disposition = detail::enum_from_string(x.at("disposition").get<std::string>(),
                                               std::array{Disposition::Logged, Disposition::Stopped}, "disposition");
      r.violations.push_back(v);
    }
    for (const auto& x : j.at("switch_stats")) {
      r.switch_stats.push_back(SwitchStats{phase_from_string(x.at("from").get<std::string>()),
                                           phase_from_string(x.at("to").get<std::string>()),
                                           x.at("revoked").get<std::size_t>(), x.at("granted").get<std::size_t>(),
                                           x.at("retained").get<std::size_t>()});
    }
    r.final_phase = phase_from_string(j.at("final_phase").get<std::string>());
    r.halted = j.at("halted").get<bool>();
    if (!j.at("halted_at").is_null()) r.halted_at = j.at("halted_at").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed enforcement report: ") + e.what());
  }
  return r;
}

}  // namespace kasr
