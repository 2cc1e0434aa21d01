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

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/database.hpp"
#include "kasr/digest.hpp"
#include "kasr/error.hpp"
#include "kasr/page_identity.hpp"
#include "kasr/trace.hpp"

namespace kasr {

// One distinct (origin, content) page that faulted during a round.
struct TrainingObservation {
  std::shared_ptr<const PageContent> content;
  Digest digest{};
  Origin origin = Origin::Image;
  PhaseFlags flags;
  Pfn first_pfn = 0;
};

struct RoundObservations {
  std::uint32_t round_index = 0;
  std::vector<TrainingObservation> pages;
};

struct RoundStats {
  std::size_t pages_seen = 0;
  std::size_t exceptions = 0;
  std::size_t reuse_detected = 0;
  std::size_t kernel_execs = 0;
};

// Offline-training state for one round. The FIFO holds the (pfn, epoch
// digest) pairs currently granted execute permission; anything else faults.
class TrainerState {
 public:
  static constexpr std::size_t kFifoCapacity = 2;

  struct FifoEntry {
    Pfn pfn = 0;
    Digest digest{};
    friend bool operator==(const FifoEntry&, const FifoEntry&) = default;
  };

  Phase phase() const noexcept { return phase_; }
  bool rebooted() const noexcept { return rebooted_; }
  std::size_t exception_count() const noexcept { return exceptions_; }
  std::size_t reuse_detected() const noexcept { return reuse_; }
  std::span<const FifoEntry> fifo() const noexcept { return {fifo_.data(), fifo_size_}; }
  const std::vector<TrainingObservation>& observations() const noexcept { return observations_; }
  std::vector<TrainingObservation> take_observations() { return std::move(observations_); }

  // User execs and syscalls drive phase transitions: the first user exec
  // ends startup, the reboot syscall starts shutdown. Every transition
  // revokes the FIFO so pages re-fault under the new phase.
  void mark_phase(const TraceEvent& e) {
    if (e.is_user_exec()) {
      if (phase_ == Phase::Startup) enter(Phase::Runtime);
    } else if (e.kind == EventKind::Syscall) {
      if (!e.is_reboot()) return;
      if (rebooted_) throw InvariantError("second reboot syscall");
      rebooted_ = true;
      enter(Phase::Shutdown);
    } else {
      throw InvariantError("mark_phase expects a user exec or a syscall");
    }
  }

  // Returns true when the exec raised an exception.
  bool on_kernel_exec(const TraceEvent& e) {
    const Pfn pfn = e.pfn;
    Digest d;
    std::shared_ptr<const PageContent> content;
    if (e.content) {
      d = sha256(*e.content);
      auto it = current_.find(pfn);
      if (it == current_.end()) {
        content = std::make_shared<const PageContent>(*e.content);
        current_.emplace(pfn, Epoch{d, content});
      } else if (it->second.digest != d) {
        // Page reuse: new epoch, stale permission dropped.
        ++reuse_;
        revoke_pfn(pfn);
        content = std::make_shared<const PageContent>(*e.content);
        it->second = Epoch{d, content};
      } else {
        content = it->second.content;
      }
    } else {
      auto it = current_.find(pfn);
      if (it == current_.end()) {
        throw InvariantError("kernel exec of pfn " + std::to_string(pfn) + " without content");
      }
      d = it->second.digest;
      content = it->second.content;
    }

    const FifoEntry entry{pfn, d};
    for (std::size_t i = 0; i < fifo_size_; ++i) {
      if (fifo_[i] == entry) return false;
    }
    ++exceptions_;
    record(entry, content, e.origin.value_or(Origin::Image));
    if (fifo_size_ == kFifoCapacity) {
      fifo_[0] = fifo_[1];
      fifo_[1] = entry;
    } else {
      fifo_[fifo_size_++] = entry;
    }
    return true;
  }

 private:
  struct Epoch {
    Digest digest;
    std::shared_ptr<const PageContent> content;
  };
  struct ObsKey {
    Origin origin;
    Digest digest;
    friend bool operator==(const ObsKey&, const ObsKey&) = default;
  };
  struct ObsKeyHash {
    std::size_t operator()(const ObsKey& k) const noexcept {
      return DigestHash{}(k.digest) ^ static_cast<std::size_t>(k.origin);
    }
  };

  void enter(Phase p) {
    phase_ = p;
    fifo_size_ = 0;
  }

  void revoke_pfn(Pfn pfn) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < fifo_size_; ++i) {
      if (fifo_[i].pfn != pfn) fifo_[w++] = fifo_[i];
    }
    fifo_size_ = w;
  }

  void record(const FifoEntry& entry, const std::shared_ptr<const PageContent>& content, Origin origin) {
    const ObsKey key{origin, entry.digest};
    auto [it, inserted] = obs_index_.try_emplace(key, observations_.size());
    if (inserted) {
      observations_.push_back(TrainingObservation{content, entry.digest, origin, PhaseFlags(phase_), entry.pfn});
    } else {
      observations_[it->second].flags |= PhaseFlags(phase_);
    }
  }

  Phase phase_ = Phase::Startup;
  bool rebooted_ = false;
  std::array<FifoEntry, kFifoCapacity> fifo_{};
  std::size_t fifo_size_ = 0;
  std::unordered_map<Pfn, Epoch> current_;
  std::vector<TrainingObservation> observations_;
  std::unordered_map<ObsKey, std::size_t, ObsKeyHash> obs_index_;
  std::size_t exceptions_ = 0;
  std::size_t reuse_ = 0;
};

inline void mark_phase(TrainerState& state, const TraceEvent& e) { state.mark_phase(e); }

// Replays one round through the two-page execute FIFO and collects every
// distinct faulting kernel page with the phases it faulted in.
inline std::pair<RoundObservations, RoundStats> run_training_round(const Round& round) {
  TrainerState state;
  RoundStats stats;
  for (const auto& e : round.events) {
    switch (e.kind) {
      case EventKind::Exec:
        if (e.space == Space::User) {
          state.mark_phase(e);
        } else {
          ++stats.kernel_execs;
          state.on_kernel_exec(e);
        }
        break;
      case EventKind::Syscall:
        state.mark_phase(e);
        break;
      case EventKind::ModLoad:
      case EventKind::ModUnload:
        break;
    }
  }
  stats.exceptions = state.exception_count();
  stats.reuse_detected = state.reuse_detected();
  RoundObservations obs{round.round_index, state.take_observations()};
  stats.pages_seen = obs.pages.size();
  return {std::move(obs), stats};
}

// Cross-round aggregation. Observations are clustered greedily (first fit,
// arrival order) per origin; each cluster keeps its founding dump and a
// running constant-byte mask. With a base database, observations matching a
// base record only widen that record's phase flags.
class Trainer {
 public:
  explicit Trainer(Thresholds t, std::string label = {}, const CodeUsageDatabase* base = nullptr)
      : thresholds_(t), label_(std::move(label)), base_(base) {
    thresholds_.validate();
    if (base_) {
      if (base_->thresholds() != thresholds_) throw ConfigError("base database thresholds differ");
      for (Origin o : {Origin::Image, Origin::Module}) {
        for (const auto& r : base_->records(o)) base_flags_[slot(o)].push_back(r.flags);
      }
      if (label_.empty()) label_ = base_->metadata().label;
    }
  }

  RoundStats add_round(const Round& round) {
    if (round.page_size != thresholds_.page_size) throw ConfigError("trace page_size differs from configuration");
    auto [obs, stats] = run_training_round(round);
    add_observations(obs);
    return stats;
  }

  void add_observations(const RoundObservations& round) {
    ++rounds_;
    for (const auto& o : round.pages) absorb(round.round_index, o);
  }

  std::uint32_t rounds() const noexcept { return rounds_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  // Builds the database for everything absorbed so far.
  CodeUsageDatabase snapshot() const {
    std::array<std::vector<PageRecord>, 2> lists;
    if (base_) {
      for (Origin o : {Origin::Image, Origin::Module}) {
        const auto recs = base_->records(o);
        for (std::size_t i = 0; i < recs.size(); ++i) {
          PageRecord r = recs[i];
          r.flags = base_flags_[slot(o)][i];
          lists[slot(o)].push_back(std::move(r));
        }
      }
    }
    for (Origin o : {Origin::Image, Origin::Module}) {
      const auto& clusters = clusters_[slot(o)];
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        const Cluster& cl = clusters[c];
        PageRecord r;
        try {
          r.identity = derive_identity(ConstantByteMap(cl.mask), *cl.rep, thresholds_);
        } catch (const IdentityError& e) {
          std::ostringstream msg;
          msg << to_string(o) << " cluster " << c << " (rounds";
          for (auto ri : cl.rounds) msg << ' ' << ri;
          msg << ") " << e.what();
          throw IdentityError(msg.str());
        }
        r.origin = o;
        r.flags = cl.flags;
        r.first_seen_round = cl.first_round;
        r.representative = cl.rep;
        lists[slot(o)].push_back(std::move(r));
      }
    }
    const std::uint32_t total_rounds = rounds_ + (base_ ? base_->metadata().rounds : 0);
    CodeUsageDatabase db(thresholds_, DatabaseMetadata{label_, total_rounds, kDatabaseFormatVersion},
                         std::move(lists[0]), std::move(lists[1]));
    for (const auto& c : find_identity_conflicts(db)) {
      const auto list = db.records(c.origin);
      if (list[c.other].identity.matches(*list[c.owner].representative)) {
        throw IdentityError("ambiguous identities: two " + std::string(to_string(c.origin)) +
                            " records match each other's representatives");
      }
    }
    return db;
  }

 private:
  struct Cluster {
    std::shared_ptr<const PageContent> rep;
    std::vector<std::uint8_t> mask;
    PhaseFlags flags;
    std::uint32_t first_round = 0;
    std::set<std::uint32_t> rounds;
  };

  static constexpr std::size_t slot(Origin o) noexcept { return o == Origin::Image ? 0 : 1; }

  void absorb(std::uint32_t round_index, const TrainingObservation& o) {
    if (o.content->size() != thresholds_.page_size) throw ConfigError("observation length differs from page_size");
    if (base_) {
      if (auto i = base_->lookup_index(*o.content, o.origin)) {
        base_flags_[slot(o.origin)][*i] |= o.flags;
        return;
      }
    }
    auto& clusters = clusters_[slot(o.origin)];
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      Cluster& cl = clusters[c];
      if (!same_logical_page(*cl.rep, *o.content, thresholds_)) continue;
      if (cl.rounds.contains(round_index)) {
        warnings_.push_back("near-duplicate pages in round " + std::to_string(round_index) + " merged into " +
                            std::string(to_string(o.origin)) + " cluster " + std::to_string(c));
      }
      const auto& rep = *cl.rep;
      const auto& content = *o.content;
      for (std::size_t b = 0; b < rep.size(); ++b) cl.mask[b] &= static_cast<std::uint8_t>(rep[b] == content[b]);
      cl.flags |= o.flags;
      cl.rounds.insert(round_index);
      cl.first_round = std::min(cl.first_round, round_index);
      return;
    }
    clusters.push_back(Cluster{o.content, std::vector<std::uint8_t>(o.content->size(), 1), o.flags, round_index,
                               {round_index}});
  }

  Thresholds thresholds_;
  std::string label_;
  const CodeUsageDatabase* base_;
  std::array<std::vector<PhaseFlags>, 2> base_flags_;
  std::array<std::vector<Cluster>, 2> clusters_;
  std::uint32_t rounds_ = 0;
  std::vector<std::string> warnings_;
};

// Clusters observations across rounds and builds the database. Throws
// IdentityError naming the cluster when one cannot be identified.
inline CodeUsageDatabase finalize_database(std::span<const RoundObservations> rounds, const Thresholds& t,
                                           std::string label = {}, const CodeUsageDatabase* base = nullptr,
                                           std::vector<std::string>* warnings = nullptr) {
  if (rounds.empty()) throw Error("finalize_database needs at least one round");
  Trainer trainer(t, std::move(label), base);
  for (const auto& r : rounds) trainer.add_observations(r);
  auto db = trainer.snapshot();
  if (warnings) warnings->insert(warnings->end(), trainer.warnings().begin(), trainer.warnings().end());
  return db;
}

// True when a and b hold the same logical pages with the same flags.
// Records are paired by mutual representative matching when both sides
// carry representatives (a page's constant map may still be refined
// between snapshots), by identity equality otherwise.
inline bool same_logical_pages(const CodeUsageDatabase& a, const CodeUsageDatabase& b) {
  if (a.thresholds() != b.thresholds()) return false;
  for (Origin o : {Origin::Image, Origin::Module}) {
    const auto la = a.records(o);
    const auto lb = b.records(o);
    if (la.size() != lb.size()) return false;
    std::vector<bool> used(lb.size(), false);
    for (const auto& ra : la) {
      std::optional<std::size_t> j;
      auto it = std::lower_bound(lb.begin(), lb.end(), ra,
                                 [](const PageRecord& x, const PageRecord& y) { return x.identity < y.identity; });
      if (it != lb.end() && it->identity == ra.identity) {
        j = static_cast<std::size_t>(it - lb.begin());
      } else if (ra.representative) {
        j = b.lookup_index(*ra.representative, o);
        if (j && (!lb[*j].representative || !ra.identity.matches(*lb[*j].representative))) j.reset();
      }
      if (!j || used[*j] || lb[*j].flags != ra.flags) return false;
      used[*j] = true;
    }
  }
  return true;
}

// True iff the last `window` snapshots agree on logical pages and flags.
inline bool is_stable(std::span<const CodeUsageDatabase> history, std::size_t window = 2) {
  if (window < 2) throw Error("stability window must be at least 2");
  if (history.size() < window) return false;
  for (std::size_t i = history.size() - window + 1; i < history.size(); ++i) {
    if (!same_logical_pages(history[i - 1], history[i])) return false;
  }
  return true;
}

// 1-based round from which the database no longer changes, confirmed by a
// full window; nullopt when no window of identical snapshots exists yet.
inline std::optional<std::size_t> convergence_round(std::span<const CodeUsageDatabase> history,
                                                    std::size_t window = 2) {
  for (std::size_t end = window; end <= history.size(); ++end) {
    if (is_stable(history.first(end), window)) return end - window + 1;
  }
  return std::nullopt;
}

namespace detail {

inline std::string merge_labels(const std::string& a, const std::string& b) {
  std::set<std::string> parts;
  for (const auto* s : {&a, &b}) {
    for (auto p : split(*s, '+')) {
      if (!p.empty()) parts.emplace(p);
    }
  }
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += '+';
    out += p;
  }
  return out;
}

}  // namespace detail

// Union of two databases. A delta record merges into a base record with an
// equal identity, or failing that, one whose identity and representative
// match the delta's mutually; flags are united and the earliest
// first_seen_round kept. Unmatched delta records are appended.
inline CodeUsageDatabase merge_databases(const CodeUsageDatabase& base, const CodeUsageDatabase& delta) {
  if (base.thresholds() != delta.thresholds()) throw ConfigError("cannot merge databases with different configuration");
  std::array<std::vector<PageRecord>, 2> lists;
  for (Origin o : {Origin::Image, Origin::Module}) {
    auto& out = lists[o == Origin::Image ? 0 : 1];
    const auto lb = base.records(o);
    out.assign(lb.begin(), lb.end());
    for (const auto& rd : delta.records(o)) {
      auto it = std::lower_bound(lb.begin(), lb.end(), rd,
                                 [](const PageRecord& x, const PageRecord& y) { return x.identity < y.identity; });
      std::optional<std::size_t> j;
      if (it != lb.end() && it->identity == rd.identity) {
        j = static_cast<std::size_t>(it - lb.begin());
      } else if (rd.representative) {
        j = base.lookup_index(*rd.representative, o);
        if (j && (!lb[*j].representative || !rd.identity.matches(*lb[*j].representative))) j.reset();
      }
      if (j) {
        auto& merged = out[*j];
        merged.flags |= rd.flags;
        merged.first_seen_round = std::min(merged.first_seen_round, rd.first_seen_round);
        if (!merged.representative) merged.representative = rd.representative;
      } else {
        out.push_back(rd);
      }
    }
  }
  DatabaseMetadata meta{detail::merge_labels(base.metadata().label, delta.metadata().label),
                        std::max(base.metadata().rounds, delta.metadata().rounds), kDatabaseFormatVersion};
  return CodeUsageDatabase(base.thresholds(), std::move(meta), std::move(lists[0]), std::move(lists[1]));
}

}  // namespace kasr
