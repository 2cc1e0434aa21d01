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

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/error.hpp"
#include "kasr/page_identity.hpp"
#include "kasr/trace.hpp"

namespace kasr {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

template <typename... Ts>
constexpr std::uint64_t mix(Ts... vs) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(vs))), ...);
  return h;
}

inline std::uint64_t mix_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return splitmix64(h);
}

// Portable draws: std::mt19937_64 output is fully specified, the standard
// distributions are not.
inline std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return n ? rng() % n : 0; }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(rng, i)]);
}

inline void fill_random(PageContent& out, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < out.size(); i += 8) {
    std::uint64_t w = rng();
    for (std::size_t k = 0; k < 8 && i + k < out.size(); ++k) out[i + k] = static_cast<std::uint8_t>(w >> (8 * k));
  }
}

enum Tag : std::uint64_t {
  kTagContent = 1,
  kTagDynRuns,
  kTagShared,
  kTagPfn,
  kTagOrder,
  kTagDynValue,
  kTagLate,
  kTagRootkit,
  kTagRepeat,
};

}  // namespace detail

// Explicit dynamic byte run on the used page at position `page` of the
// workload's used-page list.
struct DynamicSlot {
  std::uint32_t page = 0;
  std::uint32_t offset = 0;
  std::uint32_t length = 1;

  friend bool operator==(const DynamicSlot&, const DynamicSlot&) = default;
};

// Shape of a synthetic workload over a synthetic kernel.
//
// Used pages fall in four categories: startup-only, runtime-only,
// shutdown-only, and shared (runtime plus a seeded non-empty subset of
// startup/shutdown). module_pages are carved out of the runtime-only
// count. Page contents and kernel-derived dynamic runs depend only on
// (kernel_seed, origin, category, rank), so workloads that share a
// kernel_seed (and dynamic-run parameters) share logical pages.
struct WorkloadProfile {
  std::string label = "synthetic";
  std::uint32_t page_size = kDefaultPageSize;
  std::uint32_t total_pages = 0;
  std::uint32_t used_startup = 0;
  std::uint32_t used_runtime = 0;
  std::uint32_t used_shutdown = 0;
  std::uint32_t shared_across_phases = 0;
  std::uint32_t module_pages = 0;
  std::uint32_t dynamic_runs_per_page = 0;
  std::vector<DynamicSlot> dynamic_byte_slots;
  std::uint32_t max_dynamic_run = kDefaultMaxDynamicRun;
  // Permits slots longer than max_dynamic_run (negative tests only).
  bool adversarial = false;
  std::uint32_t reuse_events = 0;
  std::uint32_t reexecs_per_page = 0;
  std::uint32_t noise_events = 0;
  // late_pages image pages are held back from round 1 and released one
  // per round up to round release_by_round (1-based).
  std::uint32_t late_pages = 0;
  std::uint32_t release_by_round = 0;
  std::uint64_t kernel_seed = 1;
  std::uint64_t seed = 0;

  std::uint32_t used_pages() const noexcept {
    return used_startup + used_runtime + used_shutdown + shared_across_phases;
  }
  std::uint32_t runtime_pages() const noexcept { return used_runtime + shared_across_phases; }

  friend bool operator==(const WorkloadProfile&, const WorkloadProfile&) = default;
};

inline void to_json(nlohmann::json& j, const DynamicSlot& s) {
  j = nlohmann::json{{"page", s.page}, {"offset", s.offset}, {"length", s.length}};
}

inline void from_json(const nlohmann::json& j, DynamicSlot& s) {
  s.page = j.at("page").get<std::uint32_t>();
  s.offset = j.at("offset").get<std::uint32_t>();
  s.length = j.at("length").get<std::uint32_t>();
}

inline void to_json(nlohmann::json& j, const WorkloadProfile& p) {
  j = nlohmann::json{{"label", p.label},
                     {"page_size", p.page_size},
                     {"total_pages", p.total_pages},
                     {"used_startup", p.used_startup},
                     {"used_runtime", p.used_runtime},
                     {"used_shutdown", p.used_shutdown},
                     {"shared_across_phases", p.shared_across_phases},
                     {"module_pages", p.module_pages},
                     {"dynamic_runs_per_page", p.dynamic_runs_per_page},
                     {"dynamic_byte_slots", p.dynamic_byte_slots},
                     {"max_dynamic_run", p.max_dynamic_run},
                     {"adversarial", p.adversarial},
                     {"reuse_events", p.reuse_events},
                     {"reexecs_per_page", p.reexecs_per_page},
                     {"noise_events", p.noise_events},
                     {"late_pages", p.late_pages},
                     {"release_by_round", p.release_by_round},
                     {"kernel_seed", p.kernel_seed},
                     {"seed", p.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, WorkloadProfile& p) {
  if (!j.is_object()) throw Error("workload profile must be a JSON object");
  const nlohmann::json defaults = WorkloadProfile{};
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw Error("unknown workload profile key '" + k + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("label", p.label);
  get("page_size", p.page_size);
  get("total_pages", p.total_pages);
  get("used_startup", p.used_startup);
  get("used_runtime", p.used_runtime);
  get("used_shutdown", p.used_shutdown);
  get("shared_across_phases", p.shared_across_phases);
  get("module_pages", p.module_pages);
  get("dynamic_runs_per_page", p.dynamic_runs_per_page);
  get("dynamic_byte_slots", p.dynamic_byte_slots);
  get("max_dynamic_run", p.max_dynamic_run);
  get("adversarial", p.adversarial);
  get("reuse_events", p.reuse_events);
  get("reexecs_per_page", p.reexecs_per_page);
  get("noise_events", p.noise_events);
  get("late_pages", p.late_pages);
  get("release_by_round", p.release_by_round);
  get("kernel_seed", p.kernel_seed);
  get("seed", p.seed);
}

enum class PageCategory : std::uint8_t { StartupOnly, RuntimeOnly, ShutdownOnly, Shared };

// Ground truth for one used logical page.
struct LogicalPage {
  Origin origin = Origin::Image;
  PageCategory category = PageCategory::StartupOnly;
  std::uint32_t rank = 0;
  PhaseFlags flags;
  std::uint32_t release_round = 0;  // 0-based
  std::optional<std::uint32_t> module;
  std::vector<ByteRange> dynamic_runs;  // sorted, separated by constant bytes
};

struct SyntheticModule {
  std::string name;
  std::vector<std::uint32_t> pages;
  // Module whose freed pfns this one takes over (runtime unload/load).
  std::optional<std::uint32_t> reuses;
  bool unloaded = false;
};

inline constexpr Pfn kKernelPfnBase = 0x1000;
inline constexpr Pfn kUserPfnBase = 0x100000;

// Deterministic trace generator plus its ground truth.
class SyntheticWorkload {
 public:
  explicit SyntheticWorkload(WorkloadProfile profile) : p_(std::move(profile)) {
    validate();
    build_pages();
    build_modules();
    build_late_schedule();
    base_.reserve(pages_.size());
    for (const auto& pg : pages_) {
      PageContent c(p_.page_size);
      std::mt19937_64 rng(detail::mix(p_.kernel_seed, detail::kTagContent, static_cast<int>(pg.origin),
                                      static_cast<int>(pg.category), pg.rank));
      detail::fill_random(c, rng);
      base_.push_back(std::move(c));
    }
  }

  const WorkloadProfile& profile() const noexcept { return p_; }
  const std::vector<LogicalPage>& pages() const noexcept { return pages_; }
  const std::vector<SyntheticModule>& modules() const noexcept { return modules_; }
  const PageContent& base_content(std::uint32_t page) const { return base_.at(page); }

  std::vector<std::uint8_t> dynamic_mask(std::uint32_t page) const {
    std::vector<std::uint8_t> m(p_.page_size, 0);
    for (const auto& r : pages_.at(page).dynamic_runs) std::fill_n(m.begin() + r.offset, r.length, std::uint8_t{1});
    return m;
  }

  // Content of a page in a given round: base bytes with every dynamic byte
  // replaced by a value that differs from the base and from every other
  // round (for the first 255 rounds).
  PageContent content(std::uint32_t page, std::uint32_t round) const {
    PageContent c = base_.at(page);
    const auto& pg = pages_[page];
    for (const auto& r : pg.dynamic_runs) {
      for (std::uint32_t b = r.offset; b < r.end(); ++b) {
        const std::uint64_t h = detail::mix(p_.seed, detail::kTagDynValue, static_cast<int>(pg.origin),
                                            static_cast<int>(pg.category), pg.rank, b) % 255;
        c[b] = static_cast<std::uint8_t>(c[b] + 1 + (h + round) % 255);
      }
    }
    return c;
  }

  std::vector<std::uint32_t> released_in(std::uint32_t round) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < pages_.size(); ++i) {
      if (pages_[i].release_round <= round) out.push_back(i);
    }
    return out;
  }

  // Page -> pfn for one round. Slots are a seeded permutation of the
  // kernel's page frames; from round 1 on no page keeps its round-0 frame.
  std::vector<Pfn> pfn_layout(std::uint32_t round) const {
    const auto slots = slot_permutation(round);
    std::vector<Pfn> pfns(pages_.size());
    for (std::size_t i = 0; i < pages_.size(); ++i) pfns[i] = kKernelPfnBase + slots[i];
    for (const auto& m : modules_) {
      if (!m.reuses) continue;
      const auto& donor = modules_[*m.reuses].pages;
      for (std::size_t k = 0; k < m.pages.size() && k < donor.size(); ++k) pfns[m.pages[k]] = pfns[donor[k]];
    }
    return pfns;
  }

  Round round(std::uint32_t r) const {
    Round out;
    out.page_size = p_.page_size;
    out.label = p_.label;
    out.round_index = r;
    const auto pfns = pfn_layout(r);
    std::vector<std::optional<std::uint32_t>> carried(p_.total_pages + 1);
    auto& ev = out.events;

    auto exec = [&](std::uint32_t i) {
      const Pfn pfn = pfns[i];
      auto& cur = carried[pfn - kKernelPfnBase];
      std::optional<PageContent> c;
      if (cur != i) {
        cur = i;
        c = content(i, r);
      }
      ev.push_back(TraceEvent::kernel_exec(pfn, pages_[i].origin, std::move(c)));
    };
    auto is_reuser = [&](std::uint32_t i) {
      return pages_[i].module && modules_[*pages_[i].module].reuses.has_value();
    };

    // Item >= 0: page index; item < 0: noise event.
    auto emit_phase = [&](Phase phase, std::uint32_t noise) {
      std::vector<std::int64_t> items;
      std::mt19937_64 rng(detail::mix(p_.seed, detail::kTagOrder, r, static_cast<int>(phase)));
      for (std::uint32_t i = 0; i < pages_.size(); ++i) {
        if (pages_[i].release_round > r || !pages_[i].flags.contains(phase) || is_reuser(i)) continue;
        const std::uint64_t reps = 1 + detail::below(rng, std::uint64_t{p_.reexecs_per_page} + 1);
        for (std::uint64_t k = 0; k < reps; ++k) items.push_back(i);
      }
      for (std::uint32_t k = 0; k < noise; ++k) items.push_back(-1 - static_cast<std::int64_t>(k));
      detail::shuffle(items, rng);
      for (auto it : items) {
        if (it >= 0) {
          exec(static_cast<std::uint32_t>(it));
        } else if (it % 2 == 0) {
          ev.push_back(TraceEvent::user_exec(kUserPfnBase + 1 + static_cast<Pfn>(-it)));
        } else {
          static constexpr std::array<std::string_view, 3> kCalls = {"read", "write", "open"};
          ev.push_back(TraceEvent::syscall(std::string(kCalls[static_cast<std::size_t>(-it) % kCalls.size()])));
        }
      }
    };
    auto module_pfns = [&](const SyntheticModule& m) {
      std::vector<Pfn> v;
      for (auto i : m.pages) v.push_back(pfns[i]);
      return v;
    };

    emit_phase(Phase::Startup, 0);
    ev.push_back(TraceEvent::user_exec(kUserPfnBase));
    for (const auto& m : modules_) {
      if (!m.reuses) ev.push_back(TraceEvent::mod_load(m.name, module_pfns(m)));
    }
    emit_phase(Phase::Runtime, p_.noise_events);
    for (const auto& m : modules_) {
      if (!m.reuses) continue;
      const auto& donor = modules_[*m.reuses];
      ev.push_back(TraceEvent::mod_unload(donor.name, module_pfns(donor)));
      ev.push_back(TraceEvent::mod_load(m.name, module_pfns(m)));
      std::vector<std::uint32_t> order;
      std::mt19937_64 rng(detail::mix(p_.seed, detail::kTagRepeat, r, m.pages.front()));
      for (auto i : m.pages) {
        const std::uint64_t reps = 1 + detail::below(rng, std::uint64_t{p_.reexecs_per_page} + 1);
        for (std::uint64_t k = 0; k < reps; ++k) order.push_back(i);
      }
      detail::shuffle(order, rng);
      for (auto i : order) exec(i);
    }
    if (has_shutdown_) {
      ev.push_back(TraceEvent::syscall(std::string(kRebootSyscall)));
      emit_phase(Phase::Shutdown, 0);
    }
    return out;
  }

 private:
  void validate() const {
    const auto fail = [](const std::string& m) { throw Error("inconsistent profile: " + m); };
    if (p_.page_size == 0) fail("page_size must be positive");
    if (p_.used_pages() > p_.total_pages) fail("used pages exceed total_pages");
    if (p_.module_pages > p_.used_runtime) fail("module_pages exceed used_runtime");
    if (p_.max_dynamic_run == 0) fail("max_dynamic_run must be positive");
    const std::uint32_t modules = p_.module_pages == 0 ? 0 : std::max<std::uint32_t>(1, p_.module_pages / 2);
    if (2 * p_.reuse_events > modules) fail("reuse_events need two modules each");
    if (p_.late_pages > 0 && p_.release_by_round < 2) fail("late_pages need release_by_round >= 2");
    if (p_.late_pages > p_.used_pages() - p_.module_pages) fail("late_pages exceed image pages");
    for (const auto& s : p_.dynamic_byte_slots) {
      if (s.page >= p_.used_pages()) fail("dynamic slot page out of range");
      if (s.length == 0) fail("dynamic slot length must be >= 1");
      if (std::uint64_t{s.offset} + s.length > p_.page_size) fail("dynamic slot exceeds page");
      if (s.length > p_.max_dynamic_run && !p_.adversarial) fail("dynamic slot longer than max_dynamic_run");
    }
  }

  void build_pages() {
    auto add = [&](Origin o, PageCategory c, std::uint32_t count) {
      for (std::uint32_t k = 0; k < count; ++k) {
        LogicalPage pg;
        pg.origin = o;
        pg.category = c;
        pg.rank = k;
        switch (c) {
          case PageCategory::StartupOnly: pg.flags = Phase::Startup; break;
          case PageCategory::RuntimeOnly: pg.flags = Phase::Runtime; break;
          case PageCategory::ShutdownOnly: pg.flags = Phase::Shutdown; break;
          case PageCategory::Shared: {
            static constexpr std::array<std::uint8_t, 3> kExtra = {
                PhaseFlags::kStartup, PhaseFlags::kShutdown, PhaseFlags::kStartup | PhaseFlags::kShutdown};
            pg.flags = PhaseFlags(static_cast<std::uint8_t>(
                PhaseFlags::kRuntime | kExtra[detail::mix(p_.kernel_seed, detail::kTagShared, k) % 3]));
            break;
          }
        }
        pg.dynamic_runs = kernel_dynamic_runs(pg);
        pages_.push_back(std::move(pg));
      }
    };
    add(Origin::Image, PageCategory::StartupOnly, p_.used_startup);
    add(Origin::Image, PageCategory::RuntimeOnly, p_.used_runtime - p_.module_pages);
    add(Origin::Module, PageCategory::RuntimeOnly, p_.module_pages);
    add(Origin::Image, PageCategory::ShutdownOnly, p_.used_shutdown);
    add(Origin::Image, PageCategory::Shared, p_.shared_across_phases);

    for (const auto& s : p_.dynamic_byte_slots) {
      auto& runs = pages_[s.page].dynamic_runs;
      runs.push_back({s.offset, s.length});
      std::sort(runs.begin(), runs.end(), [](const ByteRange& a, const ByteRange& b) { return a.offset < b.offset; });
      std::vector<ByteRange> merged;
      for (const auto& r : runs) {
        if (!merged.empty() && r.offset <= merged.back().end()) {
          merged.back().length = std::max(merged.back().end(), r.end()) - merged.back().offset;
        } else {
          merged.push_back(r);
        }
      }
      runs = std::move(merged);
    }
    const Thresholds t = Thresholds::for_page_size(p_.page_size);
    for (const auto& pg : pages_) {
      std::uint32_t dyn = 0;
      for (const auto& r : pg.dynamic_runs) {
        dyn += r.length;
        if (r.length > p_.max_dynamic_run && !p_.adversarial) {
          throw Error("inconsistent profile: merged dynamic run longer than max_dynamic_run");
        }
      }
      if (p_.page_size - dyn < t.constancy && !p_.adversarial) {
        throw Error("inconsistent profile: too many dynamic bytes for an identifiable page");
      }
    }
    for (const auto& pg : pages_) has_shutdown_ = has_shutdown_ || pg.flags.contains(Phase::Shutdown);
  }

  std::vector<ByteRange> kernel_dynamic_runs(const LogicalPage& pg) const {
    std::vector<ByteRange> runs;
    if (p_.dynamic_runs_per_page == 0) return runs;
    std::mt19937_64 rng(detail::mix(p_.kernel_seed, detail::kTagDynRuns, static_cast<int>(pg.origin),
                                    static_cast<int>(pg.category), pg.rank));
    const Thresholds t = Thresholds::for_page_size(p_.page_size);
    std::uint32_t budget = p_.page_size - t.constancy;
    for (std::uint32_t k = 0; k < p_.dynamic_runs_per_page; ++k) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto len = static_cast<std::uint32_t>(1 + detail::below(rng, p_.max_dynamic_run));
        if (len > budget || len > p_.page_size) break;
        const auto off = static_cast<std::uint32_t>(detail::below(rng, p_.page_size - len + 1));
        const bool clash = std::any_of(runs.begin(), runs.end(), [&](const ByteRange& o) {
          return off <= o.end() && o.offset <= off + len;  // keeps >= 1 constant byte between runs
        });
        if (clash) continue;
        runs.push_back({off, len});
        budget -= len;
        break;
      }
    }
    std::sort(runs.begin(), runs.end(), [](const ByteRange& a, const ByteRange& b) { return a.offset < b.offset; });
    return runs;
  }

  void build_modules() {
    std::vector<std::uint32_t> module_pages;
    for (std::uint32_t i = 0; i < pages_.size(); ++i) {
      if (pages_[i].origin == Origin::Module) module_pages.push_back(i);
    }
    if (module_pages.empty()) return;
    const std::size_t n_modules = std::max<std::size_t>(1, module_pages.size() / 2);
    for (std::size_t m = 0; m < n_modules; ++m) {
      SyntheticModule mod;
      mod.name = "kmod" + std::to_string(m);
      const std::size_t begin = 2 * m;
      const std::size_t end = m + 1 == n_modules ? module_pages.size() : begin + 2;
      for (std::size_t k = begin; k < end; ++k) {
        mod.pages.push_back(module_pages[k]);
        pages_[module_pages[k]].module = static_cast<std::uint32_t>(m);
      }
      modules_.push_back(std::move(mod));
    }
    for (std::uint32_t e = 0; e < p_.reuse_events; ++e) {
      modules_[2 * e].unloaded = true;
      modules_[2 * e + 1].reuses = 2 * e;
    }
  }

  void build_late_schedule() {
    if (p_.late_pages == 0) return;
    std::vector<std::uint32_t> image;
    for (std::uint32_t i = 0; i < pages_.size(); ++i) {
      if (pages_[i].origin == Origin::Image) image.push_back(i);
    }
    std::mt19937_64 rng(detail::mix(p_.seed, detail::kTagLate));
    detail::shuffle(image, rng);
    for (std::uint32_t j = 0; j < p_.late_pages; ++j) {
      pages_[image[j]].release_round = 1 + j % (p_.release_by_round - 1);
    }
  }

  std::vector<std::uint32_t> draw_slots(std::uint64_t seed) const {
    std::vector<std::uint32_t> slots(p_.total_pages);
    for (std::uint32_t i = 0; i < slots.size(); ++i) slots[i] = i;
    std::mt19937_64 rng(seed);
    detail::shuffle(slots, rng);
    return slots;
  }

  std::vector<std::uint32_t> slot_permutation(std::uint32_t round) const {
    auto first = draw_slots(detail::mix(p_.seed, detail::kTagPfn, 0, 0));
    if (round == 0 || p_.total_pages < 2) return first;
    const std::size_t used = pages_.size();
    for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
      auto slots = draw_slots(detail::mix(p_.seed, detail::kTagPfn, round, attempt));
      bool moved = true;
      for (std::size_t i = 0; i < used && moved; ++i) moved = slots[i] != first[i];
      if (moved) return slots;
    }
    for (auto& s : first) s = (s + round) % p_.total_pages;
    // A rotation by a multiple of total_pages would be the identity.
    if (round % p_.total_pages == 0) {
      for (auto& s : first) s = (s + 1) % p_.total_pages;
    }
    return first;
  }

  WorkloadProfile p_;
  std::vector<LogicalPage> pages_;
  std::vector<SyntheticModule> modules_;
  std::vector<PageContent> base_;
  bool has_shutdown_ = false;
};

inline std::vector<Round> generate_synthetic_workload(const WorkloadProfile& profile, std::uint32_t rounds) {
  SyntheticWorkload wl(profile);
  std::vector<Round> out;
  out.reserve(rounds);
  for (std::uint32_t r = 0; r < rounds; ++r) out.push_back(wl.round(r));
  return out;
}

// ---------------------------------------------------------------------------
// Rootkit injection

struct RootkitScenario {
  std::string name;
  std::uint32_t n_pages = 2;
  std::size_t insertion_point = 0;
  std::string vector = "LKM";
};

struct InjectedRound {
  Round round;
  RootkitScenario scenario;
  std::vector<std::size_t> injected_exec_indices;
};

inline constexpr std::array<std::string_view, 6> kKnownRootkits = {"adore-ng",    "xingyiquan", "rkduck",
                                                                   "Diamorphine", "suterusu",   "nurupo"};

// Index of the first user exec (startup -> runtime boundary).
inline std::optional<std::size_t> runtime_boundary(const Round& round) {
  for (std::size_t i = 0; i < round.events.size(); ++i) {
    if (round.events[i].is_user_exec()) return i;
  }
  return std::nullopt;
}

// Insertion point just before the reboot syscall (or at the end).
inline std::size_t end_of_runtime(const Round& round) {
  for (std::size_t i = 0; i < round.events.size(); ++i) {
    if (round.events[i].is_reboot()) return i;
  }
  return round.events.size();
}

// Copies round and inserts, at insertion_point, a module load of n_pages
// fresh frames followed by one kernel exec of each: never-trained content.
inline InjectedRound inject_rootkit(const Round& round, const RootkitScenario& sc) {
  if (sc.n_pages == 0) throw Error("rootkit scenario needs at least one page");
  const auto boundary = runtime_boundary(round);
  if (!boundary || sc.insertion_point <= *boundary || sc.insertion_point > round.events.size()) {
    throw Error("rootkit insertion point must lie after the startup->runtime boundary");
  }
  Pfn next = kKernelPfnBase;
  for (const auto& e : round.events) {
    if (e.kind == EventKind::Exec && e.space == Space::Kernel) next = std::max(next, e.pfn + 1);
    for (Pfn p : e.pfns) next = std::max(next, p + 1);
  }
  std::vector<Pfn> pfns;
  for (std::uint32_t k = 0; k < sc.n_pages; ++k) pfns.push_back(next + k);

  std::vector<TraceEvent> injected;
  injected.push_back(TraceEvent::mod_load(sc.name, pfns));
  for (std::uint32_t k = 0; k < sc.n_pages; ++k) {
    PageContent c(round.page_size);
    std::mt19937_64 rng(detail::mix(detail::mix_string(sc.name), detail::kTagRootkit, round.round_index, k));
    detail::fill_random(c, rng);
    injected.push_back(TraceEvent::kernel_exec(pfns[k], Origin::Module, std::move(c)));
  }

  InjectedRound out{round, sc, {}};
  auto& ev = out.round.events;
  ev.insert(ev.begin() + static_cast<std::ptrdiff_t>(sc.insertion_point), injected.begin(), injected.end());
  for (std::uint32_t k = 0; k < sc.n_pages; ++k) out.injected_exec_indices.push_back(sc.insertion_point + 1 + k);
  return out;
}

// The six known LKM rootkits, each injecting 2-4 pages at end of runtime.
inline std::vector<RootkitScenario> known_rootkit_scenarios(const Round& clean) {
  std::vector<RootkitScenario> out;
  for (std::size_t i = 0; i < kKnownRootkits.size(); ++i) {
    out.push_back(RootkitScenario{std::string(kKnownRootkits[i]), static_cast<std::uint32_t>(2 + i % 3),
                                  end_of_runtime(clean), "LKM"});
  }
  return out;
}

inline nlohmann::json to_json(const InjectedRound& r) {
  return nlohmann::json{{"scenario", r.scenario.name},
                        {"vector", r.scenario.vector},
                        {"n_pages", r.scenario.n_pages},
                        {"insertion_point", r.scenario.insertion_point},
                        {"injected_event_indices", r.injected_exec_indices}};
}

}  // namespace kasr
