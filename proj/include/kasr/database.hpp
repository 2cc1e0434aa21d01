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
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/digest.hpp"
#include "kasr/error.hpp"
#include "kasr/page_identity.hpp"

namespace kasr {

inline constexpr std::uint32_t kDatabaseFormatVersion = 1;

struct PageRecord {
  PageIdentity identity;
  Origin origin = Origin::Image;
  PhaseFlags flags;
  std::uint32_t first_seen_round = 0;
  // Founding dump of the logical page. Only present on databases built in
  // this process; the file format does not carry page contents.
  std::shared_ptr<const PageContent> representative;

  friend bool operator==(const PageRecord& a, const PageRecord& b) {
    return a.identity == b.identity && a.origin == b.origin && a.flags == b.flags &&
           a.first_seen_round == b.first_seen_round;
  }
};

struct DatabaseMetadata {
  std::string label;
  std::uint32_t rounds = 0;
  std::uint32_t format_version = kDatabaseFormatVersion;

  friend bool operator==(const DatabaseMetadata&, const DatabaseMetadata&) = default;
};

// Trained code-usage database: one canonical list per origin. Immutable
// after construction, so concurrent readers need no locking.
class CodeUsageDatabase {
 public:
  CodeUsageDatabase() : CodeUsageDatabase(Thresholds{}, DatabaseMetadata{}, {}, {}) {}

  // Sorts both lists into canonical order, validates every invariant and
  // builds the lookup index. Throws InvariantError("corrupt database: ...").
  CodeUsageDatabase(Thresholds thresholds, DatabaseMetadata meta, std::vector<PageRecord> image,
                    std::vector<PageRecord> module)
      : thresholds_(thresholds), meta_(std::move(meta)) {
    try {
      thresholds_.validate();
    } catch (const ConfigError& e) {
      throw InvariantError(std::string("corrupt database: ") + e.what());
    }
    if (meta_.label.size() > 0xffff) throw InvariantError("corrupt database: label too long");
    lists_[0] = std::move(image);
    lists_[1] = std::move(module);
    for (Origin o : {Origin::Image, Origin::Module}) {
      auto& list = lists_[slot(o)];
      for (const auto& r : list) {
        if (r.origin != o) throw InvariantError("corrupt database: record in the wrong list");
        if (!r.flags.valid()) throw InvariantError("corrupt database: invalid phase flags");
        try {
          r.identity.check_thresholds(thresholds_);
        } catch (const IdentityError& e) {
          throw InvariantError(std::string("corrupt database: ") + e.what());
        }
      }
      std::sort(list.begin(), list.end(),
                [](const PageRecord& a, const PageRecord& b) { return a.identity < b.identity; });
      for (std::size_t i = 1; i < list.size(); ++i) {
        if (list[i - 1].identity == list[i].identity) {
          throw InvariantError("corrupt database: duplicate identity in " + std::string(to_string(o)) + " list");
        }
      }
      build_index(o);
    }
  }

  const Thresholds& thresholds() const noexcept { return thresholds_; }
  std::uint32_t page_size() const noexcept { return thresholds_.page_size; }
  const DatabaseMetadata& metadata() const noexcept { return meta_; }

  std::span<const PageRecord> records(Origin o) const noexcept { return lists_[slot(o)]; }
  std::size_t size() const noexcept { return lists_[0].size() + lists_[1].size(); }
  bool empty() const noexcept { return size() == 0; }

  // Position of the first record (canonical order) in the origin's list
  // whose identity matches content. Candidates come from the first-range
  // digest index and are then verified over every range.
  std::optional<std::size_t> lookup_index(ByteView content, Origin o) const {
    if (content.size() != page_size()) return std::nullopt;
    const auto& idx = index_[slot(o)];
    const auto& list = lists_[slot(o)];
    std::optional<std::size_t> best;
    for (const auto& [offset, lengths] : idx.shapes) {
      PrefixHasher hasher(content.subspan(offset));
      for (std::uint32_t len : lengths) {
        const auto it = idx.by_key.find(hasher.digest_of_prefix(len));
        if (it == idx.by_key.end()) continue;
        for (std::uint32_t cand : it->second) {
          if (best && cand >= *best) break;
          const auto& first = list[cand].identity.ranges().front();
          if (first.offset != offset || first.length != len) continue;
          if (list[cand].identity.matches(content)) best = cand;
        }
      }
    }
    return best;
  }

  const PageRecord* lookup(ByteView content, Origin o) const {
    auto i = lookup_index(content, o);
    return i ? &lists_[slot(o)][*i] : nullptr;
  }

  // Records (either list) whose first-range digest equals key.
  std::vector<const PageRecord*> records_with_key(const Digest& key) const {
    std::vector<const PageRecord*> out;
    for (Origin o : {Origin::Image, Origin::Module}) {
      const auto it = index_[slot(o)].by_key.find(key);
      if (it == index_[slot(o)].by_key.end()) continue;
      for (std::uint32_t i : it->second) out.push_back(&lists_[slot(o)][i]);
    }
    return out;
  }

  friend bool operator==(const CodeUsageDatabase& a, const CodeUsageDatabase& b) {
    return a.thresholds_ == b.thresholds_ && a.meta_ == b.meta_ && a.lists_ == b.lists_;
  }

 private:
  static constexpr std::size_t slot(Origin o) noexcept { return o == Origin::Image ? 0 : 1; }

  struct Index {
    // first-range offset -> ascending distinct first-range lengths
    std::map<std::uint32_t, std::vector<std::uint32_t>> shapes;
    // first-range digest -> ascending record positions
    std::unordered_map<Digest, std::vector<std::uint32_t>, DigestHash> by_key;
  };

  void build_index(Origin o) {
    Index& idx = index_[slot(o)];
    const auto& list = lists_[slot(o)];
    for (std::uint32_t i = 0; i < list.size(); ++i) {
      const auto& first = list[i].identity.ranges().front();
      idx.shapes[first.offset].push_back(first.length);
      idx.by_key[first.digest].push_back(i);
    }
    for (auto& [off, lengths] : idx.shapes) {
      std::sort(lengths.begin(), lengths.end());
      lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
    }
  }

  Thresholds thresholds_;
  DatabaseMetadata meta_;
  std::array<std::vector<PageRecord>, 2> lists_;
  std::array<Index, 2> index_;
};

// Pairs (owner, other) within one list where other's representative matches
// owner's identity. Only records carrying representatives participate.
struct IdentityConflict {
  Origin origin;
  std::size_t owner;
  std::size_t other;
};

inline std::vector<IdentityConflict> find_identity_conflicts(const CodeUsageDatabase& db) {
  std::vector<IdentityConflict> out;
  for (Origin o : {Origin::Image, Origin::Module}) {
    const auto list = db.records(o);
    std::vector<std::vector<std::uint8_t>> masks;
    masks.reserve(list.size());
    for (const auto& r : list) masks.push_back(r.identity.constant_mask());
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (!list[i].representative) continue;
      const auto& rep_i = *list[i].representative;
      for (std::size_t j = 0; j < list.size(); ++j) {
        if (i == j || !list[j].representative) continue;
        const auto& rep_j = *list[j].representative;
        // Equal constant bytes imply equal digests; confirm with the digests.
        bool agree = true;
        for (std::size_t b = 0; b < rep_i.size() && agree; ++b) agree = !masks[i][b] || rep_i[b] == rep_j[b];
        if (agree && list[i].identity.matches(rep_j)) out.push_back({o, i, j});
      }
    }
  }
  return out;
}

namespace detail {

inline constexpr std::array<char, 8> kDbMagic = {'K', 'A', 'S', 'R', 'D', 'B', '0', '1'};

class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    std::array<char, sizeof(T)> buf;
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((std::uint64_t{v} >> (8 * i)) & 0xff);
    out_.write(buf.data(), buf.size());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}
  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> buf;
    bytes(buf.data(), buf.size());
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{buf[i]} << (8 * i);
    return static_cast<T>(v);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated");
  }
  bool at_end() { return in_.peek() == std::istream::traits_type::eof(); }

 private:
  std::istream& in_;
};

}  // namespace detail

// Binary format v1, little-endian:
//   "KASRDB01" u32 page_size u32 constancy u32 max_dynamic_run u32 rounds
//   u16 label_len, label bytes
//   2 sections (image, module): u32 count, then per record
//     u8 flags, u32 first_seen_round, u16 range_count,
//     per range: u32 offset, u32 length, 32-byte digest
inline void save(const CodeUsageDatabase& db, std::ostream& out) {
  detail::LeWriter w(out);
  w.bytes(detail::kDbMagic.data(), detail::kDbMagic.size());
  w.put<std::uint32_t>(db.thresholds().page_size);
  w.put<std::uint32_t>(db.thresholds().constancy);
  w.put<std::uint32_t>(db.thresholds().max_dynamic_run);
  w.put<std::uint32_t>(db.metadata().rounds);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(db.metadata().label.size()));
  w.bytes(db.metadata().label.data(), db.metadata().label.size());
  for (Origin o : {Origin::Image, Origin::Module}) {
    const auto list = db.records(o);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
    for (const auto& r : list) {
      if (r.identity.ranges().size() > 0xffff) throw Error("too many ranges in one identity");
      w.put<std::uint8_t>(r.flags.bits());
      w.put<std::uint32_t>(r.first_seen_round);
      w.put<std::uint16_t>(static_cast<std::uint16_t>(r.identity.ranges().size()));
      for (const auto& rg : r.identity.ranges()) {
        w.put<std::uint32_t>(rg.offset);
        w.put<std::uint32_t>(rg.length);
        w.bytes(rg.digest.data(), rg.digest.size());
      }
    }
  }
  if (!out) throw Error("database write failed");
}

inline CodeUsageDatabase load(std::istream& in) {
  detail::LeReader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (!std::equal(magic.begin(), magic.begin() + 6, detail::kDbMagic.begin())) throw FormatError("bad magic");
  if (magic != detail::kDbMagic) throw FormatError("version mismatch");

  Thresholds t;
  t.page_size = r.get<std::uint32_t>();
  t.constancy = r.get<std::uint32_t>();
  t.max_dynamic_run = r.get<std::uint32_t>();
  DatabaseMetadata meta;
  meta.rounds = r.get<std::uint32_t>();
  meta.label.resize(r.get<std::uint16_t>());
  r.bytes(meta.label.data(), meta.label.size());

  std::array<std::vector<PageRecord>, 2> lists;
  for (Origin o : {Origin::Image, Origin::Module}) {
    const auto count = r.get<std::uint32_t>();
    auto& list = lists[o == Origin::Image ? 0 : 1];
    for (std::uint32_t i = 0; i < count; ++i) {
      PageRecord rec;
      rec.origin = o;
      rec.flags = PhaseFlags(r.get<std::uint8_t>());
      rec.first_seen_round = r.get<std::uint32_t>();
      std::vector<IdentityRange> ranges(r.get<std::uint16_t>());
      for (auto& rg : ranges) {
        rg.offset = r.get<std::uint32_t>();
        rg.length = r.get<std::uint32_t>();
        r.bytes(rg.digest.data(), rg.digest.size());
      }
      try {
        rec.identity = PageIdentity(std::move(ranges), t.page_size);
      } catch (const IdentityError& e) {
        throw FormatError(std::string("corrupt database: ") + e.what());
      }
      list.push_back(std::move(rec));
    }
  }
  if (!r.at_end()) throw FormatError("corrupt database: trailing bytes");

  // Canonical order is part of the format, not just a property of save().
  for (const auto& list : lists) {
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (!(list[i - 1].identity < list[i].identity)) throw FormatError("corrupt database: records out of order");
    }
  }
  try {
    return CodeUsageDatabase(t, std::move(meta), std::move(lists[0]), std::move(lists[1]));
  } catch (const InvariantError& e) {
    throw FormatError(e.what());
  }
}

inline void save_file(const CodeUsageDatabase& db, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  save(db, out);
}

inline CodeUsageDatabase load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return load(in);
}

}  // namespace kasr
