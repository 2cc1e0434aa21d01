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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/digest.hpp"
#include "kasr/error.hpp"

namespace kasr {

struct ByteRange {
  std::uint32_t offset = 0;
  std::uint32_t length = 0;

  std::uint32_t end() const noexcept { return offset + length; }
  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

// Per-byte constancy of a logical page across its dumps. ranges() are the
// maximal runs of constant bytes, in offset order.
class ConstantByteMap {
 public:
  ConstantByteMap() = default;

  // mask[i] != 0 marks byte i constant.
  explicit ConstantByteMap(std::vector<std::uint8_t> mask) : mask_(std::move(mask)) {
    for (std::uint32_t i = 0; i < mask_.size();) {
      if (!mask_[i]) {
        std::uint32_t j = i;
        while (j < mask_.size() && !mask_[j]) ++j;
        max_dynamic_run_ = std::max(max_dynamic_run_, j - i);
        i = j;
        continue;
      }
      std::uint32_t j = i;
      while (j < mask_.size() && mask_[j]) ++j;
      ranges_.push_back({i, j - i});
      constant_bytes_ += j - i;
      i = j;
    }
  }

  static ConstantByteMap all_constant(std::uint32_t page_size) {
    return ConstantByteMap(std::vector<std::uint8_t>(page_size, 1));
  }

  std::uint32_t page_size() const noexcept { return static_cast<std::uint32_t>(mask_.size()); }
  bool is_constant(std::size_t i) const { return mask_.at(i) != 0; }
  std::span<const std::uint8_t> mask() const noexcept { return mask_; }
  const std::vector<ByteRange>& ranges() const noexcept { return ranges_; }
  std::uint32_t constant_bytes() const noexcept { return constant_bytes_; }
  std::uint32_t max_dynamic_run() const noexcept { return max_dynamic_run_; }

  friend bool operator==(const ConstantByteMap& a, const ConstantByteMap& b) { return a.mask_ == b.mask_; }

 private:
  std::vector<std::uint8_t> mask_;
  std::vector<ByteRange> ranges_;
  std::uint32_t constant_bytes_ = 0;
  std::uint32_t max_dynamic_run_ = 0;
};

// A byte is constant iff it is equal across every dump.
template <typename Dumps>
ConstantByteMap build_constant_map(const Dumps& dumps) {
  if (std::size(dumps) < 2) throw Error("build_constant_map needs at least 2 dumps");
  const auto& first = *std::begin(dumps);
  const std::size_t n = std::size(first);
  std::vector<std::uint8_t> mask(n, 1);
  for (const auto& d : dumps) {
    if (std::size(d) != n) throw Error("build_constant_map: dump length mismatch");
    for (std::size_t i = 0; i < n; ++i) mask[i] &= static_cast<std::uint8_t>(d[i] == first[i]);
  }
  return ConstantByteMap(std::move(mask));
}

struct IdentityRange {
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
  Digest digest{};

  friend bool operator==(const IdentityRange&, const IdentityRange&) = default;
  friend auto operator<=>(const IdentityRange& a, const IdentityRange& b) {
    return std::tie(a.digest, a.offset, a.length) <=> std::tie(b.digest, b.offset, b.length);
  }
};

// Randomization-stable fingerprint of a logical page: one SHA-256 digest
// per maximal constant range.
class PageIdentity {
 public:
  PageIdentity() = default;

  // Checks range structure (non-empty, sorted, disjoint, separated by at
  // least one dynamic byte, inside the page). Threshold checks are
  // separate; see check_thresholds().
  PageIdentity(std::vector<IdentityRange> ranges, std::uint32_t page_size)
      : ranges_(std::move(ranges)), page_size_(page_size) {
    if (ranges_.empty()) throw IdentityError("identity has no constant ranges");
    std::uint32_t cursor = 0;
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
      const auto& r = ranges_[i];
      if (r.length == 0) throw IdentityError("empty identity range");
      if (i > 0 && r.offset <= cursor) throw IdentityError("identity ranges overlap or touch");
      if (std::uint64_t{r.offset} + r.length > page_size_) throw IdentityError("identity range exceeds page");
      max_dynamic_run_ = std::max(max_dynamic_run_, r.offset - (i == 0 ? 0 : cursor));
      cursor = r.offset + r.length;
      constant_bytes_ += r.length;
    }
    max_dynamic_run_ = std::max(max_dynamic_run_, page_size_ - cursor);
  }

  const std::vector<IdentityRange>& ranges() const noexcept { return ranges_; }
  std::uint32_t page_size() const noexcept { return page_size_; }
  std::uint32_t constant_bytes() const noexcept { return constant_bytes_; }
  std::uint32_t max_dynamic_run() const noexcept { return max_dynamic_run_; }

  // Digest of the first constant range: the lookup/index key.
  const Digest& key() const { return ranges_.front().digest; }

  void check_thresholds(const Thresholds& t) const {
    if (page_size_ != t.page_size) throw IdentityError("not identifiable: page size mismatch");
    if (constant_bytes_ < t.constancy) {
      throw IdentityError("not identifiable: " + std::to_string(constant_bytes_) + " constant bytes < " +
                          std::to_string(t.constancy));
    }
    if (max_dynamic_run_ > t.max_dynamic_run) {
      throw IdentityError("not identifiable: dynamic run of " + std::to_string(max_dynamic_run_) +
                          " bytes > " + std::to_string(t.max_dynamic_run));
    }
  }

  // True iff every range digest recomputed over content equals the stored one.
  bool matches(ByteView content) const {
    if (content.size() != page_size_ || ranges_.empty()) return false;
    for (const auto& r : ranges_) {
      if (sha256(content.subspan(r.offset, r.length)) != r.digest) return false;
    }
    return true;
  }

  // Byte mask of constant positions (derived from ranges).
  std::vector<std::uint8_t> constant_mask() const {
    std::vector<std::uint8_t> mask(page_size_, 0);
    for (const auto& r : ranges_) std::fill_n(mask.begin() + r.offset, r.length, std::uint8_t{1});
    return mask;
  }

  friend bool operator==(const PageIdentity& a, const PageIdentity& b) {
    return a.page_size_ == b.page_size_ && a.ranges_ == b.ranges_;
  }
  friend auto operator<=>(const PageIdentity& a, const PageIdentity& b) {
    return a.ranges_ <=> b.ranges_;
  }

 private:
  std::vector<IdentityRange> ranges_;
  std::uint32_t page_size_ = 0;
  std::uint32_t constant_bytes_ = 0;
  std::uint32_t max_dynamic_run_ = 0;
};

inline bool matches(const PageIdentity& id, ByteView content) { return id.matches(content); }

// Hashes the representative's bytes in every constant range of map, then
// enforces the identifiability thresholds.
inline PageIdentity derive_identity(const ConstantByteMap& map, ByteView representative, const Thresholds& t) {
  if (representative.size() != map.page_size()) throw Error("derive_identity: length mismatch");
  if (map.page_size() != t.page_size) throw IdentityError("not identifiable: page size mismatch");
  if (map.constant_bytes() < t.constancy) {
    throw IdentityError("not identifiable: " + std::to_string(map.constant_bytes()) + " constant bytes < " +
                        std::to_string(t.constancy));
  }
  if (map.max_dynamic_run() > t.max_dynamic_run) {
    throw IdentityError("not identifiable: dynamic run of " + std::to_string(map.max_dynamic_run()) +
                        " bytes > " + std::to_string(t.max_dynamic_run));
  }
  std::vector<IdentityRange> ranges;
  ranges.reserve(map.ranges().size());
  for (const auto& r : map.ranges()) {
    ranges.push_back({r.offset, r.length, sha256(representative.subspan(r.offset, r.length))});
  }
  PageIdentity id(std::move(ranges), map.page_size());
  id.check_thresholds(t);
  return id;
}

// Cross-round sameness test: at least t.constancy equal bytes and no run of
// differing bytes longer than t.max_dynamic_run. Exits early on failure.
inline bool same_logical_page(ByteView a, ByteView b, const Thresholds& t) {
  if (a.size() != b.size()) return false;
  const std::size_t budget = a.size() >= t.constancy ? a.size() - t.constancy : 0;
  if (a.size() < t.constancy) return false;
  std::size_t differing = 0;
  std::uint32_t run = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) {
      if (++differing > budget || ++run > t.max_dynamic_run) return false;
    } else {
      run = 0;
    }
  }
  return true;
}

struct RoundObservation {
  std::uint32_t round_index = 0;
  PageContent content;
};

// Greedy first-fit clustering in input order; a cluster's representative is
// its founding observation. When warnings is non-null, a note is appended
// for every cluster that absorbs two observations from the same round.
inline std::vector<std::vector<std::size_t>> cluster_cross_round(std::span<const RoundObservation> obs,
                                                                 const Thresholds& t,
                                                                 std::vector<std::string>* warnings = nullptr) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    bool placed = false;
    for (std::size_t c = 0; c < clusters.size() && !placed; ++c) {
      const auto& rep = obs[clusters[c].front()];
      if (!same_logical_page(rep.content, obs[i].content, t)) continue;
      if (warnings) {
        for (std::size_t m : clusters[c]) {
          if (obs[m].round_index == obs[i].round_index) {
            warnings->push_back("near-duplicate pages in round " + std::to_string(obs[i].round_index) +
                                " merged into cluster " + std::to_string(c));
            break;
          }
        }
      }
      clusters[c].push_back(i);
      placed = true;
    }
    if (!placed) clusters.push_back({i});
  }
  return clusters;
}

}  // namespace kasr
