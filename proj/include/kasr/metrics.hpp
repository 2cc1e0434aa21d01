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
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kasr/config.hpp"
#include "kasr/database.hpp"
#include "kasr/digest.hpp"
#include "kasr/enforcement.hpp"
#include "kasr/error.hpp"

namespace kasr {

// round(100 * (1 - used/total)) with halves rounded up, in exact integer
// arithmetic.
inline int reduction_pct(std::uint64_t used, std::uint64_t total) {
  if (total == 0) throw Error("total_pages must be positive");
  if (used > total) throw Error("used pages exceed total_pages");
  return static_cast<int>((200 * (total - used) + total) / (2 * total));
}

struct ReductionReport {
  std::string label;
  std::uint64_t total_pages = 0;
  std::uint64_t used_pages = 0;
  std::array<std::uint64_t, 3> phase_pages{};  // indexed by Phase
  Phase segmentation_phase = Phase::Runtime;
  int deprivation_reduction_pct = 0;
  int segmentation_reduction_pct = 0;

  std::uint64_t segmented_pages() const noexcept { return phase_pages[static_cast<std::size_t>(segmentation_phase)]; }

  friend bool operator==(const ReductionReport&, const ReductionReport&) = default;
};

inline ReductionReport make_reduction_report(std::string label, std::uint64_t total, std::uint64_t used,
                                             std::array<std::uint64_t, 3> phase_pages,
                                             Phase segmentation_phase = Phase::Runtime) {
  if (total < used) throw Error("total_pages (" + std::to_string(total) + ") below used pages (" +
                                std::to_string(used) + ")");
  for (auto n : phase_pages) {
    if (n > used) throw InvariantError("phase page count exceeds used pages");
  }
  ReductionReport r{std::move(label), total, used, phase_pages, segmentation_phase, 0, 0};
  r.deprivation_reduction_pct = reduction_pct(used, total);
  r.segmentation_reduction_pct = reduction_pct(r.segmented_pages(), total);
  return r;
}

inline ReductionReport compute_reduction(const CodeUsageDatabase& db, std::uint64_t total_pages,
                                         Phase segmentation_phase = Phase::Runtime) {
  std::array<std::uint64_t, 3> phase_pages{};
  for (Origin o : {Origin::Image, Origin::Module}) {
    for (const auto& r : db.records(o)) {
      for (Phase p : {Phase::Startup, Phase::Runtime, Phase::Shutdown}) {
        if (r.flags.contains(p)) ++phase_pages[static_cast<std::size_t>(p)];
      }
    }
  }
  return make_reduction_report(db.metadata().label, total_pages, db.size(), phase_pages, segmentation_phase);
}

// ---------------------------------------------------------------------------
// CVE reduction

struct CveEntry {
  std::string cve;
  std::vector<Digest> pages;
  std::string note;

  friend bool operator==(const CveEntry&, const CveEntry&) = default;
};

using CveMap = std::vector<CveEntry>;

inline CveMap parse_cve_map(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("CVE map must be a JSON array");
  CveMap out;
  for (const auto& e : j) {
    CveEntry c;
    try {
      c.cve = e.at("cve").get<std::string>();
      for (const auto& h : e.at("pages")) {
        Digest d;
        if (!digest_from_hex(h.get<std::string>(), d)) throw Error("bad page key '" + h.get<std::string>() + "'");
        c.pages.push_back(d);
      }
      if (e.contains("note")) c.note = e.at("note").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("malformed CVE map entry: ") + ex.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline CveMap load_cve_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CVE map '" + path + "'");
  try {
    return parse_cve_map(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error("CVE map '" + path + "' is not valid JSON: " + ex.what());
  }
}

struct CveStatus {
  std::string cve;
  std::string note;
  bool removed_by_deprivation = false;
  bool removed_by_segmentation = false;
  // Keys with no record in the database (the page was never used) and
  // keys shared by several records.
  std::vector<Digest> unresolved;
  std::vector<Digest> ambiguous;

  friend bool operator==(const CveStatus&, const CveStatus&) = default;
};

struct CveReport {
  Phase segmentation_phase = Phase::Runtime;
  std::vector<CveStatus> entries;
  std::size_t removed_by_deprivation = 0;
  std::size_t removed_by_segmentation = 0;
  int deprivation_pct = 0;
  int segmentation_pct = 0;

  friend bool operator==(const CveReport&, const CveReport&) = default;
};

// A CVE is removed in a view when none of its pages stays executable
// there. Ambiguous keys count as executable if any candidate is.
inline CveReport cve_reduction(const CodeUsageDatabase& db, const CveMap& map,
                               Phase segmentation_phase = Phase::Runtime) {
  if (map.empty()) throw Error("CVE map is empty");
  CveReport rep;
  rep.segmentation_phase = segmentation_phase;
  for (const auto& c : map) {
    CveStatus s{c.cve, c.note, true, true, {}, {}};
    for (const auto& key : c.pages) {
      const auto recs = db.records_with_key(key);
      if (recs.empty()) {
        s.unresolved.push_back(key);
        continue;
      }
      if (recs.size() > 1) s.ambiguous.push_back(key);
      s.removed_by_deprivation = false;
      for (const auto* r : recs) {
        if (r->flags.contains(segmentation_phase)) s.removed_by_segmentation = false;
      }
    }
    rep.removed_by_deprivation += s.removed_by_deprivation;
    rep.removed_by_segmentation += s.removed_by_segmentation;
    rep.entries.push_back(std::move(s));
  }
  const auto n = rep.entries.size();
  rep.deprivation_pct = 100 - reduction_pct(rep.removed_by_deprivation, n);
  rep.segmentation_pct = 100 - reduction_pct(rep.removed_by_segmentation, n);
  return rep;
}

// ---------------------------------------------------------------------------
// Rootkit summary

struct ScenarioReport {
  std::string scenario;
  std::string vector;  // empty for a clean replay
  std::vector<std::size_t> injected_event_indices;
  EnforcementReport report;
};

struct RootkitRow {
  std::string scenario;
  std::string vector;
  bool attack_failed = false;
  bool identity_collision = false;
  std::size_t injected_violations = 0;

  friend bool operator==(const RootkitRow&, const RootkitRow&) = default;
};

// An attack failed when at least one injected exec raised a violation. An
// injected exec that was replayed and allowed means the injected content
// matched a trained identity; that row is flagged as a collision.
inline std::vector<RootkitRow> rootkit_summary(std::span<const ScenarioReport> reports) {
  std::vector<RootkitRow> rows;
  for (const auto& s : reports) {
    RootkitRow row{s.scenario, s.vector, false, false, 0};
    const auto& inj = s.injected_event_indices;
    for (const auto& v : s.report.violations) {
      if (std::find(inj.begin(), inj.end(), v.event_index) != inj.end()) ++row.injected_violations;
    }
    row.attack_failed = row.injected_violations > 0;
    if (!row.attack_failed && !inj.empty()) {
      const std::size_t replayed = s.report.halted_at ? *s.report.halted_at + 1 : s.report.events;
      row.identity_collision = std::any_of(inj.begin(), inj.end(), [&](std::size_t i) { return i < replayed; });
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat : std::uint8_t { Text, Json, Csv };

constexpr std::string_view to_string(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::Text: return "text";
    case ReportFormat::Json: return "json";
    case ReportFormat::Csv: return "csv";
  }
  return "?";
}

inline ReportFormat report_format_from_string(std::string_view s) {
  return detail::enum_from_string(s, std::array{ReportFormat::Text, ReportFormat::Json, ReportFormat::Csv},
                                  "report format");
}

inline nlohmann::json to_json(const ReductionReport& r) {
  return nlohmann::json{{"label", r.label},
                        {"total_pages", r.total_pages},
                        {"used_pages", r.used_pages},
                        {"phase_pages",
                         {{"startup", r.phase_pages[0]}, {"runtime", r.phase_pages[1]}, {"shutdown", r.phase_pages[2]}}},
                        {"segmentation_phase", to_string(r.segmentation_phase)},
                        {"segmented_pages", r.segmented_pages()},
                        {"deprivation_reduction_pct", r.deprivation_reduction_pct},
                        {"segmentation_reduction_pct", r.segmentation_reduction_pct}};
}

inline nlohmann::json to_json(const CveReport& r) {
  using nlohmann::json;
  auto hexes = [](const std::vector<Digest>& ds) {
    json a = json::array();
    for (const auto& d : ds) a.push_back(to_hex(d));
    return a;
  };
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back(json{{"cve", e.cve},
                           {"note", e.note},
                           {"removed_by_deprivation", e.removed_by_deprivation},
                           {"removed_by_segmentation", e.removed_by_segmentation},
                           {"unresolved", hexes(e.unresolved)},
                           {"ambiguous", hexes(e.ambiguous)}});
  }
  return json{{"segmentation_phase", to_string(r.segmentation_phase)},
              {"total", r.entries.size()},
              {"removed_by_deprivation", r.removed_by_deprivation},
              {"removed_by_segmentation", r.removed_by_segmentation},
              {"deprivation_pct", r.deprivation_pct},
              {"segmentation_pct", r.segmentation_pct},
              {"entries", std::move(entries)}};
}

inline nlohmann::json to_json(const RootkitRow& r) {
  return nlohmann::json{{"scenario", r.scenario},
                        {"vector", r.vector},
                        {"attack_failed", r.attack_failed},
                        {"identity_collision", r.identity_collision},
                        {"injected_violations", r.injected_violations}};
}

namespace detail {

inline void write_csv_field(std::ostream& out, std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

inline std::string pct(int p) { return std::to_string(p) + "%"; }

inline const char* yes_no(bool b) { return b ? "yes" : "no"; }

inline std::string rootkit_note(const RootkitRow& r) { return r.identity_collision ? "identity collision" : ""; }

}  // namespace detail

// Table of reduction rows, one per workload.
inline void emit_report(std::span<const ReductionReport> rows, ReportFormat fmt, std::ostream& out) {
  switch (fmt) {
    case ReportFormat::Json: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& r : rows) a.push_back(to_json(r));
      out << a.dump(2) << '\n';
      return;
    }
    case ReportFormat::Csv:
      out << "Cases,Orig,AftPerDep,Red%,AftLifSeg,Red%\n";
      for (const auto& r : rows) {
        detail::write_csv_field(out, r.label);
        out << ',' << r.total_pages << ',' << r.used_pages << ',' << detail::pct(r.deprivation_reduction_pct) << ','
            << r.segmented_pages() << ',' << detail::pct(r.segmentation_reduction_pct) << '\n';
      }
      return;
    case ReportFormat::Text:
      out << std::left << std::setw(16) << "Cases" << std::right << std::setw(8) << "Orig" << std::setw(11)
          << "AftPerDep" << std::setw(6) << "Red%" << std::setw(11) << "AftLifSeg" << std::setw(6) << "Red%" << '\n';
      for (const auto& r : rows) {
        out << std::left << std::setw(16) << r.label << std::right << std::setw(8) << r.total_pages << std::setw(11)
            << r.used_pages << std::setw(6) << detail::pct(r.deprivation_reduction_pct) << std::setw(11)
            << r.segmented_pages() << std::setw(6) << detail::pct(r.segmentation_reduction_pct) << '\n';
      }
      return;
  }
}

inline void emit_report(std::span<const RootkitRow> rows, ReportFormat fmt, std::ostream& out) {
  switch (fmt) {
    case ReportFormat::Json: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& r : rows) a.push_back(to_json(r));
      out << a.dump(2) << '\n';
      return;
    }
    case ReportFormat::Csv:
      out << "Rootkit,AttackVector,AttackFailed,Note\n";
      for (const auto& r : rows) {
        detail::write_csv_field(out, r.scenario);
        out << ',';
        detail::write_csv_field(out, r.vector);
        out << ',' << detail::yes_no(r.attack_failed) << ',';
        detail::write_csv_field(out, detail::rootkit_note(r));
        out << '\n';
      }
      return;
    case ReportFormat::Text:
      out << std::left << std::setw(16) << "Rootkit" << std::setw(14) << "AttackVector" << std::setw(14)
          << "AttackFailed" << "Note" << '\n';
      for (const auto& r : rows) {
        out << std::left << std::setw(16) << r.scenario << std::setw(14) << r.vector << std::setw(14)
            << detail::yes_no(r.attack_failed) << detail::rootkit_note(r) << '\n';
      }
      return;
  }
}

inline void emit_report(const CveReport& rep, ReportFormat fmt, std::ostream& out) {
  auto status = [](bool removed) { return removed ? "removed" : "retained"; };
  switch (fmt) {
    case ReportFormat::Json:
      out << to_json(rep).dump(2) << '\n';
      return;
    case ReportFormat::Csv:
      out << "CVE,Deprivation,Segmentation,Unresolved,Ambiguous,Note\n";
      for (const auto& e : rep.entries) {
        detail::write_csv_field(out, e.cve);
        out << ',' << status(e.removed_by_deprivation) << ',' << status(e.removed_by_segmentation) << ','
            << e.unresolved.size() << ',' << e.ambiguous.size() << ',';
        detail::write_csv_field(out, e.note);
        out << '\n';
      }
      return;
    case ReportFormat::Text:
      out << std::left << std::setw(20) << "CVE" << std::setw(14) << "Deprivation" << std::setw(14) << "Segmentation"
          << "Note" << '\n';
      for (const auto& e : rep.entries) {
        out << std::left << std::setw(20) << e.cve << std::setw(14) << status(e.removed_by_deprivation)
            << std::setw(14) << status(e.removed_by_segmentation) << e.note << '\n';
      }
      if (!rep.entries.empty()) {
        out << "removed: " << rep.removed_by_deprivation << '/' << rep.entries.size() << " ("
            << detail::pct(rep.deprivation_pct) << ") after deprivation, " << rep.removed_by_segmentation << '/'
            << rep.entries.size() << " (" << detail::pct(rep.segmentation_pct) << ") after "
            << to_string(rep.segmentation_phase) << " segmentation\n";
      }
      return;
  }
}

inline void emit_report(const EnforcementReport& rep, ReportFormat fmt, std::ostream& out) {
  switch (fmt) {
    case ReportFormat::Json:
      out << to_json(rep).dump(2) << '\n';
      return;
    case ReportFormat::Csv:
      out << "event_index,pfn,phase,origin,digest,reason,disposition\n";
      for (const auto& v : rep.violations) {
        out << v.event_index << ',' << v.pfn << ',' << to_string(v.phase) << ',' << to_string(v.origin) << ','
            << to_hex(v.digest) << ',' << to_string(v.reason) << ',' << to_string(v.disposition) << '\n';
      }
      return;
    case ReportFormat::Text:
      out << "label " << rep.label << " round " << rep.round_index << " policy " << to_string(rep.policy)
          << (rep.deprivation_only ? " (deprivation only)" : "") << '\n';
      out << "events " << rep.events << ", kernel execs " << rep.kernel_execs << ", allowed " << rep.allowed
          << ", violations " << rep.violations.size() << '\n';
      for (const auto& s : rep.switch_stats) {
        out << "switch " << to_string(s.from) << " -> " << to_string(s.to) << ": revoked " << s.revoked
            << ", granted " << s.granted << ", retained " << s.retained << '\n';
      }
      for (const auto& v : rep.violations) {
        out << "violation at event " << v.event_index << " pfn 0x" << std::hex << v.pfn << std::dec << " "
            << to_string(v.reason) << " in " << to_string(v.phase) << " (" << to_string(v.origin) << ", "
            << to_string(v.disposition) << ")\n";
      }
      out << "final phase " << to_string(rep.final_phase);
      if (rep.halted_at) out << ", halted at event " << *rep.halted_at;
      out << '\n';
      return;
  }
}

template <typename Report>
std::string render_report(const Report& r, ReportFormat fmt) {
  std::ostringstream out;
  emit_report(r, fmt, out);
  return out.str();
}

}  // namespace kasr
