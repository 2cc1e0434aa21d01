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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "kasr/kasr.hpp"
#include "test_util.hpp"

namespace kasr {
namespace {

using testing::kR;
using testing::kS;
using testing::kSR;

struct Row {
  const char* label;
  std::uint64_t total, used, runtime;
  int dep, seg;
};

constexpr Row kReductionTable[] = {
    {"SPECint", 2227, 1034, 808, 54, 64}, {"httperf", 2236, 1026, 763, 54, 66}, {"bonnie++", 2235, 1034, 761, 54, 66},
    {"LAMP", 2238, 1043, 817, 53, 63},    {"NFS", 2395, 1096, 939, 54, 61},
};

TEST(ReductionPct, ReproducesTableCells) {
  for (const auto& r : kReductionTable) {
    EXPECT_EQ(reduction_pct(r.used, r.total), r.dep) << r.label;
    EXPECT_EQ(reduction_pct(r.runtime, r.total), r.seg) << r.label;
  }
}

TEST(ReductionPct, AgreesWithFloatingRounding) {
  for (std::uint64_t total = 1; total < 300; ++total) {
    for (std::uint64_t used = 0; used <= total; ++used) {
      const double exact = 100.0 * (1.0 - static_cast<double>(used) / static_cast<double>(total));
      // Exact halves only occur when 200*(total-used) is an odd multiple of total.
      if ((200 * (total - used)) % total == 0 && ((200 * (total - used)) / total) % 2 == 1) {
        EXPECT_EQ(reduction_pct(used, total), static_cast<int>(std::ceil(exact)));
      } else {
        EXPECT_EQ(reduction_pct(used, total), static_cast<int>(std::lround(exact)));
      }
    }
  }
  EXPECT_THROW(reduction_pct(3, 2), Error);
  EXPECT_THROW(reduction_pct(0, 0), Error);
}

TEST(ComputeReduction, FromDatabase) {
  std::mt19937_64 rng(1);
  const auto db = testing::make_db(rng, testing::repeat_flags({{kS, 3}, {kR, 4}, {kSR, 2}}), {kR});
  const auto rep = compute_reduction(db, 20);
  EXPECT_EQ(rep.used_pages, 10u);
  EXPECT_EQ(rep.phase_pages[0], 5u);
  EXPECT_EQ(rep.segmented_pages(), 7u);
  EXPECT_EQ(rep.deprivation_reduction_pct, 50);
  EXPECT_EQ(rep.segmentation_reduction_pct, 65);
  EXPECT_THROW(compute_reduction(db, 9), Error);
  EXPECT_EQ(compute_reduction(db, 20, Phase::Startup).segmentation_reduction_pct, 75);
}

TEST(ComputeReduction, AllUsedAllPhases) {
  std::mt19937_64 rng(2);
  const auto db = testing::make_db(rng, testing::repeat_flags({{testing::kAllPhases, 6}}));
  const auto rep = compute_reduction(db, 6);
  EXPECT_EQ(rep.deprivation_reduction_pct, 0);
  EXPECT_EQ(rep.segmentation_reduction_pct, 0);
}

TEST(ComputeReduction, TableRowsFromCounts) {
  for (const auto& r : kReductionTable) {
    const auto rep = make_reduction_report(r.label, r.total, r.used, {0, r.runtime, 0});
    EXPECT_EQ(rep.deprivation_reduction_pct, r.dep);
    EXPECT_EQ(rep.segmentation_reduction_pct, r.seg);
  }
}

CveMap map_of(std::vector<std::vector<Digest>> pages) {
  CveMap m;
  int n = 0;
  for (auto& p : pages) m.push_back({"CVE-2016-" + std::to_string(1000 + n++), std::move(p), ""});
  return m;
}

TEST(Cve, UntrainedAndStartupOnlyPages) {
  std::mt19937_64 rng(3);
  std::vector<PageContent> c;
  const auto db = testing::make_db(rng, {kS, kR}, {}, &c);
  const Digest startup_key = db.lookup(c[0], Origin::Image)->flags == kS ? sha256(c[0]) : sha256(c[1]);
  const Digest runtime_key = startup_key == sha256(c[0]) ? sha256(c[1]) : sha256(c[0]);
  const Digest untrained = sha256(testing::random_page(rng));
  const auto rep = cve_reduction(db, map_of({{untrained}, {startup_key}, {runtime_key}, {startup_key, runtime_key}}));
  ASSERT_EQ(rep.entries.size(), 4u);
  EXPECT_TRUE(rep.entries[0].removed_by_deprivation);
  EXPECT_EQ(rep.entries[0].unresolved.size(), 1u);
  EXPECT_FALSE(rep.entries[1].removed_by_deprivation);
  EXPECT_TRUE(rep.entries[1].removed_by_segmentation);
  EXPECT_FALSE(rep.entries[2].removed_by_segmentation);
  EXPECT_FALSE(rep.entries[3].removed_by_segmentation);
  EXPECT_EQ(rep.removed_by_deprivation, 1u);
  EXPECT_EQ(rep.removed_by_segmentation, 2u);
  EXPECT_EQ(rep.deprivation_pct, 25);
  EXPECT_EQ(rep.segmentation_pct, 50);
}

TEST(Cve, FourOfTenIsFortyPercent) {
  std::mt19937_64 rng(4);
  std::vector<PageContent> c;
  const auto db = testing::make_db(rng, testing::repeat_flags({{kR, 6}}), {}, &c);
  std::vector<std::vector<Digest>> pages;
  for (int i = 0; i < 6; ++i) pages.push_back({sha256(c[static_cast<std::size_t>(i)])});
  for (int i = 0; i < 4; ++i) pages.push_back({sha256(testing::random_page(rng))});
  const auto rep = cve_reduction(db, map_of(pages));
  EXPECT_EQ(rep.removed_by_deprivation, 4u);
  EXPECT_EQ(rep.deprivation_pct, 40);
  EXPECT_THROW(cve_reduction(db, {}), Error);
}

TEST(Cve, SegmentationRemovesSuperset) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PhaseFlags> flags;
    for (int i = 0; i < 8; ++i) flags.push_back(PhaseFlags(static_cast<std::uint8_t>(1 + rng() % 7)));
    std::vector<PageContent> c;
    const auto db = testing::make_db(rng, flags, {}, &c);
    std::vector<std::vector<Digest>> pages;
    for (int k = 0; k < 6; ++k) {
      std::vector<Digest> refs;
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int j = 0; j < n; ++j) {
        refs.push_back(rng() % 4 == 0 ? sha256(testing::random_page(rng)) : sha256(c[rng() % c.size()]));
      }
      pages.push_back(refs);
    }
    const auto rep = cve_reduction(db, map_of(pages));
    for (const auto& e : rep.entries) {
      if (e.removed_by_deprivation) {
        EXPECT_TRUE(e.removed_by_segmentation);
      }
    }
    EXPECT_GE(rep.removed_by_segmentation, rep.removed_by_deprivation);
  }
}

TEST(Cve, ParseMap) {
  const std::string hex(64, 'a');
  const auto m = parse_cve_map(nlohmann::json::parse(R"([{"cve": "CVE-1", "pages": [")" + hex +
                                                      R"("], "note": "n"}, {"cve": "CVE-2", "pages": []}])"));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].note, "n");
  EXPECT_EQ(m[0].pages.size(), 1u);
  EXPECT_THROW(parse_cve_map(nlohmann::json::parse(R"([{"cve": "x", "pages": ["zz"]}])")), Error);
  EXPECT_THROW(parse_cve_map(nlohmann::json::parse(R"({"cve": "x"})")), Error);
  EXPECT_THROW(parse_cve_map(nlohmann::json::parse(R"([{"pages": []}])")), Error);
}

EnforcementReport report_with_violations(std::vector<std::size_t> at, std::size_t events = 50) {
  EnforcementReport r;
  r.events = events;
  for (auto i : at) {
    ViolationRecord v;
    v.event_index = i;
    r.violations.push_back(v);
  }
  return r;
}

TEST(RootkitSummary, Rows) {
  std::vector<ScenarioReport> reports;
  for (const auto& name : kKnownRootkits) {
    reports.push_back({std::string(name), "LKM", {40, 41}, report_with_violations({40, 41})});
  }
  reports.push_back({"clean", "", {}, report_with_violations({})});
  reports.push_back({"collision", "LKM", {10}, report_with_violations({})});
  reports.push_back({"unrelated-violation", "LKM", {10}, report_with_violations({3})});
  EnforcementReport halted = report_with_violations({3});
  halted.halted = true;
  halted.halted_at = 3;
  reports.push_back({"stopped-early", "LKM", {10}, halted});
  const auto rows = rootkit_summary(reports);
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_TRUE(rows[i].attack_failed);
    EXPECT_EQ(rows[i].injected_violations, 2u);
  }
  EXPECT_FALSE(rows[6].attack_failed);
  EXPECT_FALSE(rows[6].identity_collision);
  EXPECT_FALSE(rows[7].attack_failed);
  EXPECT_TRUE(rows[7].identity_collision);
  EXPECT_FALSE(rows[8].attack_failed);
  EXPECT_TRUE(rows[8].identity_collision);
  EXPECT_FALSE(rows[9].identity_collision);
}

TEST(Emit, ReductionTableCsv) {
  std::vector<ReductionReport> rows;
  for (const auto& r : kReductionTable) rows.push_back(make_reduction_report(r.label, r.total, r.used, {0, r.runtime, 0}));
  const std::string csv = render_report(std::span<const ReductionReport>(rows), ReportFormat::Csv);
  EXPECT_EQ(csv,
            "Cases,Orig,AftPerDep,Red%,AftLifSeg,Red%\n"
            "SPECint,2227,1034,54%,808,64%\n"
            "httperf,2236,1026,54%,763,66%\n"
            "bonnie++,2235,1034,54%,761,66%\n"
            "LAMP,2238,1043,53%,817,63%\n"
            "NFS,2395,1096,54%,939,61%\n");
  EXPECT_EQ(render_report(std::span<const ReductionReport>(rows), ReportFormat::Json),
            render_report(std::span<const ReductionReport>(rows), ReportFormat::Json));
  const auto text = render_report(std::span<const ReductionReport>(rows), ReportFormat::Text);
  EXPECT_NE(text.find("SPECint"), std::string::npos);
}

TEST(Emit, EmptyReportsAreHeadersOnly) {
  const std::vector<ReductionReport> none;
  EXPECT_EQ(render_report(std::span<const ReductionReport>(none), ReportFormat::Csv),
            "Cases,Orig,AftPerDep,Red%,AftLifSeg,Red%\n");
  const std::vector<RootkitRow> no_rows;
  EXPECT_EQ(render_report(std::span<const RootkitRow>(no_rows), ReportFormat::Csv),
            "Rootkit,AttackVector,AttackFailed,Note\n");
  EXPECT_EQ(render_report(std::span<const ReductionReport>(none), ReportFormat::Json), "[]\n");
}

TEST(Emit, RootkitTable) {
  const std::vector<RootkitRow> rows{{"adore-ng", "LKM", true, false, 2}, {"odd,name", "LKM", false, true, 0}};
  EXPECT_EQ(render_report(std::span<const RootkitRow>(rows), ReportFormat::Csv),
            "Rootkit,AttackVector,AttackFailed,Note\n"
            "adore-ng,LKM,yes,\n"
            "\"odd,name\",LKM,no,identity collision\n");
}

TEST(Emit, FormatParsing) {
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::Csv);
  EXPECT_EQ(report_format_from_string("json"), ReportFormat::Json);
  EXPECT_EQ(report_format_from_string("text"), ReportFormat::Text);
  EXPECT_THROW(report_format_from_string("xml"), Error);
}

TEST(Emit, EnforcementReportRenderings) {
  auto rep = report_with_violations({4, 9});
  rep.label = "x";
  for (auto fmt : {ReportFormat::Text, ReportFormat::Json, ReportFormat::Csv}) {
    EXPECT_EQ(render_report(rep, fmt), render_report(rep, fmt));
  }
  const auto csv = render_report(rep, ReportFormat::Csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

}  // namespace
}  // namespace kasr
