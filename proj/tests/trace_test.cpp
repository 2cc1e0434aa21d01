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

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "kasr/kasr.hpp"
#include "test_util.hpp"

namespace kasr {
namespace {

std::string write(const Round& r) {
  std::ostringstream out;
  write_trace_round(r, out);
  return out.str();
}

Round parse(const std::string& s) {
  std::istringstream in(s);
  return parse_trace_round(in);
}

std::string header(std::uint32_t page_size = 4096) {
  return "KASR-TRACE v1 page_size=" + std::to_string(page_size) + " label=t round=0\n";
}

TEST(TraceParse, MinimalExecLine) {
  const std::string b64 = base64_encode(PageContent(4096, 0));
  Round r = parse(header() + "EXEC\t5\tkernel\timage\t" + b64 + "\n");
  ASSERT_EQ(r.events.size(), 1u);
  const auto& e = r.events[0];
  EXPECT_TRUE(e.is_kernel_exec());
  EXPECT_EQ(e.pfn, 5u);
  EXPECT_EQ(e.origin, Origin::Image);
  ASSERT_TRUE(e.content.has_value());
  EXPECT_EQ(*e.content, PageContent(4096, 0));
  EXPECT_EQ(r.label, "t");
  EXPECT_EQ(r.page_size, 4096u);
}

TEST(TraceParse, ShortContentReportsLineThree) {
  const std::string ok = base64_encode(PageContent(4096, 1));
  const std::string bad = base64_encode(PageContent(4095, 2));
  try {
    parse(header() + "EXEC\t1\tkernel\timage\t" + ok + "\nEXEC\t2\tkernel\timage\t" + bad + "\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()), "content length mismatch at line 3");
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(TraceParse, RejectsMalformedInput) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("NOT-A-TRACE\n"), ParseError);
  EXPECT_THROW(parse(header() + "JUMP\t1\n"), ParseError);
  // First kernel exec of a pfn must carry content.
  EXPECT_THROW(parse(header() + "EXEC\t7\tkernel\timage\t-\n"), ParseError);
  EXPECT_THROW(parse(header() + "EXEC\t7\tkernel\timage\t!!!!\n"), ParseError);
  EXPECT_THROW(parse(header() + "EXEC\tx\tuser\t-\t-\n"), ParseError);
  EXPECT_THROW(parse(header() + "MODUNLOAD\tghost\t1,2\n"), ParseError);
  EXPECT_THROW(parse(header() + "SYSCALL\treboot\nSYSCALL\treboot\n"), ParseError);
  // User execs carry neither origin nor content.
  EXPECT_THROW(parse(header() + "EXEC\t1\tuser\timage\t-\n"), ParseError);
}

TEST(TraceParse, UnknownKindNamesLine) {
  try {
    parse(header() + "SYSCALL\tread\nBOGUS\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("unknown event kind"), std::string::npos);
  }
}

TEST(TraceWrite, EmptyRoundIsHeaderOnly) {
  Round r;
  r.label = "empty";
  const std::string s = write(r);
  EXPECT_EQ(s, "KASR-TRACE v1 page_size=4096 label=empty round=0\n");
  EXPECT_EQ(parse(s), r);
}

TEST(TraceWrite, OneEventOneLine) {
  Round r;
  r.label = "one";
  r.events.push_back(TraceEvent::syscall("read"));
  const std::string s = write(r);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
}

TEST(TraceRoundTrip, ModuleLoadExecUnload) {
  std::mt19937_64 rng(11);
  Round r;
  r.label = "mod";
  r.round_index = 3;
  r.events.push_back(TraceEvent::mod_load("m0", {40, 41}));
  r.events.push_back(TraceEvent::kernel_exec(40, Origin::Module, testing::random_page(rng)));
  r.events.push_back(TraceEvent::mod_unload("m0", {40, 41}));
  const Round back = parse(write(r));
  EXPECT_EQ(back, r);
}

TEST(TraceRoundTrip, GeneratorOutputIsCanonical) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto profile = testing::random_profile(rng);
    for (const auto& r : generate_synthetic_workload(profile, 3)) {
      validate_round(r);
      const std::string text = write(r);
      const Round back = parse(text);
      EXPECT_EQ(back, r);
      EXPECT_EQ(write(back), text);
    }
  }
}

TEST(TraceValidate, KernelExecContentRule) {
  // Property: every kernel exec carries content or follows an exec of the
  // same pfn in the same round.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    for (const auto& r : generate_synthetic_workload(testing::random_profile(rng), 2)) {
      std::set<Pfn> seen;
      for (const auto& e : r.events) {
        if (!e.is_kernel_exec()) continue;
        EXPECT_TRUE(e.content.has_value() || seen.count(e.pfn));
        seen.insert(e.pfn);
      }
    }
  }
}

TEST(TraceValidate, LabelWithSpaceRoundTrips) {
  Round r;
  r.label = "two words";
  EXPECT_EQ(parse(write(r)), r);
}

TEST(Base64, StrictDecoding) {
  EXPECT_EQ(base64_decode("AAEC"), (std::vector<std::uint8_t>{0, 1, 2}));
  EXPECT_EQ(base64_decode("AA=="), (std::vector<std::uint8_t>{0}));
  EXPECT_FALSE(base64_decode("AA=").has_value());
  EXPECT_FALSE(base64_decode("A*AA").has_value());
  const std::vector<std::uint8_t> v = {1, 2, 3, 4, 5};
  EXPECT_EQ(base64_decode(base64_encode(v)), v);
}

}  // namespace
}  // namespace kasr
