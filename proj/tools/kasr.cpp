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

// kasr: command-line front end for the trace-driven pipeline.
//
//   gen      synthesize trace rounds from a workload profile
//   inject   splice a rootkit scenario into a trace round
//   train    build a code-usage database from trace rounds
//   merge    fold databases into one
//   inspect  print database metadata and counts
//   enforce  replay a trace against a database
//   report   reduction, CVE and rootkit tables
//
// Exit codes: 0 success or clean replay, 1 usage or I/O error,
// 2 violations logged, 3 replay stopped on a violation.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kasr/kasr.hpp"

namespace fs = std::filesystem;

namespace {

using namespace kasr;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitLogged = 2;
constexpr int kExitStopped = 3;

// Thrown for bad flag combinations detected after parsing.
struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::uint32_t page_size = kDefaultPageSize;
  std::uint32_t constancy = kDefaultConstancy;
  std::uint32_t max_dyn_run = kDefaultMaxDynamicRun;
  std::size_t window = 2;
  std::string policy = "log";
  bool deprivation_only = false;
  std::optional<std::uint64_t> seed;
  std::string format = "text";

  CLI::Option* page_size_opt = nullptr;
  CLI::Option* constancy_opt = nullptr;

  // Thresholds for data of the given page size. An explicit --page-size
  // must agree; an unset --constancy scales with the page size.
  Thresholds thresholds_for(std::uint32_t data_page_size) const {
    if (page_size_opt->count() && page_size != data_page_size) {
      throw ConfigError("trace page_size " + std::to_string(data_page_size) + " differs from --page-size " +
                        std::to_string(page_size));
    }
    Thresholds t = Thresholds::for_page_size(data_page_size);
    if (constancy_opt->count()) t.constancy = constancy;
    t.max_dynamic_run = max_dyn_run;
    t.validate();
    return t;
  }
  ReportFormat report_format() const { return report_format_from_string(format); }
  EnforcementOptions enforcement() const { return {policy_from_string(policy), deprivation_only}; }
};

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open " + path);
  return in;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << bytes;
  if (!out.flush()) throw Error("write failed: " + path);
}

Round read_trace(const std::string& path) {
  auto in = open_in(path);
  return parse_trace_round(in);
}

std::string trace_text(const Round& r) {
  std::ostringstream out;
  write_trace_round(r, out);
  return out.str();
}

nlohmann::json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Writes to path, or stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

// --- gen ------------------------------------------------------------------

struct GenArgs {
  std::string profile;
  std::uint32_t rounds = 0;
  std::string out = ".";
};

int cmd_gen(const Globals& g, const GenArgs& a) {
  if (a.rounds == 0) throw UsageError("--rounds must be at least 1");
  auto profile = read_json(a.profile).get<WorkloadProfile>();
  if (g.seed) profile.seed = *g.seed;
  if (g.page_size_opt->count()) profile.page_size = g.page_size;
  const SyntheticWorkload wl(profile);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw Error("cannot create " + a.out + ": " + ec.message());
  for (std::uint32_t r = 0; r < a.rounds; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "round_%03u.trace", r);
    const auto path = (fs::path(a.out) / name).string();
    const Round round = wl.round(r);
    write_file(path, trace_text(round));
    spdlog::info("wrote {} ({} events)", path, round.events.size());
  }
  std::cout << "generated " << a.rounds << " round(s) of '" << profile.label << "' in " << a.out << "\n";
  return kExitOk;
}

// --- inject ---------------------------------------------------------------

struct InjectArgs {
  std::string trace;
  std::string scenario;
  std::optional<std::uint32_t> pages;
  std::optional<std::size_t> at;
  std::string vector;
  std::string out;
  std::string truth;
};

int cmd_inject(const Globals&, const InjectArgs& a) {
  const Round clean = read_trace(a.trace);
  RootkitScenario sc;
  bool known = false;
  for (const auto& k : known_rootkit_scenarios(clean)) {
    if (k.name == a.scenario) sc = k, known = true;
  }
  if (!known) {
    sc.name = a.scenario;
    sc.insertion_point = end_of_runtime(clean);
  }
  if (a.pages) sc.n_pages = *a.pages;
  if (a.at) sc.insertion_point = *a.at;
  if (!a.vector.empty()) sc.vector = a.vector;
  const auto inj = inject_rootkit(clean, sc);
  write_file(a.out, trace_text(inj.round));
  const std::string truth = a.truth.empty() ? a.out + ".json" : a.truth;
  write_file(truth, to_json(inj).dump(2) + "\n");
  std::cout << "injected " << sc.name << " (" << sc.n_pages << " page(s) at event " << sc.insertion_point
            << ") into " << a.out << "; ground truth in " << truth << "\n";
  return kExitOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> traces;
  std::string base;
  std::string out;
  std::string label;
  bool stop_when_stable = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  if (g.window < 2) throw UsageError("--stability-window must be at least 2");
  std::optional<CodeUsageDatabase> base;
  if (!a.base.empty()) base = load_file(a.base);
  std::optional<Trainer> trainer;
  std::vector<CodeUsageDatabase> history;
  nlohmann::json log = nlohmann::json::array();
  std::optional<std::size_t> stable_at;
  for (const auto& path : a.traces) {
    const Round round = read_trace(path);
    if (!trainer) {
      const Thresholds t = base ? base->thresholds() : g.thresholds_for(round.page_size);
      if (base && g.page_size_opt->count() && g.page_size != t.page_size) {
        throw ConfigError("base database page_size differs from --page-size");
      }
      trainer.emplace(t, a.label.empty() ? round.label : a.label, base ? &*base : nullptr);
    }
    const auto stats = trainer->add_round(round);
    history.push_back(trainer->snapshot());
    const bool stable = is_stable(history, g.window);
    // Reported as the first round of the unchanged window.
    if (stable && !stable_at) stable_at = history.size() - g.window + 1;
    log.push_back({{"trace", path},
                   {"round_index", round.round_index},
                   {"pages", history.back().size()},
                   {"exceptions", stats.exceptions},
                   {"stable", stable}});
    spdlog::info("{}: {} pages, {} exceptions", path, history.back().size(), stats.exceptions);
    if (stable && a.stop_when_stable) break;
  }
  for (const auto& w : trainer->warnings()) spdlog::warn("{}", w);
  save_file(history.back(), a.out);

  if (g.report_format() == ReportFormat::Json) {
    nlohmann::json j{{"rounds", log}, {"out", a.out}};
    j["converged_at"] = stable_at ? nlohmann::json(*stable_at) : nlohmann::json(nullptr);
    std::cout << j.dump(2) << "\n";
  } else if (g.report_format() == ReportFormat::Csv) {
    std::cout << "round,trace,pages,exceptions,stable\n";
    for (std::size_t i = 0; i < log.size(); ++i) {
      std::cout << i + 1 << "," << log[i]["trace"].get<std::string>() << "," << log[i]["pages"] << ","
                << log[i]["exceptions"] << "," << (log[i]["stable"].get<bool>() ? "yes" : "no") << "\n";
    }
  } else {
    for (std::size_t i = 0; i < log.size(); ++i) {
      std::cout << "round " << i + 1 << ": " << log[i]["pages"] << " pages" << (log[i]["stable"] ? " (stable)" : "")
                << "\n";
    }
    std::cout << "wrote " << a.out << " (" << history.back().size() << " pages"
              << (stable_at ? ", unchanged from round " + std::to_string(*stable_at) : ", not yet stable") << ")\n";
  }
  return kExitOk;
}

// --- merge / inspect -------------------------------------------------------

int cmd_merge(const Globals&, const std::vector<std::string>& dbs, const std::string& out) {
  if (dbs.size() < 2) throw UsageError("merge needs at least two databases");
  CodeUsageDatabase merged = load_file(dbs.front());
  for (std::size_t i = 1; i < dbs.size(); ++i) merged = merge_databases(merged, load_file(dbs[i]));
  save_file(merged, out);
  std::cout << "wrote " << out << " (" << merged.size() << " pages, label '" << merged.metadata().label << "')\n";
  return kExitOk;
}

int cmd_inspect(const Globals& g, const std::string& path) {
  const auto db = load_file(path);
  std::map<std::string, std::size_t> by_flags[2];
  for (Origin o : {Origin::Image, Origin::Module}) {
    for (const auto& r : db.records(o)) ++by_flags[o == Origin::Image ? 0 : 1][phase_flags_string(r.flags)];
  }
  const auto conflicts = find_identity_conflicts(db).size();
  const auto& t = db.thresholds();
  if (g.report_format() == ReportFormat::Json) {
    nlohmann::json j{{"label", db.metadata().label},
                     {"rounds", db.metadata().rounds},
                     {"format_version", db.metadata().format_version},
                     {"page_size", t.page_size},
                     {"constancy", t.constancy},
                     {"max_dynamic_run", t.max_dynamic_run},
                     {"image_pages", db.records(Origin::Image).size()},
                     {"module_pages", db.records(Origin::Module).size()},
                     {"image_by_phase", by_flags[0]},
                     {"module_by_phase", by_flags[1]},
                     {"identity_conflicts", conflicts}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << "label            " << db.metadata().label << "\n"
            << "rounds           " << db.metadata().rounds << "\n"
            << "format version   " << db.metadata().format_version << "\n"
            << "page size        " << t.page_size << "\n"
            << "constancy        " << t.constancy << "\n"
            << "max dynamic run  " << t.max_dynamic_run << "\n"
            << "image pages      " << db.records(Origin::Image).size() << "\n"
            << "module pages     " << db.records(Origin::Module).size() << "\n";
  for (Origin o : {Origin::Image, Origin::Module}) {
    for (const auto& [flags, n] : by_flags[o == Origin::Image ? 0 : 1]) {
      std::cout << "  " << to_string(o) << " " << flags << ": " << n << "\n";
    }
  }
  std::cout << "identity conflicts " << conflicts << "\n";
  return kExitOk;
}

// --- enforce --------------------------------------------------------------

struct EnforceArgs {
  std::string db;
  std::string trace;
  std::string report;
};

int cmd_enforce(const Globals& g, const EnforceArgs& a) {
  const auto db = load_file(a.db);
  const Round round = read_trace(a.trace);
  const auto rep = replay(db, round, g.enforcement());
  emit(a.report, render_report(rep, g.report_format()));
  if (!a.report.empty()) {
    std::cout << rep.events << " events, " << rep.kernel_execs << " kernel execs, " << rep.violations.size()
              << " violation(s)" << (rep.halted ? ", stopped at event " + std::to_string(*rep.halted_at) : "")
              << "\n";
  }
  if (rep.halted) return kExitStopped;
  return rep.violations.empty() ? kExitOk : kExitLogged;
}

// --- report ---------------------------------------------------------------

struct ReductionArgs {
  std::vector<std::string> dbs;
  std::vector<std::uint64_t> totals;
  std::string phase = "runtime";
  std::string out;
};

int cmd_report_reduction(const Globals& g, const ReductionArgs& a) {
  if (a.dbs.size() != a.totals.size()) throw UsageError("give one --total-pages per --db");
  std::vector<ReductionReport> rows;
  for (std::size_t i = 0; i < a.dbs.size(); ++i) {
    rows.push_back(compute_reduction(load_file(a.dbs[i]), a.totals[i], phase_from_string(a.phase)));
  }
  emit(a.out, render_report(std::span<const ReductionReport>(rows), g.report_format()));
  return kExitOk;
}

struct CveArgs {
  std::string db;
  std::string map;
  std::string phase = "runtime";
  std::string out;
};

int cmd_report_cve(const Globals& g, const CveArgs& a) {
  const auto rep = cve_reduction(load_file(a.db), load_cve_map(a.map), phase_from_string(a.phase));
  emit(a.out, render_report(rep, g.report_format()));
  return kExitOk;
}

struct RootkitArgs {
  std::vector<std::string> reports;
  std::vector<std::string> truths;
  std::string out;
};

int cmd_report_rootkits(const Globals& g, const RootkitArgs& a) {
  if (a.reports.size() != a.truths.size()) throw UsageError("give one --truth per --enforce-report");
  std::vector<ScenarioReport> scenarios;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const auto truth = read_json(a.truths[i]);
    ScenarioReport s;
    try {
      s.scenario = truth.at("scenario").get<std::string>();
      s.vector = truth.at("vector").get<std::string>();
      s.injected_event_indices = truth.at("injected_event_indices").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(a.truths[i] + ": " + e.what());
    }
    s.report = enforcement_report_from_json(read_json(a.reports[i]));
    scenarios.push_back(std::move(s));
  }
  const auto rows = rootkit_summary(scenarios);
  emit(a.out, render_report(std::span<const RootkitRow>(rows), g.report_format()));
  return kExitOk;
}

void init_logging() {
  auto logger = spdlog::stderr_color_mt("kasr");
  logger->set_pattern("kasr: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("KASR_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Trace-driven kernel attack surface reduction: training, enforcement and reporting."};
  app.set_config("--config", "", "INI/TOML file with flag defaults; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.page_size_opt = app.add_option("--page-size", g.page_size, "Page size in bytes")->capture_default_str();
  g.constancy_opt =
      app.add_option("--constancy", g.constancy, "Minimum constant bytes per page")->capture_default_str();
  app.add_option("--max-dyn-run", g.max_dyn_run, "Longest tolerated dynamic byte run")->capture_default_str();
  app.add_option("--stability-window", g.window, "Rounds without change that count as stable")
      ->capture_default_str();
  app.add_option("--policy", g.policy, "Violation policy")
      ->check(CLI::IsMember({"log", "stop"}))
      ->capture_default_str();
  app.add_flag("--deprivation-only", g.deprivation_only, "Ignore phases during enforcement");
  app.add_option("--seed", g.seed, "Override the workload profile seed");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"text", "json", "csv"}))
      ->capture_default_str();

  std::function<int()> run;

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Synthesize trace rounds from a workload profile");
  gen_cmd->add_option("--profile", gen.profile, "Workload profile JSON")->required();
  gen_cmd->add_option("--rounds", gen.rounds, "Number of rounds")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();
  gen_cmd->callback([&] { run = [&] { return cmd_gen(g, gen); }; });

  InjectArgs inj;
  auto* inj_cmd = app.add_subcommand("inject", "Splice a rootkit scenario into a trace round");
  inj_cmd->add_option("trace", inj.trace, "Clean trace round")->required();
  inj_cmd->add_option("--scenario", inj.scenario, "Scenario name (known names take their default size)")
      ->required();
  inj_cmd->add_option("--pages", inj.pages, "Number of injected code pages");
  inj_cmd->add_option("--at", inj.at, "Insertion event index (default: end of runtime)");
  inj_cmd->add_option("--vector", inj.vector, "Attack vector label");
  inj_cmd->add_option("--out", inj.out, "Output trace")->required();
  inj_cmd->add_option("--truth", inj.truth, "Ground-truth JSON (default: <out>.json)");
  inj_cmd->callback([&] { run = [&] { return cmd_inject(g, inj); }; });

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Build a code-usage database from trace rounds");
  tr_cmd->add_option("traces", tr.traces, "Trace rounds, in training order")->required();
  tr_cmd->add_option("--base", tr.base, "Existing database to extend");
  tr_cmd->add_option("--label", tr.label, "Database label (default: trace label)");
  tr_cmd->add_flag("--stop-when-stable", tr.stop_when_stable, "Stop once the stability window is met");
  tr_cmd->add_option("--out", tr.out, "Output database")->required();
  tr_cmd->callback([&] { run = [&] { return cmd_train(g, tr); }; });

  std::vector<std::string> merge_in;
  std::string merge_out;
  auto* merge_cmd = app.add_subcommand("merge", "Fold databases into one");
  merge_cmd->add_option("dbs", merge_in, "Databases, base first")->required();
  merge_cmd->add_option("--out", merge_out, "Output database")->required();
  merge_cmd->callback([&] { run = [&] { return cmd_merge(g, merge_in, merge_out); }; });

  std::string inspect_db;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print database metadata and counts");
  inspect_cmd->add_option("db", inspect_db, "Database")->required();
  inspect_cmd->callback([&] { run = [&] { return cmd_inspect(g, inspect_db); }; });

  EnforceArgs enf;
  auto* enf_cmd = app.add_subcommand("enforce", "Replay a trace round against a database");
  enf_cmd->add_option("--db", enf.db, "Trained database")->required();
  enf_cmd->add_option("--trace", enf.trace, "Trace round")->required();
  enf_cmd->add_option("--report", enf.report, "Report file (default: stdout)");
  enf_cmd->callback([&] { run = [&] { return cmd_enforce(g, enf); }; });

  auto* rep_cmd = app.add_subcommand("report", "Reduction, CVE and rootkit tables");
  rep_cmd->require_subcommand(1);
  rep_cmd->fallthrough();

  ReductionArgs red;
  auto* red_cmd = rep_cmd->add_subcommand("reduction", "Attack surface reduction per database");
  red_cmd->add_option("--db", red.dbs, "Database (repeatable)")->required();
  red_cmd->add_option("--total-pages", red.totals, "Kernel code pages before reduction, one per --db")->required();
  red_cmd->add_option("--phase", red.phase, "Phase for the segmentation column")->capture_default_str();
  red_cmd->add_option("--out", red.out, "Output file (default: stdout)");
  red_cmd->callback([&] { run = [&] { return cmd_report_reduction(g, red); }; });

  CveArgs cve;
  auto* cve_cmd = rep_cmd->add_subcommand("cve", "CVE removal status under both steps");
  cve_cmd->add_option("--db", cve.db, "Database")->required();
  cve_cmd->add_option("--cve-map", cve.map, "CVE to page-digest map (JSON)")->required();
  cve_cmd->add_option("--phase", cve.phase, "Phase for the segmentation view")->capture_default_str();
  cve_cmd->add_option("--out", cve.out, "Output file (default: stdout)");
  cve_cmd->callback([&] { run = [&] { return cmd_report_cve(g, cve); }; });

  RootkitArgs rk;
  auto* rk_cmd = rep_cmd->add_subcommand("rootkits", "Rootkit detection table");
  rk_cmd->add_option("--enforce-report", rk.reports, "JSON enforcement report (repeatable)")->required();
  rk_cmd->add_option("--truth", rk.truths, "Injection ground truth, one per report")->required();
  rk_cmd->add_option("--out", rk.out, "Output file (default: stdout)");
  rk_cmd->callback([&] { run = [&] { return cmd_report_rootkits(g, rk); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }
  try {
    return run();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
}
