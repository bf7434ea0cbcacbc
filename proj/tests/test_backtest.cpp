#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "trajcast/backtest.hpp"
#include "trajcast/error.hpp"
#include "trajcast/synth.hpp"

using namespace trajcast;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(int horizon, int window) {
  RunConfig c;
  c.horizon = horizon;
  c.window_days = window;
  c.n_gibbs = 80;
  c.n_burn = 20;
  c.m_pred = 50;
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("465 days with a 100-day window give 365 scored days without leakage") {
  const auto cases = generate(SynthConfig::preset(2, 465));
  const auto cfg = tiny_config(2, 100);
  const auto res = run_backtest(cases, cfg);
  REQUIRE(res.variants.size() == 1);
  CHECK(res.leakage_ok);
  CHECK(res.variants[0].days.size() == 365);
  REQUIRE(res.variants[0].reports.size() == 1);
  CHECK(res.variants[0].reports[0].report.n_cases == 365);
  for (const auto& d : res.variants[0].days) {
    CHECK(d.train_last < d.init_time);
    CHECK(d.init_time - d.train_first == std::chrono::days{100});
  }
}

TEST_CASE("copula scoring waits for a full window of past PIT values") {
  const auto cases = generate(SynthConfig::preset(3, 60));
  auto cfg = tiny_config(3, 20);
  cfg.postprocs = {PostProc::none, PostProc::copula};
  cfg.copula_window = 10;
  cfg.variants = {Variant::fully_ind};
  const auto res = run_backtest(cases, cfg);
  const auto& vr = res.variants[0];
  REQUIRE(vr.reports.size() == 2);
  CHECK(vr.reports[0].report.n_cases == 30);
  CHECK(vr.reports[1].report.n_cases == 30);
  CHECK(vr.days.size() == 40);
  for (std::size_t k = 0; k < vr.days.size(); ++k) CHECK(vr.days[k].copula.has_value() == (k >= 10));

  cfg.eval_start = parse_utc("2011-01-25");
  std::vector<std::string> messages;
  const auto early = run_backtest(cases, cfg, [&](const std::string& m) { messages.push_back(m); });
  CHECK(early.variants[0].reports[0].report.n_cases == 36);
  CHECK(early.variants[0].reports[1].report.n_cases == 30);
  CHECK(std::any_of(messages.begin(), messages.end(),
                    [](const std::string& m) { return m.find("6 days lack 10 days") != std::string::npos; }));
}

TEST_CASE("backtest days match standalone fits and PIT histories") {
  const auto cases = generate(SynthConfig::preset(2, 40));
  auto cfg = tiny_config(2, 15);
  cfg.keep_ensembles = true;
  cfg.copula_window = 5;
  const auto res = run_backtest(cases, cfg);
  const auto windows = build_windows(cases, 15);
  const auto solo = forecast_day(windows[7], cfg, Variant::full);
  const auto& day = res.variants[0].days[7];
  CHECK(solo.init_time == day.init_time);
  CHECK(solo.univariate.trajectories == day.univariate.trajectories);
  CHECK(solo.pit == day.pit);
  const auto hist = pit_history(cases, cfg, Variant::full, windows[7].target.init_time);
  REQUIRE(hist.size() == 5);
  for (int j = 0; j < 5; ++j) CHECK(hist[j] == res.variants[0].days[2 + j].pit);
  CHECK_THROWS_AS(pit_history(cases, cfg, Variant::full, windows[3].target.init_time), DataError);
}

TEST_CASE("backtest output is identical across runs and thread counts") {
  const auto cases = generate(SynthConfig::preset(3, 45));
  auto cfg = tiny_config(3, 20);
  cfg.variants = {Variant::full, Variant::ind_errors};
  cfg.postprocs = {PostProc::none, PostProc::copula};
  cfg.copula_window = 8;
  cfg.write_ensembles = true;
  const fs::path root = fs::temp_directory_path() / "trajcast_bt_det";
  fs::remove_all(root);
  std::vector<std::string> listing[2];
  for (int run = 0; run < 2; ++run) {
    cfg.threads = run == 0 ? 1 : 3;
    cfg.output_dir = root / std::to_string(run);
    write_backtest(run_backtest(cases, cfg), cfg);
    for (const auto& e : fs::recursive_directory_iterator(cfg.output_dir))
      if (e.is_regular_file()) listing[run].push_back(fs::relative(e.path(), cfg.output_dir).string());
    std::sort(listing[run].begin(), listing[run].end());
  }
  REQUIRE(listing[0] == listing[1]);
  CHECK(listing[0].size() > 20);
  for (const auto& f : listing[0]) {
    if (f.find("manifest.json") != std::string::npos) continue;  // records the thread-independent config only
    CHECK_MESSAGE(slurp(root / "0" / f) == slurp(root / "1" / f), f);
  }
  CHECK(slurp(root / "0" / "full_copula" / "manifest.json") == slurp(root / "1" / "full_copula" / "manifest.json"));
  fs::remove_all(root);
}

TEST_CASE("written layout and manifest") {
  const auto cases = generate(SynthConfig::preset(2, 30));
  auto cfg = tiny_config(2, 10);
  cfg.output_dir = fs::temp_directory_path() / "trajcast_bt_layout";
  fs::remove_all(cfg.output_dir);
  write_backtest(run_backtest(cases, cfg), cfg);
  const auto audit = slurp(cfg.output_dir / "leakage_audit.csv");
  CHECK(audit.rfind("model,init_time,train_first,train_last,ok\n", 0) == 0);
  CHECK(audit.find(",0\n") == std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(cfg.output_dir / "full_none" / "manifest.json"));
  CHECK(manifest["code_version"] == kCodeVersion);
  CHECK(manifest["config_hash"] == cfg.hash());
  CHECK(manifest["scored_days"] == 20);
  for (const char* f : {"table_coverage_width.csv", "table_marginal_scores.csv", "table_sum.csv", "table_max.csv"})
    CHECK(fs::exists(cfg.output_dir / f));
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("config hash tracks result-relevant settings only") {
  auto a = tiny_config(2, 10);
  auto b = a;
  b.threads = 4;
  b.output_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.seed = 4;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("config validation and data errors") {
  auto c = tiny_config(2, 10);
  c.m_pred = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config(2, 10);
  c.variants.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_postproc("gauss"), ConfigError);
  const auto cases = generate(SynthConfig::preset(2, 10));
  CHECK_THROWS_AS(run_backtest(cases, tiny_config(2, 10)), DataError);
  auto late = tiny_config(2, 5);
  late.eval_start = parse_utc("2015-01-01");
  CHECK_THROWS_AS(run_backtest(cases, late), DataError);
}

TEST_CASE("days with partial production are skipped and logged") {
  const auto cases = generate(SynthConfig::preset(24, 30));
  const fs::path dir = fs::temp_directory_path() / "trajcast_bt_partial";
  fs::remove_all(dir);
  write_ingest_files(dir, cases);
  // Drop one production hour belonging to the tenth forecast day.
  const auto text = slurp(dir / "production.csv");
  std::istringstream in(text);
  std::ofstream out(dir / "production.csv");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("2011-01-10T05:00:00Z", 0) != 0) out << line << '\n';
  out.close();
  RunConfig cfg = tiny_config(24, 5);
  cfg.nwp = dir / "nwp.csv";
  cfg.production = dir / "production.csv";
  std::vector<std::string> messages;
  const auto loaded = load_run_cases(cfg, [&](const std::string& m) { messages.push_back(m); });
  CHECK(loaded.size() == 30);
  CHECK(observed_cases(loaded).size() == 29);
  REQUIRE(messages.size() == 1);
  CHECK(messages[0].find("2011-01-10") != std::string::npos);
  const auto res = run_backtest(loaded, cfg);
  for (const auto& d : res.variants[0].days) CHECK(d.init_time != parse_utc("2011-01-10"));
  CHECK(res.variants[0].reports[0].report.n_cases == 24);
  fs::remove_all(dir);
}
