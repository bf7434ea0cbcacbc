#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trajcast/model.hpp"
#include "trajcast/stats.hpp"

using namespace trajcast;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(TRAJCAST_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PredictiveEnsemble load_ensemble(const fs::path& p) {
  std::ifstream in(p);
  return read_ensemble_csv(in);
}

/// Synthetic data shared by the tests below: 40 days at T = 24.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "trajcast_cli_tests";
  std::string common;
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    const auto r = run("synth --horizon 24 --days 40 --seed 2 -q -o " + (root / "data").string());
    REQUIRE(r.code == 0);
    common = "--cases " + (root / "data" / "cases").string() +
             " --horizon 24 --window-days 20 --n-gibbs 300 --n-burn 100 --m-pred 150 -q";
  }
  ~Workspace() { fs::remove_all(root); }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("synth writes every documented input") {
  const auto& w = workspace();
  for (const char* f : {"nwp.csv", "production.csv", "beta_true.csv", "k_true.csv", "cases/case_20110101.csv"})
    CHECK(fs::exists(w.root / "data" / f));
  CHECK(slurp(w.root / "data" / "nwp.csv").rfind("init_time,lead_h,lat,lon,member,ws100\n", 0) == 0);
  CHECK(slurp(w.root / "data" / "production.csv").rfind("time,power_mw\n", 0) == 0);
}

TEST_CASE("fit then predict, with deterministic checkpoints") {
  const auto& w = workspace();
  const auto out = w.root / "fit";
  auto r = run("fit " + w.common + " --init-time 2011-01-30 -o " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto cp = out / "posterior_full_20110130.txt";
  REQUIRE(fs::exists(cp));
  CHECK(fs::exists(out / "fit_full_20110130.log"));
  const auto first = slurp(cp);
  r = run("fit " + w.common + " --init-time 2011-01-30 -o " + out.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(cp) == first);

  r = run("predict " + w.common + " --init-time 2011-01-30 --postproc none,copula --copula-window 6 -o " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto uni = load_ensemble(out / "ensemble_full_none_20110130.csv");
  const auto cop = load_ensemble(out / "ensemble_full_copula_20110130.csv");
  CHECK(uni.size() == 150);
  CHECK(uni.horizon() == 24);
  CHECK(uni.postproc == "none");
  CHECK(cop.postproc == "copula");
  CHECK(uni.init_time == parse_utc("2011-01-30"));
  for (int t = 0; t < 24; ++t) CHECK(stats::ks_two_sample(uni.sorted_margin(t), cop.sorted_margin(t)).p_value > 0.01);
  std::vector<double> s_uni(150), s_cop(150);
  for (int i = 0; i < 150; ++i) {
    s_uni[i] = uni.trajectories.row(i).sum();
    s_cop[i] = cop.trajectories.row(i).sum();
  }
  CHECK(stats::variance(s_uni) != stats::variance(s_cop));

  const auto again = w.root / "fit_again";
  fs::create_directories(again);
  fs::copy_file(cp, again / cp.filename());
  r = run("predict " + w.common + " --init-time 2011-01-30 --postproc none,copula --copula-window 6 -o " + again.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(again / "ensemble_full_copula_20110130.csv") == slurp(out / "ensemble_full_copula_20110130.csv"));
  CHECK(slurp(again / "ensemble_full_none_20110130.csv") == slurp(out / "ensemble_full_none_20110130.csv"));

  r = run("verify " + w.common + " --ensembles " + out.string() + " -o " + (w.root / "verify").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(w.root / "verify" / "ensemble_copula" / "summary.json"));
  CHECK(slurp(w.root / "verify" / "table_sum.csv").rfind("model,postproc,mae,rmse,crps\n", 0) == 0);
}

TEST_CASE("fit reports the earliest feasible date when history is short") {
  const auto& w = workspace();
  const auto r = run("fit " + w.common + " --init-time 2011-01-10 -o " + (w.root / "short").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("earliest feasible target date is 2011-01-21") != std::string::npos);
}

TEST_CASE("predict errors") {
  const auto& w = workspace();
  auto r = run("predict " + w.common + " --init-time 2011-01-31 -o " + (w.root / "nocp").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("checkpoint") != std::string::npos);
  r = run("predict " + w.common + " --init-time 2012-06-01 -o " + (w.root / "nocp").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("no NWP covariates") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 1") {
  const auto& w = workspace();
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("backtest --n-gibbs many").code == 1);
  CHECK(run("backtest " + w.common + " --variant nope").code == 1);
  CHECK(run("fit " + w.common).code == 1);
  CHECK(run("fit " + w.common + " --init-time yesterday").code == 1);
  CHECK(run("backtest " + w.common + " --n-burn 400").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("missing inputs exit with 2") {
  const auto& w = workspace();
  CHECK(run("backtest --cases " + (w.root / "absent").string() + " -q").code == 2);
  CHECK(run("backtest --nwp " + (w.root / "absent.csv").string() + " --production x.csv -q").code == 2);
}

TEST_CASE("backtest with a config file, flags overriding it") {
  const auto& w = workspace();
  const auto ini = w.root / "run.ini";
  std::ofstream(ini) << "cases = " << (w.root / "data" / "cases").string() << "\n"
                     << "horizon = 24\nwindow-days = 20\nn-gibbs = 300\nn-burn = 100\nm-pred = 150\nquiet = true\n"
                     << "variant = full,fully_ind\n"
                     << "[backtest]\nwrite-ensembles = true\n";
  const auto out = w.root / "bt";
  const auto r = run("--config " + ini.string() + " backtest --variant fully_ind --eval-start 2011-02-05 -o " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(out / "fully_ind_none" / "manifest.json"));
  CHECK_FALSE(fs::exists(out / "full_none"));
  CHECK(fs::exists(out / "fully_ind_none" / "ensembles" / "ensemble_20110205.csv"));
  CHECK(slurp(out / "table_sum.csv").rfind("model,postproc,mae,rmse,crps\n", 0) == 0);
  CHECK(slurp(out / "table_coverage_width.csv").rfind("model,postproc,coverage80_day1,width80_day1\n", 0) == 0);
  CHECK(slurp(out / "table_marginal_scores.csv").rfind("model,postproc,mae_day1,rmse_day1,crps_day1\n", 0) == 0);
  const auto audit = slurp(out / "leakage_audit.csv");
  CHECK(audit.find(",0\n") == std::string::npos);
}
