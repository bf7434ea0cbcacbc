#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "trajcast/backtest.hpp"
#include "trajcast/copula.hpp"
#include "trajcast/csv.hpp"
#include "trajcast/error.hpp"
#include "trajcast/gwishart.hpp"
#include "trajcast/model.hpp"
#include "trajcast/stats.hpp"
#include "trajcast/synth.hpp"
#include "trajcast/verify.hpp"

namespace fs = std::filesystem;
using namespace trajcast;

namespace {

struct Options {
  std::string nwp, production, cases, output = "out";
  int horizon = 72;
  int window_days = 100;
  double lat_min = 51.0;
  std::vector<std::string> variants{"full"};
  std::vector<std::string> postprocs{"none"};
  int n_gibbs = 3000;
  int n_burn = 1000;
  int m_pred = 999;
  int copula_band = 1;
  int copula_window = 0;
  int pit_bins = 20;
  std::string crps = "standard";
  std::string eval_start, eval_end;
  std::uint64_t seed = 1;
  int threads = 1;
  bool quiet = false;

  // fit / predict
  std::string init_time;
  std::string posterior;

  // backtest
  bool write_ensembles = false;

  // verify
  std::vector<std::string> ensembles;
  std::string label = "ensemble";

  // synth
  int days = 465;
  std::string scenario = "well_specified";
  double error_corr = 0.9;
  double error_sd = 1.0;
  std::string start = "2011-01-01";
  std::string format = "both";
};

TimePoint parse_time_option(const std::string& text, const std::string& what) {
  try {
    return parse_utc(text);
  } catch (const DataError&) {
    throw ConfigError("bad " + what + ": '" + text + "'");
  }
}

RunConfig run_config(const Options& o) {
  RunConfig c;
  c.nwp = o.nwp;
  c.production = o.production;
  c.cases_dir = o.cases;
  c.output_dir = o.output;
  c.horizon = o.horizon;
  c.window_days = o.window_days;
  c.lat_min = o.lat_min;
  c.variants.clear();
  for (const auto& v : o.variants) c.variants.push_back(parse_variant(v));
  c.postprocs.clear();
  for (const auto& p : o.postprocs) c.postprocs.push_back(parse_postproc(p));
  c.n_gibbs = o.n_gibbs;
  c.n_burn = o.n_burn;
  c.m_pred = o.m_pred;
  c.copula_band = o.copula_band;
  c.copula_window = o.copula_window;
  c.pit_bins = o.pit_bins;
  if (o.crps == "standard")
    c.crps_estimator = CrpsEstimator::standard;
  else if (o.crps == "fair")
    c.crps_estimator = CrpsEstimator::fair;
  else
    throw ConfigError("unknown CRPS estimator '" + o.crps + "' (expected standard or fair)");
  if (!o.eval_start.empty()) c.eval_start = parse_time_option(o.eval_start, "eval-start");
  if (!o.eval_end.empty()) c.eval_end = parse_time_option(o.eval_end, "eval-end");
  c.seed = o.seed;
  c.threads = o.threads;
  c.write_ensembles = o.write_ensembles;
  c.validate();
  return c;
}

std::function<void(const std::string&)> logger(const Options& o) {
  if (o.quiet) return {};
  return [](const std::string& msg) { std::cerr << "trajcast: " << msg << '\n'; };
}

fs::path checkpoint_path(const Options& o, Variant v, TimePoint t) {
  if (!o.posterior.empty() && o.variants.size() == 1) return o.posterior;
  return fs::path(o.output) / ("posterior_" + to_string(v) + "_" + format_compact_date(t) + ".txt");
}

/// The `window_days` observed cases immediately before `target`.
std::vector<ForecastCase> history_before(const std::vector<ForecastCase>& cases, TimePoint target, int window_days) {
  std::vector<ForecastCase> before;
  for (const auto& c : observed_cases(cases))
    if (c.init_time < target) before.push_back(c);
  if (static_cast<int>(before.size()) < window_days) {
    const auto observed = observed_cases(cases);
    std::string hint = "no date in the data has enough history";
    if (static_cast<int>(observed.size()) > window_days)
      hint = "earliest feasible target date is " + format_utc(observed[static_cast<std::size_t>(window_days)].init_time);
    throw DataError("insufficient history for " + format_utc(target) + ": " + std::to_string(before.size()) +
                    " observed days before it, window needs " + std::to_string(window_days) + "; " + hint);
  }
  return {before.end() - window_days, before.end()};
}

void summarise(std::ostream& log, const std::string& name, const std::vector<double>& trace) {
  std::vector<double> sorted = trace;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = trace.size() / 2;
  const std::span<const double> all(trace);
  log << name << ',' << stats::mean(all) << ',' << std::sqrt(stats::variance(all)) << ','
      << stats::quantile_sorted(sorted, 0.05) << ',' << stats::quantile_sorted(sorted, 0.5) << ','
      << stats::quantile_sorted(sorted, 0.95) << ',' << stats::batch_means_se(all) << ','
      << stats::mean(all.first(half)) << ',' << stats::mean(all.subspan(half)) << '\n';
}

void write_fit_log(const fs::path& path, const std::vector<PosteriorDraw>& draws, const std::vector<ForecastCase>& window,
                   const ModelConfig& mc, Variant v, TimePoint target) {
  std::ofstream log(path);
  log << "# target=" << format_utc(target) << '\n'
      << "# variant=" << to_string(v) << " (" << mc.tag() << ")\n"
      << "# window=" << format_utc(window.front().init_time) << ".." << format_utc(window.back().init_time) << " ("
      << window.size() << " days)\n"
      << "# seed=" << mc.seed << " n_gibbs=" << mc.n_gibbs << " n_burn=" << mc.n_burn << " retained=" << draws.size()
      << '\n';
  std::size_t pd = 0;
  for (const auto& d : draws) pd += is_positive_definite(d.k) ? 1 : 0;
  log << "# positive_definite_draws=" << pd << '/' << draws.size() << '\n';
  log << "quantity,mean,sd,q05,q50,q95,mcse,first_half_mean,second_half_mean\n";
  const int t = mc.horizon;
  std::vector<double> trace(draws.size());
  for (int a = 0; a < kBlocks; ++a) {
    std::transform(draws.begin(), draws.end(), trace.begin(), [&](const PosteriorDraw& d) { return d.n0[a]; });
    summarise(log, "n0_" + std::to_string(a), trace);
  }
  std::transform(draws.begin(), draws.end(), trace.begin(),
                 [](const PosteriorDraw& d) {
                   const Eigen::MatrixXd l = d.k.llt().matrixL();
                   return 2.0 * l.diagonal().array().log().sum();
                 });
  summarise(log, "logdet_k", trace);
  for (int a = 0; a < kBlocks; ++a)
    for (int lead : {0, t / 2, t - 1}) {
      std::transform(draws.begin(), draws.end(), trace.begin(),
                     [&](const PosteriorDraw& d) { return d.beta[a * t + lead]; });
      summarise(log, "beta_" + std::to_string(a) + "_lead" + std::to_string(lead + 1), trace);
    }
}

int cmd_fit(const Options& o) {
  const auto config = run_config(o);
  if (o.init_time.empty()) throw ConfigError("fit needs --init-time");
  const auto target = parse_time_option(o.init_time, "init-time");
  const auto log = logger(o);
  const auto cases = load_run_cases(config, log);
  const auto window = history_before(cases, target, config.window_days);
  fs::create_directories(config.output_dir);
  for (auto v : config.variants) {
    const auto mc = config.model_config(v);
    if (log) log("fitting " + to_string(v) + " for " + format_utc(target));
    const auto draws = gibbs_fit(window, mc, day_stream(config.seed, v, target, kFit));
    const auto path = checkpoint_path(o, v, target);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    write_checkpoint(out, draws, mc);
    if (!out) throw DataError("cannot write " + path.string());
    write_fit_log(fs::path(config.output_dir) / ("fit_" + to_string(v) + "_" + format_compact_date(target) + ".log"),
                  draws, window, mc, v, target);
    if (log) log("wrote " + path.string());
  }
  return 0;
}

int cmd_predict(const Options& o) {
  const auto config = run_config(o);
  if (o.init_time.empty()) throw ConfigError("predict needs --init-time");
  const auto target = parse_time_option(o.init_time, "init-time");
  const auto log = logger(o);
  const auto cases = load_run_cases(config, log);
  const auto it = std::find_if(cases.begin(), cases.end(), [&](const ForecastCase& c) { return c.init_time == target; });
  if (it == cases.end()) throw DataError("no NWP covariates for " + format_utc(target));
  fs::create_directories(config.output_dir);
  for (auto v : config.variants) {
    const auto mc = config.model_config(v);
    const auto path = checkpoint_path(o, v, target);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string() + " (run `trajcast fit` first)");
    const auto cp = read_checkpoint(in);
    if (cp.horizon != mc.horizon || cp.variant_tag != mc.tag())
      throw ConfigError("checkpoint " + path.string() + " was written for horizon " + std::to_string(cp.horizon) + " and " +
                        cp.variant_tag + ", not horizon " + std::to_string(mc.horizon) + " and " + mc.tag());
    Rng rng = day_stream(config.seed, v, target, kPredict);
    auto ensemble = predict(cp.draws, it->x_w, mc, rng);
    ensemble.init_time = target;
    for (auto pp : config.postprocs) {
      PredictiveEnsemble out_ens = ensemble;
      if (pp == PostProc::copula) {
        if (log) log(to_string(v) + ": forecasting the copula window for " + format_utc(target));
        const auto fit = copula_from_history(pit_history(cases, config, v, target), config.m_pred + 1, config.copula_band);
        Rng crng = day_stream(config.seed, v, target, kCopula);
        out_ens = apply_copula(fit, ensemble, crng, mc.gwishart);
      }
      const auto file = fs::path(config.output_dir) /
                        ("ensemble_" + to_string(v) + "_" + to_string(pp) + "_" + format_compact_date(target) + ".csv");
      std::ofstream out(file);
      write_ensemble_csv(out, out_ens);
      if (!out) throw DataError("cannot write " + file.string());
      if (log) log("wrote " + file.string());
    }
  }
  return 0;
}

int cmd_backtest(const Options& o) {
  const auto config = run_config(o);
  const auto log = logger(o);
  const auto cases = load_run_cases(config, log);
  const auto result = run_backtest(cases, config, log);
  write_backtest(result, config);
  if (!result.leakage_ok) throw NumericalError("leakage audit failed; see leakage_audit.csv");
  if (log) log("reports written to " + config.output_dir.string());
  return 0;
}

int cmd_verify(const Options& o) {
  const auto config = run_config(o);
  const auto log = logger(o);
  std::vector<fs::path> files;
  for (const auto& e : o.ensembles) {
    if (fs::is_directory(e)) {
      for (const auto& entry : fs::directory_iterator(e))
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    } else {
      files.emplace_back(e);
    }
  }
  if (files.empty()) throw ConfigError("verify needs --ensembles (files or directories)");
  std::sort(files.begin(), files.end());
  const auto cases = load_run_cases(config, log);
  std::map<TimePoint, Eigen::VectorXd> obs;
  for (const auto& c : observed_cases(cases)) obs.emplace(c.init_time, *c.y);

  std::map<std::string, ScoreAccumulator> acc;
  const Rng base(config.seed);
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot open " + f.string());
    const auto ens = read_ensemble_csv(in);
    const auto y = obs.find(ens.init_time);
    if (y == obs.end()) {
      if (log) log("skipping " + f.string() + ": no observations for " + format_utc(ens.init_time));
      continue;
    }
    if (ens.horizon() != config.horizon)
      throw DataError(f.string() + " has horizon " + std::to_string(ens.horizon()) + ", expected " +
                      std::to_string(config.horizon));
    auto [pos, _] = acc.try_emplace(ens.postproc, config.horizon, config.pit_bins, config.crps_estimator);
    Rng rng = base.split({static_cast<std::uint64_t>(ens.init_time.time_since_epoch().count())});
    pos->second.add(ens, y->second, rng);
  }
  if (acc.empty()) throw DataError("no ensemble matched an observed day");
  std::vector<ReportRow> rows;
  for (const auto& [pp, a] : acc) {
    rows.push_back({o.label, pp, a.report()});
    write_report(config.output_dir / (o.label + "_" + pp), rows.back().report, o.label, pp);
  }
  write_summary_tables(config.output_dir, rows);
  if (log) log("scored " + std::to_string(rows.front().report.n_cases) + " days into " + config.output_dir.string());
  return 0;
}

int cmd_synth(const Options& o) {
  auto sc = SynthConfig::preset(o.horizon, o.days, o.error_corr, o.error_sd, o.seed);
  sc.scenario = parse_scenario(o.scenario);
  sc.start = parse_time_option(o.start, "start");
  sc.validate();
  const auto cases = generate(sc);
  const fs::path dir = o.output;
  fs::create_directories(dir);
  if (o.format == "cases" || o.format == "both") write_case_dir(dir / "cases", cases);
  if (o.format == "ingest" || o.format == "both") {
    if (o.horizon > kHoursPerDay && !o.quiet)
      std::cerr << "trajcast: note: production.csv keeps only the latest forecast's hours; the cases/ directory is exact\n";
    write_ingest_files(dir, cases);
  }
  if (o.format != "cases" && o.format != "ingest" && o.format != "both")
    throw ConfigError("unknown format '" + o.format + "' (expected cases, ingest or both)");
  std::ofstream beta(dir / "beta_true.csv");
  beta << "block,lead_h,beta\n";
  for (int a = 0; a < kBlocks; ++a)
    for (int t = 0; t < o.horizon; ++t)
      beta << a << ',' << t + 1 << ',' << csv::format_double(sc.beta_true[a * o.horizon + t]) << '\n';
  std::ofstream k(dir / "k_true.csv");
  write_matrix_csv(k, sc.k_true);
  return 0;
}

void add_common(CLI::App& app, Options& o) {
  app.add_option("--nwp", o.nwp, "NWP grid CSV (init_time,lead_h,lat,lon,member,ws100)");
  app.add_option("--production", o.production, "Hourly production CSV (time,power_mw)");
  app.add_option("--cases", o.cases, "Directory of preprocessed case files (alternative to --nwp/--production)");
  app.add_option("-o,--output", o.output, "Output directory")->capture_default_str();
  app.add_option("--horizon", o.horizon, "Forecast horizon T in hours")->capture_default_str();
  app.add_option("--window-days", o.window_days, "Training window length in days")->capture_default_str();
  app.add_option("--lat-min", o.lat_min, "Keep grid points north of this latitude")->capture_default_str();
  app.add_option("--variant", o.variants, "Model variants: full, ind_errors, fully_ind")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--postproc", o.postprocs, "Post-processing: none, copula")->delimiter(',')->capture_default_str();
  app.add_option("--n-gibbs", o.n_gibbs, "Gibbs iterations including burn-in")->capture_default_str();
  app.add_option("--n-burn", o.n_burn, "Burn-in iterations")->capture_default_str();
  app.add_option("--m-pred", o.m_pred, "Predictive trajectories per forecast")->capture_default_str();
  app.add_option("--copula-band", o.copula_band, "Band of the copula precision graph")->capture_default_str();
  app.add_option("--copula-window", o.copula_window, "Past forecast days for the copula (0: window-days)")
      ->capture_default_str();
  app.add_option("--pit-bins", o.pit_bins, "PIT histogram bins")->capture_default_str();
  app.add_option("--crps", o.crps, "CRPS estimator: standard or fair")->capture_default_str();
  app.add_option("--eval-start", o.eval_start, "First scored forecast date");
  app.add_option("--eval-end", o.eval_end, "Last scored forecast date");
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  app.add_flag("-q,--quiet", o.quiet, "No progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic wind-power trajectory forecasts"};
  app.set_config("--config", "", "INI config file; top-level keys and [fit]/[predict]/... sections, flags win");
  app.require_subcommand(1);
  Options o;
  add_common(app, o);

  auto* fit = app.add_subcommand("fit", "Fit the model on the window before --init-time and write a checkpoint");
  fit->add_option("--init-time", o.init_time, "Target forecast date");
  fit->add_option("--posterior", o.posterior, "Checkpoint path (single variant)");

  auto* pred = app.add_subcommand("predict", "Predictive trajectories for --init-time from a checkpoint");
  pred->add_option("--init-time", o.init_time, "Target forecast date");
  pred->add_option("--posterior", o.posterior, "Checkpoint path (single variant)");

  auto* back = app.add_subcommand("backtest", "Rolling fit-predict-score over the evaluation range");
  back->add_flag("--write-ensembles", o.write_ensembles, "Also write every scored ensemble");

  auto* ver = app.add_subcommand("verify", "Score ensemble CSV files against observations");
  ver->add_option("--ensembles", o.ensembles, "Ensemble CSV files or directories")->delimiter(',');
  ver->add_option("--label", o.label, "Model label used in the reports")->capture_default_str();

  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
  syn->add_option("--days", o.days, "Number of forecast days")->capture_default_str();
  syn->add_option("--scenario", o.scenario, "well_specified, heavy_tails or quadratic_truth")->capture_default_str();
  syn->add_option("--error-corr", o.error_corr, "Lag-one error correlation")->capture_default_str();
  syn->add_option("--error-sd", o.error_sd, "Error SD on the cube-root scale")->capture_default_str();
  syn->add_option("--start", o.start, "First forecast date")->capture_default_str();
  syn->add_option("--format", o.format, "cases, ingest or both")->capture_default_str();

  for (auto* sub : {fit, pred, back, ver, syn}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*pred) return cmd_predict(o);
    if (*back) return cmd_backtest(o);
    if (*ver) return cmd_verify(o);
    if (*syn) return cmd_synth(o);
  } catch (const ConfigError& e) {
    std::cerr << "trajcast: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "trajcast: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "trajcast: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "trajcast: data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "trajcast: data error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
