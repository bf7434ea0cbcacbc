#include "trajcast/backtest.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "trajcast/error.hpp"
#include "trajcast/synth.hpp"

namespace trajcast {

std::string to_string(PostProc p) { return p == PostProc::copula ? "copula" : "none"; }

PostProc parse_postproc(const std::string& name) {
  if (name == "none") return PostProc::none;
  if (name == "copula") return PostProc::copula;
  throw ConfigError("unknown postproc '" + name + "' (expected none or copula)");
}

ModelConfig RunConfig::model_config(Variant v) const {
  auto mc = ModelConfig::for_variant(v, horizon);
  mc.n_gibbs = n_gibbs;
  mc.n_burn = n_burn;
  mc.m_pred = m_pred;
  mc.seed = seed;
  return mc;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "horizon=" << horizon << ";window_days=" << window_days << ";lat_min=" << lat_min << ";variants=";
  for (auto v : variants) os << to_string(v) << ',';
  os << ";postprocs=";
  for (auto p : postprocs) os << to_string(p) << ',';
  os << ";n_gibbs=" << n_gibbs << ";n_burn=" << n_burn << ";m_pred=" << m_pred << ";copula_band=" << copula_band
     << ";copula_window=" << effective_copula_window() << ";pit_bins=" << pit_bins
     << ";crps=" << (crps_estimator == CrpsEstimator::fair ? "fair" : "standard")
     << ";eval_start=" << (eval_start ? format_utc(*eval_start) : "-")
     << ";eval_end=" << (eval_end ? format_utc(*eval_end) : "-") << ";seed=" << seed;
  return os.str();
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (window_days < 1) throw ConfigError("window_days must be positive");
  if (variants.empty() || postprocs.empty()) throw ConfigError("need at least one variant and one postproc");
  if (!(n_gibbs > n_burn && n_burn >= 0)) throw ConfigError("need n_gibbs > n_burn >= 0");
  if (m_pred < 10) throw ConfigError("m_pred must be at least 10 for interval scores");
  if (n_gibbs - n_burn < m_pred) throw ConfigError("n_gibbs - n_burn must be at least m_pred");
  if (copula_band < 0) throw ConfigError("copula_band must be non-negative");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (eval_start && eval_end && *eval_end < *eval_start) throw ConfigError("evaluation range is empty");
}

std::vector<ForecastCase> load_run_cases(const RunConfig& config, const std::function<void(const std::string&)>& log) {
  std::vector<ForecastCase> cases;
  if (!config.cases_dir.empty()) {
    cases = read_case_dir(config.cases_dir);
  } else {
    if (config.nwp.empty() || config.production.empty())
      throw ConfigError("need either --cases or both --nwp and --production");
    AssembleReport report;
    cases = load_cases(config.nwp, config.production, config.horizon, config.lat_min, &report);
    if (log) {
      for (auto t : report.incomplete_covariates) log("skipping " + format_utc(t) + ": NWP knots do not cover the horizon");
      for (auto t : report.incomplete_observations) log("no complete observations for " + format_utc(t) + "; not used for training");
    }
  }
  for (const auto& c : cases)
    if (c.horizon() != config.horizon)
      throw DataError("case " + format_utc(c.init_time) + " has horizon " + std::to_string(c.horizon()) + ", expected " +
                      std::to_string(config.horizon));
  return cases;
}

Rng day_stream(std::uint64_t seed, Variant v, TimePoint init_time, std::uint64_t purpose) {
  return Rng(seed).split({static_cast<std::uint64_t>(v) + 1,
                          static_cast<std::uint64_t>(init_time.time_since_epoch().count()), purpose});
}

CopulaFit copula_from_history(const std::vector<Eigen::VectorXd>& pits, int ensemble_size, int band) {
  if (pits.empty()) throw DataError("copula: no PIT history");
  const auto t = pits.front().size();
  Eigen::MatrixXd u(static_cast<Eigen::Index>(pits.size()), t);
  for (std::size_t i = 0; i < pits.size(); ++i) u.row(static_cast<Eigen::Index>(i)) = pits[i].transpose();
  return fit_copula(latent_scores(u, ensemble_size), Graph{static_cast<int>(t), std::min<int>(band, static_cast<int>(t) - 1)});
}

DayForecast forecast_day(const TrainingWindow& w, const RunConfig& config, Variant variant) {
  if (!w.target.y) throw DataError("no observations for " + format_utc(w.target.init_time));
  const ModelConfig mc = config.model_config(variant);
  DayForecast day;
  day.init_time = w.target.init_time;
  day.train_first = w.cases.front().init_time;
  day.train_last = w.cases.back().init_time;
  day.y = *w.target.y;
  const auto draws = gibbs_fit(w.cases, mc, day_stream(config.seed, variant, day.init_time, kFit));
  Rng pred_rng = day_stream(config.seed, variant, day.init_time, kPredict);
  day.univariate = predict(draws, w.target.x_w, mc, pred_rng);
  day.univariate.init_time = day.init_time;
  Rng pit_rng = day_stream(config.seed, variant, day.init_time, kPit);
  day.pit.resize(config.horizon);
  for (int t = 0; t < config.horizon; ++t) day.pit[t] = pit(day.univariate.sorted_margin(t), day.y[t], pit_rng);
  return day;
}

std::vector<Eigen::VectorXd> pit_history(const std::vector<ForecastCase>& cases, const RunConfig& config, Variant v,
                                         TimePoint target) {
  const auto cw = static_cast<std::size_t>(config.effective_copula_window());
  std::vector<TrainingWindow> usable;
  for (auto& w : build_windows(observed_cases(cases), config.window_days))
    if (w.target.init_time < target) usable.push_back(std::move(w));
  if (usable.size() < cw)
    throw DataError("copula for " + format_utc(target) + " needs " + std::to_string(cw) +
                    " earlier forecast days with full training windows, found " + std::to_string(usable.size()));
  std::vector<Eigen::VectorXd> pits;
  for (std::size_t i = usable.size() - cw; i < usable.size(); ++i) pits.push_back(forecast_day(usable[i], config, v).pit);
  return pits;
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads <= 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < std::min<int>(threads, static_cast<int>(n)); ++k) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

bool in_range(TimePoint t, const RunConfig& c) {
  return (!c.eval_start || !(t < *c.eval_start)) && (!c.eval_end || !(*c.eval_end < t));
}

}  // namespace

BacktestResult run_backtest(const std::vector<ForecastCase>& cases, const RunConfig& config,
                            const std::function<void(const std::string&)>& log) {
  config.validate();
  const auto observed = observed_cases(cases);
  const auto windows = build_windows(observed, config.window_days);
  if (windows.empty())
    throw DataError("not enough history: " + std::to_string(observed.size()) + " observed days for a " +
                    std::to_string(config.window_days) + "-day window");

  bool want_copula = false;
  for (auto p : config.postprocs) want_copula |= p == PostProc::copula;
  const auto cw = static_cast<std::size_t>(config.effective_copula_window());

  // Without an explicit start, scoring begins once copula history exists so
  // every post-processing is scored on the same days.
  const std::size_t earliest = want_copula && !config.eval_start ? cw : 0;
  std::vector<std::size_t> scored;
  for (std::size_t i = earliest; i < windows.size(); ++i)
    if (in_range(windows[i].target.init_time, config)) scored.push_back(i);
  if (scored.empty()) throw DataError("no forecast day with a full training window falls in the evaluation range");
  const std::size_t first = want_copula ? (scored.front() >= cw ? scored.front() - cw : 0) : scored.front();
  const std::size_t last = scored.back();

  BacktestResult result;
  for (auto variant : config.variants) {
    const ModelConfig mc = config.model_config(variant);
    VariantResult vr;
    vr.variant = variant;
    vr.days.resize(last - first + 1);
    if (log) log(to_string(variant) + ": fitting " + std::to_string(vr.days.size()) + " forecast days");

    parallel_for(vr.days.size(), config.threads, [&](std::size_t k) {
      vr.days[k] = forecast_day(windows[first + k], config, variant);
    });

    for (const auto& d : vr.days)
      if (!(d.train_last < d.init_time)) {
        result.leakage_ok = false;
        if (log) log("leakage: training for " + format_utc(d.init_time) + " ends at " + format_utc(d.train_last));
      }

    if (want_copula) {
      const int m = config.m_pred + 1;
      parallel_for(vr.days.size(), config.threads, [&](std::size_t k) {
        if (k < cw) return;
        auto& day = vr.days[k];
        std::vector<Eigen::VectorXd> history;
        for (std::size_t j = k - cw; j < k; ++j) history.push_back(vr.days[j].pit);
        const auto fit = copula_from_history(history, m, config.copula_band);
        Rng rng = day_stream(config.seed, variant, day.init_time, kCopula);
        day.copula = apply_copula(fit, day.univariate, rng, mc.gwishart);
      });
    }

    const std::size_t scored_from = scored.front() - first;
    for (auto pp : config.postprocs) {
      ScoreAccumulator acc(config.horizon, config.pit_bins, config.crps_estimator);
      std::size_t skipped = 0;
      for (std::size_t k = scored_from; k < vr.days.size(); ++k) {
        const auto& day = vr.days[k];
        if (pp == PostProc::none) {
          Rng rng = day_stream(config.seed, variant, day.init_time, kScoreUnivariate);
          acc.add(day.univariate, day.y, rng);
        } else if (day.copula) {
          Rng rng = day_stream(config.seed, variant, day.init_time, kScoreCopula);
          acc.add(*day.copula, day.y, rng);
        } else {
          ++skipped;
        }
      }
      if (skipped && log)
        log(to_string(variant) + "/copula: " + std::to_string(skipped) + " days lack " + std::to_string(cw) +
            " days of forecast history and are not scored");
      if (acc.cases() > 0) vr.reports.push_back({to_string(variant), to_string(pp), acc.report()});
    }

    if (!config.keep_ensembles && !config.write_ensembles) {
      for (auto& d : vr.days) {
        d.univariate.trajectories.resize(0, 0);
        if (d.copula) d.copula->trajectories.resize(0, 0);
      }
    }
    result.variants.push_back(std::move(vr));
  }
  return result;
}

void write_backtest(const BacktestResult& result, const RunConfig& config) {
  const auto& root = config.output_dir;
  std::filesystem::create_directories(root);
  std::vector<ReportRow> rows;
  std::ofstream audit(root / "leakage_audit.csv");
  audit << "model,init_time,train_first,train_last,ok\n";
  for (const auto& vr : result.variants) {
    for (const auto& d : vr.days)
      audit << to_string(vr.variant) << ',' << format_utc(d.init_time) << ',' << format_utc(d.train_first) << ','
            << format_utc(d.train_last) << ',' << (d.train_last < d.init_time ? 1 : 0) << '\n';
    for (const auto& r : vr.reports) {
      const auto dir = root / (r.variant + "_" + r.postproc);
      write_report(dir, r.report, r.variant, r.postproc);
      nlohmann::ordered_json manifest;
      manifest["code_version"] = kCodeVersion;
      manifest["config_hash"] = config.hash();
      manifest["config"] = config.canonical();
      manifest["model"] = r.variant;
      manifest["postproc"] = r.postproc;
      manifest["scored_days"] = r.report.n_cases;
      std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
      if (config.write_ensembles) {
        std::filesystem::create_directories(dir / "ensembles");
        for (const auto& d : vr.days) {
          const PredictiveEnsemble* e = r.postproc == "copula" ? (d.copula ? &*d.copula : nullptr) : &d.univariate;
          if (!e || e->trajectories.size() == 0) continue;
          std::ofstream out(dir / "ensembles" / ("ensemble_" + format_compact_date(d.init_time) + ".csv"));
          write_ensemble_csv(out, *e);
        }
      }
      rows.push_back(r);
    }
  }
  write_summary_tables(root, rows);
  if (!audit) throw DataError("cannot write " + (root / "leakage_audit.csv").string());
}

}  // namespace trajcast
