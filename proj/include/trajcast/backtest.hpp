#pragma once

// Rolling fit-predict-score workflow over a sequence of forecast days, for
// any combination of model variants and post-processing.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trajcast/copula.hpp"
#include "trajcast/ingest.hpp"
#include "trajcast/model.hpp"
#include "trajcast/verify.hpp"

namespace trajcast {

enum class PostProc { none, copula };
std::string to_string(PostProc p);
PostProc parse_postproc(const std::string& name);

struct RunConfig {
  std::filesystem::path nwp;
  std::filesystem::path production;
  std::filesystem::path cases_dir;  // alternative to nwp + production
  std::filesystem::path output_dir = "out";
  int horizon = 72;
  int window_days = 100;
  double lat_min = 51.0;
  std::vector<Variant> variants{Variant::full};
  std::vector<PostProc> postprocs{PostProc::none};
  int n_gibbs = 3000;
  int n_burn = 1000;
  int m_pred = 999;
  int copula_band = 1;
  int copula_window = 0;  // 0: same as window_days
  int pit_bins = 20;
  CrpsEstimator crps_estimator = CrpsEstimator::standard;
  std::optional<TimePoint> eval_start;
  std::optional<TimePoint> eval_end;
  std::uint64_t seed = 1;
  int threads = 1;
  bool keep_ensembles = false;
  bool write_ensembles = false;

  [[nodiscard]] ModelConfig model_config(Variant v) const;
  [[nodiscard]] int effective_copula_window() const { return copula_window > 0 ? copula_window : window_days; }
  /// Stable text form of every setting that affects results.
  [[nodiscard]] std::string canonical() const;
  [[nodiscard]] std::string hash() const;
  void validate() const;
};

inline constexpr const char* kCodeVersion = "trajcast 0.1.0";

/// Loads cases from the configured inputs (case directory or NWP + production).
std::vector<ForecastCase> load_run_cases(const RunConfig& config, const std::function<void(const std::string&)>& log = {});

struct DayForecast {
  TimePoint init_time;
  TimePoint train_first;
  TimePoint train_last;
  Eigen::VectorXd y;
  Eigen::VectorXd pit;  // out-of-sample randomised PIT per lead
  PredictiveEnsemble univariate;
  std::optional<PredictiveEnsemble> copula;
};

struct VariantResult {
  Variant variant;
  std::vector<DayForecast> days;  // ensembles cleared unless keep_ensembles
  std::vector<ReportRow> reports;
};

struct BacktestResult {
  std::vector<VariantResult> variants;
  bool leakage_ok = true;
};

/// What a per-day random stream is used for.
enum StreamPurpose : std::uint64_t { kFit = 1, kPredict, kPit, kCopula, kScoreUnivariate, kScoreCopula };

/// Random stream for one (variant, day, purpose); fit, predict and backtest
/// all draw from these, so a day's forecast does not depend on which command
/// produced it.
Rng day_stream(std::uint64_t seed, Variant v, TimePoint init_time, std::uint64_t purpose);

/// Fits the window, predicts its target and computes the target's PIT values.
/// The target must carry observations.
DayForecast forecast_day(const TrainingWindow& window, const RunConfig& config, Variant v);

/// Out-of-sample PIT vectors of the `copula_window` observed days immediately
/// preceding `target`, each forecast from its own training window.
std::vector<Eigen::VectorXd> pit_history(const std::vector<ForecastCase>& cases, const RunConfig& config, Variant v,
                                         TimePoint target);

/// Marginal forecasts for every target day with a full window, then copula
/// re-correlation using the out-of-sample PIT values of the preceding
/// `copula_window` forecast days, and scoring over the evaluation range.
BacktestResult run_backtest(const std::vector<ForecastCase>& cases, const RunConfig& config,
                            const std::function<void(const std::string&)>& log = {});

/// Writes per-(variant, postproc) report directories with manifests, the
/// cross-model tables and the leakage audit.
void write_backtest(const BacktestResult& result, const RunConfig& config);

/// Copula fit for a target from the PIT values of previous forecast days.
CopulaFit copula_from_history(const std::vector<Eigen::VectorXd>& pits, int ensemble_size, int band);

}  // namespace trajcast
