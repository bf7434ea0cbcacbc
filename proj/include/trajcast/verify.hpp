#pragma once

// Forecast verification: PIT, interval coverage/width, MAE/RMSE/CRPS,
// band-depth multivariate ranks, and Day-1/2/3 aggregation.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trajcast/model.hpp"
#include "trajcast/rng.hpp"

namespace trajcast {

/// Randomised PIT of y against m-1 ensemble members (m = members + 1):
/// uniform on [#{x < y}, #{x <= y} + 1] / m. Calibrated ensembles give exactly
/// uniform values. `members` need not be sorted.
double pit(std::span<const double> members, double y, Rng& rng);

struct IntervalResult {
  bool covered = false;
  double width = 0.0;
};

/// Central `level` interval from empirical (type 7) quantiles; needs m >= 10.
IntervalResult interval_coverage_width(std::span<const double> members, double y, double level = 0.8);

enum class CrpsEstimator {
  standard,  // (1/m) sum|x_i - y| - 1/(2 m^2) sum sum |x_i - x_j|
  fair,      // same with 1/(2 m (m - 1)) on the spread term
};

double crps(std::span<const double> members, double y, CrpsEstimator estimator = CrpsEstimator::standard);

struct PointErrors {
  double abs_err = 0.0;  // |median - y|
  double sq_err = 0.0;   // (mean - y)^2
};

PointErrors mae_rmse(std::span<const double> members, double y);

/// Band-depth pre-rank of `trajectory` within `ensemble` ((m-1) x T):
/// (1/T) sum_t [m - rank_t][rank_t - 1] + (m - 1), rank_t being the rank of
/// trajectory[t] among the m values at lead t (ties resolved downward).
double band_depth_prerank(const Eigen::VectorXd& trajectory, const Eigen::MatrixXd& ensemble);

/// Rank in 1..m of the observation's pre-rank among the pre-ranks of all m
/// trajectories (observation plus m-1 samples). Tied margins are ordered at
/// random before ranking, and tied pre-ranks are broken uniformly at random.
int multivariate_rank(const Eigen::VectorXd& y, const Eigen::MatrixXd& samples, Rng& rng);

enum class Functional { sum, max };
std::string to_string(Functional f);

struct FunctionalScores {
  double abs_err = 0.0;
  double sq_err = 0.0;
  double crps = 0.0;
};

/// Applies the functional to each trajectory and to y, then scores the
/// resulting univariate ensemble.
FunctionalScores functional_scores(const PredictiveEnsemble& ensemble, const Eigen::VectorXd& y, Functional f);

/// Lead blocks of 24 hours: leads 1-24 (Day 1), 25-48 (Day 2), 49-72 (Day 3).
inline constexpr int kHoursPerDay = 24;
inline int day_count(int horizon) { return (horizon + kHoursPerDay - 1) / kHoursPerDay; }

struct DayScores {
  double mae = 0.0;
  double rmse = 0.0;
  double crps = 0.0;
  double coverage80 = 0.0;
  double width80 = 0.0;
};

struct ScoreReport {
  int horizon = 0;
  int n_cases = 0;
  int ensemble_size = 0;  // m = members + 1
  std::vector<double> mae, rmse, crps, coverage80, width80;  // per lead
  std::vector<DayScores> per_day;
  std::vector<std::vector<std::size_t>> pit;     // [day][bin]
  std::vector<std::vector<std::size_t>> mvrank;  // [day][rank - 1], over the leads of that day
  FunctionalScores sum_scores;  // mae, rmse (not squared), crps
  FunctionalScores max_scores;
  std::vector<double> pit_values;  // all (case, lead) PIT values, case-major
  std::vector<int> mvrank_values;  // Day-1 multivariate rank per case
};

/// Accumulates per-case verification and produces a ScoreReport.
class ScoreAccumulator {
 public:
  ScoreAccumulator(int horizon, int pit_bins = 20, CrpsEstimator estimator = CrpsEstimator::standard);

  void add(const PredictiveEnsemble& ensemble, const Eigen::VectorXd& y, Rng& rng);
  [[nodiscard]] ScoreReport report() const;
  [[nodiscard]] int cases() const { return n_cases_; }

 private:
  int horizon_;
  int pit_bins_;
  CrpsEstimator estimator_;
  int n_cases_ = 0;
  int ensemble_size_ = 0;
  std::vector<double> abs_err_, sq_err_, crps_, covered_, width_;
  std::vector<std::vector<std::size_t>> pit_;
  std::vector<std::vector<std::size_t>> mvrank_;
  std::array<FunctionalScores, 2> functional_{};
  std::vector<double> pit_values_;
  std::vector<int> mvrank_values_;
};

/// Merges counts into `bins` equal groups (len(counts) must be divisible).
std::vector<std::size_t> coarsen(std::span<const std::size_t> counts, std::size_t bins);

// Output files (see README for the exact headers).
void write_report(const std::filesystem::path& dir, const ScoreReport& report, const std::string& variant,
                  const std::string& postproc);

struct ReportRow {
  std::string variant;
  std::string postproc;
  ScoreReport report;
};

/// Cross-model tables: coverage/width, marginal scores, and the sum and max
/// functional scores.
void write_summary_tables(const std::filesystem::path& dir, const std::vector<ReportRow>& rows);

}  // namespace trajcast
