#pragma once

// Turning raw NWP grid files and hourly production records into aligned
// (covariate trajectory, observation trajectory) forecast cases.

#include <Eigen/Core>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "trajcast/timeutil.hpp"

namespace trajcast {

struct NwpGridRecord {
  TimePoint init_time;
  int lead_h = 0;
  double lat = 0.0;
  double lon = 0.0;
  int member = 0;  // 0 for ensemble-mean input
  double wind_speed_100m = 0.0;
};

struct ProductionRecord {
  TimePoint time;
  double power = 0.0;  // MW
};

/// One forecast day: spatially averaged hourly wind-speed forecasts for
/// leads 1..T and, when known, the production observed at those hours.
struct ForecastCase {
  TimePoint init_time;
  Eigen::VectorXd x_w;
  std::optional<Eigen::VectorXd> y;

  [[nodiscard]] int horizon() const { return static_cast<int>(x_w.size()); }
};

struct TrainingWindow {
  std::vector<ForecastCase> cases;
  ForecastCase target;
};

/// Average over ensemble members per (init_time, lead, lat, lon) cell. Every
/// member seen anywhere in the input must be present in every cell.
std::vector<NwpGridRecord> ensemble_mean(const std::vector<NwpGridRecord>& records);

/// Natural cubic spline through (knot, value) pairs, evaluated at lead hours
/// 1..T and clamped below at zero.
Eigen::VectorXd interpolate_hourly(const std::map<int, double>& knots, int horizon);

/// Natural cubic spline interpolant; exposed for reuse and testing.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y);
  [[nodiscard]] double operator()(double at) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

using InitLead = std::pair<TimePoint, int>;

/// Unweighted mean of wind speed over grid points with lat > lat_min, per
/// (init_time, lead).
std::map<InitLead, double> spatial_average(const std::vector<NwpGridRecord>& records, double lat_min);

/// For each case with at least `window_days` predecessors, the window of
/// exactly the `window_days` immediately preceding cases.
std::vector<TrainingWindow> build_windows(const std::vector<ForecastCase>& cases, int window_days);

struct AssembleReport {
  std::vector<TimePoint> incomplete_covariates;   // init_times without full knot coverage
  std::vector<TimePoint> incomplete_observations;  // kept, but without y
};

/// Builds one ForecastCase per init_time from spatially averaged knots and
/// production records. Cases whose production is missing for any lead hour
/// carry no observation.
std::vector<ForecastCase> assemble_cases(const std::map<InitLead, double>& averaged,
                                         const std::vector<ProductionRecord>& production, int horizon,
                                         AssembleReport* report = nullptr);

/// Only the cases that carry observations.
std::vector<ForecastCase> observed_cases(const std::vector<ForecastCase>& cases);

// CSV interfaces.
// NWP:        init_time,lead_h,lat,lon,member,ws100
// Production: time,power_mw
// Case:       lead_h,ws_mean,power_mw   (power column optional)
std::vector<NwpGridRecord> read_nwp_csv(std::istream& in);
std::vector<NwpGridRecord> read_nwp_csv(const std::filesystem::path& path);
void write_nwp_csv(std::ostream& out, const std::vector<NwpGridRecord>& records);

std::vector<ProductionRecord> read_production_csv(std::istream& in);
std::vector<ProductionRecord> read_production_csv(const std::filesystem::path& path);
void write_production_csv(std::ostream& out, const std::vector<ProductionRecord>& records);

void write_case_csv(std::ostream& out, const ForecastCase& fc);
ForecastCase read_case_csv(std::istream& in, TimePoint init_time);

/// Runs the whole preprocessing chain: member averaging (when the input has
/// members), spatial averaging, hourly interpolation and alignment.
std::vector<ForecastCase> load_cases(const std::filesystem::path& nwp, const std::filesystem::path& production,
                                     int horizon, double lat_min, AssembleReport* report = nullptr);

}  // namespace trajcast
