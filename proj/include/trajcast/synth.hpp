#pragma once

// Synthetic forecast cases drawn from the model's own generative process
// (optionally misspecified), plus the closed-form conjugate posterior for the
// single-lead case used to validate the sampler.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trajcast/ingest.hpp"
#include "trajcast/model.hpp"

namespace trajcast {

enum class Scenario {
  well_specified,
  heavy_tails,      // Student-t(3) errors rescaled to the same covariance
  quadratic_truth,  // truth uses x^2 where the fitted model uses x^3
};

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

struct SynthConfig {
  int horizon = 24;
  int n_days = 465;
  Eigen::VectorXd beta_true;  // length 3T
  PrecisionMatrix k_true;
  double ws_mean = 7.0;       // hourly wind-speed AR(1) path
  double ws_ar = 0.95;
  double ws_innovation_sd = 0.6;
  TimePoint start = parse_utc("2011-01-01");
  std::uint64_t seed = 1;
  Scenario scenario = Scenario::well_specified;

  /// Defaults used throughout the test-suite and by `trajcast synth`:
  /// diurnally varying coefficients and AR(1) errors with the given lag-one
  /// correlation and marginal SD on the cube-root scale.
  static SynthConfig preset(int horizon, int n_days, double error_corr = 0.9, double error_sd = 1.0,
                            std::uint64_t seed = 1);
  void validate() const;
};

/// Precision of a stationary AR(1) process with marginal SD `sd` and lag-one
/// correlation `rho` (tridiagonal).
PrecisionMatrix ar1_precision(int horizon, double rho, double sd);

/// Coefficients (beta_0, beta_1, beta_2) used by SynthConfig::preset.
Eigen::VectorXd default_beta(int horizon);

std::vector<ForecastCase> generate(const SynthConfig& config);

/// Writes one case CSV per day (`case_YYYYMMDD.csv`) into `dir`.
void write_case_dir(const std::filesystem::path& dir, const std::vector<ForecastCase>& cases);
std::vector<ForecastCase> read_case_dir(const std::filesystem::path& dir);

/// Writes NWP (`nwp.csv`, hourly knots at leads 0..T on two grid points, one
/// of them south of the latitude cut) and production (`production.csv`).
/// Production at a valid time comes from the latest initialisation covering
/// it, so the round trip through ingest is exact for horizons up to 24.
void write_ingest_files(const std::filesystem::path& dir, const std::vector<ForecastCase>& cases);

/// Normal-Gamma posterior for T = 1 with fixed inflation factors:
///   k ~ Gamma(a, b),  beta | k ~ N(mean, (k * precision)^{-1}).
struct NormalGammaPosterior {
  Eigen::Vector3d mean;
  Eigen::Matrix3d precision;
  double a = 0.0;
  double b = 0.0;

  [[nodiscard]] Eigen::Matrix3d beta_covariance() const;  // b / (a - 1) * precision^{-1}
  [[nodiscard]] double k_mean() const { return a / b; }
  [[nodiscard]] double k_variance() const { return a / (b * b); }
};

/// Exact posterior under the priors beta | k ~ N(0, (k Diag(n0))^{-1}),
/// k ~ Gamma(3/2, 1/2), computed without any sampling. Throws when a case
/// does not have T = 1.
NormalGammaPosterior closed_form_posterior_t1(const std::vector<ForecastCase>& cases, const std::array<double, 3>& n0,
                                              const CovariatePowers& powers = kDefaultPowers);

}  // namespace trajcast
