#pragma once

// Bayesian hierarchical regression on the cube-root power scale with
// temporally correlated Gaussian errors:
//
//   y^{1/3} = X beta + eps,   eps ~ N_T(0, K^{-1}),
//   X = [I_T  Diag(x_w)  Diag(x_w^3)],
//   beta | K0, n0 ~ N_{3T}(0, [Diag(n0) (x) K0]^{-1}),
//   K ~ W_G(3, I_T),  K0 ~ W_{G0}(3, I_T),  n0_i ~ Gamma(1, 0.5).
//
// Fitted by Gibbs sampling; forecasts are posterior-predictive trajectories
// transformed back to MW.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trajcast/gwishart.hpp"
#include "trajcast/ingest.hpp"
#include "trajcast/rng.hpp"

namespace trajcast {

inline constexpr int kBlocks = 3;
using CovariatePowers = std::array<int, kBlocks>;
inline constexpr CovariatePowers kDefaultPowers{0, 1, 3};

/// T x 3T design [Diag(x^p0) | Diag(x^p1) | Diag(x^p2)]; with the default
/// powers this is [I_T | Diag(x_w) | Diag(x_w^3)].
Eigen::MatrixXd build_design(const Eigen::VectorXd& x_w, const CovariatePowers& powers = kDefaultPowers);

/// Elementwise cube root of non-negative production.
Eigen::VectorXd transform(const Eigen::VectorXd& y);

enum class Variant { full, ind_errors, fully_ind };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  int horizon = 72;
  Graph graph_k = Graph::ar1(72);
  Graph graph_k0 = Graph::ar1(72);
  bool tie_k0_to_k = true;
  int n_gibbs = 3000;
  int n_burn = 1000;
  int m_pred = 999;
  std::uint64_t seed = 1;
  CovariatePowers powers = kDefaultPowers;
  /// Holds the inflation factors fixed instead of sampling them.
  std::optional<std::array<double, kBlocks>> fixed_n0;
  GWishartOptions gwishart;

  /// Full: AR(1) errors with K0 = K. Ind Errors: independent errors, AR(1)
  /// coefficient prior. Fully Ind: both independent.
  static ModelConfig for_variant(Variant v, int horizon);
  void validate() const;
  /// Graph and tying settings as recorded in checkpoints, e.g. `K=band1;K0=band1;tied=1`.
  [[nodiscard]] std::string tag() const;
};

struct PosteriorDraw {
  Eigen::VectorXd beta;  // (beta_0, beta_1, beta_2), each of length T
  PrecisionMatrix k;
  std::array<double, kBlocks> n0{};
};

/// m x T matrix of trajectories on the MW scale.
struct PredictiveEnsemble {
  TimePoint init_time;
  Eigen::MatrixXd trajectories;
  std::string postproc = "none";

  [[nodiscard]] int size() const { return static_cast<int>(trajectories.rows()); }
  [[nodiscard]] int horizon() const { return static_cast<int>(trajectories.cols()); }
  /// Members at lead index t (0-based), ascending.
  [[nodiscard]] std::vector<double> sorted_margin(int t) const;
};

/// Cross-products of a training window on the transformed scale. Every
/// per-iteration quantity of the sampler is a function of these, so the
/// sampler's cost does not grow with the window length.
struct SufficientStats {
  int horizon = 0;
  int n_cases = 0;
  std::array<std::array<Eigen::MatrixXd, kBlocks>, kBlocks> xx;  // sum x^pa (x^pb)'
  std::array<Eigen::MatrixXd, kBlocks> xy;                       // sum x^pa y'
  Eigen::MatrixXd yy;                                             // sum y y'

  static SufficientStats from_cases(const std::vector<ForecastCase>& cases, const CovariatePowers& powers);
};

/// Full conditional of beta: N(mean, precision^{-1}).
struct BetaConditional {
  Eigen::MatrixXd precision;  // Diag(n0) (x) K_eff + sum X'KX
  Eigen::VectorXd mean;       // precision^{-1} sum X'K y
  Eigen::LLT<Eigen::MatrixXd> factor;
};

BetaConditional beta_conditional(const SufficientStats& stats, const PrecisionMatrix& k, const PrecisionMatrix& k_eff,
                                 const std::array<double, kBlocks>& n0);

/// sum_n (y_n - X_n beta)(y_n - X_n beta)'.
Eigen::MatrixXd residual_scatter(const SufficientStats& stats, const Eigen::VectorXd& beta);

/// sum_i n0_i beta_i beta_i'.
Eigen::MatrixXd coefficient_scatter(const Eigen::VectorXd& beta, const std::array<double, kBlocks>& n0);

/// Runs the Gibbs sampler on the window's training cases and returns the
/// n_gibbs - n_burn post-burn-in draws. Deterministic given config.seed.
std::vector<PosteriorDraw> gibbs_fit(const TrainingWindow& window, const ModelConfig& config);
std::vector<PosteriorDraw> gibbs_fit(const std::vector<ForecastCase>& training, const ModelConfig& config, Rng rng);

/// Posterior-predictive trajectories for covariates x_w: one per draw (draws
/// are subsampled evenly down to m_pred), sampled on the cube-root scale,
/// clamped at zero and cubed.
PredictiveEnsemble predict(const std::vector<PosteriorDraw>& draws, const Eigen::VectorXd& x_w, const ModelConfig& config,
                           Rng& rng);

/// Empirical CDF of lead t (0-based) at y.
double marginal_cdf(const PredictiveEnsemble& ensemble, int t, double y);

// Serialisation.
// Ensemble CSV: `trajectory_id,lead_h,power_mw`, preceded by `#` metadata lines.
void write_ensemble_csv(std::ostream& out, const PredictiveEnsemble& ensemble);
PredictiveEnsemble read_ensemble_csv(std::istream& in);

/// Versioned text checkpoint; doubles are written in shortest round-trip form
/// so a re-read reproduces every draw bit for bit.
void write_checkpoint(std::ostream& out, const std::vector<PosteriorDraw>& draws, const ModelConfig& config);
struct Checkpoint {
  int horizon = 0;
  std::string variant_tag;
  CovariatePowers powers = kDefaultPowers;
  std::vector<PosteriorDraw> draws;
};
Checkpoint read_checkpoint(std::istream& in);

inline constexpr const char* kCheckpointMagic = "# trajcast-posterior v1";

}  // namespace trajcast
