#pragma once

// Two-stage Gaussian copula: marginal forecasts are produced first, then
// re-correlated through a latent Gaussian vector whose precision K_z is
// learned from probit-transformed PIT values of past forecasts.

#include <Eigen/Core>
#include <span>
#include <vector>

#include "trajcast/gwishart.hpp"
#include "trajcast/model.hpp"
#include "trajcast/rng.hpp"

namespace trajcast {

/// N x T latent Gaussian observations z_tn = Phi^{-1}(F_tn(y_tn)).
struct LatentScores {
  Eigen::MatrixXd z;
};

struct CopulaFit {
  GWishartParams posterior;  // W_G(3 + N, I_T + U)
  Eigen::MatrixXd u;         // sum_n z_n z_n'
};

/// Probit transform of an N x T matrix of PIT values F_tn(y_tn). Values are
/// clipped to [1/(2m), 1 - 1/(2m)] first, m being the ensemble size the PIT
/// values were computed against.
LatentScores latent_scores(const Eigen::MatrixXd& pit_values, int ensemble_size);

CopulaFit fit_copula(const LatentScores& scores, const Graph& graph);

/// Generalised inverse max{y : F(y) <= u} of the empirical CDF of `sorted`.
double generalized_inverse(std::span<const double> sorted, double u);

/// Steps 2-3 for a given latent covariance: z* ~ N(0, cov), standardised by
/// the diagonal of cov, mapped through Phi and each margin's generalised
/// inverse. `sorted_margins[t]` holds the ascending ensemble at lead t.
Eigen::VectorXd resample_with_covariance(const Eigen::MatrixXd& cov, const std::vector<std::vector<double>>& sorted_margins,
                                         Rng& rng);

/// One re-correlated trajectory: draws K_z from the fitted posterior (a failed
/// positive-definiteness check is retried once), then runs steps 2-3.
Eigen::VectorXd resample_trajectory(const CopulaFit& fit, const std::vector<std::vector<double>>& sorted_margins, Rng& rng,
                                    const GWishartOptions& options = {});

/// Replaces every trajectory of `marginal` with a copula resample; the margins
/// of the result are draws from the margins of the input.
PredictiveEnsemble apply_copula(const CopulaFit& fit, const PredictiveEnsemble& marginal, Rng& rng,
                                const GWishartOptions& options = {});

}  // namespace trajcast
