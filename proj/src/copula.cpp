#include "trajcast/copula.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trajcast/error.hpp"
#include "trajcast/stats.hpp"

namespace trajcast {

LatentScores latent_scores(const Eigen::MatrixXd& pit_values, int ensemble_size) {
  if (ensemble_size < 1) throw std::invalid_argument("latent_scores: ensemble size must be positive");
  const double eps = 1.0 / (2.0 * ensemble_size);
  LatentScores out;
  out.z = pit_values.unaryExpr([eps](double p) { return stats::normal_quantile(std::clamp(p, eps, 1.0 - eps)); });
  return out;
}

CopulaFit fit_copula(const LatentScores& scores, const Graph& graph) {
  if (scores.z.rows() < 1) throw DataError("fit_copula: need at least one latent observation");
  if (scores.z.cols() != graph.dim) throw std::invalid_argument("fit_copula: graph dimension differs from horizon");
  CopulaFit fit;
  fit.u = scores.z.transpose() * scores.z;
  const auto t = graph.dim;
  fit.posterior = posterior_update({3.0, Eigen::MatrixXd::Identity(t, t), graph}, static_cast<double>(scores.z.rows()), fit.u);
  return fit;
}

double generalized_inverse(std::span<const double> sorted, double u) {
  if (sorted.empty()) throw std::invalid_argument("generalized_inverse: empty ensemble");
  const double n = static_cast<double>(sorted.size());
  const auto k = static_cast<std::size_t>(std::clamp(std::floor(u * n), 0.0, n - 1.0));
  return sorted[k];
}

Eigen::VectorXd resample_with_covariance(const Eigen::MatrixXd& cov, const std::vector<std::vector<double>>& sorted_margins,
                                         Rng& rng) {
  const auto t = cov.rows();
  if (static_cast<std::size_t>(t) != sorted_margins.size())
    throw std::invalid_argument("resample: margins and latent dimension differ");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("resample: latent covariance is not positive definite");
  Eigen::VectorXd e(t);
  for (Eigen::Index i = 0; i < t; ++i) e[i] = rng.normal();
  const Eigen::VectorXd z = llt.matrixL() * e;
  Eigen::VectorXd out(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double zhat = z[i] / std::sqrt(cov(i, i));
    out[i] = generalized_inverse(sorted_margins[static_cast<std::size_t>(i)], stats::normal_cdf(zhat));
  }
  return out;
}

Eigen::VectorXd resample_trajectory(const CopulaFit& fit, const std::vector<std::vector<double>>& sorted_margins, Rng& rng,
                                    const GWishartOptions& options) {
  PrecisionMatrix kz;
  try {
    kz = sample_gwishart(fit.posterior, rng, options);
  } catch (const NumericalError&) {
    kz = sample_gwishart(fit.posterior, rng, options);
  }
  const auto t = kz.rows();
  const Eigen::MatrixXd cov = kz.llt().solve(Eigen::MatrixXd::Identity(t, t));
  return resample_with_covariance(0.5 * (cov + cov.transpose()), sorted_margins, rng);
}

PredictiveEnsemble apply_copula(const CopulaFit& fit, const PredictiveEnsemble& marginal, Rng& rng,
                                const GWishartOptions& options) {
  if (marginal.horizon() != fit.posterior.graph.dim)
    throw std::invalid_argument("apply_copula: ensemble horizon differs from copula dimension");
  std::vector<std::vector<double>> margins;
  for (int t = 0; t < marginal.horizon(); ++t) margins.push_back(marginal.sorted_margin(t));
  PredictiveEnsemble out;
  out.init_time = marginal.init_time;
  out.postproc = "copula";
  out.trajectories.resize(marginal.size(), marginal.horizon());
  for (int i = 0; i < marginal.size(); ++i) out.trajectories.row(i) = resample_trajectory(fit, margins, rng, options).transpose();
  return out;
}

}  // namespace trajcast
