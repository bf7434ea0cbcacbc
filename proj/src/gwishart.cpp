#include "trajcast/gwishart.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <string>

#include "trajcast/csv.hpp"
#include "trajcast/error.hpp"

namespace trajcast {

void GWishartParams::validate() const {
  if (!(delta > 2.0)) throw std::invalid_argument("G-Wishart: delta must exceed 2");
  if (D.rows() != D.cols() || D.rows() != graph.dim)
    throw std::invalid_argument("G-Wishart: scale matrix does not match graph dimension");
  if (!D.isApprox(D.transpose(), 1e-10)) throw std::invalid_argument("G-Wishart: scale matrix is not symmetric");
  if (!is_positive_definite(D)) throw std::invalid_argument("G-Wishart: scale matrix is not positive definite");
}

bool is_positive_definite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

namespace {

/// Bartlett pieces of a complete-graph draw: K = (U^{-1} A)(U^{-1} A)' with
/// D = U'U and A lower triangular.
struct BartlettDraw {
  Eigen::MatrixXd a;
  Eigen::MatrixXd u;
};

BartlettDraw bartlett(double delta, const Eigen::MatrixXd& D, Rng& rng) {
  const Eigen::Index p = D.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(D);
  if (D.cols() != p || llt.info() != Eigen::Success)
    throw NumericalError("sample_wishart: scale matrix is not positive definite");
  const double df = delta + static_cast<double>(p) - 1.0;
  BartlettDraw out{Eigen::MatrixXd::Zero(p, p), llt.matrixU()};
  for (Eigen::Index i = 0; i < p; ++i) {
    out.a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) out.a(i, j) = rng.normal();
  }
  return out;
}

/// Completion from a factor C of Sigma = C'C: row t of the unit upper-banded
/// G regresses t on its forward neighbours t+1..t+band, V holds the residual
/// variances, and K = G' V^{-1} G. Each regression comes from a QR of the
/// relevant columns of C, so Sigma itself is never formed.
PrecisionMatrix complete_from_factor(const Eigen::MatrixXd& c, int band) {
  const auto p = c.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd v(p);
  for (Eigen::Index t = 0; t < p; ++t) {
    const Eigen::Index nn = std::min<Eigen::Index>(band, p - 1 - t);
    Eigen::MatrixXd cols(c.rows(), nn + 1);
    cols.leftCols(nn) = c.middleCols(t + 1, nn);
    cols.col(nn) = c.col(t);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(cols);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(nn + 1).triangularView<Eigen::Upper>();
    if (nn > 0) {
      const Eigen::VectorXd phi =
          r.topLeftCorner(nn, nn).triangularView<Eigen::Upper>().solve(r.col(nn).head(nn));
      g.row(t).segment(t + 1, nn) = -phi.transpose();
    }
    v[t] = r(nn, nn) * r(nn, nn);
    if (!(v[t] > 0.0)) throw NumericalError("G-Wishart completion: degenerate conditional variance at lead " + std::to_string(t));
  }
  return g.transpose() * v.cwiseInverse().asDiagonal() * g;
}

}  // namespace

PrecisionMatrix sample_wishart(double delta, const Eigen::MatrixXd& D, Rng& rng) {
  const auto draw = bartlett(delta, D, rng);
  const Eigen::MatrixXd b = draw.u.triangularView<Eigen::Upper>().solve(draw.a);
  Eigen::MatrixXd k = b * b.transpose();
  return 0.5 * (k + k.transpose());
}

namespace {

PrecisionMatrix sample_empty_graph(const GWishartParams& params, Rng& rng) {
  const Eigen::Index p = params.D.rows();
  PrecisionMatrix k = PrecisionMatrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) k(i, i) = rng.gamma(params.delta / 2.0, params.D(i, i) / 2.0);
  return k;
}

}  // namespace

PrecisionMatrix complete_decomposable(const Eigen::MatrixXd& sigma, const Graph& graph) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("complete_decomposable: sigma is not positive definite");
  return complete_from_factor(llt.matrixU(), std::min(graph.band, graph.dim - 1));
}

CompletionResult complete_iteratively(const Eigen::MatrixXd& sigma, const Graph& graph, const GWishartOptions& options) {
  const int p = graph.dim;
  const int band = graph.band;
  Eigen::MatrixXd w = sigma;
  CompletionResult out;
  for (; out.iterations < options.max_iter;) {
    ++out.iterations;
    double change = 0.0;
    for (int j = 0; j < p; ++j) {
      std::vector<int> nb;
      for (int v = std::max(0, j - band); v <= std::min(p - 1, j + band); ++v)
        if (v != j) nb.push_back(v);
      const auto n_nb = static_cast<Eigen::Index>(nb.size());
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_nb);
      if (n_nb > 0) {
        Eigen::MatrixXd w_nn(n_nb, n_nb);
        Eigen::VectorXd s_nj(n_nb);
        for (Eigen::Index r = 0; r < n_nb; ++r) {
          s_nj[r] = sigma(nb[static_cast<std::size_t>(r)], j);
          for (Eigen::Index c = 0; c < n_nb; ++c)
            w_nn(r, c) = w(nb[static_cast<std::size_t>(r)], nb[static_cast<std::size_t>(c)]);
        }
        beta = w_nn.llt().solve(s_nj);
      }
      for (int i = 0; i < p; ++i) {
        if (i == j) continue;
        double val = 0.0;
        for (Eigen::Index r = 0; r < n_nb; ++r) val += w(i, nb[static_cast<std::size_t>(r)]) * beta[r];
        change = std::max(change, std::abs(val - w(i, j)));
        w(i, j) = val;
        w(j, i) = val;
      }
    }
    out.last_change = change;
    if (change < options.tolerance * w.diagonal().cwiseAbs().maxCoeff()) {
      out.converged = true;
      break;
    }
  }
  out.k = w.llt().solve(Eigen::MatrixXd::Identity(p, p));
  return out;
}

PrecisionMatrix complete_iteratively_or_throw(const Eigen::MatrixXd& sigma, const Graph& graph,
                                              const GWishartOptions& options) {
  auto res = complete_iteratively(sigma, graph, options);
  if (!res.converged)
    throw NumericalError("G-Wishart completion did not converge after " + std::to_string(res.iterations) +
                         " sweeps (last max change " + std::to_string(res.last_change) + ")");
  return res.k;
}

PrecisionMatrix sample_gwishart(const GWishartParams& params, Rng& rng, const GWishartOptions& options) {
  params.validate();
  if (params.graph.complete()) return sample_wishart(params.delta, params.D, rng);
  if (params.graph.band == 0) return sample_empty_graph(params, rng);

  PrecisionMatrix k;
  if (options.method == CompletionMethod::iterative) {
    const auto p = params.graph.dim;
    const PrecisionMatrix k_full = sample_wishart(params.delta, params.D, rng);
    k = complete_iteratively_or_throw(k_full.llt().solve(Eigen::MatrixXd::Identity(p, p)), params.graph, options);
  } else {
    const auto draw = bartlett(params.delta, params.D, rng);
    // Sigma = K^{-1} = (A^{-1} U)'(A^{-1} U).
    const Eigen::MatrixXd c = draw.a.triangularView<Eigen::Lower>().solve(draw.u);
    k = complete_from_factor(c, params.graph.band);
  }
  for (int i = 0; i < params.graph.dim; ++i)
    for (int j = 0; j < i; ++j) {
      const double v = params.graph.has_edge(i, j) ? 0.5 * (k(i, j) + k(j, i)) : 0.0;
      k(i, j) = v;
      k(j, i) = v;
    }
  if (!is_positive_definite(k)) throw NumericalError("sample_gwishart: completed draw is not positive definite");
  return k;
}

GWishartParams posterior_update(const GWishartParams& prior, double n_obs, const Eigen::MatrixXd& S) {
  if (n_obs < 0) throw std::invalid_argument("posterior_update: negative observation count");
  if (S.rows() != prior.D.rows() || S.cols() != prior.D.cols())
    throw std::invalid_argument("posterior_update: S has the wrong shape");
  return {prior.delta + n_obs, prior.D + 0.5 * (S + S.transpose()), prior.graph};
}

Eigen::MatrixXd wishart_mean(double delta, const Eigen::MatrixXd& D) {
  const auto p = D.rows();
  return (delta + static_cast<double>(p) - 1.0) * D.llt().solve(Eigen::MatrixXd::Identity(p, p));
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << csv::format_double(m(i, j));
    out << '\n';
  }
}

}  // namespace trajcast
