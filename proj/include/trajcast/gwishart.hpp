#pragma once

// G-Wishart sampling on banded conditional-independence graphs.
//
// Parameterisation: W_G(delta, D) has density
// proportional to |K|^{(delta-2)/2} exp(-tr(K D)/2) on positive-definite K
// with K_ij = 0 for (i, j) outside the graph. For the complete graph this is
// the ordinary Wishart with delta + T - 1 degrees of freedom and scale D^{-1};
// for the empty graph the diagonal entries are independent Gamma(delta/2,
// D_ii/2), so W_G(3, I) puts a Gamma(3/2, 1/2) law on every marginal
// precision.

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>

#include "trajcast/rng.hpp"

namespace trajcast {

/// Banded graph over T lead times: (i, j) is an edge iff |i - j| <= band.
/// band 0 is the independence graph, band 1 the AR(1) graph.
struct Graph {
  int dim = 0;
  int band = 0;

  static Graph independence(int dim) { return {dim, 0}; }
  static Graph ar1(int dim) { return {dim, 1}; }
  static Graph full(int dim) { return {dim, dim > 0 ? dim - 1 : 0}; }

  [[nodiscard]] bool has_edge(int i, int j) const { return (i > j ? i - j : j - i) <= band; }
  [[nodiscard]] bool complete() const { return band >= dim - 1; }
  friend bool operator==(const Graph&, const Graph&) = default;
};

using PrecisionMatrix = Eigen::MatrixXd;

struct GWishartParams {
  double delta = 3.0;
  Eigen::MatrixXd D;
  Graph graph;

  /// Throws std::invalid_argument on delta <= 2, shape mismatch, asymmetric
  /// or non-positive-definite D.
  void validate() const;
};

enum class CompletionMethod {
  decomposable,  // exact banded completion
  iterative,     // node-wise regression sweeps
};

struct GWishartOptions {
  CompletionMethod method = CompletionMethod::decomposable;
  double tolerance = 1e-8;  // iterative: max change of W relative to its largest diagonal entry
  int max_iter = 1000;
};

/// Unconstrained Wishart draw in the W_G parameterisation (complete graph).
PrecisionMatrix sample_wishart(double delta, const Eigen::MatrixXd& D, Rng& rng);

/// Direct sampler: a complete-graph draw K*, then the unique precision
/// matrix that agrees with Sigma = K*^{-1} on the graph's edges and is zero
/// elsewhere. Banded graphs are decomposable, so by default the completion is
/// computed exactly from banded regressions on a factor of Sigma; with
/// CompletionMethod::iterative it runs regression sweeps instead and throws
/// NumericalError when they do not converge within `max_iter`. Off-band
/// entries of the result are exactly zero.
PrecisionMatrix sample_gwishart(const GWishartParams& params, Rng& rng, const GWishartOptions& options = {});

/// Closed-form completion for a banded graph: K = G' V^{-1} G where row t of
/// G regresses lead t on leads t+1..t+band under `sigma`.
PrecisionMatrix complete_decomposable(const Eigen::MatrixXd& sigma, const Graph& graph);

struct CompletionResult {
  PrecisionMatrix k;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};

/// Node-wise regression sweeps of the direct sampler: W starts at `sigma`, each node's
/// column is re-expressed through its neighbours until W stops changing.
CompletionResult complete_iteratively(const Eigen::MatrixXd& sigma, const Graph& graph, const GWishartOptions& options = {});
PrecisionMatrix complete_iteratively_or_throw(const Eigen::MatrixXd& sigma, const Graph& graph,
                                              const GWishartOptions& options = {});

/// Conjugate update (delta + n_obs, D + S) on the same graph.
GWishartParams posterior_update(const GWishartParams& prior, double n_obs, const Eigen::MatrixXd& S);

/// Mean of W_G(delta, D) for the complete graph: (delta + T - 1) D^{-1}.
Eigen::MatrixXd wishart_mean(double delta, const Eigen::MatrixXd& D);

bool is_positive_definite(const Eigen::MatrixXd& m);

/// Row-major CSV dump for debugging.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

}  // namespace trajcast
