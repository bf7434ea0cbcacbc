#include "trajcast/model.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "trajcast/csv.hpp"
#include "trajcast/error.hpp"

namespace trajcast {

namespace {

// n0_i ~ Gamma(1, 0.5) a priori.
constexpr double kN0PriorRate = 0.5;

Eigen::VectorXd powered(const Eigen::VectorXd& x, int p) {
  if (p == 0) return Eigen::VectorXd::Ones(x.size());
  if (p == 1) return x;
  return x.array().pow(static_cast<double>(p)).matrix();
}

}  // namespace

Eigen::MatrixXd build_design(const Eigen::VectorXd& x_w, const CovariatePowers& powers) {
  const auto t = x_w.size();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(t, kBlocks * t);
  for (int a = 0; a < kBlocks; ++a) {
    const Eigen::VectorXd col = powered(x_w, powers[static_cast<std::size_t>(a)]);
    for (Eigen::Index i = 0; i < t; ++i) x(i, a * t + i) = col[i];
  }
  return x;
}

Eigen::VectorXd transform(const Eigen::VectorXd& y) {
  if ((y.array() < 0.0).any() || !y.allFinite()) throw DataError("transform: production must be finite and >= 0");
  return y.unaryExpr([](double v) { return std::cbrt(v); });
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::ind_errors: return "ind_errors";
    case Variant::fully_ind: return "fully_ind";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "ind_errors") return Variant::ind_errors;
  if (name == "fully_ind") return Variant::fully_ind;
  throw ConfigError("unknown model variant '" + name + "' (expected full, ind_errors or fully_ind)");
}

ModelConfig ModelConfig::for_variant(Variant v, int horizon) {
  ModelConfig c;
  c.horizon = horizon;
  switch (v) {
    case Variant::full:
      c.graph_k = Graph::ar1(horizon);
      c.graph_k0 = Graph::ar1(horizon);
      c.tie_k0_to_k = true;
      break;
    case Variant::ind_errors:
      c.graph_k = Graph::independence(horizon);
      c.graph_k0 = Graph::ar1(horizon);
      c.tie_k0_to_k = false;
      break;
    case Variant::fully_ind:
      c.graph_k = Graph::independence(horizon);
      c.graph_k0 = Graph::independence(horizon);
      c.tie_k0_to_k = false;
      break;
  }
  return c;
}

void ModelConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (graph_k.dim != horizon || graph_k0.dim != horizon) throw ConfigError("graph dimension differs from horizon");
  if (tie_k0_to_k && !(graph_k == graph_k0)) throw ConfigError("tied K0 = K requires identical graphs");
  if (!(n_gibbs > n_burn && n_burn >= 0)) throw ConfigError("need n_gibbs > n_burn >= 0");
  if (m_pred < 2) throw ConfigError("m_pred must be at least 2");
  if (fixed_n0)
    for (double v : *fixed_n0)
      if (!(v > 0.0)) throw ConfigError("fixed n0 must be positive");
}

std::vector<double> PredictiveEnsemble::sorted_margin(int t) const {
  std::vector<double> v(trajectories.col(t).data(), trajectories.col(t).data() + trajectories.rows());
  std::sort(v.begin(), v.end());
  return v;
}

SufficientStats SufficientStats::from_cases(const std::vector<ForecastCase>& cases, const CovariatePowers& powers) {
  if (cases.empty()) throw DataError("no training cases");
  SufficientStats s;
  s.horizon = cases.front().horizon();
  const auto t = s.horizon;
  for (auto& row : s.xx)
    for (auto& m : row) m = Eigen::MatrixXd::Zero(t, t);
  for (auto& m : s.xy) m = Eigen::MatrixXd::Zero(t, t);
  s.yy = Eigen::MatrixXd::Zero(t, t);
  for (const auto& c : cases) {
    if (c.horizon() != t) throw DataError("training cases differ in horizon");
    if (!c.y) throw DataError("training case at " + format_utc(c.init_time) + " has no observations");
    if (!c.x_w.allFinite() || !c.y->allFinite())
      throw DataError("training case at " + format_utc(c.init_time) + " contains NaN");
    const Eigen::VectorXd y = transform(*c.y);
    std::array<Eigen::VectorXd, kBlocks> cov;
    for (int a = 0; a < kBlocks; ++a) cov[static_cast<std::size_t>(a)] = powered(c.x_w, powers[static_cast<std::size_t>(a)]);
    for (std::size_t a = 0; a < kBlocks; ++a) {
      for (std::size_t b = 0; b < kBlocks; ++b) s.xx[a][b].noalias() += cov[a] * cov[b].transpose();
      s.xy[a].noalias() += cov[a] * y.transpose();
    }
    s.yy.noalias() += y * y.transpose();
    ++s.n_cases;
  }
  return s;
}

BetaConditional beta_conditional(const SufficientStats& stats, const PrecisionMatrix& k, const PrecisionMatrix& k_eff,
                                 const std::array<double, kBlocks>& n0) {
  const auto t = stats.horizon;
  BetaConditional out;
  out.precision.resize(kBlocks * t, kBlocks * t);
  Eigen::VectorXd rhs(kBlocks * t);
  for (std::size_t a = 0; a < kBlocks; ++a) {
    for (std::size_t b = 0; b < kBlocks; ++b) {
      auto block = out.precision.block(static_cast<Eigen::Index>(a) * t, static_cast<Eigen::Index>(b) * t, t, t);
      block = k.cwiseProduct(stats.xx[a][b]);
      if (a == b) block += n0[a] * k_eff;
    }
    rhs.segment(static_cast<Eigen::Index>(a) * t, t) = k.cwiseProduct(stats.xy[a]).rowwise().sum();
  }
  out.factor.compute(out.precision);
  if (out.factor.info() != Eigen::Success) {
    std::ostringstream os;
    os << "beta conditional precision is not positive definite (min diagonal "
       << out.precision.diagonal().minCoeff() << ", max diagonal " << out.precision.diagonal().maxCoeff() << ")";
    throw NumericalError(os.str());
  }
  out.mean = out.factor.solve(rhs);
  return out;
}

Eigen::MatrixXd residual_scatter(const SufficientStats& stats, const Eigen::VectorXd& beta) {
  const auto t = stats.horizon;
  Eigen::MatrixXd s = stats.yy;
  for (std::size_t a = 0; a < kBlocks; ++a) {
    const auto ba = beta.segment(static_cast<Eigen::Index>(a) * t, t);
    const Eigen::MatrixXd cross = ba.asDiagonal() * stats.xy[a];
    s -= cross + cross.transpose();
    for (std::size_t b = 0; b < kBlocks; ++b) {
      const auto bb = beta.segment(static_cast<Eigen::Index>(b) * t, t);
      s.noalias() += ba.asDiagonal() * stats.xx[a][b] * bb.asDiagonal();
    }
  }
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd coefficient_scatter(const Eigen::VectorXd& beta, const std::array<double, kBlocks>& n0) {
  const auto t = beta.size() / kBlocks;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(t, t);
  for (std::size_t a = 0; a < kBlocks; ++a) {
    const auto ba = beta.segment(static_cast<Eigen::Index>(a) * t, t);
    s.noalias() += n0[a] * ba * ba.transpose();
  }
  return s;
}

std::vector<PosteriorDraw> gibbs_fit(const TrainingWindow& window, const ModelConfig& config) {
  return gibbs_fit(window.cases, config, Rng(config.seed));
}

std::vector<PosteriorDraw> gibbs_fit(const std::vector<ForecastCase>& training, const ModelConfig& config, Rng rng) {
  config.validate();
  if (training.empty()) throw DataError("gibbs_fit: empty training window");
  const SufficientStats stats = SufficientStats::from_cases(training, config.powers);
  if (stats.horizon != config.horizon)
    throw DataError("gibbs_fit: training horizon " + std::to_string(stats.horizon) + " differs from configured " +
                    std::to_string(config.horizon));
  const int t = config.horizon;
  const double n = stats.n_cases;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(t, t);
  const GWishartParams prior_k{3.0, identity, config.graph_k};
  const GWishartParams prior_k0{3.0, identity, config.graph_k0};

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kBlocks * t);
  PrecisionMatrix k = identity;
  PrecisionMatrix k0 = identity;
  std::array<double, kBlocks> n0 = config.fixed_n0.value_or(std::array<double, kBlocks>{1.0, 1.0, 1.0});

  std::vector<PosteriorDraw> draws;
  draws.reserve(static_cast<std::size_t>(config.n_gibbs - config.n_burn));
  Eigen::VectorXd z(kBlocks * t);
  for (int iter = 0; iter < config.n_gibbs; ++iter) {
    const PrecisionMatrix& k_eff = config.tie_k0_to_k ? k : k0;

    // beta | K, n0
    BetaConditional cond;
    try {
      cond = beta_conditional(stats, k, k_eff, n0);
    } catch (const NumericalError& e) {
      throw NumericalError("gibbs_fit iteration " + std::to_string(iter) + ": " + e.what());
    }
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    beta = cond.mean + cond.factor.matrixU().solve(z);

    // K | beta, n0 (and K0 | beta, n0 when untied)
    const Eigen::MatrixXd coef = coefficient_scatter(beta, n0);
    if (config.tie_k0_to_k) {
      k = sample_gwishart(posterior_update(prior_k, n + kBlocks, residual_scatter(stats, beta) + coef), rng,
                          config.gwishart);
    } else {
      k = sample_gwishart(posterior_update(prior_k, n, residual_scatter(stats, beta)), rng, config.gwishart);
      k0 = sample_gwishart(posterior_update(prior_k0, kBlocks, coef), rng, config.gwishart);
    }
    const PrecisionMatrix& k_eff_new = config.tie_k0_to_k ? k : k0;

    // n0 | beta, K
    if (!config.fixed_n0) {
      for (std::size_t a = 0; a < kBlocks; ++a) {
        const auto ba = beta.segment(static_cast<Eigen::Index>(a) * t, t);
        const double quad = ba.dot(k_eff_new * ba);
        n0[a] = rng.gamma((t + 2.0) / 2.0, kN0PriorRate + quad / 2.0);
      }
    }

    if (iter >= config.n_burn) draws.push_back({beta, k, n0});
  }
  return draws;
}

PredictiveEnsemble predict(const std::vector<PosteriorDraw>& draws, const Eigen::VectorXd& x_w, const ModelConfig& config,
                           Rng& rng) {
  const auto m = static_cast<std::size_t>(config.m_pred);
  if (draws.size() < m)
    throw ConfigError("predict: need at least m_pred = " + std::to_string(m) + " posterior draws, have " +
                      std::to_string(draws.size()));
  if ((x_w.array() < 0.0).any() || !x_w.allFinite()) throw DataError("predict: covariates must be finite and >= 0");
  const auto t = x_w.size();
  const Eigen::MatrixXd x = build_design(x_w, config.powers);
  PredictiveEnsemble out;
  out.trajectories.resize(static_cast<Eigen::Index>(m), t);
  Eigen::VectorXd z(t);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& d = draws[i * draws.size() / m];
    if (d.beta.size() != kBlocks * t) throw DataError("predict: posterior draw does not match covariate length");
    Eigen::LLT<Eigen::MatrixXd> llt(d.k);
    if (llt.info() != Eigen::Success) throw NumericalError("predict: posterior precision is not positive definite");
    for (Eigen::Index j = 0; j < t; ++j) z[j] = rng.normal();
    const Eigen::VectorXd latent = x * d.beta + llt.matrixU().solve(z);
    out.trajectories.row(static_cast<Eigen::Index>(i)) =
        latent.unaryExpr([](double v) { return std::pow(std::max(v, 0.0), 3.0); }).transpose();
  }
  return out;
}

double marginal_cdf(const PredictiveEnsemble& ensemble, int t, double y) {
  if (t < 0 || t >= ensemble.horizon()) throw std::out_of_range("marginal_cdf: lead index out of range");
  const auto col = ensemble.trajectories.col(t);
  const auto below = std::count_if(col.begin(), col.end(), [y](double v) { return v <= y; });
  return static_cast<double>(below) / static_cast<double>(col.size());
}

void write_ensemble_csv(std::ostream& out, const PredictiveEnsemble& ensemble) {
  out << "# init_time=" << format_utc(ensemble.init_time) << '\n';
  out << "# postproc=" << ensemble.postproc << '\n';
  out << "trajectory_id,lead_h,power_mw\n";
  for (int i = 0; i < ensemble.size(); ++i)
    for (int t = 0; t < ensemble.horizon(); ++t)
      out << i + 1 << ',' << t + 1 << ',' << csv::format_double(ensemble.trajectories(i, t)) << '\n';
}

PredictiveEnsemble read_ensemble_csv(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  PredictiveEnsemble e;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("# init_time=", 0) == 0) e.init_time = parse_utc(line.substr(12));
    if (line.rfind("# postproc=", 0) == 0) e.postproc = line.substr(11);
  }
  std::istringstream table(text);
  const auto rows = csv::read_table(table, {"trajectory_id", "lead_h", "power_mw"}, "ensemble CSV");
  long m = 0, t = 0;
  for (const auto& r : rows) {
    m = std::max(m, csv::to_long(r[0], "trajectory_id"));
    t = std::max(t, csv::to_long(r[1], "lead_h"));
  }
  if (m * t != static_cast<long>(rows.size())) throw DataError("ensemble CSV: incomplete trajectory table");
  e.trajectories.resize(m, t);
  for (const auto& r : rows)
    e.trajectories(csv::to_long(r[0], "trajectory_id") - 1, csv::to_long(r[1], "lead_h") - 1) =
        csv::to_double(r[2], "power_mw");
  return e;
}

namespace {

std::string graph_tag(const Graph& g) { return "band" + std::to_string(g.band); }

void write_row(std::ostream& out, const char* key, const double* data, Eigen::Index n) {
  out << key;
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << csv::format_double(data[i]);
  out << '\n';
}

std::vector<double> parse_row(const std::string& line, const std::string& key, std::size_t expected) {
  auto f = csv::split(line);
  if (f.empty() || f[0] != key || f.size() != expected + 1)
    throw DataError("checkpoint: expected '" + key + "' row with " + std::to_string(expected) + " values");
  std::vector<double> v(expected);
  for (std::size_t i = 0; i < expected; ++i) v[i] = csv::to_double(f[i + 1], "checkpoint");
  return v;
}

}  // namespace

std::string ModelConfig::tag() const {
  return "K=" + graph_tag(graph_k) + ";K0=" + graph_tag(graph_k0) + ";tied=" + (tie_k0_to_k ? "1" : "0");
}

void write_checkpoint(std::ostream& out, const std::vector<PosteriorDraw>& draws, const ModelConfig& config) {
  out << kCheckpointMagic << '\n';
  out << "horizon," << config.horizon << '\n';
  out << "model," << config.tag() << '\n';
  out << "powers," << config.powers[0] << ',' << config.powers[1] << ',' << config.powers[2] << '\n';
  out << "draws," << draws.size() << '\n';
  for (const auto& d : draws) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> k = d.k;
    write_row(out, "beta", d.beta.data(), d.beta.size());
    write_row(out, "n0", d.n0.data(), kBlocks);
    write_row(out, "k", k.data(), k.size());
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw DataError("checkpoint: missing or unsupported version header");
  Checkpoint cp;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw DataError(std::string("checkpoint: truncated before ") + what);
    return csv::split(line);
  };
  auto f = next("horizon");
  if (f.size() != 2 || f[0] != "horizon") throw DataError("checkpoint: bad horizon line");
  cp.horizon = static_cast<int>(csv::to_long(f[1], "horizon"));
  f = next("model");
  if (f.size() != 2 || f[0] != "model") throw DataError("checkpoint: bad model line");
  cp.variant_tag = f[1];
  f = next("powers");
  if (f.size() != 4 || f[0] != "powers") throw DataError("checkpoint: bad powers line");
  for (std::size_t a = 0; a < kBlocks; ++a) cp.powers[a] = static_cast<int>(csv::to_long(f[a + 1], "powers"));
  f = next("draws");
  if (f.size() != 2 || f[0] != "draws") throw DataError("checkpoint: bad draws line");
  const long n = csv::to_long(f[1], "draws");
  const auto t = static_cast<std::size_t>(cp.horizon);
  cp.draws.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    PosteriorDraw d;
    next("beta");
    auto b = parse_row(line, "beta", kBlocks * t);
    d.beta = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    next("n0");
    auto n0 = parse_row(line, "n0", kBlocks);
    std::copy(n0.begin(), n0.end(), d.n0.begin());
    next("k");
    auto k = parse_row(line, "k", t * t);
    d.k = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        k.data(), static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
    cp.draws.push_back(std::move(d));
  }
  return cp;
}

}  // namespace trajcast
