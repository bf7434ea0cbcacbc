#include "trajcast/synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "trajcast/error.hpp"

namespace trajcast {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::well_specified: return "well_specified";
    case Scenario::heavy_tails: return "heavy_tails";
    case Scenario::quadratic_truth: return "quadratic_truth";
  }
  return "?";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "well_specified") return Scenario::well_specified;
  if (name == "heavy_tails") return Scenario::heavy_tails;
  if (name == "quadratic_truth") return Scenario::quadratic_truth;
  throw ConfigError("unknown scenario '" + name + "'");
}

PrecisionMatrix ar1_precision(int horizon, double rho, double sd) {
  if (!(std::abs(rho) < 1.0) || !(sd > 0.0)) throw std::invalid_argument("ar1_precision: need |rho| < 1 and sd > 0");
  PrecisionMatrix k = PrecisionMatrix::Zero(horizon, horizon);
  const double scale = 1.0 / (sd * sd * (1.0 - rho * rho));
  for (int i = 0; i < horizon; ++i) {
    k(i, i) = scale * ((i == 0 || i == horizon - 1) ? 1.0 : 1.0 + rho * rho);
    if (i + 1 < horizon) {
      k(i, i + 1) = -scale * rho;
      k(i + 1, i) = -scale * rho;
    }
  }
  if (horizon == 1) k(0, 0) = 1.0 / (sd * sd);
  return k;
}

Eigen::VectorXd default_beta(int horizon) {
  Eigen::VectorXd beta(3 * horizon);
  for (int t = 0; t < horizon; ++t) {
    const double phase = 2.0 * std::numbers::pi * (t + 1) / 24.0;
    beta[t] = 4.0 + 0.5 * std::sin(phase);
    beta[horizon + t] = 1.2 - 0.1 * t / std::max(1, horizon - 1);
    beta[2 * horizon + t] = 0.004;
  }
  return beta;
}

SynthConfig SynthConfig::preset(int horizon, int n_days, double error_corr, double error_sd, std::uint64_t seed) {
  SynthConfig c;
  c.horizon = horizon;
  c.n_days = n_days;
  c.beta_true = default_beta(horizon);
  c.k_true = ar1_precision(horizon, error_corr, error_sd);
  c.seed = seed;
  return c;
}

void SynthConfig::validate() const {
  if (horizon < 1 || n_days < 0) throw ConfigError("synth: horizon must be positive and n_days non-negative");
  if (beta_true.size() != 3 * horizon) throw ConfigError("synth: beta_true must have length 3T");
  if (k_true.rows() != horizon || !is_positive_definite(k_true)) throw ConfigError("synth: K_true must be T x T and positive definite");
  if (!(ws_mean >= 0.0) || !(std::abs(ws_ar) < 1.0) || !(ws_innovation_sd >= 0.0))
    throw ConfigError("synth: bad wind-speed process parameters");
}

std::vector<ForecastCase> generate(const SynthConfig& config) {
  config.validate();
  const int t_len = config.horizon;
  Rng rng(config.seed);
  // Noise with covariance K^{-1}: U^{-1} z for K = U'U.
  Eigen::LLT<Eigen::MatrixXd> llt(config.k_true);
  const CovariatePowers powers = config.scenario == Scenario::quadratic_truth ? CovariatePowers{0, 1, 2} : kDefaultPowers;
  const double stationary_sd = config.ws_innovation_sd / std::sqrt(1.0 - config.ws_ar * config.ws_ar);
  constexpr double kTailDf = 3.0;

  std::vector<ForecastCase> cases;
  cases.reserve(static_cast<std::size_t>(config.n_days));
  for (int d = 0; d < config.n_days; ++d) {
    ForecastCase fc;
    fc.init_time = config.start + std::chrono::days(d);
    fc.x_w.resize(t_len);
    double prev = config.ws_mean + stationary_sd * rng.normal();
    for (int t = 0; t < t_len; ++t) {
      prev = config.ws_mean + config.ws_ar * (prev - config.ws_mean) + config.ws_innovation_sd * rng.normal();
      fc.x_w[t] = std::max(prev, 0.0);
    }
    Eigen::VectorXd z(t_len);
    for (int t = 0; t < t_len; ++t) z[t] = rng.normal();
    Eigen::VectorXd eps = llt.matrixU().solve(z);
    if (config.scenario == Scenario::heavy_tails) {
      const double w = rng.chi_squared(kTailDf);
      eps *= std::sqrt((kTailDf - 2.0) / w);
    }
    const Eigen::VectorXd latent = build_design(fc.x_w, powers) * config.beta_true + eps;
    fc.y = latent.unaryExpr([](double v) { return std::pow(std::max(v, 0.0), 3.0); });
    cases.push_back(std::move(fc));
  }
  return cases;
}

void write_case_dir(const std::filesystem::path& dir, const std::vector<ForecastCase>& cases) {
  std::filesystem::create_directories(dir);
  for (const auto& c : cases) {
    std::ofstream out(dir / ("case_" + format_compact_date(c.init_time) + ".csv"));
    if (!out) throw DataError("cannot write case file in " + dir.string());
    out << "# init_time=" << format_utc(c.init_time) << '\n';
    write_case_csv(out, c);
  }
}

std::vector<ForecastCase> read_case_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("case directory not found: " + dir.string());
  std::map<TimePoint, ForecastCase> sorted;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.rfind("case_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::string first;
    std::getline(in, first);
    TimePoint init;
    if (first.rfind("# init_time=", 0) == 0) {
      init = parse_utc(first.substr(12));
    } else {
      const auto stem = entry.path().stem().string().substr(5);
      if (stem.size() != 8) throw DataError("cannot infer init_time of " + name);
      init = parse_utc(stem.substr(0, 4) + "-" + stem.substr(4, 2) + "-" + stem.substr(6, 2));
      in.clear();
      in.seekg(0);
    }
    std::stringstream rest;
    rest << in.rdbuf();
    auto fc = read_case_csv(rest, init);
    sorted.emplace(init, std::move(fc));
  }
  std::vector<ForecastCase> out;
  for (auto& [t, c] : sorted) out.push_back(std::move(c));
  return out;
}

void write_ingest_files(const std::filesystem::path& dir, const std::vector<ForecastCase>& cases) {
  std::filesystem::create_directories(dir);
  std::vector<NwpGridRecord> grid;
  std::map<TimePoint, double> power;
  for (const auto& c : cases) {
    for (int lead = 0; lead <= c.horizon(); ++lead) {
      const double v = c.x_w[std::max(lead, 1) - 1];
      grid.push_back({c.init_time, lead, 52.0, 9.0, 0, v});
      grid.push_back({c.init_time, lead, 50.0, 9.0, 0, 2.0 * v + 10.0});
    }
    if (c.y)
      for (int lead = 1; lead <= c.horizon(); ++lead) power[add_hours(c.init_time, lead)] = (*c.y)[lead - 1];
  }
  // Later initialisations overwrite earlier ones at shared valid times above.
  std::ofstream nwp(dir / "nwp.csv");
  write_nwp_csv(nwp, grid);
  std::vector<ProductionRecord> prod;
  for (const auto& [t, p] : power) prod.push_back({t, p});
  std::ofstream out(dir / "production.csv");
  write_production_csv(out, prod);
  if (!nwp || !out) throw DataError("cannot write ingest files in " + dir.string());
}

Eigen::Matrix3d NormalGammaPosterior::beta_covariance() const { return b / (a - 1.0) * precision.inverse(); }

NormalGammaPosterior closed_form_posterior_t1(const std::vector<ForecastCase>& cases, const std::array<double, 3>& n0,
                                              const CovariatePowers& powers) {
  Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
  Eigen::Vector3d xty = Eigen::Vector3d::Zero();
  double yty = 0.0;
  for (const auto& c : cases) {
    if (c.horizon() != 1 || !c.y) throw std::invalid_argument("closed_form_posterior_t1: cases must have T = 1 and observations");
    const double x = c.x_w[0];
    const double y = std::cbrt((*c.y)[0]);
    Eigen::Vector3d row;
    for (int a = 0; a < 3; ++a) row[a] = std::pow(x, powers[static_cast<std::size_t>(a)]);
    xtx += row * row.transpose();
    xty += row * y;
    yty += y * y;
  }
  NormalGammaPosterior post;
  post.precision = Eigen::Vector3d(n0[0], n0[1], n0[2]).asDiagonal();
  post.precision += xtx;
  post.mean = post.precision.ldlt().solve(xty);
  post.a = 1.5 + 0.5 * static_cast<double>(cases.size());
  post.b = 0.5 + 0.5 * (yty - post.mean.dot(post.precision * post.mean));
  return post;
}

}  // namespace trajcast
