#include "doctest.h"

#include <Eigen/LU>
#include <filesystem>

#include "trajcast/error.hpp"
#include "trajcast/stats.hpp"
#include "trajcast/synth.hpp"

using namespace trajcast;

TEST_CASE("ar1_precision inverts to an AR(1) covariance") {
  const auto k = ar1_precision(6, 0.7, 2.0);
  const Eigen::MatrixXd cov = k.inverse();
  for (int i = 0; i < 6; ++i) {
    CHECK(cov(i, i) == doctest::Approx(4.0));
    for (int j = 0; j < 6; ++j) CHECK(cov(i, j) == doctest::Approx(4.0 * std::pow(0.7, std::abs(i - j))));
  }
  CHECK(ar1_precision(1, 0.7, 2.0)(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("vanishing noise reproduces the cubed regression") {
  auto sc = SynthConfig::preset(5, 20);
  sc.k_true = 1e8 * Eigen::MatrixXd::Identity(5, 5);
  for (const auto& c : generate(sc)) {
    const Eigen::VectorXd mean = build_design(c.x_w) * sc.beta_true;
    for (int t = 0; t < 5; ++t) CHECK((*c.y)[t] == doctest::Approx(std::pow(mean[t], 3)).epsilon(1e-3));
  }
}

TEST_CASE("zero coefficients give production concentrated near zero") {
  auto sc = SynthConfig::preset(4, 200);
  sc.beta_true = Eigen::VectorXd::Zero(12);
  std::vector<double> y;
  for (const auto& c : generate(sc))
    for (int t = 0; t < 4; ++t) y.push_back((*c.y)[t]);
  CHECK(stats::median(y) < 0.05);
  CHECK(std::count(y.begin(), y.end(), 0.0) > static_cast<long>(y.size() / 3));
}

TEST_CASE("constant wind of 5 with slope one gives 125") {
  auto sc = SynthConfig::preset(3, 10);
  sc.beta_true = Eigen::VectorXd::Zero(9);
  sc.beta_true.segment(3, 3).setOnes();
  sc.ws_mean = 5.0;
  sc.ws_innovation_sd = 0.0;
  sc.k_true = 1e10 * Eigen::MatrixXd::Identity(3, 3);
  for (const auto& c : generate(sc)) {
    CHECK(c.x_w == Eigen::VectorXd::Constant(3, 5.0));
    for (int t = 0; t < 3; ++t) CHECK((*c.y)[t] == doctest::Approx(125.0).epsilon(1e-3));
  }
}

TEST_CASE("generate is deterministic, daily and non-negative") {
  const auto sc = SynthConfig::preset(24, 30, 0.9, 1.0, 5);
  const auto a = generate(sc);
  const auto b = generate(sc);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x_w == b[i].x_w);
    CHECK(*a[i].y == *b[i].y);
    CHECK((a[i].x_w.array() >= 0.0).all());
    CHECK((a[i].y->array() >= 0.0).all());
    if (i > 0) CHECK(a[i].init_time - a[i - 1].init_time == std::chrono::days{1});
  }
  const auto c = generate(SynthConfig::preset(24, 30, 0.9, 1.0, 6));
  CHECK(c[0].x_w != a[0].x_w);
}

TEST_CASE("generated errors have the requested covariance") {
  const int t = 4;
  auto sc = SynthConfig::preset(t, 4000, 0.8, 0.5, 2);
  const auto cases = generate(sc);
  std::vector<double> e0, e1;
  for (const auto& c : cases) {
    const Eigen::VectorXd mean = build_design(c.x_w) * sc.beta_true;
    e0.push_back(std::cbrt((*c.y)[1]) - mean[1]);
    e1.push_back(std::cbrt((*c.y)[2]) - mean[2]);
  }
  CHECK(std::sqrt(stats::variance(e0)) == doctest::Approx(0.5).epsilon(0.05));
  double cov = 0.0;
  const double m0 = stats::mean(e0), m1 = stats::mean(e1);
  for (std::size_t i = 0; i < e0.size(); ++i) cov += (e0[i] - m0) * (e1[i] - m1) / (e0.size() - 1.0);
  CHECK(cov / std::sqrt(stats::variance(e0) * stats::variance(e1)) == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("heavy-tailed scenario keeps the scale but fattens the tails") {
  auto sc = SynthConfig::preset(1, 20000, 0.0, 0.5, 3);
  auto heavy = sc;
  heavy.scenario = Scenario::heavy_tails;
  auto kurtosis = [&](const SynthConfig& cfg) {
    std::vector<double> e;
    for (const auto& c : generate(cfg)) e.push_back(std::cbrt((*c.y)[0]) - (build_design(c.x_w) * cfg.beta_true)[0]);
    const double m = stats::mean(e), v = stats::variance(e);
    double k4 = 0.0;
    for (double x : e) k4 += std::pow(x - m, 4) / e.size();
    return k4 / (v * v);
  };
  CHECK(kurtosis(sc) == doctest::Approx(3.0).epsilon(0.1));
  CHECK(kurtosis(heavy) > 5.0);
  CHECK(parse_scenario("quadratic_truth") == Scenario::quadratic_truth);
  CHECK_THROWS_AS(parse_scenario("nope"), ConfigError);
}

TEST_CASE("closed-form T = 1 posterior") {
  const std::array<double, 3> n0{1.0, 2.0, 3.0};
  SUBCASE("no observations return the prior") {
    const auto p = closed_form_posterior_t1({}, n0);
    CHECK(p.mean.isZero());
    CHECK(p.precision == Eigen::Vector3d(1, 2, 3).asDiagonal().toDenseMatrix());
    CHECK(p.a == 1.5);
    CHECK(p.b == 0.5);
    CHECK(p.k_mean() == doctest::Approx(3.0));
    CHECK(p.k_variance() == doctest::Approx(6.0));
  }
  SUBCASE("one observation by hand") {
    ForecastCase c{parse_utc("2012-01-01"), Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 27.0)};
    const auto p = closed_form_posterior_t1({c}, n0);
    const Eigen::Vector3d x(1.0, 2.0, 8.0);
    Eigen::Matrix3d lam = Eigen::Vector3d(1, 2, 3).asDiagonal();
    lam += x * x.transpose();
    CHECK((p.precision - lam).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::Vector3d mu = lam.inverse() * (x * 3.0);
    CHECK((p.mean - mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.a == 2.0);
    CHECK(p.b == doctest::Approx(0.5 + 0.5 * (9.0 - mu.dot(lam * mu))));
  }
  SUBCASE("T other than 1 is rejected") {
    const auto cases = generate(SynthConfig::preset(2, 3));
    CHECK_THROWS_AS(closed_form_posterior_t1(cases, n0), std::invalid_argument);
  }
}

TEST_CASE("case directory round trip") {
  const auto cases = generate(SynthConfig::preset(6, 5));
  const auto dir = std::filesystem::temp_directory_path() / "trajcast_case_dir";
  std::filesystem::remove_all(dir);
  write_case_dir(dir, cases);
  CHECK(std::filesystem::exists(dir / "case_20110101.csv"));
  const auto back = read_case_dir(dir);
  REQUIRE(back.size() == cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CHECK(back[i].init_time == cases[i].init_time);
    CHECK(back[i].x_w == cases[i].x_w);
    CHECK(*back[i].y == *cases[i].y);
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_case_dir(dir), DataError);
}

TEST_CASE("config validation") {
  auto sc = SynthConfig::preset(3, 5);
  sc.k_true(0, 0) = -1.0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  auto sc2 = SynthConfig::preset(3, 5);
  sc2.beta_true.resize(4);
  CHECK_THROWS_AS(sc2.validate(), ConfigError);
}
