#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "trajcast/stats.hpp"
#include "trajcast/verify.hpp"

using namespace trajcast;

namespace {

/// Trapezoid rule for the integral of (F(z) - 1{z >= y})^2 on a grid that
/// contains every jump of the integrand, each segment refined into `steps`
/// panels and evaluated with one-sided limits.
double crps_trapezoid(std::vector<double> x, double y, int steps = 64) {
  std::sort(x.begin(), x.end());
  const double m = static_cast<double>(x.size());
  std::vector<double> knots = x;
  knots.push_back(y);
  std::sort(knots.begin(), knots.end());
  auto integrand = [&](double z) {
    const double f = static_cast<double>(std::upper_bound(x.begin(), x.end(), z) - x.begin()) / m;
    const double h = z >= y ? 1.0 : 0.0;
    return (f - h) * (f - h);
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    const double width = (b - a) / steps;
    for (int s = 0; s < steps; ++s) {
      // Right limit at the left end, left limit at the right end: the integrand is constant in between.
      const double fa = integrand(s == 0 ? mid : a + s * width);
      const double fb = integrand(s == steps - 1 ? mid : a + (s + 1) * width);
      total += 0.5 * (fa + fb) * width;
    }
  }
  return total;
}

PredictiveEnsemble ensemble_of(std::initializer_list<std::initializer_list<double>> rows) {
  PredictiveEnsemble e;
  e.trajectories.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) e.trajectories(i, j++) = v;
    ++i;
  }
  return e;
}

}  // namespace

TEST_CASE("randomised PIT") {
  Rng rng(1);
  const std::vector<double> members{3, 1, 2, 5};
  const double m = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double lo = pit(members, 0.0, rng);
    CHECK(lo >= 0.0);
    CHECK(lo <= 1.0 / m);
    const double hi = pit(members, 9.0, rng);
    CHECK(hi >= (m - 1.0) / m);
    CHECK(hi <= 1.0);
  }
  SUBCASE("exchangeable members and observation give uniform PIT") {
    std::vector<double> u(10000);
    std::vector<double> ens(19);
    for (auto& v : u) {
      for (auto& e : ens) e = std::round(rng.normal() * 4.0);  // coarse values force ties
      v = pit(ens, std::round(rng.normal() * 4.0), rng);
    }
    CHECK(stats::ks_uniform(u).p_value > 0.01);
  }
}

TEST_CASE("interval coverage and width") {
  std::vector<double> same(20, 7.0);
  auto r = interval_coverage_width(same, 7.0);
  CHECK(r.covered);
  CHECK(r.width == 0.0);
  std::vector<double> seq(1000);
  for (int i = 0; i < 1000; ++i) seq[i] = i + 1;
  r = interval_coverage_width(seq, 500.0);
  CHECK(r.covered);
  CHECK(r.width == doctest::Approx(900.1 - 100.9));
  CHECK_FALSE(interval_coverage_width(seq, 50.0).covered);
}

TEST_CASE("coverage at 0.9 is at least coverage at 0.8") {
  Rng rng(2);
  int c8 = 0, c9 = 0;
  std::vector<double> ens(50);
  for (int i = 0; i < 2000; ++i) {
    for (auto& e : ens) e = rng.normal();
    const double y = 1.5 * rng.normal();
    c8 += interval_coverage_width(ens, y, 0.8).covered;
    c9 += interval_coverage_width(ens, y, 0.9).covered;
    CHECK(interval_coverage_width(ens, y, 0.9).width >= interval_coverage_width(ens, y, 0.8).width);
  }
  CHECK(c9 >= c8);
}

TEST_CASE("CRPS estimator") {
  CHECK(crps(std::vector<double>{4, 4, 4}, 4.0) == 0.0);
  CHECK(crps(std::vector<double>{0, 2}, 1.0) == doctest::Approx(0.5));
  CHECK(crps(std::vector<double>{0, 2}, 1.0, CrpsEstimator::fair) == doctest::Approx(0.0));
  SUBCASE("Gaussian closed form") {
    Rng rng(3);
    std::vector<double> x(100000);
    for (auto& v : x) v = rng.normal();
    const double exact = std::sqrt(2.0 / std::numbers::pi) - 1.0 / std::sqrt(std::numbers::pi);
    CHECK(exact == doctest::Approx(0.2337).epsilon(1e-3));
    CHECK(std::abs(crps(x, 0.0) - exact) < 0.003);
  }
  SUBCASE("equals trapezoid integration of the CRPS integral") {
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
      const int m = 2 + static_cast<int>(rng.uniform_index(19));
      std::vector<double> x(m);
      for (auto& v : x) v = rng.uniform() < 0.2 ? std::round(rng.normal()) : 5.0 * rng.normal();
      const double y = 4.0 * rng.normal();
      const double est = crps(x, y);
      CHECK(est == doctest::Approx(crps_trapezoid(x, y)).epsilon(1e-6));
      double mean_abs = 0.0;
      for (double v : x) mean_abs += std::abs(v - y) / m;
      CHECK(est <= mean_abs + 1e-12);
      CHECK(est >= 0.0);
    }
  }
}

TEST_CASE("MAE uses the median, squared error the mean") {
  auto e = mae_rmse(std::vector<double>{1, 2, 3}, 2.0);
  CHECK(e.abs_err == 0.0);
  CHECK(e.sq_err == 0.0);
  e = mae_rmse(std::vector<double>{0, 10}, 0.0);
  CHECK(e.abs_err == doctest::Approx(5.0));
  CHECK(e.sq_err == doctest::Approx(25.0));
}

TEST_CASE("band-depth pre-rank") {
  Eigen::MatrixXd ens(2, 2);
  ens << 1, 1, 3, 3;
  CHECK(band_depth_prerank(Eigen::Vector2d(2, 2), ens) == doctest::Approx(3.0));
  CHECK(band_depth_prerank(Eigen::Vector2d(0, 0), ens) == doctest::Approx(2.0));
  CHECK(band_depth_prerank(Eigen::Vector2d(9, 9), ens) == doctest::Approx(2.0));
  Rng rng(5);
  Eigen::MatrixXd big(30, 7);
  for (Eigen::Index i = 0; i < big.size(); ++i) big.data()[i] = rng.normal();
  CHECK(band_depth_prerank(Eigen::VectorXd::Constant(7, 100.0), big) == doctest::Approx(30.0));
  CHECK(band_depth_prerank(Eigen::VectorXd::Constant(7, -100.0), big) == doctest::Approx(30.0));
}

TEST_CASE("multivariate rank") {
  Rng rng(6);
  SUBCASE("exchangeable trajectories give uniform ranks") {
    const int m = 10, t = 5, n = 10000;
    std::vector<std::size_t> counts(m, 0);
    Eigen::MatrixXd s(m - 1, t);
    for (int i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = rng.normal();
      Eigen::VectorXd y(t);
      for (int j = 0; j < t; ++j) y[j] = rng.normal();
      ++counts[multivariate_rank(y, s, rng) - 1];
    }
    CHECK(stats::chi_square_uniform(counts).p_value > 0.01);
  }
  SUBCASE("two-member case is a fair coin") {
    std::size_t ones = 0;
    const int n = 10000;
    Eigen::MatrixXd s(1, 3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) s(0, j) = rng.normal();
      Eigen::VectorXd y(3);
      for (int j = 0; j < 3; ++j) y[j] = rng.normal();
      const int r = multivariate_rank(y, s, rng);
      CHECK((r == 1 || r == 2));
      ones += r == 1;
    }
    CHECK(std::abs(static_cast<double>(ones) - n / 2.0) < 4.0 * std::sqrt(n / 4.0));
  }
  SUBCASE("an outlying observation takes the lowest ranks") {
    Eigen::MatrixXd s(49, 10);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = rng.normal();
    for (int i = 0; i < 100; ++i) CHECK(multivariate_rank(Eigen::VectorXd::Constant(10, 50.0), s, rng) <= 2);
  }
  SUBCASE("under-dispersed ensembles put mass at the low ranks") {
    const int m = 20, t = 6, n = 4000;
    std::vector<std::size_t> counts(m, 0);
    Eigen::MatrixXd s(m - 1, t);
    for (int i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = 0.5 * rng.normal();
      Eigen::VectorXd y(t);
      for (int j = 0; j < t; ++j) y[j] = rng.normal();
      ++counts[multivariate_rank(y, s, rng) - 1];
    }
    CHECK(counts[0] > 3 * counts[m / 2]);
  }
}

TEST_CASE("functional scores") {
  const auto e = ensemble_of({{1, 1}, {3, 3}});
  const auto s = functional_scores(e, Eigen::Vector2d(2, 2), Functional::sum);
  CHECK(s.crps == doctest::Approx(1.0));
  CHECK(s.abs_err == doctest::Approx(0.0));
  const auto d = ensemble_of({{1, 4}, {1, 4}, {1, 4}});
  const auto mx = functional_scores(d, Eigen::Vector2d(1, 4), Functional::max);
  CHECK(mx.crps == 0.0);
  CHECK(mx.abs_err == 0.0);
  CHECK(mx.sq_err == 0.0);
}

TEST_CASE("score accumulation and day aggregation") {
  Rng rng(7);
  const int t = 48, m = 99, n = 30;
  ScoreAccumulator acc(t, 20);
  for (int c = 0; c < n; ++c) {
    PredictiveEnsemble e;
    e.trajectories.resize(m, t);
    for (Eigen::Index k = 0; k < e.trajectories.size(); ++k) e.trajectories.data()[k] = 100.0 + 10.0 * rng.normal();
    Eigen::VectorXd y(t);
    for (int j = 0; j < t; ++j) y[j] = 100.0 + 10.0 * rng.normal();
    acc.add(e, y, rng);
  }
  const auto r = acc.report();
  CHECK(r.n_cases == n);
  CHECK(r.ensemble_size == m + 1);
  REQUIRE(r.per_day.size() == 2);
  for (int d = 0; d < 2; ++d) {
    std::size_t pit_total = 0, rank_total = 0;
    for (auto c : r.pit[d]) pit_total += c;
    for (auto c : r.mvrank[d]) rank_total += c;
    CHECK(pit_total == static_cast<std::size_t>(n * 24));
    CHECK(rank_total == static_cast<std::size_t>(n));
    double mae = 0.0, sq = 0.0;
    for (int j = 24 * d; j < 24 * (d + 1); ++j) {
      mae += r.mae[j] / 24.0;
      sq += r.rmse[j] * r.rmse[j] / 24.0;
    }
    CHECK(r.per_day[d].mae == doctest::Approx(mae));
    CHECK(r.per_day[d].rmse == doctest::Approx(std::sqrt(sq)));
    CHECK(r.per_day[d].coverage80 >= 0.0);
    CHECK(r.per_day[d].coverage80 <= 1.0);
  }
  CHECK(r.pit_values.size() == static_cast<std::size_t>(n * t));
  CHECK(r.mvrank_values.size() == static_cast<std::size_t>(n));
  CHECK(day_count(72) == 3);
  CHECK(day_count(30) == 2);
  const std::vector<std::size_t> counts{1, 2, 3, 4, 5, 6};
  CHECK(coarsen(counts, 3) == std::vector<std::size_t>{3, 7, 11});
}

TEST_CASE("report files carry the documented headers") {
  Rng rng(8);
  ScoreAccumulator acc(24, 20);
  PredictiveEnsemble e;
  e.trajectories.resize(19, 24);
  for (Eigen::Index k = 0; k < e.trajectories.size(); ++k) e.trajectories.data()[k] = 5.0 + rng.normal();
  acc.add(e, Eigen::VectorXd::Constant(24, 5.0), rng);
  const auto dir = std::filesystem::temp_directory_path() / "trajcast_report_headers";
  std::filesystem::remove_all(dir);
  write_report(dir / "full_none", acc.report(), "full", "none");
  write_summary_tables(dir, {{"full", "none", acc.report()}});
  auto header = [&](const std::filesystem::path& p) {
    std::ifstream in(dir / p);
    std::string line;
    std::getline(in, line);
    return line;
  };
  CHECK(header("full_none/scores_per_lead.csv") == "lead_h,mae,rmse,crps,coverage80,width80");
  CHECK(header("full_none/scores_per_day.csv") == "day,mae,rmse,crps,coverage80,width80");
  CHECK(header("full_none/functional_scores.csv") == "functional,mae,rmse,crps");
  CHECK(header("full_none/pit_histogram.csv") == "day,bin,lower,upper,count");
  CHECK(header("full_none/mvrank_histogram.csv") == "day,rank,count");
  CHECK(header("table_coverage_width.csv") == "model,postproc,coverage80_day1,width80_day1");
  CHECK(header("table_marginal_scores.csv") == "model,postproc,mae_day1,rmse_day1,crps_day1");
  CHECK(header("table_sum.csv") == "model,postproc,mae,rmse,crps");
  CHECK(header("table_max.csv") == "model,postproc,mae,rmse,crps");
  CHECK(std::filesystem::exists(dir / "full_none" / "summary.json"));
  std::filesystem::remove_all(dir);
}
