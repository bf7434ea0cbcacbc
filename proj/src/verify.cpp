#include "trajcast/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"
#include <numeric>
#include <stdexcept>

#include "trajcast/csv.hpp"
#include "trajcast/error.hpp"
#include "trajcast/stats.hpp"

namespace trajcast {

double pit(std::span<const double> members, double y, Rng& rng) {
  std::size_t below = 0;
  std::size_t equal = 0;
  for (double x : members) {
    if (x < y) ++below;
    else if (x == y) ++equal;
  }
  const double m = static_cast<double>(members.size() + 1);
  return (static_cast<double>(below) + rng.uniform() * static_cast<double>(equal + 1)) / m;
}

IntervalResult interval_coverage_width(std::span<const double> members, double y, double level) {
  if (members.size() < 10) throw std::invalid_argument("interval_coverage_width: need at least 10 members");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("interval_coverage_width: level must lie in (0, 1)");
  std::vector<double> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  const double alpha = (1.0 - level) / 2.0;
  const double lo = stats::quantile_sorted(sorted, alpha);
  const double hi = stats::quantile_sorted(sorted, 1.0 - alpha);
  return {lo <= y && y <= hi, hi - lo};
}

double crps(std::span<const double> members, double y, CrpsEstimator estimator) {
  const std::size_t m = members.size();
  if (m < 2) throw std::invalid_argument("crps: need at least two members");
  std::vector<double> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  double abs_sum = 0.0;
  double spread = 0.0;  // sum_i sum_j |x_i - x_j| = 2 sum_i (2i - m + 1) x_(i)
  for (std::size_t i = 0; i < m; ++i) {
    abs_sum += std::abs(sorted[i] - y);
    spread += (2.0 * static_cast<double>(i) - static_cast<double>(m) + 1.0) * sorted[i];
  }
  spread *= 2.0;
  const double md = static_cast<double>(m);
  const double denom = estimator == CrpsEstimator::fair ? 2.0 * md * (md - 1.0) : 2.0 * md * md;
  return std::max(0.0, abs_sum / md - spread / denom);
}

PointErrors mae_rmse(std::span<const double> members, double y) {
  if (members.empty()) throw std::invalid_argument("mae_rmse: empty ensemble");
  const double med = stats::median(std::vector<double>(members.begin(), members.end()));
  const double mu = stats::mean(members);
  return {std::abs(med - y), (mu - y) * (mu - y)};
}

double band_depth_prerank(const Eigen::VectorXd& trajectory, const Eigen::MatrixXd& ensemble) {
  if (ensemble.cols() != trajectory.size()) throw std::invalid_argument("band_depth_prerank: horizon mismatch");
  const double m = static_cast<double>(ensemble.rows() + 1);
  const auto t_len = trajectory.size();
  double sum = 0.0;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double rank = 1.0 + static_cast<double>((ensemble.col(t).array() < trajectory[t]).count());
    sum += (m - rank) * (rank - 1.0);
  }
  return sum / static_cast<double>(t_len) + (m - 1.0);
}

int multivariate_rank(const Eigen::VectorXd& y, const Eigen::MatrixXd& samples, Rng& rng) {
  if (samples.cols() != y.size()) throw std::invalid_argument("multivariate_rank: horizon mismatch");
  const auto m = static_cast<std::size_t>(samples.rows()) + 1;
  const auto obs = m - 1;
  auto value = [&](std::size_t j, Eigen::Index t) {
    return j == obs ? y[t] : samples(static_cast<Eigen::Index>(j), t);
  };
  // depth_j = sum_t (m - r)(r - 1); the pre-rank is depth / T + (m - 1), so
  // comparing the integer depths compares pre-ranks exactly.
  std::vector<std::int64_t> depth(m, 0);
  std::vector<std::size_t> order(m);
  std::vector<std::uint64_t> tiebreak(m);
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    std::iota(order.begin(), order.end(), 0);
    for (auto& k : tiebreak) k = rng();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = value(a, t), vb = value(b, t);
      return va < vb || (va == vb && tiebreak[a] < tiebreak[b]);
    });
    for (std::size_t pos = 0; pos < m; ++pos) {
      const auto r = static_cast<std::int64_t>(pos + 1);
      depth[order[pos]] += (static_cast<std::int64_t>(m) - r) * (r - 1);
    }
  }
  std::size_t lower = 0;
  std::size_t ties = 0;
  for (std::size_t j = 0; j < obs; ++j) {
    if (depth[j] < depth[obs]) ++lower;
    else if (depth[j] == depth[obs]) ++ties;
  }
  return static_cast<int>(1 + lower + rng.uniform_index(ties + 1));
}

std::string to_string(Functional f) { return f == Functional::sum ? "sum" : "max"; }

FunctionalScores functional_scores(const PredictiveEnsemble& ensemble, const Eigen::VectorXd& y, Functional f) {
  if (ensemble.horizon() != y.size()) throw std::invalid_argument("functional_scores: horizon mismatch");
  std::vector<double> values(static_cast<std::size_t>(ensemble.size()));
  for (int i = 0; i < ensemble.size(); ++i)
    values[static_cast<std::size_t>(i)] =
        f == Functional::sum ? ensemble.trajectories.row(i).sum() : ensemble.trajectories.row(i).maxCoeff();
  const double target = f == Functional::sum ? y.sum() : y.maxCoeff();
  const auto pe = mae_rmse(values, target);
  return {pe.abs_err, pe.sq_err, crps(values, target)};
}

ScoreAccumulator::ScoreAccumulator(int horizon, int pit_bins, CrpsEstimator estimator)
    : horizon_(horizon),
      pit_bins_(pit_bins),
      estimator_(estimator),
      abs_err_(static_cast<std::size_t>(horizon), 0.0),
      sq_err_(static_cast<std::size_t>(horizon), 0.0),
      crps_(static_cast<std::size_t>(horizon), 0.0),
      covered_(static_cast<std::size_t>(horizon), 0.0),
      width_(static_cast<std::size_t>(horizon), 0.0),
      pit_(static_cast<std::size_t>(day_count(horizon)), std::vector<std::size_t>(static_cast<std::size_t>(pit_bins), 0)),
      mvrank_(static_cast<std::size_t>(day_count(horizon))) {
  if (horizon < 1 || pit_bins < 1) throw std::invalid_argument("ScoreAccumulator: bad horizon or bin count");
}

void ScoreAccumulator::add(const PredictiveEnsemble& ensemble, const Eigen::VectorXd& y, Rng& rng) {
  if (ensemble.horizon() != horizon_ || y.size() != horizon_)
    throw std::invalid_argument("ScoreAccumulator::add: horizon mismatch");
  const int m = ensemble.size() + 1;
  if (ensemble_size_ == 0) {
    ensemble_size_ = m;
    for (auto& h : mvrank_) h.assign(static_cast<std::size_t>(m), 0);
  } else if (ensemble_size_ != m) {
    throw std::invalid_argument("ScoreAccumulator::add: ensemble size changed between cases");
  }
  for (int t = 0; t < horizon_; ++t) {
    const auto margin = ensemble.sorted_margin(t);
    const auto ut = static_cast<std::size_t>(t);
    const auto pe = mae_rmse(margin, y[t]);
    abs_err_[ut] += pe.abs_err;
    sq_err_[ut] += pe.sq_err;
    crps_[ut] += crps(margin, y[t], estimator_);
    const auto iv = interval_coverage_width(margin, y[t], 0.8);
    covered_[ut] += iv.covered ? 1.0 : 0.0;
    width_[ut] += iv.width;
    const double u = pit(margin, y[t], rng);
    pit_values_.push_back(u);
    const auto bin = std::min(static_cast<std::size_t>(u * pit_bins_), static_cast<std::size_t>(pit_bins_ - 1));
    ++pit_[static_cast<std::size_t>(t / kHoursPerDay)][bin];
  }
  for (int d = 0; d < day_count(horizon_); ++d) {
    const int start = d * kHoursPerDay;
    const int len = std::min(kHoursPerDay, horizon_ - start);
    const int rank = multivariate_rank(y.segment(start, len), ensemble.trajectories.middleCols(start, len), rng);
    ++mvrank_[static_cast<std::size_t>(d)][static_cast<std::size_t>(rank - 1)];
    if (d == 0) mvrank_values_.push_back(rank);
  }
  for (auto f : {Functional::sum, Functional::max}) {
    const auto s = functional_scores(ensemble, y, f);
    auto& acc = functional_[f == Functional::sum ? 0 : 1];
    acc.abs_err += s.abs_err;
    acc.sq_err += s.sq_err;
    acc.crps += s.crps;
  }
  ++n_cases_;
}

ScoreReport ScoreAccumulator::report() const {
  if (n_cases_ == 0) throw std::logic_error("ScoreAccumulator::report: no cases");
  ScoreReport r;
  r.horizon = horizon_;
  r.n_cases = n_cases_;
  r.ensemble_size = ensemble_size_;
  const double n = n_cases_;
  for (int t = 0; t < horizon_; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    r.mae.push_back(abs_err_[ut] / n);
    r.rmse.push_back(std::sqrt(sq_err_[ut] / n));
    r.crps.push_back(crps_[ut] / n);
    r.coverage80.push_back(covered_[ut] / n);
    r.width80.push_back(width_[ut] / n);
  }
  for (int d = 0; d < day_count(horizon_); ++d) {
    const int start = d * kHoursPerDay;
    const int end = std::min(horizon_, start + kHoursPerDay);
    DayScores ds;
    double sq = 0.0;
    for (int t = start; t < end; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      ds.mae += r.mae[ut];
      sq += sq_err_[ut] / n;
      ds.crps += r.crps[ut];
      ds.coverage80 += r.coverage80[ut];
      ds.width80 += r.width80[ut];
    }
    const double len = end - start;
    ds.mae /= len;
    ds.rmse = std::sqrt(sq / len);
    ds.crps /= len;
    ds.coverage80 /= len;
    ds.width80 /= len;
    r.per_day.push_back(ds);
  }
  r.pit = pit_;
  r.mvrank = mvrank_;
  r.sum_scores = {functional_[0].abs_err / n, std::sqrt(functional_[0].sq_err / n), functional_[0].crps / n};
  r.max_scores = {functional_[1].abs_err / n, std::sqrt(functional_[1].sq_err / n), functional_[1].crps / n};
  r.pit_values = pit_values_;
  r.mvrank_values = mvrank_values_;
  return r;
}

std::vector<std::size_t> coarsen(std::span<const std::size_t> counts, std::size_t bins) {
  if (bins == 0 || counts.size() % bins != 0) throw std::invalid_argument("coarsen: bin count must divide histogram length");
  const std::size_t width = counts.size() / bins;
  std::vector<std::size_t> out(bins, 0);
  for (std::size_t i = 0; i < counts.size(); ++i) out[i / width] += counts[i];
  return out;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) { return csv::format_double(v); }

}  // namespace

void write_report(const std::filesystem::path& dir, const ScoreReport& report, const std::string& variant,
                  const std::string& postproc) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "scores_per_lead.csv");
    out << "lead_h,mae,rmse,crps,coverage80,width80\n";
    for (int t = 0; t < report.horizon; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      out << t + 1 << ',' << fmt(report.mae[ut]) << ',' << fmt(report.rmse[ut]) << ',' << fmt(report.crps[ut]) << ','
          << fmt(report.coverage80[ut]) << ',' << fmt(report.width80[ut]) << '\n';
    }
  }
  {
    auto out = open_output(dir / "scores_per_day.csv");
    out << "day,mae,rmse,crps,coverage80,width80\n";
    for (std::size_t d = 0; d < report.per_day.size(); ++d) {
      const auto& s = report.per_day[d];
      out << d + 1 << ',' << fmt(s.mae) << ',' << fmt(s.rmse) << ',' << fmt(s.crps) << ',' << fmt(s.coverage80) << ','
          << fmt(s.width80) << '\n';
    }
  }
  {
    auto out = open_output(dir / "functional_scores.csv");
    out << "functional,mae,rmse,crps\n";
    out << "sum," << fmt(report.sum_scores.abs_err) << ',' << fmt(report.sum_scores.sq_err) << ','
        << fmt(report.sum_scores.crps) << '\n';
    out << "max," << fmt(report.max_scores.abs_err) << ',' << fmt(report.max_scores.sq_err) << ','
        << fmt(report.max_scores.crps) << '\n';
  }
  {
    auto out = open_output(dir / "pit_histogram.csv");
    out << "day,bin,lower,upper,count\n";
    for (std::size_t d = 0; d < report.pit.size(); ++d) {
      const double nb = static_cast<double>(report.pit[d].size());
      for (std::size_t b = 0; b < report.pit[d].size(); ++b)
        out << d + 1 << ',' << b + 1 << ',' << fmt(static_cast<double>(b) / nb) << ','
            << fmt(static_cast<double>(b + 1) / nb) << ',' << report.pit[d][b] << '\n';
    }
  }
  {
    auto out = open_output(dir / "mvrank_histogram.csv");
    out << "day,rank,count\n";
    for (std::size_t d = 0; d < report.mvrank.size(); ++d)
      for (std::size_t r = 0; r < report.mvrank[d].size(); ++r)
        out << d + 1 << ',' << r + 1 << ',' << report.mvrank[d][r] << '\n';
  }
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["postproc"] = postproc;
  j["horizon"] = report.horizon;
  j["cases"] = report.n_cases;
  j["ensemble_size"] = report.ensemble_size;
  for (std::size_t d = 0; d < report.per_day.size(); ++d) {
    const auto& s = report.per_day[d];
    j["per_day"].push_back({{"day", d + 1},
                            {"mae", s.mae},
                            {"rmse", s.rmse},
                            {"crps", s.crps},
                            {"coverage80", s.coverage80},
                            {"width80", s.width80}});
  }
  j["sum"] = {{"mae", report.sum_scores.abs_err}, {"rmse", report.sum_scores.sq_err}, {"crps", report.sum_scores.crps}};
  j["max"] = {{"mae", report.max_scores.abs_err}, {"rmse", report.max_scores.sq_err}, {"crps", report.max_scores.crps}};
  if (!report.pit_values.empty()) j["pit_ks_p"] = stats::ks_uniform(report.pit_values).p_value;
  if (!report.mvrank.empty() && report.ensemble_size % 10 == 0)
    j["mvrank_day1_chi2_p_10bins"] = stats::chi_square_uniform(coarsen(report.mvrank[0], 10)).p_value;
  auto out = open_output(dir / "summary.json");
  out << j.dump(2) << '\n';
}

void write_summary_tables(const std::filesystem::path& dir, const std::vector<ReportRow>& rows) {
  std::filesystem::create_directories(dir);
  if (rows.empty()) return;
  const int days = static_cast<int>(rows.front().report.per_day.size());
  auto day_cols = [&](const std::string& stem) {
    std::string s;
    for (int d = 1; d <= days; ++d) s += "," + stem + "_day" + std::to_string(d);
    return s;
  };
  {
    auto out = open_output(dir / "table_coverage_width.csv");
    out << "model,postproc" << day_cols("coverage80") << day_cols("width80") << '\n';
    for (const auto& r : rows) {
      out << r.variant << ',' << r.postproc;
      for (const auto& s : r.report.per_day) out << ',' << fmt(s.coverage80);
      for (const auto& s : r.report.per_day) out << ',' << fmt(s.width80);
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / "table_marginal_scores.csv");
    out << "model,postproc" << day_cols("mae") << day_cols("rmse") << day_cols("crps") << '\n';
    for (const auto& r : rows) {
      out << r.variant << ',' << r.postproc;
      for (const auto& s : r.report.per_day) out << ',' << fmt(s.mae);
      for (const auto& s : r.report.per_day) out << ',' << fmt(s.rmse);
      for (const auto& s : r.report.per_day) out << ',' << fmt(s.crps);
      out << '\n';
    }
  }
  for (auto f : {Functional::sum, Functional::max}) {
    auto out = open_output(dir / ("table_" + to_string(f) + ".csv"));
    out << "model,postproc,mae,rmse,crps\n";
    for (const auto& r : rows) {
      const auto& s = f == Functional::sum ? r.report.sum_scores : r.report.max_scores;
      out << r.variant << ',' << r.postproc << ',' << fmt(s.abs_err) << ',' << fmt(s.sq_err) << ',' << fmt(s.crps) << '\n';
    }
  }
}

}  // namespace trajcast
