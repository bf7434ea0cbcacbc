#include "trajcast/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "trajcast/csv.hpp"
#include "trajcast/error.hpp"

namespace trajcast {

namespace {

std::string describe_cell(const NwpGridRecord& r) {
  std::ostringstream os;
  os << "init_time=" << format_utc(r.init_time) << " lead_h=" << r.lead_h << " lat=" << r.lat << " lon=" << r.lon;
  return os.str();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<NwpGridRecord> ensemble_mean(const std::vector<NwpGridRecord>& records) {
  using Cell = std::tuple<TimePoint, int, double, double>;
  std::set<int> members;
  std::map<Cell, std::map<int, double>> cells;
  for (const auto& r : records) {
    members.insert(r.member);
    auto& slot = cells[{r.init_time, r.lead_h, r.lat, r.lon}];
    if (!slot.emplace(r.member, r.wind_speed_100m).second)
      throw DataError("duplicate member " + std::to_string(r.member) + " at " + describe_cell(r));
  }
  std::vector<NwpGridRecord> out;
  out.reserve(cells.size());
  for (const auto& [cell, values] : cells) {
    NwpGridRecord r{std::get<0>(cell), std::get<1>(cell), std::get<2>(cell), std::get<3>(cell), 0, 0.0};
    if (values.size() != members.size()) {
      for (int m : members)
        if (!values.contains(m))
          throw DataError("missing member " + std::to_string(m) + " at " + describe_cell(r));
    }
    double sum = 0.0;
    for (const auto& [m, v] : values) sum += v;
    r.wind_speed_100m = sum / static_cast<double>(values.size());
    out.push_back(r);
  }
  return out;
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)), m_(x_.size(), 0.0) {
  const std::size_t n = x_.size();
  if (n != y_.size() || n < 2) throw std::invalid_argument("spline: need matching knots and values");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("spline: knots must be strictly increasing");
  if (n == 2) return;
  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = x_[i + 1] - x_[i];  // h_{i} on the sub-diagonal
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (rhs[i] - upper[i] * m_[i + 2]) / diag[i];
}

double NaturalCubicSpline::operator()(double at) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), at);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  i = std::min(i, x_.size() - 2);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - at) / h;
  const double b = (at - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

Eigen::VectorXd interpolate_hourly(const std::map<int, double>& knots, int horizon) {
  if (knots.size() < 4) throw DataError("interpolate_hourly: need at least 4 knots, got " + std::to_string(knots.size()));
  if (horizon < 1) throw DataError("interpolate_hourly: horizon must be positive");
  if (knots.begin()->first > 1 || knots.rbegin()->first < horizon)
    throw DataError("interpolate_hourly: knots [" + std::to_string(knots.begin()->first) + ", " +
                    std::to_string(knots.rbegin()->first) + "] do not cover leads 1.." + std::to_string(horizon));
  std::vector<double> x, y;
  for (const auto& [lead, v] : knots) {
    x.push_back(lead);
    y.push_back(v);
  }
  const NaturalCubicSpline spline(std::move(x), std::move(y));
  Eigen::VectorXd out(horizon);
  for (int h = 1; h <= horizon; ++h) out[h - 1] = std::max(0.0, spline(h));
  return out;
}

std::map<InitLead, double> spatial_average(const std::vector<NwpGridRecord>& records, double lat_min) {
  std::map<InitLead, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (r.member != 0) throw DataError("spatial_average expects ensemble-mean records (member 0)");
    if (r.lat > lat_min) {
      auto& [sum, count] = acc[{r.init_time, r.lead_h}];
      sum += r.wind_speed_100m;
      ++count;
    }
  }
  if (acc.empty()) throw DataError("spatial_average: no grid points north of latitude " + std::to_string(lat_min));
  std::map<InitLead, double> out;
  for (const auto& [key, sc] : acc) out.emplace(key, sc.first / static_cast<double>(sc.second));
  return out;
}

std::vector<TrainingWindow> build_windows(const std::vector<ForecastCase>& cases, int window_days) {
  if (window_days < 1) throw ConfigError("window_days must be at least 1");
  std::vector<TrainingWindow> out;
  const auto w = static_cast<std::size_t>(window_days);
  for (std::size_t i = w; i < cases.size(); ++i) {
    if (!(cases[i - 1].init_time < cases[i].init_time))
      throw DataError("build_windows: cases are not strictly increasing in init_time");
    TrainingWindow tw;
    tw.cases.assign(cases.begin() + static_cast<std::ptrdiff_t>(i - w), cases.begin() + static_cast<std::ptrdiff_t>(i));
    tw.target = cases[i];
    out.push_back(std::move(tw));
  }
  return out;
}

std::vector<ForecastCase> assemble_cases(const std::map<InitLead, double>& averaged,
                                         const std::vector<ProductionRecord>& production, int horizon,
                                         AssembleReport* report) {
  std::map<TimePoint, std::map<int, double>> knots;
  for (const auto& [key, v] : averaged) knots[key.first][key.second] = v;
  std::map<TimePoint, double> power;
  for (const auto& p : production) power[p.time] = p.power;

  std::vector<ForecastCase> out;
  for (const auto& [init, series] : knots) {
    ForecastCase fc;
    fc.init_time = init;
    try {
      fc.x_w = interpolate_hourly(series, horizon);
    } catch (const DataError&) {
      if (report) report->incomplete_covariates.push_back(init);
      continue;
    }
    Eigen::VectorXd y(horizon);
    bool complete = true;
    for (int h = 1; h <= horizon && complete; ++h) {
      auto it = power.find(add_hours(init, h));
      if (it == power.end()) complete = false;
      else y[h - 1] = it->second;
    }
    if (complete) fc.y = std::move(y);
    else if (report) report->incomplete_observations.push_back(init);
    out.push_back(std::move(fc));
  }
  return out;
}

std::vector<ForecastCase> observed_cases(const std::vector<ForecastCase>& cases) {
  std::vector<ForecastCase> out;
  std::copy_if(cases.begin(), cases.end(), std::back_inserter(out), [](const auto& c) { return c.y.has_value(); });
  return out;
}

std::vector<NwpGridRecord> read_nwp_csv(std::istream& in) {
  const auto rows = csv::read_table(in, {"init_time", "lead_h", "lat", "lon", "member", "ws100"}, "NWP CSV");
  std::vector<NwpGridRecord> out;
  out.reserve(rows.size());
  for (const auto& f : rows) {
    NwpGridRecord r;
    r.init_time = parse_utc(f[0]);
    r.lead_h = static_cast<int>(csv::to_long(f[1], "lead_h"));
    r.lat = csv::to_double(f[2], "lat");
    r.lon = csv::to_double(f[3], "lon");
    r.member = static_cast<int>(csv::to_long(f[4], "member"));
    r.wind_speed_100m = csv::to_double(f[5], "ws100");
    if (r.lead_h < 0) throw DataError("NWP CSV: negative lead_h");
    if (r.member < 0) throw DataError("NWP CSV: negative member index");
    if (!(r.wind_speed_100m >= 0.0)) throw DataError("NWP CSV: negative wind speed at " + describe_cell(r));
    out.push_back(r);
  }
  return out;
}

std::vector<NwpGridRecord> read_nwp_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_nwp_csv(in);
}

void write_nwp_csv(std::ostream& out, const std::vector<NwpGridRecord>& records) {
  out << "init_time,lead_h,lat,lon,member,ws100\n";
  for (const auto& r : records)
    out << format_utc(r.init_time) << ',' << r.lead_h << ',' << csv::format_double(r.lat) << ','
        << csv::format_double(r.lon) << ',' << r.member << ',' << csv::format_double(r.wind_speed_100m) << '\n';
}

std::vector<ProductionRecord> read_production_csv(std::istream& in) {
  const auto rows = csv::read_table(in, {"time", "power_mw"}, "production CSV");
  std::vector<ProductionRecord> out;
  out.reserve(rows.size());
  for (const auto& f : rows) {
    ProductionRecord r{parse_utc(f[0]), csv::to_double(f[1], "power_mw")};
    if (!(r.power >= 0.0)) throw DataError("production CSV: negative power at " + format_utc(r.time));
    if (r.time.time_since_epoch() % std::chrono::hours(1) != std::chrono::seconds(0))
      throw DataError("production CSV: timestamp not on the hour: " + format_utc(r.time));
    if (!out.empty() && !(out.back().time < r.time))
      throw DataError("production CSV: timestamps not strictly increasing at " + format_utc(r.time));
    out.push_back(r);
  }
  return out;
}

std::vector<ProductionRecord> read_production_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_production_csv(in);
}

void write_production_csv(std::ostream& out, const std::vector<ProductionRecord>& records) {
  out << "time,power_mw\n";
  for (const auto& r : records) out << format_utc(r.time) << ',' << csv::format_double(r.power) << '\n';
}

void write_case_csv(std::ostream& out, const ForecastCase& fc) {
  out << (fc.y ? "lead_h,ws_mean,power_mw\n" : "lead_h,ws_mean\n");
  for (int t = 0; t < fc.horizon(); ++t) {
    out << t + 1 << ',' << csv::format_double(fc.x_w[t]);
    if (fc.y) out << ',' << csv::format_double((*fc.y)[t]);
    out << '\n';
  }
}

ForecastCase read_case_csv(std::istream& in, TimePoint init_time) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const bool with_power = text.find("power_mw") != std::string::npos;
  std::istringstream table(text);
  const auto rows = with_power ? csv::read_table(table, {"lead_h", "ws_mean", "power_mw"}, "case CSV")
                               : csv::read_table(table, {"lead_h", "ws_mean"}, "case CSV");
  ForecastCase fc;
  fc.init_time = init_time;
  fc.x_w.resize(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (csv::to_long(rows[i][0], "lead_h") != static_cast<long>(i) + 1)
      throw DataError("case CSV: leads must run 1..T in order");
    fc.x_w[static_cast<Eigen::Index>(i)] = csv::to_double(rows[i][1], "ws_mean");
    if (with_power) y[static_cast<Eigen::Index>(i)] = csv::to_double(rows[i][2], "power_mw");
  }
  if (with_power) fc.y = std::move(y);
  return fc;
}

std::vector<ForecastCase> load_cases(const std::filesystem::path& nwp, const std::filesystem::path& production,
                                     int horizon, double lat_min, AssembleReport* report) {
  auto grid = read_nwp_csv(nwp);
  const bool has_members = std::any_of(grid.begin(), grid.end(), [](const auto& r) { return r.member != 0; });
  if (has_members) grid = ensemble_mean(grid);
  const auto averaged = spatial_average(grid, lat_min);
  return assemble_cases(averaged, read_production_csv(production), horizon, report);
}

}  // namespace trajcast
