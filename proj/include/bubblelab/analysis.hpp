#pragma once

// Market-level metrics and the forecast-rationality battery over a SessionLog.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/records.hpp"
#include "bubblelab/stats.hpp"

namespace bubblelab {

constexpr double kAlpha = 0.05;
constexpr std::size_t kMinMeanTestN = 5;
constexpr std::size_t kMinRegressionN = 6;

struct PriceSeries {
  std::vector<int> rounds;
  std::vector<double> prices;
  std::vector<double> fundamental;

  void validate() const {
    if (prices.size() != fundamental.size() || prices.size() != rounds.size()) {
      throw std::invalid_argument("price series: length mismatch");
    }
    for (std::size_t i = 1; i < rounds.size(); ++i) {
      if (rounds[i] != rounds[i - 1] + 1) throw std::invalid_argument("price series: rounds not contiguous");
    }
  }
};

inline PriceSeries price_series(const SessionLog& log) {
  PriceSeries s;
  for (const auto* r : log.main_records()) {
    s.rounds.push_back(r->round);
    s.prices.push_back(static_cast<double>(r->clearing.price));
    s.fundamental.push_back(r->fundamental_value);
  }
  return s;
}

inline double mse_fundamental(const PriceSeries& s) {
  s.validate();
  if (s.prices.empty()) throw std::invalid_argument("mse_fundamental: empty series");
  double sum = 0.0;
  for (std::size_t i = 0; i < s.prices.size(); ++i) {
    const double d = s.prices[i] - s.fundamental[i];
    sum += d * d;
  }
  return sum / static_cast<double>(s.prices.size());
}

/// Pearson r, nullopt (not applicable) when either series is constant.
inline std::optional<double> pcc(const std::vector<double>& a, const std::vector<double>& b) {
  return stats::pearson(a, b);
}

inline std::vector<double> mispricing(const std::vector<double>& prices, const std::vector<double>& fv) {
  if (prices.size() != fv.size()) throw std::invalid_argument("mispricing: length mismatch");
  std::vector<double> out(prices.size());
  for (std::size_t i = 0; i < prices.size(); ++i) out[i] = prices[i] - fv[i];
  return out;
}

struct PvVariance {
  std::vector<double> per_round;
  double round_mean = 0.0;
  double final_round = 0.0;
  /// Across agents' settled final values.
  double final_value = 0.0;
};

inline PvVariance pv_variance(const SessionLog& log) {
  const auto main = log.main_records();
  if (main.empty()) throw std::invalid_argument("pv_variance: no main-phase rounds");
  if (main.front()->agents.size() < 2) throw std::invalid_argument("pv_variance: needs at least two agents");
  PvVariance out;
  for (const auto* r : main) {
    std::vector<double> pv;
    for (const auto& a : r->agents) {
      pv.push_back(a.cash_after.to_double() + static_cast<double>(a.shares_after * r->clearing.price));
    }
    out.per_round.push_back(stats::population_variance(pv));
  }
  out.round_mean = stats::mean(out.per_round);
  out.final_round = out.per_round.back();
  if (log.final.size() >= 2) {
    std::vector<double> fv;
    for (const auto& f : log.final) fv.push_back(f.final_value.to_double());
    out.final_value = stats::population_variance(fv);
  }
  return out;
}

// ---- forecast errors -------------------------------------------------------

struct ForecastError {
  std::uint32_t agent = 0;
  int round = 0;
  int horizon = 0;
  double forecast = 0.0;
  /// Realized minus forecast; positive means the price was underpredicted.
  double error = 0.0;
};

/// Main-phase forecasts whose target round was played.
inline std::vector<ForecastError> forecast_errors(const SessionLog& log) {
  const auto main = log.main_records();
  std::map<int, double> price_at;
  for (const auto* r : main) price_at[r->round] = static_cast<double>(r->clearing.price);
  std::vector<ForecastError> out;
  for (const auto* r : main) {
    for (const auto& a : r->agents) {
      for (const auto& [h, f] : a.forecasts) {
        const auto it = price_at.find(r->round + h);
        if (it == price_at.end()) continue;
        out.push_back({a.agent.value, r->round, h, static_cast<double>(f), it->second - static_cast<double>(f)});
      }
    }
  }
  return out;
}

// ---- tests -----------------------------------------------------------------

enum class TestStatus { kPass, kReject, kNotEvaluated };

inline std::string_view to_string(TestStatus s) {
  switch (s) {
    case TestStatus::kPass: return "PASS";
    case TestStatus::kReject: return "REJECT";
    case TestStatus::kNotEvaluated: return "NOT_EVALUATED";
  }
  return "UNKNOWN";
}

struct TestResult {
  TestStatus status = TestStatus::kNotEvaluated;
  std::size_t n = 0;
  /// Mean error for the unbiasedness test, slope otherwise.
  double estimate = 0.0;
  double t = 0.0;
  double p = 1.0;
};

inline TestStatus verdict(double p) { return p > kAlpha ? TestStatus::kPass : TestStatus::kReject; }

/// H0: mean error is zero.
inline TestResult test_unbiasedness(const std::vector<double>& errors) {
  TestResult r;
  r.n = errors.size();
  if (errors.size() < kMinMeanTestN) return r;
  const auto t = stats::one_sample_t(errors);
  r.estimate = t.mean;
  r.t = t.t;
  r.p = t.p;
  r.status = verdict(t.p);
  return r;
}

inline TestResult slope_test(const std::vector<double>& x, const std::vector<double>& y) {
  TestResult r;
  r.n = x.size();
  if (x.size() < kMinRegressionN) return r;
  const auto fit = stats::ols(x, y);
  if (!fit) return r;
  r.estimate = fit->slope;
  r.t = fit->t;
  r.p = fit->p;
  r.status = verdict(fit->p);
  return r;
}

/// Regresses each error on its predecessor. `sequence` is ordered by
/// formation round; pass `rounds` to pair only adjacent rounds.
inline TestResult test_zero_autocorr(const std::vector<double>& sequence, const std::vector<int>& rounds = {}) {
  if (!rounds.empty() && rounds.size() != sequence.size()) throw std::invalid_argument("autocorr: length mismatch");
  std::vector<double> prev;
  std::vector<double> next;
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    if (!rounds.empty() && rounds[i] != rounds[i - 1] + 1) continue;
    prev.push_back(sequence[i - 1]);
    next.push_back(sequence[i]);
  }
  return slope_test(prev, next);
}

/// Regresses errors on the forecasts that produced them.
inline TestResult test_error_forecast_corr(const std::vector<double>& errors, const std::vector<double>& forecasts) {
  if (errors.size() != forecasts.size()) throw std::invalid_argument("error/forecast: length mismatch");
  return slope_test(forecasts, errors);
}

struct AgentRationality {
  std::uint32_t agent = 0;
  std::string group;
  int horizon = 0;
  double mean_error = 0.0;
  std::size_t n = 0;
  TestResult unbiased;
  TestResult autocorr;
  TestResult orthogonal;
};

/// Per agent and horizon. Agents are grouped by their roster kind.
inline std::vector<AgentRationality> rationality_by_agent(const SessionLog& log) {
  const auto errors = forecast_errors(log);
  std::map<std::pair<std::uint32_t, int>, std::vector<const ForecastError*>> slices;
  for (const auto& e : errors) slices[{e.agent, e.horizon}].push_back(&e);
  std::vector<AgentRationality> out;
  for (auto& [key, slice] : slices) {
    std::sort(slice.begin(), slice.end(), [](auto* a, auto* b) { return a->round < b->round; });
    std::vector<double> e;
    std::vector<double> f;
    std::vector<int> rounds;
    for (const auto* x : slice) {
      e.push_back(x->error);
      f.push_back(x->forecast);
      rounds.push_back(x->round);
    }
    AgentRationality a;
    a.agent = key.first;
    a.horizon = key.second;
    a.group = key.first < log.final.size() ? log.final[key.first].kind
              : key.first < log.provenance.roster.size() ? log.provenance.roster[key.first]
                                                         : "unknown";
    a.n = e.size();
    a.mean_error = e.empty() ? 0.0 : stats::mean(e);
    a.unbiased = test_unbiasedness(e);
    a.autocorr = test_zero_autocorr(e, rounds);
    a.orthogonal = test_error_forecast_corr(e, f);
    out.push_back(std::move(a));
  }
  return out;
}

// ---- aggregation -------------------------------------------------------------

struct ProportionCell {
  std::size_t pass = 0;
  std::size_t evaluated = 0;
  std::size_t not_evaluated = 0;
  [[nodiscard]] std::optional<double> proportion() const {
    if (evaluated == 0) return std::nullopt;
    return static_cast<double>(pass) / static_cast<double>(evaluated);
  }
  void add(const TestResult& r) {
    if (r.status == TestStatus::kNotEvaluated) {
      ++not_evaluated;
      return;
    }
    ++evaluated;
    if (r.status == TestStatus::kPass) ++pass;
  }
};

struct GroupSummary {
  std::string group;
  /// Mean error at the shortest horizon.
  std::optional<double> mean_short_horizon_error;
  /// Pass proportions averaged over horizons with any evaluated agent.
  std::optional<double> unbiased;
  std::optional<double> zero_autocorr;
  std::optional<double> uncorrelated;
};

struct RationalityReport {
  std::vector<AgentRationality> agents;
  /// group -> horizon -> cells.
  struct Row {
    std::string group;
    int horizon = 0;
    ProportionCell unbiased;
    ProportionCell autocorr;
    ProportionCell orthogonal;
  };
  std::vector<Row> rows;
  std::vector<GroupSummary> summary;
};

inline RationalityReport aggregate_report(std::vector<AgentRationality> agents) {
  RationalityReport report;
  std::map<std::pair<std::string, int>, RationalityReport::Row> rows;
  std::map<std::string, std::vector<double>> short_errors;
  std::map<std::string, int> shortest;
  for (const auto& a : agents) {
    auto& row = rows[{a.group, a.horizon}];
    row.group = a.group;
    row.horizon = a.horizon;
    row.unbiased.add(a.unbiased);
    row.autocorr.add(a.autocorr);
    row.orthogonal.add(a.orthogonal);
    auto [it, inserted] = shortest.emplace(a.group, a.horizon);
    if (!inserted) it->second = std::min(it->second, a.horizon);
  }
  for (const auto& a : agents) {
    if (a.horizon == shortest[a.group] && a.n > 0) short_errors[a.group].push_back(a.mean_error);
  }
  for (auto& [key, row] : rows) report.rows.push_back(row);

  auto average = [](const std::vector<std::optional<double>>& xs) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& x : xs) {
      if (x) {
        sum += *x;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  for (const auto& [group, _] : shortest) {
    GroupSummary s;
    s.group = group;
    if (!short_errors[group].empty()) s.mean_short_horizon_error = stats::mean(short_errors[group]);
    std::vector<std::optional<double>> u;
    std::vector<std::optional<double>> ac;
    std::vector<std::optional<double>> o;
    for (const auto& row : report.rows) {
      if (row.group != group) continue;
      u.push_back(row.unbiased.proportion());
      ac.push_back(row.autocorr.proportion());
      o.push_back(row.orthogonal.proportion());
    }
    s.unbiased = average(u);
    s.zero_autocorr = average(ac);
    s.uncorrelated = average(o);
    report.summary.push_back(std::move(s));
  }
  report.agents = std::move(agents);
  return report;
}

// ---- session-level forecasts -------------------------------------------------

struct ForecastCentre {
  double mean = 0.0;
  double median = 0.0;
  std::size_t n = 0;
};

inline ForecastCentre mean_median(const std::vector<double>& forecasts) {
  if (forecasts.empty()) throw std::invalid_argument("mean_median: no forecasts");
  return {stats::mean(forecasts), stats::median(forecasts), forecasts.size()};
}

/// Mean and median across agents of the forecasts made in round `t` for t + h.
inline std::optional<ForecastCentre> mean_median_forecasts(const SessionLog& log, int t, int h) {
  for (const auto* r : log.main_records()) {
    if (r->round != t) continue;
    std::vector<double> xs;
    for (const auto& a : r->agents) {
      const auto it = a.forecasts.find(h);
      if (it != a.forecasts.end()) xs.push_back(static_cast<double>(it->second));
    }
    if (xs.empty()) return std::nullopt;
    return mean_median(xs);
  }
  return std::nullopt;
}

// ---- market classification ---------------------------------------------------

/// R: tracks fundamental value (MSE < 1). H: a bubble forms and then crashes,
/// i.e. price reaches 1.28x FV and later falls by at least 2/7 of FV from that
/// peak. E: anything else.
struct MarketClass {
  char label = 'E';
  double mse = 0.0;
  double peak_ratio = 0.0;
  double crash = 0.0;
};

inline MarketClass classify_market(const PriceSeries& s) {
  MarketClass c;
  c.mse = mse_fundamental(s);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < s.prices.size(); ++i) {
    const double ratio = s.fundamental[i] > 0 ? s.prices[i] / s.fundamental[i] : 0.0;
    if (ratio > c.peak_ratio) {
      c.peak_ratio = ratio;
      peak = i;
    }
  }
  double trough = s.prices.empty() ? 0.0 : s.prices[peak];
  for (std::size_t i = peak; i < s.prices.size(); ++i) trough = std::min(trough, s.prices[i]);
  c.crash = s.prices.empty() ? 0.0 : s.prices[peak] - trough;
  const bool bubble = c.peak_ratio >= 1.28 && c.crash >= (2.0 / 7.0) * s.fundamental[peak];
  c.label = c.mse < 1.0 ? 'R' : bubble ? 'H' : 'E';
  return c;
}

// ---- reference series --------------------------------------------------------

/// Parses a (round, price) CSV with a header row.
inline std::map<int, double> parse_reference_csv(const std::string& text) {
  std::map<int, double> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("reference csv: expected round,price in '" + line + "'");
    try {
      out[std::stoi(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("reference csv: bad row '" + line + "'");
    }
  }
  return out;
}

/// PCC against a reference series over the rounds both cover.
inline std::optional<double> pcc_against(const PriceSeries& s, const std::map<int, double>& reference) {
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t i = 0; i < s.rounds.size(); ++i) {
    const auto it = reference.find(s.rounds[i]);
    if (it == reference.end()) continue;
    a.push_back(s.prices[i]);
    b.push_back(it->second);
  }
  if (a.size() < 2) return std::nullopt;
  return pcc(a, b);
}

// ---- output ------------------------------------------------------------------

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json to_json(const TestResult& r) {
  return {{"status", to_string(r.status)}, {"n", r.n}, {"estimate", r.estimate},
          {"t", std::isfinite(r.t) ? nlohmann::json(r.t) : nlohmann::json(r.t > 0 ? "inf" : "-inf")}, {"p", r.p}};
}

inline nlohmann::json to_json(const RationalityReport& report) {
  nlohmann::json j;
  j["agents"] = nlohmann::json::array();
  for (const auto& a : report.agents) {
    j["agents"].push_back({{"agent", a.agent}, {"group", a.group}, {"horizon", a.horizon}, {"n", a.n},
                           {"mean_error", a.mean_error}, {"unbiased", to_json(a.unbiased)},
                           {"zero_autocorr", to_json(a.autocorr)}, {"uncorrelated", to_json(a.orthogonal)}});
  }
  auto cell = [](const ProportionCell& c) {
    return nlohmann::json{{"pass", c.pass}, {"evaluated", c.evaluated}, {"not_evaluated", c.not_evaluated},
                          {"proportion", optional_json(c.proportion())}};
  };
  j["proportions"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    j["proportions"].push_back({{"group", r.group}, {"horizon", r.horizon}, {"unbiased", cell(r.unbiased)},
                                {"zero_autocorr", cell(r.autocorr)}, {"uncorrelated", cell(r.orthogonal)}});
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& s : report.summary) {
    j["summary"].push_back({{"group", s.group}, {"mean_short_horizon_error", optional_json(s.mean_short_horizon_error)},
                            {"unbiased", optional_json(s.unbiased)}, {"zero_autocorr", optional_json(s.zero_autocorr)},
                            {"uncorrelated", optional_json(s.uncorrelated)}});
  }
  return j;
}

/// One row per group and horizon with pass proportions and counts.
inline std::string report_csv(const RationalityReport& report) {
  std::ostringstream out;
  out << "group,horizon,test,pass,evaluated,not_evaluated,proportion\n";
  auto emit = [&](const RationalityReport::Row& r, const char* test, const ProportionCell& c) {
    out << r.group << ',' << r.horizon << ',' << test << ',' << c.pass << ',' << c.evaluated << ',' << c.not_evaluated << ',';
    if (const auto p = c.proportion()) out << *p;
    out << '\n';
  };
  for (const auto& r : report.rows) {
    emit(r, "unbiased", r.unbiased);
    emit(r, "zero_autocorr", r.autocorr);
    emit(r, "uncorrelated", r.orthogonal);
  }
  return out.str();
}

}  // namespace bubblelab
