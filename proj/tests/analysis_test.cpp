#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>

#include "bubblelab/analysis.hpp"
#include "bubblelab/roster.hpp"
#include "bubblelab/session.hpp"

namespace bubblelab {
namespace {

PriceSeries series(std::vector<double> prices, double fv = 14.0) {
  PriceSeries s;
  for (std::size_t i = 0; i < prices.size(); ++i) s.rounds.push_back(static_cast<int>(i) + 1);
  s.fundamental.assign(prices.size(), fv);
  s.prices = std::move(prices);
  return s;
}

std::vector<double> normals(std::uint64_t seed, std::size_t n, double mu = 0.0, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = mu + sd * rng.normal();
  return out;
}

TEST(Stats, TwoSidedTailMatchesBoost) {
  for (double df : {1.0, 2.0, 5.0, 10.0, 29.0, 30.0, 120.0}) {
    boost::math::students_t dist(df);
    for (double t : {0.0, 0.5, 1.0, 2.0, 2.045, 3.0, 6.0}) {
      const double expected = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
      EXPECT_NEAR(stats::t_two_sided_p(t, df), expected, 1e-10) << "df=" << df << " t=" << t;
      EXPECT_NEAR(stats::t_cdf(-t, df), boost::math::cdf(dist, -t), 1e-10);
    }
  }
}

TEST(Stats, TwoSidedTailMatchesPublishedTable) {
  // Two-sided p-values for |t| in {1, 2, 3}, df in {5, 10, 30}.
  const struct {
    double df, t, p;
  } table[] = {{5, 1, 0.36322}, {5, 2, 0.10191}, {5, 3, 0.03009}, {10, 1, 0.34089}, {10, 2, 0.07339},
               {10, 3, 0.01334}, {30, 1, 0.32530}, {30, 2, 0.05462}, {30, 3, 0.00541}};
  for (const auto& row : table) EXPECT_NEAR(stats::t_two_sided_p(row.t, row.df), row.p, 1e-4);
}

TEST(Stats, OlsRecoversExactLine) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7};
  std::vector<double> y;
  for (double v : x) y.push_back(2.5 - 0.75 * v);
  const auto fit = stats::ols(x, y);
  ASSERT_TRUE(fit);
  EXPECT_NEAR(fit->intercept, 2.5, 1e-9);
  EXPECT_NEAR(fit->slope, -0.75, 1e-9);
  EXPECT_EQ(fit->p, 0.0);
}

TEST(Stats, OlsClosedFormOnNoisyData) {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{1, 3, 2, 5};
  const auto fit = stats::ols(x, y);
  ASSERT_TRUE(fit);
  // sxx = 5, sxy = 5.5, b = 1.1, a = 2.75 - 1.1 * 2.5 = 0; residuals -.1, .8, -1.3, .6.
  EXPECT_NEAR(fit->slope, 1.1, 1e-12);
  EXPECT_NEAR(fit->intercept, 0.0, 1e-12);
  const double se = std::sqrt((0.01 + 0.64 + 1.69 + 0.36) / 2.0 / 5.0);
  EXPECT_NEAR(fit->slope_se, se, 1e-12);
  boost::math::students_t dist(2.0);
  EXPECT_NEAR(fit->p, 2.0 * boost::math::cdf(boost::math::complement(dist, 1.1 / se)), 1e-10);
}

TEST(Stats, OlsDegenerateRegressor) { EXPECT_FALSE(stats::ols({3, 3, 3, 3}, {1, 2, 3, 4})); }

TEST(Analysis, MseExamples) {
  EXPECT_DOUBLE_EQ(mse_fundamental(series({14, 14, 14})), 0.0);
  EXPECT_DOUBLE_EQ(mse_fundamental(series({15, 13})), 1.0);
  EXPECT_DOUBLE_EQ(mse_fundamental(series({16, 16})), 4.0);
  EXPECT_THROW(mse_fundamental(series({})), std::invalid_argument);
}

TEST(Analysis, MseZeroOnlyOnExactTracking) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    std::vector<double> p(10);
    for (auto& x : p) x = static_cast<double>(rng.uniform_int(12, 16));
    const double mse = mse_fundamental(series(p));
    const bool exact = std::all_of(p.begin(), p.end(), [](double x) { return x == 14.0; });
    EXPECT_GE(mse, 0.0);
    EXPECT_EQ(mse == 0.0, exact);
  }
}

TEST(Analysis, PccExamplesAndInvariance) {
  const std::vector<double> a{1, 4, 2, 8, 5};
  std::vector<double> neg;
  for (double x : a) neg.push_back(-x);
  EXPECT_NEAR(*pcc(a, a), 1.0, 1e-12);
  EXPECT_NEAR(*pcc(a, neg), -1.0, 1e-12);
  EXPECT_FALSE(pcc(a, {3, 3, 3, 3, 3}));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = normals(seed, 12);
    const auto y = normals(seed + 1000, 12);
    std::vector<double> scaled;
    for (double v : x) scaled.push_back(3.5 * v - 7.0);
    EXPECT_NEAR(*pcc(x, y), *pcc(y, x), 1e-12);
    EXPECT_NEAR(*pcc(x, y), *pcc(scaled, y), 1e-12);
  }
}

TEST(Analysis, Mispricing) {
  EXPECT_EQ(mispricing({14, 20, 7}, {14, 14, 7}), (std::vector<double>{0, 6, 0}));
}

TEST(Analysis, MeanMedian) {
  auto c = mean_median({14, 14, 16});
  EXPECT_NEAR(c.mean, 14.667, 1e-3);
  EXPECT_EQ(c.median, 14);
  c = mean_median({12});
  EXPECT_EQ(c.mean, 12);
  EXPECT_EQ(c.median, 12);
  EXPECT_EQ(mean_median({14, 16}).median, 15);
}

TEST(Analysis, UnbiasednessExamples) {
  const auto zero = test_unbiasedness(std::vector<double>(10, 0.0));
  EXPECT_EQ(zero.status, TestStatus::kPass);
  EXPECT_EQ(zero.t, 0.0);
  const auto biased = test_unbiasedness(normals(11, 30, 1.0, 0.1));
  EXPECT_EQ(biased.status, TestStatus::kReject);
  EXPECT_LT(biased.p, 0.001);
  EXPECT_EQ(test_unbiasedness({1, -1, 0}).status, TestStatus::kNotEvaluated);
}

TEST(Analysis, AutocorrExamples) {
  std::vector<double> alt;
  for (int i = 0; i < 20; ++i) alt.push_back(i % 2 == 0 ? 1.0 : -1.0);
  const auto r = test_zero_autocorr(alt);
  EXPECT_NEAR(r.estimate, -1.0, 1e-12);
  EXPECT_EQ(r.status, TestStatus::kReject);

  const auto white = test_zero_autocorr(normals(5, 29));
  EXPECT_EQ(white.status, TestStatus::kPass);
  EXPECT_GT(white.p, 0.05);

  EXPECT_EQ(test_zero_autocorr(std::vector<double>(20, 2.0)).status, TestStatus::kNotEvaluated);
  EXPECT_EQ(test_zero_autocorr({1, 2, 3, 1, 2, 3}).status, TestStatus::kNotEvaluated);  // five pairs
}

TEST(Analysis, AutocorrSkipsGapsInRounds) {
  // Only rounds 1-4 and 10-13 are adjacent: six pairs.
  const std::vector<double> e{1, -1, 1, -1, 2, -2, 2, -2};
  EXPECT_EQ(test_zero_autocorr(e, {1, 2, 3, 4, 10, 11, 12, 13}).n, 6U);
  EXPECT_EQ(test_zero_autocorr(e, {1, 2, 3, 4, 10, 12, 14, 16}).status, TestStatus::kNotEvaluated);
}

TEST(Analysis, ErrorForecastExamples) {
  const auto f = normals(21, 29, 14.0, 2.0);
  const auto e = normals(22, 29);
  EXPECT_EQ(test_error_forecast_corr(e, f).status, TestStatus::kPass);

  const double mf = stats::mean(f);
  std::vector<double> exact;
  for (double v : f) exact.push_back(-(v - mf));
  const auto r = test_error_forecast_corr(exact, f);
  EXPECT_NEAR(r.estimate, -1.0, 1e-12);
  EXPECT_EQ(r.status, TestStatus::kReject);

  EXPECT_EQ(test_error_forecast_corr(e, std::vector<double>(29, 14.0)).status, TestStatus::kNotEvaluated);
}

TEST(Analysis, ForecastErrorSignConvention) {
  SessionConfig c;
  c.practice_rounds = 0;
  c.main_rounds = 12;
  c.n_agents = 4;
  c.rng_seed = 3;
  const auto log = run_session(c, build_roster(parse_roster("4xfundamentalist"), c));
  const auto errors = forecast_errors(log);
  ASSERT_FALSE(errors.empty());
  for (const auto& e : errors) {
    EXPECT_LE(e.round + e.horizon, c.main_rounds);
    const double realized = static_cast<double>(log.records.at(static_cast<std::size_t>(e.round + e.horizon - 1)).clearing.price);
    EXPECT_EQ(e.error, realized - e.forecast);
  }
  // Horizon 10 forecasts mature only for rounds 1 and 2.
  EXPECT_EQ(std::count_if(errors.begin(), errors.end(), [](auto& e) { return e.horizon == 10; }), 2 * 4);
}

AgentRationality agent_result(const char* group, int h, TestStatus s) {
  AgentRationality a;
  a.group = group;
  a.horizon = h;
  a.n = 10;
  a.unbiased.status = a.autocorr.status = a.orthogonal.status = s;
  return a;
}

TEST(Analysis, AggregateDenominatorExcludesNotEvaluated) {
  std::vector<AgentRationality> agents;
  for (int i = 0; i < 7; ++i) agents.push_back(agent_result("m", 0, TestStatus::kPass));
  agents.push_back(agent_result("m", 0, TestStatus::kReject));
  for (int i = 0; i < 2; ++i) agents.push_back(agent_result("m", 0, TestStatus::kNotEvaluated));
  for (int i = 0; i < 3; ++i) agents.push_back(agent_result("all", 2, TestStatus::kPass));
  const auto report = aggregate_report(agents);
  ASSERT_EQ(report.rows.size(), 2U);
  const auto& m = report.rows[1];
  EXPECT_EQ(m.group, "m");
  EXPECT_DOUBLE_EQ(*m.unbiased.proportion(), 0.875);
  EXPECT_EQ(m.unbiased.not_evaluated, 2U);
  EXPECT_DOUBLE_EQ(*report.rows[0].autocorr.proportion(), 1.0);
  EXPECT_TRUE(aggregate_report({}).rows.empty());
  for (const auto& r : report.rows) {
    for (const auto* c : {&r.unbiased, &r.autocorr, &r.orthogonal}) {
      if (auto p = c->proportion()) {
        EXPECT_GE(*p, 0.0);
        EXPECT_LE(*p, 1.0);
      }
    }
  }
}

TEST(Analysis, SummaryAveragesAcrossHorizons) {
  std::vector<AgentRationality> agents{agent_result("m", 0, TestStatus::kPass), agent_result("m", 0, TestStatus::kReject),
                                       agent_result("m", 2, TestStatus::kPass), agent_result("m", 2, TestStatus::kPass)};
  agents[0].mean_error = 1.0;
  agents[1].mean_error = 2.0;
  agents[2].mean_error = 9.0;
  const auto report = aggregate_report(agents);
  ASSERT_EQ(report.summary.size(), 1U);
  EXPECT_DOUBLE_EQ(*report.summary[0].unbiased, 0.75);
  EXPECT_DOUBLE_EQ(*report.summary[0].mean_short_horizon_error, 1.5);
}

TEST(Analysis, PvVariance) {
  SessionConfig c;
  c.practice_rounds = 0;
  c.main_rounds = 5;
  c.n_agents = 6;
  const auto same = pv_variance(run_session(c, build_roster(parse_roster("6xfundamentalist"), c)));
  for (double v : same.per_round) EXPECT_EQ(v, 0.0);

  c.rng_seed = 9;
  const auto noisy = pv_variance(run_session(c, build_roster(parse_roster("6xnoise"), c)));
  EXPECT_GT(noisy.round_mean, 0.0);
  EXPECT_EQ(noisy.per_round.size(), 5U);
  EXPECT_EQ(stats::population_variance({100, 110}), 25.0);
}

TEST(Analysis, ClassifyMarket) {
  EXPECT_EQ(classify_market(series({14, 15, 14, 13, 14})).label, 'R');
  EXPECT_EQ(classify_market(series({15, 17, 19, 22, 18, 15})).label, 'H');
  EXPECT_EQ(classify_market(series({12, 10, 8, 8, 9, 10})).label, 'E');
  EXPECT_EQ(classify_market(series({15, 17, 19, 22, 22, 22})).label, 'E');
}

TEST(Analysis, ReferenceCsv) {
  const auto ref = parse_reference_csv("round,price\n1,14.5\r\n2,15\n\n3,16.25\n");
  ASSERT_EQ(ref.size(), 3U);
  EXPECT_EQ(ref.at(3), 16.25);
  EXPECT_NEAR(*pcc_against(series({10, 11, 12}), ref), 1.75 / std::sqrt(3.25), 1e-12);
  EXPECT_THROW(parse_reference_csv("round,price\nx,1\n"), std::invalid_argument);
}

TEST(Calibration, UnbiasednessPassRate) {
  int pass = 0;
  int pass_biased = 0;
  for (std::uint64_t a = 0; a < 200; ++a) {
    pass += test_unbiasedness(normals(1000 + a, 30)).status == TestStatus::kPass;
    pass_biased += test_unbiasedness(normals(5000 + a, 30, 1.0, 1.0)).status == TestStatus::kPass;
  }
  EXPECT_GE(pass / 200.0, 0.90);
  EXPECT_LE(pass / 200.0, 0.99);
  EXPECT_LE(pass_biased / 200.0, 0.05);
}

TEST(Calibration, Ar1ErrorsRejected) {
  int rejected = 0;
  for (std::uint64_t a = 0; a < 200; ++a) {
    const auto eps = normals(9000 + a, 30);
    std::vector<double> e{eps[0]};
    for (std::size_t i = 1; i < eps.size(); ++i) e.push_back(0.8 * e.back() + eps[i]);
    rejected += test_zero_autocorr(e).status == TestStatus::kReject;
  }
  EXPECT_GE(rejected / 200.0, 0.95);
}

}  // namespace
}  // namespace bubblelab
