#include <gtest/gtest.h>

#include <memory>
#include <numeric>

#include "bubblelab/scripted.hpp"
#include "bubblelab/session.hpp"

namespace bubblelab {
namespace {

Decimal D(const char* s) { return Decimal::parse(s); }

std::vector<std::unique_ptr<Agent>> mixed_roster(int n, std::uint64_t seed) {
  std::vector<std::unique_ptr<Agent>> agents;
  for (int i = 0; i < n; ++i) {
    switch (i % 3) {
      case 0: agents.push_back(std::make_unique<FundamentalistAgent>()); break;
      case 1: agents.push_back(std::make_unique<MomentumAgent>(MomentumAgent::Params{2, 0.6, 1, 0.5, 3, 1.5})); break;
      default: agents.push_back(std::make_unique<NoiseAgent>(seed * 100 + static_cast<std::uint64_t>(i))); break;
    }
  }
  return agents;
}

std::vector<std::unique_ptr<Agent>> fundamentalists(int n) {
  std::vector<std::unique_ptr<Agent>> agents;
  for (int i = 0; i < n; ++i) agents.push_back(std::make_unique<FundamentalistAgent>());
  return agents;
}

/// Agent that replays a fixed script of actions, one per call.
class ScriptAgent final : public Agent {
 public:
  using Seen = std::shared_ptr<std::vector<AgentObservation>>;
  explicit ScriptAgent(std::vector<AgentAction> script, Seen seen = std::make_shared<std::vector<AgentObservation>>())
      : seen(std::move(seen)), script_(std::move(script)) {}
  std::string kind() const override { return "script"; }
  AgentAction act(const AgentObservation& obs) override {
    seen->push_back(obs);
    if (calls_ < script_.size()) return script_[calls_++];
    return {};
  }
  LotteryChoice choose_lottery(const LotteryPair&, const AgentObservation&) override { return LotteryChoice::kLeft; }
  Seen seen;

 private:
  std::vector<AgentAction> script_;
  std::size_t calls_ = 0;
};

class ThrowingAgent final : public Agent {
 public:
  std::string kind() const override { return "throwing"; }
  AgentAction act(const AgentObservation&) override { throw std::runtime_error("boom"); }
};

TEST(Session, FundamentalistsConserveSharesAndProduceAllRecords) {
  SessionConfig c;
  c.rng_seed = 7;
  const auto log = run_session(c, fundamentalists(20));
  ASSERT_EQ(log.records.size(), 33U);
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    EXPECT_EQ(r.phase, i < 3 ? Phase::kPractice : Phase::kMain);
    EXPECT_EQ(r.round, static_cast<int>(i < 3 ? i + 1 : i - 2));
    Quantity shares = 0;
    for (const auto& a : r.agents) shares += a.shares_after;
    EXPECT_EQ(shares, 80);
  }
  EXPECT_EQ(log.final.size(), 20U);
}

TEST(Session, ZeroMainRoundsRedeemsImmediately) {
  SessionConfig c;
  c.main_rounds = 0;
  c.practice_rounds = 0;
  c.n_agents = 3;
  const auto log = run_session(c, mixed_roster(3, 1));
  EXPECT_TRUE(log.records.empty());
  for (const auto& f : log.final) EXPECT_EQ(f.final_value, D("156"));
}

TEST(Session, AccountingIdentityHoldsEveryRound) {
  SessionConfig c;
  c.rng_seed = 11;
  c.shock = ShockConfig{15, ShockFactor::kHalve};
  const auto log = run_session(c, mixed_roster(20, 11));
  Quantity volume = 0;
  for (const auto& r : log.records) {
    Decimal neutral;
    Quantity shares = 0;
    for (const auto& a : r.agents) {
      Decimal buys;
      Decimal sells;
      for (const auto& f : a.fills) {
        (f.side == Side::kBuy ? buys : sells) += Decimal::from_int(f.quantity * f.price);
      }
      EXPECT_EQ(a.cash_after, a.cash_before - buys + sells + a.interest_earned + a.dividend_earned);
      EXPECT_EQ(a.interest_earned, (a.cash_before + a.trade_cash) * c.interest_rate);
      EXPECT_EQ(a.dividend_earned, r.dividend_draw * a.shares_after);
      EXPECT_GE(a.cash_after, Decimal{});
      EXPECT_GE(a.shares_after, 0);
      neutral += a.trade_cash;
      shares += a.shares_after;
    }
    EXPECT_EQ(neutral, Decimal{});
    EXPECT_EQ(shares, 80);
    volume += r.clearing.volume;
  }
  EXPECT_GT(volume, 0);
}

TEST(Session, DividendDrawSharedAndParamsFollowShock) {
  SessionConfig c;
  c.rng_seed = 3;
  c.shock = ShockConfig{15, ShockFactor::kDouble};
  const auto log = run_session(c, fundamentalists(20));
  const auto main = log.main_records();
  int high = 0;
  for (const auto* r : main) {
    const auto& dv = r->params.dividend_values;
    EXPECT_TRUE(r->dividend_draw == dv.first || r->dividend_draw == dv.second);
    high += r->dividend_draw == dv.second ? 1 : 0;
    EXPECT_EQ(r->news.has_value(), r->round == 15);
    EXPECT_NEAR(r->fundamental_value, r->round < 15 ? 14.0 : 28.0, 1e-9);
  }
  EXPECT_GT(high, 5);
  EXPECT_LT(high, 25);
  for (const auto& f : log.final) {
    EXPECT_EQ(f.redemption_cash, D("28") * f.shares_redeemed);
  }
}

TEST(Session, NewsReachesAgentsOnceBeforeShockRound) {
  SessionConfig c;
  c.n_agents = 1;
  c.practice_rounds = 0;
  c.main_rounds = 16;
  c.shock = ShockConfig{15, ShockFactor::kDouble};
  auto agent = std::make_unique<ScriptAgent>(std::vector<AgentAction>{});
  auto seen = agent->seen;
  std::vector<std::unique_ptr<Agent>> roster;
  roster.push_back(std::move(agent));
  run_session(c, std::move(roster));
  ASSERT_EQ((*seen).size(), 16U);
  for (const auto& obs : (*seen)) {
    EXPECT_EQ(obs.news.has_value(), obs.round == 15);
    EXPECT_EQ(obs.history.size(), static_cast<std::size_t>(obs.round - 1));
    EXPECT_EQ(obs.rounds_remaining, 16 - obs.round + 1);
  }
}

TEST(Session, ForecastRewardsScoreMaturedForecastsOnly) {
  SessionConfig c;
  c.n_agents = 1;
  c.practice_rounds = 0;
  c.main_rounds = 4;
  AgentAction a;
  a.forecasts = {{0, 14}, {2, 16}, {5, 14}, {10, 14}};
  auto roster = std::vector<std::unique_ptr<Agent>>{};
  roster.push_back(std::make_unique<ScriptAgent>(std::vector<AgentAction>(4, a)));
  const auto log = run_session(c, std::move(roster));
  // A lone agent never trades so the price stays at 14: every h=0 forecast
  // pays in rounds 1..4, h=2 forecasts of 16 (|14-16| <= 2.5) mature in rounds 3 and 4.
  EXPECT_EQ(log.final[0].forecast_reward_cash, D("30"));
  EXPECT_EQ(log.records[0].agents[0].forecast_reward_earned, D("5"));
  EXPECT_EQ(log.records[2].agents[0].forecast_reward_earned, D("10"));
  // Rewards stay out of tradable cash until the end.
  EXPECT_EQ(log.final[0].final_value, log.final[0].cash_before_redemption + D("56") + D("30"));
}

TEST(Session, ForecastsClampedAndCompleted) {
  SessionConfig c;
  c.n_agents = 1;
  c.practice_rounds = 0;
  c.main_rounds = 1;
  AgentAction a;
  a.forecasts = {{0, 500}};
  auto roster = std::vector<std::unique_ptr<Agent>>{};
  roster.push_back(std::make_unique<ScriptAgent>(std::vector<AgentAction>{a}));
  const auto log = run_session(c, std::move(roster));
  const auto& f = log.records[0].agents[0].forecasts;
  EXPECT_EQ(f.at(0), 28);
  EXPECT_EQ(f.at(2), 14);
  EXPECT_EQ(f.size(), 4U);
}

TEST(Session, AgentFailureFallsBackWithIncident) {
  SessionConfig c;
  c.n_agents = 2;
  c.practice_rounds = 1;
  c.main_rounds = 2;
  std::vector<std::unique_ptr<Agent>> roster;
  roster.push_back(std::make_unique<ThrowingAgent>());
  roster.push_back(std::make_unique<FundamentalistAgent>());
  const auto log = run_session(c, std::move(roster));
  ASSERT_EQ(log.records.size(), 3U);
  for (const auto& r : log.records) {
    ASSERT_TRUE(r.agents[0].incident.has_value());
    EXPECT_NE(r.agents[0].incident->find("boom"), std::string::npos);
    EXPECT_TRUE(r.agents[0].submitted.empty());
  }
}

TEST(Session, PracticeStateResetsButMemorySurvives) {
  SessionConfig c;
  c.n_agents = 2;
  c.practice_rounds = 2;
  c.main_rounds = 1;
  AgentAction buy;
  buy.orders = {Order{{}, Side::kBuy, 1, 15}};
  buy.plans = "practice plan";
  AgentAction sell;
  sell.orders = {Order{{}, Side::kSell, 1, 13}};
  auto a0 = std::make_unique<ScriptAgent>(std::vector<AgentAction>{buy, buy, AgentAction{}});
  auto a1 = std::make_unique<ScriptAgent>(std::vector<AgentAction>{sell, sell, AgentAction{}});
  auto seen = a0->seen;
  std::vector<std::unique_ptr<Agent>> roster;
  roster.push_back(std::move(a0));
  roster.push_back(std::move(a1));
  const auto log = run_session(c, std::move(roster));
  ASSERT_EQ(log.records.size(), 3U);
  EXPECT_EQ(log.records[1].agents[0].shares_after, 6);
  const auto& main_obs = seen->back();
  EXPECT_EQ(main_obs.phase, Phase::kMain);
  EXPECT_EQ(main_obs.portfolio.shares, 4);
  EXPECT_EQ(main_obs.portfolio.cash, D("100"));
  EXPECT_EQ(main_obs.last_price, 14);
  EXPECT_TRUE(main_obs.history.empty());
  EXPECT_EQ(main_obs.memory.plans, "practice plan");
  EXPECT_EQ(log.records[2].agents[0].plans, "practice plan");
}

TEST(Session, LotteryElicitationDoesNotMoveMarket) {
  SessionConfig c;
  c.rng_seed = 21;
  auto base = run_session(c, mixed_roster(20, 21));
  c.risk_elicitation = RiskElicitationConfig{};
  auto with = run_session(c, mixed_roster(20, 21));
  ASSERT_EQ(base.records.size(), with.records.size());
  int presented = 0;
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    EXPECT_EQ(base.records[i].clearing, with.records[i].clearing);
    if (with.records[i].agents[0].lottery) ++presented;
  }
  EXPECT_EQ(presented, 10);
  for (std::size_t i = 0; i < with.final.size(); ++i) {
    EXPECT_EQ(base.final[i].final_value, with.final[i].final_value);
    ASSERT_TRUE(with.final[i].lottery_payout.has_value());
    EXPECT_LE(*with.final[i].lottery_payout, D("0.385"));
  }
}

TEST(Session, DeterministicAndSerialisationRoundTrips) {
  SessionConfig c;
  c.rng_seed = 5;
  c.shock = ShockConfig{15, ShockFactor::kDouble};
  c.risk_elicitation = RiskElicitationConfig{};
  const auto a = serialize(run_session(c, mixed_roster(20, 5)));
  const auto b = serialize(run_session(c, mixed_roster(20, 5)));
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize(deserialize(a)), a);
  EngineOptions parallel;
  parallel.parallel_agents = true;
  EXPECT_EQ(serialize(run_session(c, mixed_roster(20, 5), parallel)), a);
}

TEST(Session, RosterSizeMismatchIsConfigError) {
  SessionConfig c;
  EXPECT_THROW(run_session(c, fundamentalists(3)), ConfigError);
}

TEST(Session, ExperiencedSessionSeesPriorHistory) {
  SessionConfig c;
  c.n_agents = 1;
  c.practice_rounds = 0;
  c.main_rounds = 3;
  auto roster = std::vector<std::unique_ptr<Agent>>{};
  roster.push_back(std::make_unique<FundamentalistAgent>());
  const auto first = run_session(c, std::move(roster));
  EngineOptions opts;
  opts.prior = experience_from(first);
  auto agent = std::make_unique<ScriptAgent>(std::vector<AgentAction>{});
  auto seen = agent->seen;
  std::vector<std::unique_ptr<Agent>> second;
  second.push_back(std::move(agent));
  run_session(c, std::move(second), opts);
  ASSERT_FALSE((*seen).empty());
  EXPECT_EQ((*seen)[0].prior_session_history.size(), 3U);
  EXPECT_EQ((*seen)[0].memory.plans, first.final[0].plans);
}

}  // namespace
}  // namespace bubblelab
