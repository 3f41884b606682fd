#pragma once

// Session state machine: practice rounds, main rounds, settlement, accrual,
// forecast scoring, risk elicitation and final redemption.

#include <exception>
#include <future>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bubblelab/agent.hpp"
#include "bubblelab/config.hpp"
#include "bubblelab/economy.hpp"
#include "bubblelab/lottery.hpp"
#include "bubblelab/market.hpp"
#include "bubblelab/records.hpp"
#include "bubblelab/rng.hpp"

namespace bubblelab {

/// Market history and memory carried into an experienced session.
struct PriorExperience {
  std::vector<std::vector<HistoryEntry>> history;  // per agent
  std::vector<std::string> plans;
  std::vector<std::string> insights;
};

inline PriorExperience experience_from(const SessionLog& log) {
  PriorExperience prior;
  const auto main = log.main_records();
  for (std::size_t i = 0; i < log.final.size(); ++i) {
    prior.history.push_back(history_for(main, i));
    prior.plans.push_back(log.final[i].plans);
    prior.insights.push_back(log.final[i].insights);
  }
  return prior;
}

struct EngineOptions {
  /// Collect agent actions concurrently within a round.
  bool parallel_agents = false;
  std::optional<PriorExperience> prior;
  Provenance provenance;
};

class SessionEngine {
 public:
  SessionEngine(SessionConfig config, std::vector<std::unique_ptr<Agent>> agents, EngineOptions options = {})
      : config_(std::move(config)), agents_(std::move(agents)), options_(std::move(options)) {
    config_.validate();
    if (agents_.size() != static_cast<std::size_t>(config_.n_agents)) {
      throw ConfigError("roster has " + std::to_string(agents_.size()) + " agents but n_agents is " +
                        std::to_string(config_.n_agents));
    }
    if (options_.prior && options_.prior->history.size() != agents_.size()) {
      throw ConfigError("prior session has a different number of agents");
    }
  }

  SessionLog run() {
    SessionLog log;
    log.config = config_;
    log.provenance = options_.provenance;
    log.provenance.seed = config_.rng_seed;
    if (log.provenance.roster.empty()) {
      for (const auto& a : agents_) log.provenance.roster.push_back(a->kind());
    }

    memory_.assign(agents_.size(), MemoryStore{});
    if (options_.prior) {
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        memory_[i].plans = options_.prior->plans[i];
        memory_[i].insights = options_.prior->insights[i];
      }
    }

    if (config_.practice_rounds > 0) {
      auto practice = run_phase(Phase::kPractice, config_.practice_rounds, log.records);
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        memory_[i].practice_reflection =
            agents_[i]->reflect(ReflectionKind::kPractice, closing_observation(Phase::kPractice, practice, i));
      }
    }

    auto main = run_phase(Phase::kMain, config_.main_rounds, log.records);

    const EconomyParams terminal = config_.main_rounds > 0 ? apply_shock(config_, config_.main_rounds) : base_params(config_);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      memory_[i].final_reflection = agents_[i]->reflect(ReflectionKind::kFinal, closing_observation(Phase::kMain, main, i));
      AgentFinal f;
      f.agent = AgentId{static_cast<std::uint32_t>(i)};
      f.kind = agents_[i]->kind();
      const auto& pf = main.portfolios[i];
      f.cash_before_redemption = pf.cash;
      f.shares_redeemed = pf.shares;
      f.redemption_cash = terminal.redemption_value * pf.shares;
      f.forecast_reward_cash = main.rewards[i];
      f.final_value = redeem(pf, terminal.redemption_value).cash + main.rewards[i];
      f.lottery_payout = lottery_payout(main.lotteries[i], i);
      f.plans = memory_[i].plans;
      f.insights = memory_[i].insights;
      f.practice_reflection = memory_[i].practice_reflection;
      f.final_reflection = memory_[i].final_reflection;
      log.final.push_back(std::move(f));
    }
    return log;
  }

 private:
  static constexpr std::uint64_t kDividendStream = 1;
  static constexpr std::uint64_t kLotteryStream = 2;

  struct PhaseState {
    Phase phase = Phase::kMain;
    int total_rounds = 0;
    Price last_price = 0;
    std::vector<PortfolioState> portfolios;
    std::vector<std::vector<HistoryEntry>> history;
    std::vector<std::vector<ForecastSet>> forecasts_by_round;  // [agent][round-1]
    std::vector<Decimal> rewards;
    std::vector<std::vector<LotteryRecord>> lotteries;
    EconomyParams params;
    double fundamental_value = 0.0;
  };

  AgentObservation observe(const PhaseState& s, std::size_t i, int round, PriceBand band, Price bound,
                           const std::optional<std::string>& news) const {
    AgentObservation obs;
    obs.round = round;
    obs.total_rounds = s.total_rounds;
    obs.rounds_remaining = s.total_rounds - round + 1;
    obs.phase = s.phase;
    obs.history = s.history[i];
    if (s.phase == Phase::kMain && options_.prior) obs.prior_session_history = options_.prior->history[i];
    obs.portfolio = s.portfolios[i];
    obs.last_price = s.last_price;
    obs.reference_price = config_.initial_reference_price;
    obs.band = band;
    obs.forecast_upper_bound = bound;
    obs.horizons = config_.forecast_horizons;
    obs.max_orders = config_.max_orders_per_round;
    obs.memory = memory_[i];
    obs.news = news;
    obs.params = s.params;
    obs.fundamental_value = s.fundamental_value;
    return obs;
  }

  AgentObservation closing_observation(Phase phase, const PhaseState& s, std::size_t i) const {
    AgentObservation obs = observe(s, i, s.total_rounds + 1, band_around(s.last_price, config_.order_band_halfwidth),
                                   forecast_upper_bound(config_, s.last_price, s.fundamental_value), std::nullopt);
    obs.phase = phase;
    obs.rounds_remaining = 0;
    return obs;
  }

  AgentAction safe_act(std::size_t i, const AgentObservation& obs) {
    try {
      return agents_[i]->act(obs);
    } catch (const FatalSessionError&) {
      throw;
    } catch (const std::exception& e) {
      return fallback_action(obs, std::string("agent error: ") + e.what());
    }
  }

  std::vector<AgentAction> collect(const std::vector<AgentObservation>& obs) {
    std::vector<AgentAction> actions(agents_.size());
    if (!options_.parallel_agents) {
      for (std::size_t i = 0; i < agents_.size(); ++i) actions[i] = safe_act(i, obs[i]);
      return actions;
    }
    std::vector<std::future<AgentAction>> pending;
    pending.reserve(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      pending.push_back(std::async(std::launch::async, [this, i, &obs] { return safe_act(i, obs[i]); }));
    }
    std::exception_ptr fatal;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      try {
        actions[i] = pending[i].get();
      } catch (...) {
        if (!fatal) fatal = std::current_exception();
      }
    }
    if (fatal) std::rethrow_exception(fatal);
    return actions;
  }

  /// Completes missing horizons with the previous price and clamps to the bound.
  ForecastSet sanitize_forecasts(const ForecastSet& in, Price last_price, Price bound) const {
    ForecastSet out;
    for (int h : config_.forecast_horizons) {
      auto it = in.find(h);
      out[h] = std::clamp<Price>(it != in.end() ? it->second : last_price, 0, bound);
    }
    return out;
  }

  PhaseState run_phase(Phase phase, int rounds, std::vector<RoundRecord>& records) {
    const std::size_t n = agents_.size();
    PhaseState s;
    s.phase = phase;
    s.total_rounds = rounds;
    s.last_price = config_.initial_reference_price;
    s.portfolios.assign(n, PortfolioState{config_.initial_cash, config_.initial_shares});
    s.history.assign(n, {});
    s.forecasts_by_round.assign(n, {});
    s.rewards.assign(n, Decimal{});
    s.lotteries.assign(n, {});
    s.params = base_params(config_);
    s.fundamental_value = fundamental_value(s.params, 1, std::max(rounds, 1));
    const auto menu = holt_laury_menu();

    for (int round = 1; round <= rounds; ++round) {
      s.params = phase == Phase::kMain ? apply_shock(config_, round) : base_params(config_);
      s.fundamental_value = fundamental_value(s.params, round, rounds);
      const PriceBand band = band_around(s.last_price, config_.order_band_halfwidth);
      const Price bound = forecast_upper_bound(config_, s.last_price, s.fundamental_value);
      std::optional<std::string> news;
      if (phase == Phase::kMain && config_.shock && round == config_.shock->round) {
        news = news_alert(*config_.shock, s.params);
      }

      std::vector<AgentObservation> obs;
      obs.reserve(n);
      for (std::size_t i = 0; i < n; ++i) obs.push_back(observe(s, i, round, band, bound, news));
      auto actions = collect(obs);

      RoundRecord rec;
      rec.round = round;
      rec.phase = phase;
      rec.band = band;
      rec.forecast_upper_bound = bound;
      rec.params = s.params;
      rec.fundamental_value = s.fundamental_value;
      rec.news = news;
      rec.agents.resize(n);

      std::vector<Order> book_orders;
      for (std::size_t i = 0; i < n; ++i) {
        const AgentId id{static_cast<std::uint32_t>(i)};
        auto& ar = rec.agents[i];
        ar.agent = id;
        for (auto o : actions[i].orders) {
          o.agent = id;
          ar.submitted.push_back(o);
        }
        ar.verdict = validate_orders(ar.submitted, s.portfolios[i].shares, s.portfolios[i].cash, band,
                                     config_.max_orders_per_round);
        book_orders.insert(book_orders.end(), ar.verdict.accepted.begin(), ar.verdict.accepted.end());
        ar.forecasts = sanitize_forecasts(actions[i].forecasts, s.last_price, bound);
        ar.incident = actions[i].incident;
        ar.cash_before = s.portfolios[i].cash;
        ar.shares_before = s.portfolios[i].shares;
      }

      rec.clearing = clear(OrderBook::from_orders(book_orders, s.last_price, round));

      for (const auto& f : rec.clearing.fills) {
        auto& ar = rec.agents[f.agent.value];
        auto& pf = s.portfolios[f.agent.value];
        const Decimal amount = Decimal::from_int(f.quantity * f.price);
        if (f.side == Side::kBuy) {
          pf.cash -= amount;
          pf.shares += f.quantity;
          ar.trade_cash -= amount;
        } else {
          pf.cash += amount;
          pf.shares -= f.quantity;
          ar.trade_cash += amount;
        }
        ar.fills.push_back(f);
      }

      Rng dividend_rng(config_.rng_seed, {kDividendStream, static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(round)});
      rec.dividend_draw = dividend_rng.coin() ? s.params.dividend_values.second : s.params.dividend_values.first;

      const Decimal realized = Decimal::from_int(rec.clearing.price);
      for (std::size_t i = 0; i < n; ++i) {
        auto& ar = rec.agents[i];
        auto& pf = s.portfolios[i];
        ar.interest_earned = interest_on(pf.cash, s.params.interest_rate);
        ar.dividend_earned = rec.dividend_draw * pf.shares;
        pf = accrue(pf, rec.dividend_draw, s.params.interest_rate);
        ar.cash_after = pf.cash;
        ar.shares_after = pf.shares;

        s.forecasts_by_round[i].push_back(ar.forecasts);
        if (phase == Phase::kMain) {
          for (int h : config_.forecast_horizons) {
            const int made = round - h;
            if (made < 1) continue;
            const Price f = s.forecasts_by_round[i][static_cast<std::size_t>(made - 1)].at(h);
            if (forecast_rewarded(realized, Decimal::from_int(f), config_.forecast_tolerance)) {
              ar.forecast_reward_earned += config_.forecast_reward;
            }
          }
          s.rewards[i] += ar.forecast_reward_earned;
        }

        auto& mem = memory_[i];
        if (actions[i].plans) mem.plans = *actions[i].plans;
        if (actions[i].insights) mem.insights = *actions[i].insights;
        ar.plans = mem.plans;
        ar.insights = mem.insights;
        ar.observations_and_thoughts = actions[i].observations_and_thoughts;
      }

      s.last_price = rec.clearing.price;
      for (std::size_t i = 0; i < n; ++i) {
        HistoryEntry h;
        h.round = round;
        h.price = rec.clearing.price;
        h.volume = rec.clearing.volume;
        h.shares = s.portfolios[i].shares;
        h.cash = s.portfolios[i].cash;
        h.stock_value = Decimal::from_int(rec.clearing.price * s.portfolios[i].shares);
        h.dividend_earned = rec.agents[i].dividend_earned;
        h.interest_earned = rec.agents[i].interest_earned;
        h.submitted = rec.agents[i].submitted;
        h.fills = rec.agents[i].fills;
        h.forecasts = rec.agents[i].forecasts;
        s.history[i].push_back(std::move(h));
      }

      // Lottery choices are collected after settlement and never touch market state.
      if (phase == Phase::kMain && config_.risk_elicitation) {
        const int row = round - config_.risk_elicitation->start_round;
        if (row >= 0 && row < static_cast<int>(menu.size())) {
          for (std::size_t i = 0; i < n; ++i) {
            const auto post = observe(s, i, round, band, bound, std::nullopt);
            LotteryChoice choice = LotteryChoice::kAbstain;
            try {
              choice = agents_[i]->choose_lottery(menu[static_cast<std::size_t>(row)], post);
            } catch (const FatalSessionError&) {
              throw;
            } catch (const std::exception& e) {
              rec.agents[i].incident = std::string("lottery error: ") + e.what();
            }
            const LotteryRecord lr{row, choice};
            rec.agents[i].lottery = lr;
            s.lotteries[i].push_back(lr);
          }
        }
      }

      records.push_back(std::move(rec));
    }
    return s;
  }

  /// One presented row is drawn per agent and the chosen lottery played; the
  /// payout is reported outside tradable cash.
  std::optional<Decimal> lottery_payout(const std::vector<LotteryRecord>& choices, std::size_t agent) const {
    if (!config_.risk_elicitation || choices.empty()) return std::nullopt;
    Rng rng(config_.rng_seed, {kLotteryStream, static_cast<std::uint64_t>(agent)});
    const auto& pick = choices[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(choices.size()) - 1))];
    if (pick.choice == LotteryChoice::kAbstain) return Decimal{};
    const auto menu = holt_laury_menu();
    const auto& pair = menu[static_cast<std::size_t>(pick.menu_row)];
    const Decimal outcome = play(pick.choice == LotteryChoice::kLeft ? pair.left : pair.right, rng.uniform());
    return outcome / config_.risk_elicitation->payout_divisor;
  }

  SessionConfig config_;
  std::vector<std::unique_ptr<Agent>> agents_;
  EngineOptions options_;
  std::vector<MemoryStore> memory_;
};

inline SessionLog run_session(const SessionConfig& config, std::vector<std::unique_ptr<Agent>> agents,
                              EngineOptions options = {}) {
  return SessionEngine(config, std::move(agents), std::move(options)).run();
}

}  // namespace bubblelab
