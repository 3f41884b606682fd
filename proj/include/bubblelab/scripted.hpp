#pragma once

// Rule-based baseline traders.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "bubblelab/agent.hpp"
#include "bubblelab/rng.hpp"

namespace bubblelab {

namespace detail {

inline Price fv_price(const AgentObservation& obs) { return static_cast<Price>(std::llround(obs.fundamental_value)); }

inline Quantity affordable(Decimal cash, Price limit, Quantity wanted) {
  if (limit <= 0) return wanted;
  const Quantity max_q = cash.raw() / (limit * Decimal::kScale);
  return std::min(wanted, max_q);
}

}  // namespace detail

/// Buys below and sells above the fundamental value, one margin away from it.
class FundamentalistAgent final : public Agent {
 public:
  struct Params {
    Price margin = 1;
    Quantity lot = 1;
  };

  FundamentalistAgent() = default;
  explicit FundamentalistAgent(Params p) : params_(p) {}

  [[nodiscard]] std::string kind() const override { return "fundamentalist"; }

  AgentAction act(const AgentObservation& obs) override {
    AgentAction a;
    const double fv = obs.fundamental_value;
    const Price fv_int = detail::fv_price(obs);
    constexpr double kEps = 1e-9;
    if (static_cast<double>(obs.last_price) < fv - kEps) {
      const Price limit = std::min(obs.band.high, fv_int - params_.margin);
      const Quantity q = detail::affordable(obs.portfolio.cash, limit, params_.lot);
      if (q >= 1 && obs.band.contains(limit)) a.orders.push_back(Order{{}, Side::kBuy, q, limit});
    } else if (static_cast<double>(obs.last_price) > fv + kEps && obs.portfolio.shares > 0) {
      const Price limit = std::max(obs.band.low, fv_int + params_.margin);
      const Quantity q = std::min(params_.lot, obs.portfolio.shares);
      if (obs.band.contains(limit)) a.orders.push_back(Order{{}, Side::kSell, q, limit});
    }
    for (int h : obs.horizons) a.forecasts[h] = clamp_forecast(fv, obs.forecast_upper_bound);
    a.plans = "Buy below " + std::to_string(fv_int) + ", sell above " + std::to_string(fv_int) + ".";
    return a;
  }

  std::string reflect(ReflectionKind, const AgentObservation& obs) override {
    return "The asset is worth its fundamental value of " + std::to_string(detail::fv_price(obs)) +
           "; trade only when the price deviates from it.";
  }

  LotteryChoice choose_lottery(const LotteryPair& pair, const AgentObservation&) override {
    return pair.right.expected_value() > pair.left.expected_value() ? LotteryChoice::kRight : LotteryChoice::kLeft;
  }

 private:
  Params params_;
};

/// Trend follower: buys at the band ceiling after rising prices and sells at
/// the band floor after falling ones.
///
/// The optional parameters give the heterogeneity that lets a population of
/// these traders inflate and burst a bubble: `aggressiveness` caps the share of
/// wealth held in stock during an up-trend (above it the agent sells into the
/// rise at the extrapolated price), `opening_drift` is the trend assumed before
/// any price is observed, and the agent liquidates at the floor once the price
/// exceeds `fear_multiple` x FV or fewer than `exit_rounds` rounds remain.
class MomentumAgent final : public Agent {
 public:
  struct Params {
    int window = 3;
    double aggressiveness = 1.0;
    Quantity lot = 1;
    double opening_drift = 0.0;
    int exit_rounds = 0;
    double fear_multiple = std::numeric_limits<double>::infinity();
  };

  MomentumAgent() = default;
  explicit MomentumAgent(Params p) : params_(p) {}

  [[nodiscard]] std::string kind() const override { return "momentum"; }
  [[nodiscard]] const Params& params() const { return params_; }

  /// Mean price change over the last `window` rounds (fewer if not yet available).
  [[nodiscard]] double trend(const AgentObservation& obs) const {
    if (obs.history.empty()) return params_.opening_drift;
    std::vector<Price> prices{obs.reference_price};
    for (const auto& h : obs.history) prices.push_back(h.price);
    const std::size_t changes = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, params_.window)), prices.size() - 1);
    const auto n = prices.size();
    return static_cast<double>(prices[n - 1] - prices[n - 1 - changes]) / static_cast<double>(changes);
  }

  AgentAction act(const AgentObservation& obs) override {
    AgentAction a;
    const double t = trend(obs);
    const Price prev = obs.last_price;
    const auto& pf = obs.portfolio;
    constexpr double kEps = 1e-12;

    const bool overpriced = static_cast<double>(prev) > obs.params.redemption_value.to_double();
    const bool exiting = overpriced && (obs.rounds_remaining <= params_.exit_rounds ||
                                        static_cast<double>(prev) >= params_.fear_multiple * obs.fundamental_value);
    if (exiting) {
      if (pf.shares > 0) a.orders.push_back(Order{{}, Side::kSell, pf.shares, obs.band.low});
    } else if (t > kEps) {
      const Decimal wealth = pf.cash + obs.stock_value();
      const double weight = wealth.raw() > 0 ? obs.stock_value().to_double() / wealth.to_double() : 1.0;
      const Quantity q = detail::affordable(pf.cash, obs.band.high, params_.lot);
      if (weight < params_.aggressiveness && q >= 1) {
        a.orders.push_back(Order{{}, Side::kBuy, q, obs.band.high});
      } else if (pf.shares > 0) {
        const Price ask = std::min(obs.band.high, prev + static_cast<Price>(std::ceil(t)));
        a.orders.push_back(Order{{}, Side::kSell, std::min(params_.lot, pf.shares), ask});
      }
    } else if (t < -kEps && pf.shares > 0) {
      a.orders.push_back(Order{{}, Side::kSell, std::min(params_.lot, pf.shares), obs.band.low});
    }
    for (int h : obs.horizons) {
      a.forecasts[h] = clamp_forecast(static_cast<double>(prev) + t * (h + 1), obs.forecast_upper_bound);
    }
    return a;
  }

  std::string reflect(ReflectionKind, const AgentObservation&) override {
    return "Follow the trend: buy when prices rise, sell when they fall.";
  }

  LotteryChoice choose_lottery(const LotteryPair&, const AgentObservation&) override { return LotteryChoice::kRight; }

 private:
  Params params_;
};

/// Control baseline: a coin flip decides whether to trade one share at a
/// uniform in-band limit. Draws are keyed by (seed, phase, round) so the same
/// observation always yields the same action.
class NoiseAgent final : public Agent {
 public:
  explicit NoiseAgent(std::uint64_t seed) : seed_(seed) {}

  [[nodiscard]] std::string kind() const override { return "noise"; }

  AgentAction act(const AgentObservation& obs) override {
    AgentAction a;
    Rng rng(seed_, {kTradeStream, static_cast<std::uint64_t>(obs.phase), static_cast<std::uint64_t>(obs.round)});
    const bool submit = rng.coin();
    const Side side = rng.coin() ? Side::kBuy : Side::kSell;
    if (submit && !obs.band.empty()) {
      const Price limit = rng.uniform_int(obs.band.low, obs.band.high);
      const bool feasible = side == Side::kBuy ? obs.portfolio.cash >= Decimal::from_int(limit) : obs.portfolio.shares >= 1;
      if (feasible) a.orders.push_back(Order{{}, side, 1, limit});
    }
    for (int h : obs.horizons) a.forecasts[h] = std::clamp<Price>(obs.last_price, 0, obs.forecast_upper_bound);
    return a;
  }

  LotteryChoice choose_lottery(const LotteryPair&, const AgentObservation& obs) override {
    Rng rng(seed_, {kLotteryStream, static_cast<std::uint64_t>(obs.round)});
    return rng.coin() ? LotteryChoice::kLeft : LotteryChoice::kRight;
  }

 private:
  static constexpr std::uint64_t kTradeStream = 1;
  static constexpr std::uint64_t kLotteryStream = 2;
  std::uint64_t seed_;
};

}  // namespace bubblelab
