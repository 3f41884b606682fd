#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bubblelab/decimal.hpp"
#include "bubblelab/economy.hpp"
#include "bubblelab/lottery.hpp"
#include "bubblelab/market.hpp"

namespace bubblelab {

/// Errors that must stop a session instead of degrading to a fallback
/// action (a replay mismatch, for instance).
class FatalSessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { kPractice, kMain };

inline std::string_view to_string(Phase p) { return p == Phase::kPractice ? "PRACTICE" : "MAIN"; }

/// Horizon h -> forecast for round t+h.
using ForecastSet = std::map<int, Price>;

/// One past round as seen by one agent.
struct HistoryEntry {
  int round = 0;
  Price price = 0;
  Quantity volume = 0;
  Quantity shares = 0;
  Decimal cash;
  Decimal stock_value;
  Decimal dividend_earned;
  Decimal interest_earned;
  std::vector<Order> submitted;
  std::vector<Fill> fills;
  ForecastSet forecasts;
};

struct MemoryStore {
  std::string plans;
  std::string insights;
  std::string practice_reflection;
  std::string final_reflection;
};

struct AgentObservation {
  int round = 1;
  int rounds_remaining = 0;
  int total_rounds = 0;
  Phase phase = Phase::kMain;
  std::vector<HistoryEntry> history;
  /// Market data from an earlier session (experienced treatment).
  std::vector<HistoryEntry> prior_session_history;
  PortfolioState portfolio;
  Price last_price = 0;
  Price reference_price = 0;
  PriceBand band;
  Price forecast_upper_bound = 0;
  std::vector<int> horizons;
  std::size_t max_orders = 3;
  MemoryStore memory;
  std::optional<std::string> news;
  EconomyParams params;
  double fundamental_value = 0.0;

  [[nodiscard]] Decimal stock_value() const { return Decimal::from_int(last_price * portfolio.shares); }
};

struct AgentAction {
  std::vector<Order> orders;
  ForecastSet forecasts;
  /// nullopt leaves the stored text untouched.
  std::optional<std::string> plans;
  std::optional<std::string> insights;
  std::string observations_and_thoughts;
  /// Set when the action is a fallback or otherwise needs operator attention.
  std::optional<std::string> incident;
};

enum class ReflectionKind { kPractice, kFinal };

/// A market participant. Implementations must be deterministic given the
/// observation sequence, their own seed and (for model-backed agents) the
/// cassette. The engine never calls one instance concurrently with itself.
class Agent {
 public:
  virtual ~Agent() = default;

  /// Label used to group agents in reports ("fundamentalist", a model profile name, ...).
  [[nodiscard]] virtual std::string kind() const = 0;

  virtual AgentAction act(const AgentObservation& obs) = 0;

  virtual std::string reflect(ReflectionKind /*kind*/, const AgentObservation& /*obs*/) { return {}; }

  virtual LotteryChoice choose_lottery(const LotteryPair& /*pair*/, const AgentObservation& /*obs*/) {
    return LotteryChoice::kAbstain;
  }
};

inline Price clamp_forecast(double value, Price upper_bound) {
  const auto rounded = static_cast<Price>(std::llround(value));
  return std::clamp<Price>(rounded, 0, upper_bound);
}

/// No orders; every horizon forecasts the previous price.
inline AgentAction fallback_action(const AgentObservation& obs, std::string incident) {
  AgentAction a;
  for (int h : obs.horizons) a.forecasts[h] = std::clamp<Price>(obs.last_price, 0, obs.forecast_upper_bound);
  a.incident = std::move(incident);
  return a;
}

}  // namespace bubblelab
