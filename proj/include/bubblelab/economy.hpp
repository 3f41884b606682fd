#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "bubblelab/config.hpp"
#include "bubblelab/decimal.hpp"
#include "bubblelab/market.hpp"

namespace bubblelab {

struct PortfolioState {
  Decimal cash;
  Quantity shares = 0;
  friend bool operator==(const PortfolioState&, const PortfolioState&) = default;
};

/// Dividend schedule and terminal value in force for a given round.
struct EconomyParams {
  std::pair<Decimal, Decimal> dividend_values;
  Decimal redemption_value;
  Decimal interest_rate;
  friend bool operator==(const EconomyParams&, const EconomyParams&) = default;
};

inline EconomyParams base_params(const SessionConfig& c) {
  return EconomyParams{c.dividend_values, c.redemption_value, c.interest_rate};
}

/// End-of-round cash update: interest on the post-trade balance, then the
/// dividend on every share held. Dividends earn no interest in the round they
/// are paid.
inline PortfolioState accrue(PortfolioState p, Decimal dividend_draw, Decimal rate) {
  p.cash = p.cash + p.cash * rate + dividend_draw * p.shares;
  return p;
}

inline Decimal interest_on(Decimal cash, Decimal rate) { return cash * rate; }

/// Expected discounted value of the remaining dividends plus the discounted
/// redemption value, by direct summation over rounds t+1..T.
inline double fundamental_value(const EconomyParams& params, int round, int final_round) {
  const double r = params.interest_rate.to_double();
  const double expected_dividend = 0.5 * (params.dividend_values.first.to_double() + params.dividend_values.second.to_double());
  const int remaining = std::max(0, final_round - round);
  double value = params.redemption_value.to_double() / std::pow(1.0 + r, remaining);
  double discount = 1.0;
  for (int k = 1; k <= remaining; ++k) {
    discount /= 1.0 + r;
    value += expected_dividend * discount;
  }
  return value;
}

/// Closed form E[D]/r, valid when V_T == E[D]/r.
inline double perpetuity_value(const EconomyParams& params) {
  const double expected_dividend = 0.5 * (params.dividend_values.first.to_double() + params.dividend_values.second.to_double());
  return expected_dividend / params.interest_rate.to_double();
}

inline bool shock_active(const SessionConfig& c, int round) { return c.shock && round >= c.shock->round; }

/// Parameters in force in main round `round`. From the shock round on,
/// dividends and redemption value are scaled by the shock factor.
inline EconomyParams apply_shock(const SessionConfig& c, int round) {
  EconomyParams p = base_params(c);
  if (!shock_active(c, round)) return p;
  auto scale = [&](Decimal d) {
    return c.shock->factor == ShockFactor::kDouble ? d * Decimal::from_int(2) : d * Decimal::parse("0.5");
  };
  p.dividend_values = {scale(p.dividend_values.first), scale(p.dividend_values.second)};
  p.redemption_value = scale(p.redemption_value);
  return p;
}

/// News text shown to every agent before the shock round's order submission.
inline std::string news_alert(const ShockConfig& shock, const EconomyParams& shocked) {
  const std::string verb = shock.factor == ShockFactor::kDouble ? "doubled" : "halved";
  auto one_digit = [](Decimal d) {
    std::string s = d.to_display();
    if (s.find('.') == std::string::npos) s += ".0";
    return s;
  };
  return "[News Alert]: The company has recently announced it will now " + verb + " all dividends to " +
         one_digit(shocked.dividend_values.first) + "/" + one_digit(shocked.dividend_values.second) +
         ". The asset redemption value has now " + verb + " to $" + one_digit(shocked.redemption_value) + ".";
}

/// Converts every share to cash at the redemption value.
inline PortfolioState redeem(PortfolioState p, Decimal redemption_value) {
  p.cash = p.cash + redemption_value * p.shares;
  p.shares = 0;
  return p;
}

/// Highest admissible price forecast for a round.
inline Price forecast_upper_bound(const SessionConfig& c, Price previous_price, double fundamental) {
  if (c.forecast_upper_bound_rule == ForecastBoundRule::kFixed) return c.forecast_upper_bound_fixed;
  const double anchor = std::max(static_cast<double>(previous_price), fundamental);
  // Guard against FV landing a few ulps above an integer.
  return static_cast<Price>(std::ceil(2.0 * anchor - 1e-9));
}

/// Inclusive tolerance test for a matured forecast.
inline bool forecast_rewarded(Decimal realized, Decimal forecast, Decimal tolerance) {
  return abs(realized - forecast) <= tolerance;
}

}  // namespace bubblelab
