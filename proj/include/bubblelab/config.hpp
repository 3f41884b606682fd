#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/decimal.hpp"
#include "bubblelab/market.hpp"

namespace bubblelab {

/// Raised for invalid or inconsistent configuration; maps to the CLI's
/// configuration exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ShockFactor { kDouble, kHalve };

struct ShockConfig {
  int round = 15;
  ShockFactor factor = ShockFactor::kDouble;
};

enum class ForecastBoundRule { kTwiceMaxPrevFv, kFixed };

struct RiskElicitationConfig {
  /// First main round after which a lottery pair is presented; one pair per
  /// round thereafter until the schedule is exhausted.
  int start_round = 1;
  Decimal payout_divisor = Decimal::from_int(10);
};

struct SessionConfig {
  int main_rounds = 30;
  int practice_rounds = 3;
  int n_agents = 20;
  Quantity initial_shares = 4;
  Decimal initial_cash = Decimal::from_int(100);
  Decimal interest_rate = Decimal::parse("0.05");
  std::pair<Decimal, Decimal> dividend_values{Decimal::parse("0.4"), Decimal::parse("1.0")};
  Decimal redemption_value = Decimal::from_int(14);
  Price order_band_halfwidth = 3;
  std::vector<int> forecast_horizons{0, 2, 5, 10};
  Decimal forecast_tolerance = Decimal::parse("2.5");
  Decimal forecast_reward = Decimal::from_int(5);
  ForecastBoundRule forecast_upper_bound_rule = ForecastBoundRule::kTwiceMaxPrevFv;
  Price forecast_upper_bound_fixed = 100;
  std::optional<ShockConfig> shock;
  std::optional<RiskElicitationConfig> risk_elicitation;
  std::uint64_t rng_seed = 0;
  Price initial_reference_price = 14;
  std::size_t max_orders_per_round = 3;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid session config: " + what); };
    if (main_rounds < 0) fail("main_rounds must be >= 0");
    if (practice_rounds < 0) fail("practice_rounds must be >= 0");
    if (n_agents < 1) fail("n_agents must be >= 1");
    if (initial_shares < 0) fail("initial_shares must be >= 0");
    if (initial_cash < Decimal{}) fail("initial_cash must be >= 0");
    if (interest_rate <= Decimal{}) fail("interest_rate must be > 0");
    if (dividend_values.first <= Decimal{} || dividend_values.second <= Decimal{}) fail("dividend_values must be > 0");
    if (redemption_value <= Decimal{}) fail("redemption_value must be > 0");
    if (order_band_halfwidth < 0) fail("order_band_halfwidth must be >= 0");
    if (forecast_horizons.empty()) fail("forecast_horizons must not be empty");
    for (std::size_t i = 0; i < forecast_horizons.size(); ++i) {
      if (forecast_horizons[i] < 0) fail("forecast_horizons must be >= 0");
      if (i > 0 && forecast_horizons[i] <= forecast_horizons[i - 1]) fail("forecast_horizons must be strictly ascending");
    }
    if (forecast_tolerance < Decimal{}) fail("forecast_tolerance must be >= 0");
    if (forecast_reward < Decimal{}) fail("forecast_reward must be >= 0");
    if (initial_reference_price < 0) fail("initial_reference_price must be >= 0");
    if (max_orders_per_round < 1) fail("max_orders_per_round must be >= 1");
    if (shock && shock->round < 1) fail("shock.round must be >= 1");
    if (risk_elicitation && risk_elicitation->payout_divisor <= Decimal{}) fail("risk_elicitation.payout_divisor must be > 0");
  }
};

// ---- JSON ----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Decimal& d) { j = d.to_string(); }
inline void from_json(const nlohmann::json& j, Decimal& d) {
  if (j.is_string()) {
    d = Decimal::parse(j.get<std::string>());
  } else if (j.is_number_integer()) {
    d = Decimal::from_int(j.get<std::int64_t>());
  } else if (j.is_number()) {
    d = Decimal::from_double(j.get<double>());
  } else {
    throw ConfigError("expected a decimal, got " + j.dump());
  }
}

NLOHMANN_JSON_SERIALIZE_ENUM(ShockFactor, {{ShockFactor::kDouble, "DOUBLE"}, {ShockFactor::kHalve, "HALVE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ForecastBoundRule, {{ForecastBoundRule::kTwiceMaxPrevFv, "twice_max_prev_fv"},
                                                 {ForecastBoundRule::kFixed, "fixed"}})

inline void to_json(nlohmann::json& j, const ShockConfig& s) { j = {{"round", s.round}, {"factor", s.factor}}; }
inline void from_json(const nlohmann::json& j, ShockConfig& s) {
  s.round = j.value("round", 15);
  if (j.contains("factor")) {
    const auto f = j.at("factor").get<std::string>();
    if (f != "DOUBLE" && f != "HALVE") throw ConfigError("shock.factor must be DOUBLE or HALVE, got " + f);
    s.factor = j.at("factor").get<ShockFactor>();
  }
}

inline void to_json(nlohmann::json& j, const RiskElicitationConfig& r) {
  j = {{"start_round", r.start_round}, {"payout_divisor", r.payout_divisor}};
}
inline void from_json(const nlohmann::json& j, RiskElicitationConfig& r) {
  r.start_round = j.value("start_round", 1);
  if (j.contains("payout_divisor")) r.payout_divisor = j.at("payout_divisor").get<Decimal>();
}

inline void to_json(nlohmann::json& j, const SessionConfig& c) {
  j = nlohmann::json{
      {"main_rounds", c.main_rounds},
      {"practice_rounds", c.practice_rounds},
      {"n_agents", c.n_agents},
      {"initial_shares", c.initial_shares},
      {"initial_cash", c.initial_cash},
      {"interest_rate", c.interest_rate},
      {"dividend_values", nlohmann::json::array({c.dividend_values.first, c.dividend_values.second})},
      {"redemption_value", c.redemption_value},
      {"order_band_halfwidth", c.order_band_halfwidth},
      {"forecast_horizons", c.forecast_horizons},
      {"forecast_tolerance", c.forecast_tolerance},
      {"forecast_reward", c.forecast_reward},
      {"forecast_upper_bound_rule", c.forecast_upper_bound_rule},
      {"forecast_upper_bound_fixed", c.forecast_upper_bound_fixed},
      {"shock", c.shock ? nlohmann::json(*c.shock) : nlohmann::json(nullptr)},
      {"risk_elicitation", c.risk_elicitation ? nlohmann::json(*c.risk_elicitation) : nlohmann::json(nullptr)},
      {"rng_seed", c.rng_seed},
      {"initial_reference_price", c.initial_reference_price},
      {"max_orders_per_round", c.max_orders_per_round},
  };
}

/// Reads a config; absent fields keep their defaults, unknown fields are an error.
inline void from_json(const nlohmann::json& j, SessionConfig& c) {
  static const std::vector<std::string> known = {
      "main_rounds", "practice_rounds", "n_agents", "initial_shares", "initial_cash", "interest_rate",
      "dividend_values", "redemption_value", "order_band_halfwidth", "forecast_horizons", "forecast_tolerance",
      "forecast_reward", "forecast_upper_bound_rule", "forecast_upper_bound_fixed", "shock", "risk_elicitation",
      "rng_seed", "initial_reference_price", "max_orders_per_round"};
  if (!j.is_object()) throw ConfigError("session config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config field: " + key);
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("main_rounds", c.main_rounds);
    get("practice_rounds", c.practice_rounds);
    get("n_agents", c.n_agents);
    get("initial_shares", c.initial_shares);
    get("initial_cash", c.initial_cash);
    get("interest_rate", c.interest_rate);
    if (j.contains("dividend_values")) {
      const auto& d = j.at("dividend_values");
      if (!d.is_array() || d.size() != 2) throw ConfigError("dividend_values must be a pair");
      c.dividend_values = {d[0].get<Decimal>(), d[1].get<Decimal>()};
    }
    get("redemption_value", c.redemption_value);
    get("order_band_halfwidth", c.order_band_halfwidth);
    get("forecast_horizons", c.forecast_horizons);
    get("forecast_tolerance", c.forecast_tolerance);
    get("forecast_reward", c.forecast_reward);
    if (j.contains("forecast_upper_bound_rule")) {
      const auto r = j.at("forecast_upper_bound_rule").get<std::string>();
      if (r != "twice_max_prev_fv" && r != "fixed") throw ConfigError("unknown forecast_upper_bound_rule: " + r);
      c.forecast_upper_bound_rule = j.at("forecast_upper_bound_rule").get<ForecastBoundRule>();
    }
    get("forecast_upper_bound_fixed", c.forecast_upper_bound_fixed);
    if (j.contains("shock")) {
      c.shock = j.at("shock").is_null() ? std::nullopt : std::optional<ShockConfig>(j.at("shock").get<ShockConfig>());
    }
    if (j.contains("risk_elicitation")) {
      const auto& r = j.at("risk_elicitation");
      c.risk_elicitation = r.is_null() || (r.is_boolean() && !r.get<bool>())
                               ? std::nullopt
                               : std::optional<RiskElicitationConfig>(r.is_boolean() ? RiskElicitationConfig{}
                                                                                    : r.get<RiskElicitationConfig>());
    }
    get("rng_seed", c.rng_seed);
    get("initial_reference_price", c.initial_reference_price);
    get("max_orders_per_round", c.max_orders_per_round);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed session config: ") + e.what());
  }
}

}  // namespace bubblelab
