#pragma once

// Persistent session state: per-round records, final settlement, and their
// line-delimited JSON encoding.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/agent.hpp"
#include "bubblelab/config.hpp"
#include "bubblelab/economy.hpp"
#include "bubblelab/lottery.hpp"
#include "bubblelab/market.hpp"

namespace bubblelab {

struct LotteryRecord {
  int menu_row = 0;
  LotteryChoice choice = LotteryChoice::kAbstain;
};

struct AgentRoundRecord {
  AgentId agent;
  std::vector<Order> submitted;
  ValidationVerdict verdict;
  std::vector<Fill> fills;
  Decimal cash_before;
  Quantity shares_before = 0;
  Decimal trade_cash;
  Decimal interest_earned;
  Decimal dividend_earned;
  Decimal cash_after;
  Quantity shares_after = 0;
  ForecastSet forecasts;
  Decimal forecast_reward_earned;
  std::string plans;
  std::string insights;
  std::string observations_and_thoughts;
  std::optional<LotteryRecord> lottery;
  std::optional<std::string> incident;
};

struct RoundRecord {
  int round = 0;
  Phase phase = Phase::kMain;
  ClearingOutcome clearing;
  PriceBand band;
  Price forecast_upper_bound = 0;
  Decimal dividend_draw;
  EconomyParams params;
  double fundamental_value = 0.0;
  std::optional<std::string> news;
  std::vector<AgentRoundRecord> agents;
};

struct AgentFinal {
  AgentId agent;
  std::string kind;
  Decimal cash_before_redemption;
  Quantity shares_redeemed = 0;
  Decimal redemption_cash;
  Decimal forecast_reward_cash;
  Decimal final_value;
  std::optional<Decimal> lottery_payout;
  std::string plans;
  std::string insights;
  std::string practice_reflection;
  std::string final_reflection;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::vector<std::string> roster;
  std::vector<std::string> cassette_ids;
  /// Free-form run metadata (sampling parameters, profile names, ...).
  nlohmann::json extra = nlohmann::json::object();
};

struct SessionLog {
  SessionConfig config;
  Provenance provenance;
  std::vector<RoundRecord> records;
  std::vector<AgentFinal> final;

  /// Main-phase records only, in round order.
  [[nodiscard]] std::vector<const RoundRecord*> main_records() const {
    std::vector<const RoundRecord*> out;
    for (const auto& r : records) {
      if (r.phase == Phase::kMain) out.push_back(&r);
    }
    return out;
  }
};

/// History rows for one agent built from a sequence of records.
inline std::vector<HistoryEntry> history_for(const std::vector<const RoundRecord*>& records, std::size_t agent_index) {
  std::vector<HistoryEntry> out;
  for (const auto* r : records) {
    const auto& a = r->agents.at(agent_index);
    HistoryEntry h;
    h.round = r->round;
    h.price = r->clearing.price;
    h.volume = r->clearing.volume;
    h.shares = a.shares_after;
    h.cash = a.cash_after;
    h.stock_value = Decimal::from_int(r->clearing.price * a.shares_after);
    h.dividend_earned = a.dividend_earned;
    h.interest_earned = a.interest_earned;
    h.submitted = a.submitted;
    h.fills = a.fills;
    h.forecasts = a.forecasts;
    out.push_back(std::move(h));
  }
  return out;
}

// ---- JSON ----------------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(Side, {{Side::kBuy, "BUY"}, {Side::kSell, "SELL"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Phase, {{Phase::kPractice, "PRACTICE"}, {Phase::kMain, "MAIN"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LotteryChoice, {{LotteryChoice::kLeft, "LEFT"},
                                             {LotteryChoice::kRight, "RIGHT"},
                                             {LotteryChoice::kAbstain, "ABSTAIN"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RejectReason, {{RejectReason::kOversell, "OVERSELL"},
                                            {RejectReason::kOverspend, "OVERSPEND"},
                                            {RejectReason::kOutOfBand, "OUT_OF_BAND"},
                                            {RejectReason::kSpreadCrossSelf, "SPREAD_CROSS_SELF"},
                                            {RejectReason::kTooManyOrders, "TOO_MANY_ORDERS"},
                                            {RejectReason::kNonInteger, "NON_INTEGER"}})

inline void to_json(nlohmann::json& j, const AgentId& a) { j = a.value; }
inline void from_json(const nlohmann::json& j, AgentId& a) { a.value = j.get<std::uint32_t>(); }

inline void to_json(nlohmann::json& j, const Order& o) {
  j = {{"agent", o.agent}, {"side", o.side}, {"quantity", o.quantity}, {"limit_price", o.limit_price}};
}
inline void from_json(const nlohmann::json& j, Order& o) {
  o.agent = j.at("agent").get<AgentId>();
  o.side = j.at("side").get<Side>();
  o.quantity = j.at("quantity").get<Quantity>();
  o.limit_price = j.at("limit_price").get<Price>();
}

inline void to_json(nlohmann::json& j, const Fill& f) {
  j = {{"agent", f.agent}, {"side", f.side}, {"quantity", f.quantity}, {"price", f.price}, {"order_index", f.order_index}};
}
inline void from_json(const nlohmann::json& j, Fill& f) {
  f.agent = j.at("agent").get<AgentId>();
  f.side = j.at("side").get<Side>();
  f.quantity = j.at("quantity").get<Quantity>();
  f.price = j.at("price").get<Price>();
  f.order_index = j.at("order_index").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const PriceBand& b) { j = nlohmann::json::array({b.low, b.high}); }
inline void from_json(const nlohmann::json& j, PriceBand& b) {
  b.low = j.at(0).get<Price>();
  b.high = j.at(1).get<Price>();
}

inline void to_json(nlohmann::json& j, const ForecastSet& f) {
  j = nlohmann::json::object();
  for (const auto& [h, v] : f) j[std::to_string(h)] = v;
}
inline void from_json(const nlohmann::json& j, ForecastSet& f) {
  f.clear();
  for (const auto& [k, v] : j.items()) f[std::stoi(k)] = v.get<Price>();
}

inline void to_json(nlohmann::json& j, const EconomyParams& p) {
  j = {{"dividend_values", nlohmann::json::array({p.dividend_values.first, p.dividend_values.second})},
       {"redemption_value", p.redemption_value},
       {"interest_rate", p.interest_rate}};
}
inline void from_json(const nlohmann::json& j, EconomyParams& p) {
  p.dividend_values = {j.at("dividend_values").at(0).get<Decimal>(), j.at("dividend_values").at(1).get<Decimal>()};
  p.redemption_value = j.at("redemption_value").get<Decimal>();
  p.interest_rate = j.at("interest_rate").get<Decimal>();
}

inline void to_json(nlohmann::json& j, const AgentRoundRecord& a) {
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& r : a.verdict.rejected) rejected.push_back({{"order", r.order}, {"reason", r.reason}});
  j = {{"agent", a.agent},
       {"submitted", a.submitted},
       {"accepted", a.verdict.accepted},
       {"rejected", rejected},
       {"fills", a.fills},
       {"cash_before", a.cash_before},
       {"shares_before", a.shares_before},
       {"trade_cash", a.trade_cash},
       {"interest_earned", a.interest_earned},
       {"dividend_earned", a.dividend_earned},
       {"cash_after", a.cash_after},
       {"shares_after", a.shares_after},
       {"forecasts", a.forecasts},
       {"forecast_reward_earned", a.forecast_reward_earned},
       {"plans", a.plans},
       {"insights", a.insights},
       {"observations_and_thoughts", a.observations_and_thoughts},
       {"lottery", a.lottery ? nlohmann::json{{"menu_row", a.lottery->menu_row}, {"choice", a.lottery->choice}}
                             : nlohmann::json(nullptr)},
       {"incident", a.incident ? nlohmann::json(*a.incident) : nlohmann::json(nullptr)}};
}
inline void from_json(const nlohmann::json& j, AgentRoundRecord& a) {
  a.agent = j.at("agent").get<AgentId>();
  a.submitted = j.at("submitted").get<std::vector<Order>>();
  a.verdict.accepted = j.at("accepted").get<std::vector<Order>>();
  a.verdict.rejected.clear();
  for (const auto& r : j.at("rejected")) a.verdict.rejected.push_back({r.at("order").get<Order>(), r.at("reason").get<RejectReason>()});
  a.fills = j.at("fills").get<std::vector<Fill>>();
  a.cash_before = j.at("cash_before").get<Decimal>();
  a.shares_before = j.at("shares_before").get<Quantity>();
  a.trade_cash = j.at("trade_cash").get<Decimal>();
  a.interest_earned = j.at("interest_earned").get<Decimal>();
  a.dividend_earned = j.at("dividend_earned").get<Decimal>();
  a.cash_after = j.at("cash_after").get<Decimal>();
  a.shares_after = j.at("shares_after").get<Quantity>();
  a.forecasts = j.at("forecasts").get<ForecastSet>();
  a.forecast_reward_earned = j.at("forecast_reward_earned").get<Decimal>();
  a.plans = j.at("plans").get<std::string>();
  a.insights = j.at("insights").get<std::string>();
  a.observations_and_thoughts = j.at("observations_and_thoughts").get<std::string>();
  if (const auto& l = j.at("lottery"); !l.is_null()) {
    a.lottery = LotteryRecord{l.at("menu_row").get<int>(), l.at("choice").get<LotteryChoice>()};
  } else {
    a.lottery.reset();
  }
  if (const auto& i = j.at("incident"); !i.is_null()) {
    a.incident = i.get<std::string>();
  } else {
    a.incident.reset();
  }
}

inline void to_json(nlohmann::json& j, const RoundRecord& r) {
  j = {{"phase", r.phase},
       {"round", r.round},
       {"clearing",
        {{"price", r.clearing.price}, {"volume", r.clearing.volume}, {"crossed", r.clearing.crossed}, {"fills", r.clearing.fills}}},
       {"band", r.band},
       {"forecast_upper_bound", r.forecast_upper_bound},
       {"dividend_draw", r.dividend_draw},
       {"effective_params", r.params},
       {"fundamental_value", r.fundamental_value},
       {"news", r.news ? nlohmann::json(*r.news) : nlohmann::json(nullptr)},
       {"agents", r.agents}};
}
inline void from_json(const nlohmann::json& j, RoundRecord& r) {
  r.phase = j.at("phase").get<Phase>();
  r.round = j.at("round").get<int>();
  const auto& c = j.at("clearing");
  r.clearing.price = c.at("price").get<Price>();
  r.clearing.volume = c.at("volume").get<Quantity>();
  r.clearing.crossed = c.at("crossed").get<bool>();
  r.clearing.fills = c.at("fills").get<std::vector<Fill>>();
  r.band = j.at("band").get<PriceBand>();
  r.forecast_upper_bound = j.at("forecast_upper_bound").get<Price>();
  r.dividend_draw = j.at("dividend_draw").get<Decimal>();
  r.params = j.at("effective_params").get<EconomyParams>();
  r.fundamental_value = j.at("fundamental_value").get<double>();
  if (const auto& n = j.at("news"); !n.is_null()) {
    r.news = n.get<std::string>();
  } else {
    r.news.reset();
  }
  r.agents = j.at("agents").get<std::vector<AgentRoundRecord>>();
}

inline void to_json(nlohmann::json& j, const AgentFinal& f) {
  j = {{"agent", f.agent},
       {"kind", f.kind},
       {"cash_before_redemption", f.cash_before_redemption},
       {"shares_redeemed", f.shares_redeemed},
       {"redemption_cash", f.redemption_cash},
       {"forecast_reward_cash", f.forecast_reward_cash},
       {"final_value", f.final_value},
       {"lottery_payout", f.lottery_payout ? nlohmann::json(*f.lottery_payout) : nlohmann::json(nullptr)},
       {"plans", f.plans},
       {"insights", f.insights},
       {"practice_reflection", f.practice_reflection},
       {"final_reflection", f.final_reflection}};
}
inline void from_json(const nlohmann::json& j, AgentFinal& f) {
  f.agent = j.at("agent").get<AgentId>();
  f.kind = j.at("kind").get<std::string>();
  f.cash_before_redemption = j.at("cash_before_redemption").get<Decimal>();
  f.shares_redeemed = j.at("shares_redeemed").get<Quantity>();
  f.redemption_cash = j.at("redemption_cash").get<Decimal>();
  f.forecast_reward_cash = j.at("forecast_reward_cash").get<Decimal>();
  f.final_value = j.at("final_value").get<Decimal>();
  if (const auto& l = j.at("lottery_payout"); !l.is_null()) {
    f.lottery_payout = l.get<Decimal>();
  } else {
    f.lottery_payout.reset();
  }
  f.plans = j.at("plans").get<std::string>();
  f.insights = j.at("insights").get<std::string>();
  f.practice_reflection = j.at("practice_reflection").get<std::string>();
  f.final_reflection = j.at("final_reflection").get<std::string>();
}

inline void to_json(nlohmann::json& j, const Provenance& p) {
  j = {{"seed", p.seed}, {"roster", p.roster}, {"cassette_ids", p.cassette_ids}, {"extra", p.extra}};
}
inline void from_json(const nlohmann::json& j, Provenance& p) {
  p.seed = j.at("seed").get<std::uint64_t>();
  p.roster = j.at("roster").get<std::vector<std::string>>();
  p.cassette_ids = j.at("cassette_ids").get<std::vector<std::string>>();
  p.extra = j.value("extra", nlohmann::json::object());
}

/// Manifest line: configuration and provenance.
inline nlohmann::json manifest_json(const SessionLog& log) {
  return {{"format", "bubblelab-session/1"}, {"config", log.config}, {"provenance", log.provenance}};
}

/// The whole log as one canonical byte stream: manifest, one line per round,
/// then the final settlement line.
inline std::string serialize(const SessionLog& log) {
  std::string out = manifest_json(log).dump() + "\n";
  for (const auto& r : log.records) out += nlohmann::json(r).dump() + "\n";
  out += nlohmann::json{{"final", log.final}}.dump() + "\n";
  return out;
}

/// Inverse of serialize().
inline SessionLog deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.size() < 2) throw std::runtime_error("session log: expected manifest and final lines");
  SessionLog log;
  const auto manifest = nlohmann::json::parse(lines.front());
  log.config = manifest.at("config").get<SessionConfig>();
  log.provenance = manifest.at("provenance").get<Provenance>();
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) log.records.push_back(nlohmann::json::parse(lines[i]).get<RoundRecord>());
  log.final = nlohmann::json::parse(lines.back()).at("final").get<std::vector<AgentFinal>>();
  return log;
}

}  // namespace bubblelab
