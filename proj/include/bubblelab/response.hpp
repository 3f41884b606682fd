#pragma once

// Turns free-form model output into an AgentAction, or a machine-readable
// reason the output was unusable.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/agent.hpp"
#include "bubblelab/lottery.hpp"

namespace bubblelab {

enum class ParseFailureReason {
  kNoJson,
  kInvalidJson,
  kMissingField,
  kWrongType,
  kNonInteger,
  kOutOfBand,
  kForecastOutOfRange,
  kMissingForecast,
  kBadOrderType,
  kNonPositiveQuantity,
};

inline std::string_view to_string(ParseFailureReason r) {
  switch (r) {
    case ParseFailureReason::kNoJson: return "NO_JSON";
    case ParseFailureReason::kInvalidJson: return "INVALID_JSON";
    case ParseFailureReason::kMissingField: return "MISSING_FIELD";
    case ParseFailureReason::kWrongType: return "WRONG_TYPE";
    case ParseFailureReason::kNonInteger: return "NON_INTEGER";
    case ParseFailureReason::kOutOfBand: return "OUT_OF_BAND";
    case ParseFailureReason::kForecastOutOfRange: return "FORECAST_OUT_OF_RANGE";
    case ParseFailureReason::kMissingForecast: return "MISSING_FORECAST";
    case ParseFailureReason::kBadOrderType: return "BAD_ORDER_TYPE";
    case ParseFailureReason::kNonPositiveQuantity: return "NON_POSITIVE_QUANTITY";
  }
  return "UNKNOWN";
}

struct ParseFailure {
  ParseFailureReason reason = ParseFailureReason::kNoJson;
  std::string detail;

  /// Text appended to the next attempt so the model can correct itself.
  [[nodiscard]] std::string corrective_message() const {
    return "\nYOUR PREVIOUS RESPONSE COULD NOT BE PROCESSED (" + std::string(to_string(reason)) + "): " + detail +
           "\nRespond again using exactly the JSON format above.\n";
  }
};

using ParseResult = std::variant<AgentAction, ParseFailure>;

namespace response_detail {

/// Candidate `{...}` spans at brace depth zero, in order of appearance.
/// String literals are skipped so braces inside text do not count.
inline std::vector<std::string_view> top_level_objects(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto start = text.find('{', i);
    if (start == std::string_view::npos) break;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t j = start;
    for (; j < text.size(); ++j) {
      const char c = text[j];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        break;
      }
    }
    if (j >= text.size()) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, j - start + 1));
    i = j + 1;
  }
  return out;
}

/// Integer from a JSON number or a numeric string; integral floats are accepted.
inline std::optional<std::int64_t> as_integer(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<std::int64_t>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    s.erase(s.find_last_not_of(" \t\r\n") + 1);
    if (s.empty()) return std::nullopt;
    std::size_t k = s[0] == '-' || s[0] == '+' ? 1 : 0;
    if (k == s.size()) return std::nullopt;
    for (std::size_t m = k; m < s.size(); ++m) {
      if (!std::isdigit(static_cast<unsigned char>(s[m]))) return std::nullopt;
    }
    if (s.size() > 15) return std::nullopt;
    return std::stoll(s);
  }
  return std::nullopt;
}

inline std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

/// First candidate that parses as a JSON object; comments are tolerated.
inline std::variant<nlohmann::json, ParseFailure> extract_object(std::string_view raw) {
  const auto candidates = top_level_objects(raw);
  if (candidates.empty()) return ParseFailure{ParseFailureReason::kNoJson, "no JSON object found in the response"};
  std::string first_error;
  for (auto c : candidates) {
    try {
      auto j = nlohmann::json::parse(c, nullptr, true, true);
      if (j.is_object()) return j;
    } catch (const nlohmann::json::parse_error& e) {
      if (first_error.empty()) first_error = e.what();
    }
  }
  return ParseFailure{ParseFailureReason::kInvalidJson, first_error.empty() ? "no JSON object found" : first_error};
}

}  // namespace response_detail

/// Parses a response to render_prompt(). The first top-level JSON object is
/// used; surrounding prose and code fences are ignored. Forecasts may sit in
/// "new_content" (as in the template) or at the top level.
inline ParseResult parse_response(std::string_view raw, const AgentObservation& obs) {
  using response_detail::as_integer;
  auto fail = [](ParseFailureReason r, std::string detail) { return ParseResult{ParseFailure{r, std::move(detail)}}; };

  auto extracted = response_detail::extract_object(raw);
  if (auto* f = std::get_if<ParseFailure>(&extracted)) return *f;
  const auto& j = std::get<nlohmann::json>(extracted);

  AgentAction action;

  if (j.contains("observations_and_thoughts")) {
    const auto& t = j.at("observations_and_thoughts");
    if (!t.is_string()) return fail(ParseFailureReason::kWrongType, "observations_and_thoughts must be a string");
    action.observations_and_thoughts = t.get<std::string>();
  }

  const nlohmann::json* content = nullptr;
  if (j.contains("new_content")) {
    content = &j.at("new_content");
    if (!content->is_object()) return fail(ParseFailureReason::kWrongType, "new_content must be an object");
    for (const char* key : {"PLANS.txt", "INSIGHTS.txt"}) {
      if (!content->contains(key)) continue;
      const auto& v = content->at(key);
      if (!v.is_string()) return fail(ParseFailureReason::kWrongType, std::string(key) + " must be a string");
      (std::string_view(key) == "PLANS.txt" ? action.plans : action.insights) = v.get<std::string>();
    }
  }

  const nlohmann::json* forecasts = nullptr;
  if (content != nullptr && content->contains("price_forecasts")) {
    forecasts = &content->at("price_forecasts");
  } else if (j.contains("price_forecasts")) {
    forecasts = &j.at("price_forecasts");
  }
  if (forecasts == nullptr) return fail(ParseFailureReason::kMissingField, "price_forecasts is missing");
  if (!forecasts->is_array()) return fail(ParseFailureReason::kWrongType, "price_forecasts must be a list");
  for (std::size_t i = 0; i < forecasts->size(); ++i) {
    const auto& slot = (*forecasts)[i];
    if (!slot.is_object()) return fail(ParseFailureReason::kWrongType, "each price forecast must be an object");
    int horizon = 0;
    if (slot.contains("round")) {
      const auto r = as_integer(slot.at("round"));
      if (!r) return fail(ParseFailureReason::kNonInteger, "forecast round must be an integer");
      horizon = static_cast<int>(*r - obs.round);
    } else if (i < obs.horizons.size()) {
      horizon = obs.horizons[i];
    } else {
      return fail(ParseFailureReason::kMissingField, "forecast entry " + std::to_string(i) + " has no round");
    }
    if (std::find(obs.horizons.begin(), obs.horizons.end(), horizon) == obs.horizons.end()) continue;
    if (!slot.contains("forecasted_price")) return fail(ParseFailureReason::kMissingField, "forecasted_price is missing");
    const auto v = as_integer(slot.at("forecasted_price"));
    if (!v) {
      return fail(ParseFailureReason::kNonInteger,
                  "forecast for round " + std::to_string(obs.round + horizon) + " must be an integer, got " +
                      slot.at("forecasted_price").dump());
    }
    if (*v < 0 || *v > obs.forecast_upper_bound) {
      return fail(ParseFailureReason::kForecastOutOfRange,
                  "forecast " + std::to_string(*v) + " for round " + std::to_string(obs.round + horizon) +
                      " must be between 0 and " + std::to_string(obs.forecast_upper_bound));
    }
    action.forecasts[horizon] = *v;
  }
  for (int h : obs.horizons) {
    if (!action.forecasts.count(h)) {
      return fail(ParseFailureReason::kMissingForecast, "no forecast for round " + std::to_string(obs.round + h));
    }
  }

  if (!j.contains("submitted_orders")) return fail(ParseFailureReason::kMissingField, "submitted_orders is missing");
  const auto& orders = j.at("submitted_orders");
  if (!orders.is_array()) return fail(ParseFailureReason::kWrongType, "submitted_orders must be a list");
  for (const auto& o : orders) {
    if (!o.is_object()) return fail(ParseFailureReason::kWrongType, "each order must be an object");
    for (const char* key : {"order_type", "quantity", "limit_price"}) {
      if (!o.contains(key)) return fail(ParseFailureReason::kMissingField, std::string("order field ") + key + " is missing");
    }
    if (!o.at("order_type").is_string()) return fail(ParseFailureReason::kBadOrderType, "order_type must be BUY or SELL");
    const auto type = response_detail::upper(o.at("order_type").get<std::string>());
    if (type != "BUY" && type != "SELL") {
      return fail(ParseFailureReason::kBadOrderType, "order_type must be BUY or SELL, got " + o.at("order_type").dump());
    }
    const auto q = as_integer(o.at("quantity"));
    if (!q) return fail(ParseFailureReason::kNonInteger, "quantity must be an integer, got " + o.at("quantity").dump());
    if (*q <= 0) return fail(ParseFailureReason::kNonPositiveQuantity, "quantity must be positive");
    const auto p = as_integer(o.at("limit_price"));
    if (!p) return fail(ParseFailureReason::kNonInteger, "limit_price must be an integer, got " + o.at("limit_price").dump());
    if (!obs.band.contains(*p)) {
      return fail(ParseFailureReason::kOutOfBand, "limit_price " + std::to_string(*p) + " must be between " +
                                                      std::to_string(obs.band.low) + " and " + std::to_string(obs.band.high));
    }
    action.orders.push_back(Order{{}, type == "BUY" ? Side::kBuy : Side::kSell, *q, *p});
  }
  return action;
}

/// Reflection text: the "reflection" field of a JSON answer, else the whole
/// reply trimmed.
inline std::string parse_reflection(std::string_view raw) {
  auto extracted = response_detail::extract_object(raw);
  if (const auto* j = std::get_if<nlohmann::json>(&extracted)) {
    if (j->contains("reflection") && j->at("reflection").is_string()) return j->at("reflection").get<std::string>();
  }
  std::string s(raw);
  s.erase(0, s.find_first_not_of(" \t\r\n"));
  s.erase(s.find_last_not_of(" \t\r\n") + 1);
  return s;
}

/// LEFT or RIGHT; anything else is an abstention.
inline LotteryChoice parse_lottery_choice(std::string_view raw) {
  auto extracted = response_detail::extract_object(raw);
  if (const auto* j = std::get_if<nlohmann::json>(&extracted)) {
    if (j->contains("choice") && j->at("choice").is_string()) {
      return lottery_choice_from_string(response_detail::upper(j->at("choice").get<std::string>()));
    }
  }
  return LotteryChoice::kAbstain;
}

}  // namespace bubblelab
