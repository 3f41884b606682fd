#pragma once

// Offline stand-in for a chat-completion endpoint. It reads the prompt the
// way a model would (band, portfolio, forecast slots) and answers with a
// valid, deterministic JSON reply in the chat-completions wire shape. A
// configurable share of first attempts is deliberately malformed so the
// retry path is exercised.

#include <algorithm>
#include <atomic>
#include <regex>
#include <string>

#include <nlohmann/json.hpp>

#include "bubblelab/gateway.hpp"

namespace bubblelab {

class StubTransport final : public Transport {
 public:
  /// Every `malformed_period`-th prompt (by content hash) gets a prose-only
  /// reply on its first attempt; 0 disables this.
  explicit StubTransport(int malformed_period = 0) : malformed_period_(malformed_period) {}

  HttpResponse post(const HttpRequest& request) override {
    ++calls_;
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(request.body);
    } catch (const nlohmann::json::parse_error&) {
      return {400, R"({"error":"bad request body"})"};
    }
    const std::string prompt = body.at("messages").back().at("content").get<std::string>();
    const std::string text = answer(prompt);
    nlohmann::json reply = {
        {"model", body.value("model", "stub-model")},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}}},
        {"usage", {{"prompt_tokens", static_cast<std::int64_t>(prompt.size() / 4)},
                   {"completion_tokens", static_cast<std::int64_t>(text.size() / 4)}}}};
    return {200, reply.dump()};
  }

  [[nodiscard]] std::int64_t calls() const { return calls_.load(); }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  static std::optional<long long> find_int(const std::string& text, const std::regex& re, std::size_t from = 0) {
    std::smatch m;
    const std::string tail = text.substr(from);
    if (!std::regex_search(tail, m, re)) return std::nullopt;
    return std::stoll(m[1].str());
  }

  static std::optional<double> find_double(const std::string& text, const std::regex& re, std::size_t from = 0) {
    std::smatch m;
    const std::string tail = text.substr(from);
    if (!std::regex_search(tail, m, re)) return std::nullopt;
    return std::stod(m[1].str());
  }

  std::string answer(const std::string& prompt) const {
    const auto hash = fnv1a(prompt);
    if (prompt.find("\"reflection\"") != std::string::npos) {
      return R"({"reflection": "Prices tracked the buyback value; buying below it and selling above it worked."})";
    }
    if (prompt.find("\"choice\"") != std::string::npos) {
      return std::string(R"({"choice": ")") + ((hash >> 7) % 2 == 0 ? "LEFT" : "RIGHT") + "\"}";
    }
    const bool retry = prompt.find("COULD NOT BE PROCESSED") != std::string::npos;
    if (malformed_period_ > 0 && !retry && hash % static_cast<std::uint64_t>(malformed_period_) == 0) {
      return "I will hold my position this round and wait for better prices.";
    }

    static const std::regex band_re(R"(integer values between (\d+) and (\d+)\.)");
    static const std::regex last_re(R"(Market price \(Previous Round\): (\d+))");
    static const std::regex buyback_re(R"(Buyback price: ([0-9.]+))");
    static const std::regex shares_re(R"(# of shares owned: (\d+))");
    static const std::regex cash_re(R"(Current cash: ([0-9.]+))");
    static const std::regex bound_re(R"("max_value": (\d+))");
    static const std::regex slot_re(R"("round": (\d+),)");

    std::smatch m;
    long long low = 0;
    long long high = 0;
    if (std::regex_search(prompt, m, band_re)) {
      low = std::stoll(m[1].str());
      high = std::stoll(m[2].str());
    }
    const auto portfolio_at = prompt.find("* Your Portfolio");
    const std::size_t from = portfolio_at == std::string::npos ? 0 : portfolio_at;
    const long long last = find_int(prompt, last_re, from).value_or(0);
    const double buyback = find_double(prompt, buyback_re, from).value_or(static_cast<double>(last));
    const long long shares = find_int(prompt, shares_re, from).value_or(0);
    const double cash = find_double(prompt, cash_re, from).value_or(0.0);
    const long long bound = find_int(prompt, bound_re).value_or(0);
    const auto value = static_cast<long long>(std::llround(buyback));

    nlohmann::ordered_json forecasts = nlohmann::ordered_json::array();
    for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), slot_re); it != std::sregex_iterator(); ++it) {
      nlohmann::ordered_json slot;
      slot["round"] = std::stoll((*it)[1].str());
      slot["min_value"] = 0;
      slot["max_value"] = bound;
      slot["forecasted_price"] = std::to_string(std::clamp(value, 0LL, bound));
      forecasts.push_back(slot);
    }

    nlohmann::ordered_json orders = nlohmann::ordered_json::array();
    if (last < value) {
      const long long limit = std::min(high, value - 1);
      if (limit >= low && cash >= static_cast<double>(limit)) {
        orders.push_back({{"order_type", "BUY"}, {"quantity", 1}, {"limit_price", limit}});
      }
    } else if (last > value && shares > 0) {
      const long long limit = std::max(low, value + 1);
      if (limit <= high) orders.push_back({{"order_type", "SELL"}, {"quantity", 1}, {"limit_price", limit}});
    } else if (last == value && value >= low && value <= high) {
      // At value the reply is a coin flip on the prompt, so identical agents still trade.
      const auto pick = (hash >> 5) % 3;
      if (pick == 0 && cash >= static_cast<double>(value)) {
        orders.push_back({{"order_type", "BUY"}, {"quantity", 1}, {"limit_price", value}});
      } else if (pick == 1 && shares > 0) {
        orders.push_back({{"order_type", "SELL"}, {"quantity", 1}, {"limit_price", value}});
      }
    }

    nlohmann::ordered_json j;
    j["observations_and_thoughts"] = "Last price " + std::to_string(last) + ", buyback value " + std::to_string(value) + ".";
    j["new_content"] = {{"PLANS.txt", "Trade toward the buyback value of " + std::to_string(value) + "."},
                        {"INSIGHTS.txt", "The buyback value anchors the price."},
                        {"price_forecasts", forecasts}};
    j["submitted_orders"] = orders;
    // Wrap some replies in prose and a code fence, as chat models often do.
    if ((hash >> 3) % 3 == 0) return "Here is my response:\n```json\n" + j.dump(2) + "\n```\n";
    return j.dump(2);
  }

  int malformed_period_;
  mutable std::atomic<std::int64_t> calls_{0};
};

}  // namespace bubblelab
