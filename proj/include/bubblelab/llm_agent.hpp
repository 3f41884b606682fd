#pragma once

// Agent backed by a chat model reached through a Gateway.

#include <memory>
#include <string>
#include <variant>

#include "bubblelab/agent.hpp"
#include "bubblelab/config.hpp"
#include "bubblelab/gateway.hpp"
#include "bubblelab/prompt.hpp"
#include "bubblelab/response.hpp"

namespace bubblelab {

class LlmAgent final : public Agent {
 public:
  /// `index` is the agent's position in the roster; it keys cassette entries.
  LlmAgent(std::shared_ptr<Gateway> gateway, std::uint32_t index, SessionConfig config, int corrective_retries = 2)
      : gateway_(std::move(gateway)), index_(index), config_(std::move(config)), corrective_retries_(corrective_retries) {}

  [[nodiscard]] std::string kind() const override { return "llm:" + gateway_->profile().name; }

  AgentAction act(const AgentObservation& obs) override {
    const std::string base = render_prompt(obs, config_);
    std::string prompt = base;
    std::string last_reason;
    for (int attempt = 0; attempt <= corrective_retries_; ++attempt) {
      std::string reply;
      try {
        reply = gateway_->complete(prompt, key(obs, "act", attempt)).text;
      } catch (const TransportError& e) {
        return fallback_action(obs, std::string("transport error: ") + e.what());
      }
      auto parsed = parse_response(reply, obs);
      if (auto* action = std::get_if<AgentAction>(&parsed)) {
        if (attempt > 0) action->incident = "accepted after " + std::to_string(attempt) + " corrective retries";
        return std::move(*action);
      }
      const auto& failure = std::get<ParseFailure>(parsed);
      last_reason = std::string(to_string(failure.reason)) + ": " + failure.detail;
      prompt = base + failure.corrective_message();
    }
    return fallback_action(obs, "unusable response after " + std::to_string(corrective_retries_ + 1) +
                                    " attempts (" + last_reason + ")");
  }

  std::string reflect(ReflectionKind kind, const AgentObservation& obs) override {
    const char* purpose = kind == ReflectionKind::kPractice ? "practice_reflection" : "final_reflection";
    try {
      return parse_reflection(gateway_->complete(render_reflection_prompt(kind, obs), key(obs, purpose, 0)).text);
    } catch (const TransportError&) {
      return {};
    }
  }

  LotteryChoice choose_lottery(const LotteryPair& pair, const AgentObservation& obs) override {
    try {
      const auto divisor = config_.risk_elicitation ? config_.risk_elicitation->payout_divisor : Decimal::from_int(10);
      return parse_lottery_choice(gateway_->complete(render_lottery_prompt(pair, divisor), key(obs, "lottery", 0)).text);
    } catch (const TransportError&) {
      return LotteryChoice::kAbstain;
    }
  }

 private:
  CallKey key(const AgentObservation& obs, std::string purpose, int attempt) const {
    return CallKey{index_, obs.phase, obs.round, std::move(purpose), attempt};
  }

  std::shared_ptr<Gateway> gateway_;
  std::uint32_t index_;
  SessionConfig config_;
  int corrective_retries_;
};

}  // namespace bubblelab
