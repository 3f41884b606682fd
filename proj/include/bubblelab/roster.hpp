#pragma once

// Roster specs such as "14xmomentum,6xfundamentalist" or "4xllm:openai".

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bubblelab/config.hpp"
#include "bubblelab/rng.hpp"
#include "bubblelab/scripted.hpp"

namespace bubblelab {

constexpr std::uint64_t kRosterStream = 3;

struct RosterEntry {
  int count = 0;
  /// "fundamentalist", "momentum", "noise" or "llm:<profile>".
  std::string kind;
};

inline std::vector<RosterEntry> parse_roster(const std::string& spec) {
  std::vector<RosterEntry> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    auto comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    std::string item = spec.substr(pos, comma - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    pos = comma + 1;
    if (item.empty()) throw ConfigError("roster: empty entry in '" + spec + "'");
    RosterEntry e{1, item};
    const auto x = item.find('x');
    if (x != std::string::npos && x > 0 && item.find_first_not_of("0123456789") == x) {
      e.count = std::stoi(item.substr(0, x));
      e.kind = item.substr(x + 1);
    }
    if (e.count < 1) throw ConfigError("roster: count must be positive in '" + item + "'");
    const bool known = e.kind == "fundamentalist" || e.kind == "momentum" || e.kind == "noise" ||
                       (e.kind.rfind("llm:", 0) == 0 && e.kind.size() > 4);
    if (!known) throw ConfigError("roster: unknown agent kind '" + e.kind + "'");
    out.push_back(std::move(e));
    if (comma == spec.size()) break;
  }
  return out;
}

/// Per-agent momentum parameters. Heterogeneous draws keep the crowd from
/// acting in lockstep, which is what lets a bubble build and then unwind.
inline MomentumAgent::Params momentum_params(std::uint64_t seed, std::uint32_t index) {
  Rng rng(seed, {kRosterStream, index});
  MomentumAgent::Params p;
  p.aggressiveness = rng.uniform(0.2, 1.0);
  p.window = static_cast<int>(rng.uniform_int(2, 8));
  p.fear_multiple = rng.uniform(1.15, 1.9);
  p.exit_rounds = static_cast<int>(rng.uniform_int(1, 8));
  p.opening_drift = 0.5;
  p.lot = 1;
  return p;
}

/// Builds `n_agents` agents from parsed roster entries. LLM entries go through `make_llm`,
/// which receives the profile name and the agent index.
using LlmFactory = std::function<std::unique_ptr<Agent>(const std::string& profile, std::uint32_t index)>;

inline std::vector<std::unique_ptr<Agent>> build_roster(const std::vector<RosterEntry>& entries, const SessionConfig& config,
                                                        const LlmFactory& make_llm = {}) {
  std::vector<std::unique_ptr<Agent>> agents;
  for (const auto& e : entries) {
    for (int k = 0; k < e.count; ++k) {
      const auto index = static_cast<std::uint32_t>(agents.size());
      if (e.kind == "fundamentalist") {
        agents.push_back(std::make_unique<FundamentalistAgent>());
      } else if (e.kind == "momentum") {
        agents.push_back(std::make_unique<MomentumAgent>(momentum_params(config.rng_seed, index)));
      } else if (e.kind == "noise") {
        agents.push_back(std::make_unique<NoiseAgent>(stream_seed(config.rng_seed, {kRosterStream, index, 1})));
      } else {
        if (!make_llm) throw ConfigError("roster: no model gateway configured for '" + e.kind + "'");
        agents.push_back(make_llm(e.kind.substr(4), index));
      }
    }
  }
  if (static_cast<int>(agents.size()) != config.n_agents) {
    throw ConfigError("roster has " + std::to_string(agents.size()) + " agents but n_agents is " +
                      std::to_string(config.n_agents));
  }
  return agents;
}

}  // namespace bubblelab
