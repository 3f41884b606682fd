#pragma once

#include <string_view>
#include <vector>

#include "bubblelab/decimal.hpp"

namespace bubblelab {

struct Lottery {
  Decimal outcome_high;
  Decimal outcome_low;
  double p_high = 0.5;

  [[nodiscard]] double expected_value() const {
    return p_high * outcome_high.to_double() + (1.0 - p_high) * outcome_low.to_double();
  }
};

enum class LotteryChoice { kLeft, kRight, kAbstain };

inline std::string_view to_string(LotteryChoice c) {
  switch (c) {
    case LotteryChoice::kLeft: return "LEFT";
    case LotteryChoice::kRight: return "RIGHT";
    case LotteryChoice::kAbstain: return "ABSTAIN";
  }
  return "ABSTAIN";
}

inline LotteryChoice lottery_choice_from_string(std::string_view s) {
  if (s == "LEFT") return LotteryChoice::kLeft;
  if (s == "RIGHT") return LotteryChoice::kRight;
  return LotteryChoice::kAbstain;
}

struct LotteryPair {
  Lottery left;
  Lottery right;
};

/// The ten-row Holt-Laury menu: a safe lottery (2.00 / 1.60) on the left and
/// a risky one (3.85 / 0.10) on the right, with the high-outcome probability
/// stepping from 0.1 to 1.0.
inline std::vector<LotteryPair> holt_laury_menu() {
  std::vector<LotteryPair> menu;
  for (int k = 1; k <= 10; ++k) {
    const double p = k / 10.0;
    menu.push_back(LotteryPair{Lottery{Decimal::parse("2.00"), Decimal::parse("1.60"), p},
                               Lottery{Decimal::parse("3.85"), Decimal::parse("0.10"), p}});
  }
  return menu;
}

/// Realised outcome of a lottery given a uniform draw in [0, 1).
inline Decimal play(const Lottery& l, double u) { return u < l.p_high ? l.outcome_high : l.outcome_low; }

}  // namespace bubblelab
