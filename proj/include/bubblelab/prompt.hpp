#pragma once

// Prompt text for model-backed agents: the trading shell with its portfolio
// and market-data blocks, plus the reflection and lottery prompts.

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/agent.hpp"
#include "bubblelab/config.hpp"
#include "bubblelab/lottery.hpp"

namespace bubblelab {

/// A placeholder had no value; this is a configuration bug, never a runtime
/// condition to recover from.
class PromptError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace prompt_detail {

/// Decimal with at least `digits` fractional digits ("0.40", "1.0").
inline std::string with_digits(Decimal d, int digits) {
  std::string s = d.to_string();
  const auto dot = s.find('.');
  std::size_t keep = dot + 1 + static_cast<std::size_t>(digits);
  while (s.size() > keep && s.back() == '0') s.pop_back();
  if (digits == 0 && s.back() == '.') s.pop_back();
  return s;
}

inline std::string percent(Decimal rate) { return (rate * Decimal::from_int(100)).to_display() + "%"; }

inline std::string horizon_phrase(const std::vector<int>& horizons) {
  std::vector<std::string> parts;
  for (int h : horizons) {
    if (h == 0) {
      parts.emplace_back("this period");
    } else if (h == 1) {
      parts.emplace_back("one period in advance");
    } else if (h == 2) {
      parts.emplace_back("two periods in advance");
    } else {
      parts.push_back(std::to_string(h) + " periods in advance");
    }
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += parts.size() > 2 ? ", " : " ";
    if (i > 0 && i + 1 == parts.size()) out += "and ";
    out += parts[i];
  }
  return out;
}

/// Replaces every {{KEY}}; unknown or leftover keys are template errors.
inline std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 1024);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open);
    if (close == std::string_view::npos) throw PromptError("unterminated placeholder in prompt template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    const auto it = values.find(key);
    if (it == values.end()) throw PromptError("no value for prompt placeholder " + key);
    out += it->second;
    pos = close + 2;
  }
  return out;
}

inline std::string order_line(Side side, Quantity q, Price p) {
  return std::string("* ") + std::string(to_string(side)) + " " + std::to_string(q) + " shares at " + std::to_string(p) +
         " per share";
}

inline constexpr std::string_view kShell = R"(You are a subject participating in a trading experiment. The experiment
will consist of a series of {{PRACTICE_ROUNDS}} practice trading periods followed by {{MAIN_ROUNDS}}
trading periods in which you will have the opportunity to buy or sell
shares of an asset that can yield payments in the future. Understanding
instructions may help you earn money. If you make good decisions, you
might earn a considerable amount of money that will be paid at the end
of the experiment.

There are two assets in this experience: cash and stock. You begin with
{{INITIAL_CASH}} units of cash and {{INITIAL_SHARES}} shares of stock. Stock is traded in a market each
period among all of the experimental subjects in units of cash. When you
buy stock, the price you agreed to pay is deducted from your amount of
cash. When you sell stock, the price you sold at is added to your amount
of cash. The reward from holding stock is dividend. Each period, every
unit of stock earns a low or high dividend of either {{DIV_LOW}} cash or {{DIV_HIGH}} cash
per unit with equal probability. These dividend payments are the same for
everyone in all periods. The dividend in each period does not depend on
whether the previous dividend was low or high. The reward from holding
cash is given by a fixed interest rate of {{INTEREST}} per period. At the end of
the {{MAIN_ROUNDS}} periods of trading, each unit of STOCK is automatically converted
to {{REDEMPTION}} CASH. If the market price for round {{MAIN_ROUNDS}} is {{EXAMPLE_PRICE}} and you have 3 stocks,
you'll receive 3x{{REDEMPTION}}={{EXAMPLE_REDEEMED}} CASH, not 3x{{EXAMPLE_PRICE}}={{EXAMPLE_MARKET}} CASH. Then, your experimental
CASH units are converted to US dollars at a rate of 200 CASH = $1 US, to
determine how much the user will be paid at the end of the experiment. If
you buy shares for more than {{REDEMPTION}} as you get near round {{MAIN_ROUNDS}}, it is possible
those shares will be terminated at a value of {{REDEMPTION}} if you cannot sell them.

Let's see an example. Suppose at the end of period 7, you have 120 units
of CASH and 5 units of STOCK. The dividend that round is {{EXAMPLE_DIVIDEND}} per unit
of stock. Your new cash amount for period 8 is going to be:

CASH = 120 + (120 x {{INTEREST}}) + (5 x {{EXAMPLE_DIVIDEND}})
           = 120 + {{EXAMPLE_INTEREST}} + {{EXAMPLE_DIVIDEND_CASH}}
           = {{EXAMPLE_TOTAL}}

Notice that keeping cash will earn a return of {{INTEREST}} per period and using
cash to buy units of stock will also yield dividend earnings.

For each period, you will be provided with past market and portfolio
history (prices, volumes, your filled orders) and you will
simultaneously complete the following two tasks:

[ORDER SUBMISSION]:
In addition to past market and portfolio history, you will be provided
with:

[# of Shares]: Number of shares of STOCK that you currently own. Each
share that you own pays out a dividend at the end of each round. You
CANNOT attempt to sell more shares than you own.

[Current Cash]: The amount of CASH that you currently have. Your CASH
earns interest that is paid out at the end of each period. You CANNOT
attempt to buy shares worth more than the cash you have.

[STOCK Value]: The value of your STOCK at the market price of the last
round of play

[Market Price]: This is market clearing price from the last round of
play

Using this information, you will submit orders to the market. All
orders will be limit orders. For example, a limit order to BUY 1 STOCK @
15 means that you would like to buy a STOCK at any price of 15 or less.
Keep in mind the following points:
- Orders are NOT carried between periods
- SELL order prices must be greater than all BUY order prices + BUY order
  prices must be less than all SELL order prices
- You can only sell STOCK that you own and purchase STOCK with CASH you
  already have
- You are not required to submit orders every round and you may submit
  multiple orders each round
- Depending on market conditions, you may need to cross the spread to get
  fills on buy/sell orders

[PRICE FORECASTING]:
You will be asked to submit your predictions for the market price {{HORIZON_PHRASE}}. In addition to past market and portfolio history, you will be
provided with the range in which your prediction should fall. Your
prediction should be a non-negative, integer value. If your forecast is
within {{TOLERANCE}} units of the actual price for each of the forecasted periods,
then you will receive {{REWARD}} units of cash at the end of the experiment as
reward for each correct forecast.

For example, if you forecast the market price of period 1 to be 14 and
the actual price is 15, then you will be rewarded for your forecast.
However, if the actual price is 18, then you will not receive the reward.
Additionally, during the experiment, you will complete PRACTICE REFLECTION
and EXPERIMENT REFLECTION:
[PRACTICE REFLECTION]:
After completing the practice rounds, you will be asked to reflect on your
practice experience. This reflection will be accessible to future versions
of yourself during the main experiment. This can be helpful in passing
along lessons learned to future versions of yourself.

[EXPERIMENT REFLECTION]:
At the end of the experiment, you will be asked to reflect on your
experience, including any insight and/or strategies that you may have
developed.

To summarize, here are the key points:
- You will trade one STOCK for {{MAIN_ROUNDS}} trading periods using CASH
- You start with {{INITIAL_CASH}} units of CASH and {{INITIAL_SHARES}} STOCKS
- Each period, STOCK provides a dividend of either {{DIV_LOW}} or {{DIV_HIGH}}, while
  interest provides {{INTEREST}} per period
- You will complete each of the aforementioned tasks
- After the last trading round ({{MAIN_ROUNDS}}), all of your shares are converted to
  {{REDEMPTION}} CASH each. If you buy shares for more than {{REDEMPTION}} as you get near round
  {{MAIN_ROUNDS}}, it is possible those shares will be terminated at {{REDEMPTION}} if you cannot
  sell them. You will keep any CASH you have at the end of the experiment.
- You are trading against other subjects in the experiment who may be
  susceptible to the same influences as you and may not always make
  optimal decisions. They, however, are also trying to maximize their
  earnings.
- Market dynamics can change over time, so it is important to adapt your
  strategies as needed
{{PHASE_NOTE}}
You will now complete the ORDER SUBMISSION + PRICE FORECASTING task.

Now let me tell you about the resources you have for this task. First,
here are some files that you wrote the last time I came to you with a
task. Here is a high-level description of what these files contain:

    - PLANS.txt: File where you can write your plans for what
    strategies to test/use during the next few rounds.
    - INSIGHTS.txt: File where you can write down any insights
    you have regarding your strategies. Be detailed and precise
    but keep things succinct and don't repeat yourself.

These files are passed between stages and rounds so try to focus on
general strategies/insights as opposed to only something stage-specific.

Now, I will show you the current content of these files.

Filename: PLANS.txt
+++++++++++++++++++++
{{PLANS}}
+++++++++++++++++++++

Filename: INSIGHTS.txt
+++++++++++++++++++++
{{INSIGHTS}}
+++++++++++++++++++++

Here is the game history that you have access to:

Here is your practice round reflection:

Filename: PRACTICE REFLECTION (read-only)
+++++++++++++++++++++
{{PRACTICE_REFLECTION}}
+++++++++++++++++++++
{{PRIOR_SESSION}}
Filename: MARKET DATA (read-only)
+++++++++++++++++++++
{{MARKET_DATA}}
+++++++++++++++++++++

Here is your current portfolio information:

Filename: CURRENT PORTFOLIO (read-only)
+++++++++++++++++++++
{{CURRENT_PORTFOLIO}}
+++++++++++++++++++++
{{NEWS}}
PRACTICE ROUND HISTORY/REFLECTION SHOULD ONLY BE USED TO LEARN THE
EXPERIMENT SETTING AND MAY NOT REFLECT MARKET CONDITIONS IN THE MAIN
EXPERIMENT.

Here is some key information to consider during your price forecasting:
- Make sure to submit a forecast within the specified range for each
  forecast input
- Use your previous history access to make informed decisions
- Remember that accurate (within {{TOLERANCE}} units) forecasts will earn you a
  reward at the end of the experiment
Here is some key information to consider during your order submission:
- You can only sell STOCK that you own and purchase STOCK with CASH you
  already have
- You are not required to submit orders every round and you may submit
  multiple orders each round for one or both sides
- Limit prices this round MUST be integer values between {{MIN_LIMIT_PRICE}} and {{MAX_LIMIT_PRICE}}.
  It is important that they are integer values within this range
- Make use of the provided history and your own strategies to make informed
  decisions
- Market dynamics can change over time, and so it might be necessary to
  adapt your strategies as needed
- Depending on market conditions, you may need to be aggressive or
  conservative in your trading strategies to maximize your earnings

Now you have all the necessary information to complete the task. Remember
YOUR TOP PRIORITY is to maximize your total earnings at the END of the {{MAIN_ROUNDS}}
main experiment rounds. You have {{ROUNDS_LEFT}} rounds remaining.
First, carefully read through the information provided. Now, fill in the
below JSON template to respond. YOU MUST respond in this exact JSON format.

{
    "observations_and_thoughts": "<fill in here>",
    "new_content": {
        "PLANS.txt": "<fill in here>",
        "INSIGHTS.txt": "<fill in here>",
        "price_forecasts": [
{{FORECAST_SLOTS}}
        ]
    },
    "submitted_orders": [
        {
            "order_type": "<BUY or SELL>",
            "quantity": <# of STOCK units>,
            "limit_price": <LIMIT_PRICE>
        },
        {
            "order_type": "<BUY or SELL>",
            "quantity": <# of STOCK units>,
            "limit_price": <LIMIT_PRICE>
        }
        // Add more or less orders as needed
    ]
}
)";

}  // namespace prompt_detail

/// Current holdings in the portfolio block format.
inline std::string render_portfolio(const AgentObservation& obs) {
  std::ostringstream s;
  s << "* Your Portfolio (Round " << obs.round << "):\n"
    << "    - Market price (Previous Round): " << obs.last_price << "\n"
    << "    - Buyback price: " << obs.params.redemption_value.to_display() << "\n"
    << "    - # of shares owned: " << obs.portfolio.shares << "\n"
    << "    - Current cash: " << obs.portfolio.cash.to_display() << "\n"
    << "    - Stock value: " << obs.stock_value().to_display();
  return s.str();
}

/// Past rounds in the market-data block format, oldest first.
inline std::string render_market_data(const std::vector<HistoryEntry>& history) {
  if (history.empty()) return "No market data yet.";
  std::ostringstream s;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const auto& h = history[k];
    if (k > 0) s << "\n";
    s << "Round " << h.round << ":\n"
      << "    * Market + Portfolio Data:\n"
      << "        - Market price: " << h.price << "\n"
      << "        - Market volume: " << h.volume << "\n"
      << "        - # of shares owned: " << h.shares << "\n"
      << "        - Current cash: " << h.cash.to_display() << "\n"
      << "        - Stock value: " << h.stock_value.to_display() << "\n"
      << "        - Dividend earned: " << h.dividend_earned.to_display() << "\n"
      << "        - Interest earned: " << h.interest_earned.to_display() << "\n"
      << "        - Submitted orders:\n";
    if (h.submitted.empty()) s << "            -* No submitted orders\n";
    for (const auto& o : h.submitted) s << "            " << prompt_detail::order_line(o.side, o.quantity, o.limit_price) << "\n";
    s << "        - Executed trades:\n";
    if (h.fills.empty()) s << "            -* No executed trades\n";
    for (const auto& f : h.fills) s << "            " << prompt_detail::order_line(f.side, f.quantity, f.price) << "\n";
    s << "    * Forecasts:\n";
    for (const auto& [horizon, value] : h.forecasts) {
      s << "        - Round " << h.round + horizon << " price forecast: " << value << "\n";
    }
  }
  std::string out = s.str();
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

/// The full order-submission and forecasting prompt for one agent and round.
inline std::string render_prompt(const AgentObservation& obs, const SessionConfig& config) {
  using namespace prompt_detail;
  if (obs.horizons.empty()) throw PromptError("observation has no forecast horizons");
  if (obs.band.empty()) throw PromptError("observation has an empty price band");
  if (obs.round < 1) throw PromptError("observation round must be >= 1");

  const Decimal redemption = config.redemption_value;
  const Decimal example_interest = Decimal::from_int(120) * config.interest_rate;
  const Decimal example_dividend = config.dividend_values.first * 5;
  const Price example_price = static_cast<Price>(std::llround(redemption.to_double())) + 6;

  std::string slots;
  for (std::size_t i = 0; i < obs.horizons.size(); ++i) {
    slots += "            {\n";
    slots += "                \"round\": " + std::to_string(obs.round + obs.horizons[i]) + ",\n";
    slots += "                \"min_value\": 0,\n";
    slots += "                \"max_value\": " + std::to_string(obs.forecast_upper_bound) + ",\n";
    slots += "                \"forecasted_price\": \"<fill in here>\"\n";
    slots += i + 1 < obs.horizons.size() ? "            },\n" : "            }";
  }

  std::string phase_note;
  if (obs.phase == Phase::kPractice) {
    phase_note = "\nThis is practice round " + std::to_string(obs.round) + " of " + std::to_string(obs.total_rounds) +
                 ". Practice rounds do not count toward your earnings.\n";
  }
  std::string prior;
  if (!obs.prior_session_history.empty()) {
    prior = "\nHere is the complete market history from your previous experiment session:\n\n"
            "Filename: PREVIOUS SESSION MARKET DATA (read-only)\n+++++++++++++++++++++\n" +
            render_market_data(obs.prior_session_history) + "\n+++++++++++++++++++++\n";
  }
  std::string news;
  if (obs.news) news = "\n" + *obs.news + "\n";

  const std::map<std::string, std::string> values{
      {"PRACTICE_ROUNDS", std::to_string(config.practice_rounds)},
      {"MAIN_ROUNDS", std::to_string(config.main_rounds)},
      {"INITIAL_CASH", config.initial_cash.to_display()},
      {"INITIAL_SHARES", std::to_string(config.initial_shares)},
      {"DIV_LOW", with_digits(config.dividend_values.first, 1)},
      {"DIV_HIGH", with_digits(config.dividend_values.second, 1)},
      {"INTEREST", percent(config.interest_rate)},
      {"REDEMPTION", redemption.to_display()},
      {"EXAMPLE_PRICE", std::to_string(example_price)},
      {"EXAMPLE_REDEEMED", (redemption * 3).to_display()},
      {"EXAMPLE_MARKET", std::to_string(example_price * 3)},
      {"EXAMPLE_DIVIDEND", with_digits(config.dividend_values.first, 2)},
      {"EXAMPLE_INTEREST", example_interest.to_display()},
      {"EXAMPLE_DIVIDEND_CASH", example_dividend.to_display()},
      {"EXAMPLE_TOTAL", (Decimal::from_int(120) + example_interest + example_dividend).to_display()},
      {"HORIZON_PHRASE", horizon_phrase(obs.horizons)},
      {"TOLERANCE", config.forecast_tolerance.to_display()},
      {"REWARD", config.forecast_reward.to_display()},
      {"PHASE_NOTE", phase_note},
      {"PLANS", obs.memory.plans},
      {"INSIGHTS", obs.memory.insights},
      {"PRACTICE_REFLECTION", obs.memory.practice_reflection},
      {"PRIOR_SESSION", prior},
      {"MARKET_DATA", render_market_data(obs.history)},
      {"CURRENT_PORTFOLIO", render_portfolio(obs)},
      {"NEWS", news},
      {"MIN_LIMIT_PRICE", std::to_string(obs.band.low)},
      {"MAX_LIMIT_PRICE", std::to_string(obs.band.high)},
      {"ROUNDS_LEFT", std::to_string(obs.rounds_remaining)},
      {"FORECAST_SLOTS", slots},
  };
  return substitute(kShell, values);
}

/// Prompt asking for the practice or end-of-experiment reflection.
inline std::string render_reflection_prompt(ReflectionKind kind, const AgentObservation& obs) {
  std::ostringstream s;
  const bool practice = kind == ReflectionKind::kPractice;
  s << "You are a subject participating in a trading experiment. ";
  s << (practice ? "You have just completed the practice rounds.\n\n" : "The experiment has now ended.\n\n");
  s << "Filename: PLANS.txt\n+++++++++++++++++++++\n" << obs.memory.plans << "\n+++++++++++++++++++++\n\n";
  s << "Filename: INSIGHTS.txt\n+++++++++++++++++++++\n" << obs.memory.insights << "\n+++++++++++++++++++++\n\n";
  s << "Filename: MARKET DATA (read-only)\n+++++++++++++++++++++\n"
    << render_market_data(obs.history) << "\n+++++++++++++++++++++\n\n";
  if (practice) {
    s << "[PRACTICE REFLECTION]:\n"
         "Reflect on your practice experience. This reflection will be accessible to\n"
         "future versions of yourself during the main experiment. Pass along any\n"
         "lessons learned that will help you maximize your earnings.\n\n";
  } else {
    s << "[EXPERIMENT REFLECTION]:\n"
         "Reflect on your experience, including any insight and/or strategies that\n"
         "you may have developed.\n\n";
  }
  s << "YOU MUST respond in this exact JSON format.\n\n"
       "{\n    \"reflection\": \"<fill in here>\"\n}\n";
  return s.str();
}

/// Prompt presenting one pair of lotteries.
inline std::string render_lottery_prompt(const LotteryPair& pair, Decimal payout_divisor = Decimal::from_int(10)) {
  auto describe = [](const Lottery& l) {
    const auto pct = [](double p) { return std::to_string(static_cast<int>(std::lround(p * 100))) + "%"; };
    return "win " + prompt_detail::with_digits(l.outcome_high, 2) + " with probability " + pct(l.p_high) + " or " +
           prompt_detail::with_digits(l.outcome_low, 2) + " with probability " + pct(1.0 - l.p_high);
  };
  return "Between trading rounds you are asked to choose one of two lotteries. Your choice\n"
         "does not affect your cash or shares. At the end of the experiment one of your\n"
         "chosen lotteries is played and you receive its outcome divided by " + payout_divisor.to_display() + ".\n\n"
         "LEFT: " + describe(pair.left) + "\nRIGHT: " + describe(pair.right) +
         "\n\nYOU MUST respond in this exact JSON format.\n\n{\n    \"choice\": \"<LEFT or RIGHT>\"\n}\n";
}

/// A well-formed answer to render_prompt() that encodes `action`; parsing it
/// back yields the same action.
inline std::string render_response(const AgentAction& action, const AgentObservation& obs) {
  nlohmann::ordered_json forecasts = nlohmann::ordered_json::array();
  for (int h : obs.horizons) {
    const auto it = action.forecasts.find(h);
    nlohmann::ordered_json slot;
    slot["round"] = obs.round + h;
    slot["min_value"] = 0;
    slot["max_value"] = obs.forecast_upper_bound;
    slot["forecasted_price"] = it != action.forecasts.end() ? it->second : obs.last_price;
    forecasts.push_back(slot);
  }
  nlohmann::ordered_json content = nlohmann::ordered_json::object();
  if (action.plans) content["PLANS.txt"] = *action.plans;
  if (action.insights) content["INSIGHTS.txt"] = *action.insights;
  content["price_forecasts"] = forecasts;
  nlohmann::ordered_json orders = nlohmann::ordered_json::array();
  for (const auto& o : action.orders) {
    nlohmann::ordered_json e;
    e["order_type"] = std::string(to_string(o.side));
    e["quantity"] = o.quantity;
    e["limit_price"] = o.limit_price;
    orders.push_back(e);
  }
  nlohmann::ordered_json j;
  j["observations_and_thoughts"] = action.observations_and_thoughts;
  j["new_content"] = content;
  j["submitted_orders"] = orders;
  return j.dump(4);
}

}  // namespace bubblelab
