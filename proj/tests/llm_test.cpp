#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bubblelab/llm_agent.hpp"
#include "bubblelab/roster.hpp"
#include "bubblelab/session.hpp"
#include "bubblelab/stub_transport.hpp"

namespace bubblelab {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Fundamentalist that keeps every observation it is shown.
class Recorder final : public Agent {
 public:
  using Seen = std::shared_ptr<std::vector<AgentObservation>>;
  explicit Recorder(Seen seen) : seen_(std::move(seen)) {}
  std::string kind() const override { return "recorder"; }
  AgentAction act(const AgentObservation& obs) override {
    seen_->push_back(obs);
    auto a = inner_.act(obs);
    a.plans = "Buy below " + std::to_string(std::llround(obs.fundamental_value)) + ", sell above it.";
    a.insights = "Round " + std::to_string(obs.round) + " closed near value.";
    return a;
  }
  std::string reflect(ReflectionKind, const AgentObservation&) override { return "Prices stayed near the buyback value."; }

 private:
  Seen seen_;
  FundamentalistAgent inner_;
};

SessionConfig golden_config() {
  SessionConfig c;
  c.rng_seed = 7;
  c.shock = ShockConfig{15, ShockFactor::kDouble};
  return c;
}

std::vector<AgentObservation> golden_observations() {
  const auto c = golden_config();
  auto seen = std::make_shared<std::vector<AgentObservation>>();
  auto agents = build_roster(parse_roster("1xfundamentalist,13xmomentum,6xfundamentalist"), c);
  agents[0] = std::make_unique<Recorder>(seen);
  run_session(c, std::move(agents));
  std::vector<AgentObservation> main;
  for (auto& o : *seen) {
    if (o.phase == Phase::kMain) main.push_back(o);
  }
  return main;
}

void check_golden(const std::string& name, const std::string& rendered) {
  const std::string path = std::string(BUBBLELAB_FIXTURES) + "/" + name;
  if (std::getenv("BUBBLELAB_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(path, std::ios::binary) << rendered;
  }
  const std::string expected = read_file(path);
  ASSERT_FALSE(expected.empty()) << "missing fixture " << path;
  EXPECT_EQ(rendered, expected) << "prompt differs from " << path;
}

TEST(Prompt, MatchesGoldenFixtures) {
  const auto obs = golden_observations();
  ASSERT_EQ(obs.size(), 30U);
  const auto c = golden_config();
  check_golden("prompt_round1.txt", render_prompt(obs[0], c));
  check_golden("prompt_round8.txt", render_prompt(obs[7], c));
  check_golden("prompt_round15_shock.txt", render_prompt(obs[14], c));
}

TEST(Prompt, ShockRoundCarriesNewsAlertOnce) {
  const auto obs = golden_observations();
  const auto c = golden_config();
  const std::string alert =
      "[News Alert]: The company has recently announced it will now doubled all dividends to 0.8/2.0. "
      "The asset redemption value has now doubled to $28.0.";
  for (const auto& o : obs) {
    const auto text = render_prompt(o, c);
    EXPECT_EQ(text.find(alert) != std::string::npos, o.round == 15) << "round " << o.round;
    EXPECT_EQ(text.find("News Alert") != std::string::npos, o.round == 15) << "round " << o.round;
  }
  EXPECT_NE(render_prompt(obs[14], c).find("Buyback price: 28"), std::string::npos);
}

TEST(Prompt, RejectsBadObservations) {
  const auto c = golden_config();
  auto obs = golden_observations().front();
  auto bad = obs;
  bad.horizons.clear();
  EXPECT_THROW(render_prompt(bad, c), PromptError);
  bad = obs;
  bad.band = PriceBand{5, 4};
  EXPECT_THROW(render_prompt(bad, c), PromptError);
}

TEST(Prompt, HelperFormatting) {
  EXPECT_EQ(prompt_detail::horizon_phrase({0, 2, 5, 10}),
            "this period, two periods in advance, 5 periods in advance, and 10 periods in advance");
  EXPECT_EQ(prompt_detail::percent(Decimal::parse("0.05")), "5%");
  EXPECT_THROW(prompt_detail::substitute("{{MISSING}}", {}), PromptError);
}

// ---- response parsing ------------------------------------------------------

AgentObservation parse_obs() {
  AgentObservation o;
  o.round = 4;
  o.band = {11, 17};
  o.forecast_upper_bound = 28;
  o.horizons = {0, 2, 5, 10};
  o.last_price = 14;
  return o;
}

TEST(Response, RoundTripsRenderedActions) {
  const auto obs = parse_obs();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    AgentAction a;
    const auto n = rng.uniform_int(0, 3);
    for (int i = 0; i < n; ++i) {
      a.orders.push_back(Order{{}, rng.coin() ? Side::kBuy : Side::kSell, rng.uniform_int(1, 9),
                               rng.uniform_int(obs.band.low, obs.band.high)});
    }
    for (int h : obs.horizons) a.forecasts[h] = rng.uniform_int(0, obs.forecast_upper_bound);
    if (rng.coin()) a.plans = "plan \"" + std::to_string(seed) + "\" {braces}";
    if (rng.coin()) a.insights = "insight\nline two";
    a.observations_and_thoughts = "thoughts " + std::to_string(seed);
    const auto parsed = parse_response(render_response(a, obs), obs);
    ASSERT_TRUE(std::holds_alternative<AgentAction>(parsed)) << std::get<ParseFailure>(parsed).detail;
    const auto& b = std::get<AgentAction>(parsed);
    EXPECT_EQ(b.forecasts, a.forecasts);
    EXPECT_EQ(b.plans, a.plans);
    EXPECT_EQ(b.insights, a.insights);
    EXPECT_EQ(b.observations_and_thoughts, a.observations_and_thoughts);
    ASSERT_EQ(b.orders.size(), a.orders.size());
    for (std::size_t i = 0; i < a.orders.size(); ++i) {
      EXPECT_EQ(b.orders[i].side, a.orders[i].side);
      EXPECT_EQ(b.orders[i].quantity, a.orders[i].quantity);
      EXPECT_EQ(b.orders[i].limit_price, a.orders[i].limit_price);
    }
  }
}

const char* kGood = R"({
  "observations_and_thoughts": "ok",
  "new_content": {"PLANS.txt": "p", "INSIGHTS.txt": "i", "price_forecasts": [
    {"round": 4, "forecasted_price": "14"}, {"round": 6, "forecasted_price": 15},
    {"round": 9, "forecasted_price": 15.0}, {"round": 14, "forecasted_price": 14}]},
  "submitted_orders": [{"order_type": "buy", "quantity": 2, "limit_price": 13}]
})";

TEST(Response, ToleratesProseFencesAndComments) {
  const auto obs = parse_obs();
  const std::string wrapped = std::string("Sure! Here it is:\n```json\n") + kGood + "\n```\nGood luck {not json}";
  const auto r = parse_response(wrapped, obs);
  ASSERT_TRUE(std::holds_alternative<AgentAction>(r));
  const auto& a = std::get<AgentAction>(r);
  EXPECT_EQ(a.forecasts.at(0), 14);
  EXPECT_EQ(a.forecasts.at(5), 15);
  EXPECT_EQ(a.orders.at(0).side, Side::kBuy);

  std::string commented = kGood;
  commented.insert(commented.find("\"submitted_orders\""), "// Add more or less orders as needed\n  ");
  EXPECT_TRUE(std::holds_alternative<AgentAction>(parse_response(commented, obs)));
}

ParseFailureReason reason_for(const std::string& raw) {
  const auto r = parse_response(raw, parse_obs());
  EXPECT_TRUE(std::holds_alternative<ParseFailure>(r)) << raw;
  return std::holds_alternative<ParseFailure>(r) ? std::get<ParseFailure>(r).reason : ParseFailureReason::kNoJson;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  return s.replace(at, from.size(), to);
}

TEST(Response, ReportsMachineReadableReasons) {
  EXPECT_EQ(reason_for("I will hold."), ParseFailureReason::kNoJson);
  EXPECT_EQ(reason_for("{\"a\": }"), ParseFailureReason::kInvalidJson);
  EXPECT_EQ(reason_for(replace(kGood, "\"submitted_orders\"", "\"orders\"")), ParseFailureReason::kMissingField);
  EXPECT_EQ(reason_for(replace(kGood, "\"limit_price\": 13", "\"limit_price\": 13.5")), ParseFailureReason::kNonInteger);
  EXPECT_EQ(reason_for(replace(kGood, "\"limit_price\": 13", "\"limit_price\": 18")), ParseFailureReason::kOutOfBand);
  EXPECT_EQ(reason_for(replace(kGood, "\"forecasted_price\": 15}", "\"forecasted_price\": 29}")),
            ParseFailureReason::kForecastOutOfRange);
  EXPECT_EQ(reason_for(replace(kGood, "{\"round\": 14, \"forecasted_price\": 14}", "{\"round\": 30, \"forecasted_price\": 14}")),
            ParseFailureReason::kMissingForecast);
  EXPECT_EQ(reason_for(replace(kGood, "\"buy\"", "\"HOLD\"")), ParseFailureReason::kBadOrderType);
  EXPECT_EQ(reason_for(replace(kGood, "\"quantity\": 2", "\"quantity\": 0")), ParseFailureReason::kNonPositiveQuantity);
  EXPECT_EQ(reason_for(replace(kGood, "\"PLANS.txt\": \"p\"", "\"PLANS.txt\": 3")), ParseFailureReason::kWrongType);
  const ParseFailure f{ParseFailureReason::kOutOfBand, "x"};
  EXPECT_NE(f.corrective_message().find("OUT_OF_BAND"), std::string::npos);
}

TEST(Response, ReflectionAndLottery) {
  EXPECT_EQ(parse_reflection(R"({"reflection": "sell high"})"), "sell high");
  EXPECT_EQ(parse_reflection("  plain text \n"), "plain text");
  EXPECT_EQ(parse_lottery_choice(R"(```json
{"choice": "right"}
```)"),
            LotteryChoice::kRight);
  EXPECT_EQ(parse_lottery_choice("LEFT"), LotteryChoice::kAbstain);
}

TEST(Prompt, LotteryStatesConfiguredDivisor) {
  const LotteryPair pair{{Decimal::parse("40"), Decimal::parse("32"), 0.5}, {Decimal::parse("77"), Decimal::parse("2"), 0.5}};
  EXPECT_NE(render_lottery_prompt(pair).find("outcome divided by 10.\n"), std::string::npos);
  EXPECT_NE(render_lottery_prompt(pair, Decimal::parse("2.5")).find("outcome divided by 2.5.\n"), std::string::npos);
}

// ---- gateway ---------------------------------------------------------------

/// Replays a fixed list of HTTP responses.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> replies) : replies_(std::move(replies)) {}
  HttpResponse post(const HttpRequest& request) override {
    requests.push_back(request);
    if (replies_.empty()) throw TransportError("connection refused", true);
    auto r = replies_.front();
    replies_.erase(replies_.begin());
    return r;
  }
  std::vector<HttpRequest> requests;

 private:
  std::vector<HttpResponse> replies_;
};

std::string chat_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"content", text}}}}}}, {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}}
      .dump();
}

TEST(Gateway, RetriesTransientFailuresWithBackoff) {
  auto t = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{429, "slow down"}, {503, "busy"}, {200, chat_body("hello")}});
  std::vector<double> sleeps;
  Gateway g(ProviderProfile{}, t, nullptr, CassetteMode::kPassthrough, [&](double s) { sleeps.push_back(s); });
  const auto c = g.complete("hi", CallKey{});
  EXPECT_EQ(c.text, "hello");
  EXPECT_EQ(sleeps, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(g.transport_calls(), 3);
  EXPECT_EQ(g.usage().at("stub-model").prompt_tokens, 7);
}

TEST(Gateway, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{401, "bad key"}, {200, chat_body("x")}});
  Gateway g(ProviderProfile{}, t, nullptr, CassetteMode::kPassthrough, [](double) {});
  try {
    g.complete("hi", CallKey{});
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_FALSE(e.transient());
  }
  EXPECT_EQ(t->requests.size(), 1U);
}

TEST(Gateway, GivesUpAfterMaxRetries) {
  ProviderProfile p;
  p.max_retries = 2;
  auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{});
  Gateway g(p, t, nullptr, CassetteMode::kPassthrough, [](double) {});
  EXPECT_THROW(g.complete("hi", CallKey{}), TransportError);
  EXPECT_EQ(t->requests.size(), 3U);
}

TEST(Gateway, CredentialComesFromEnvironmentAndIsNeverRecorded) {
  ProviderProfile p;
  p.auth_env = "BUBBLELAB_TEST_SECRET";
  ::setenv("BUBBLELAB_TEST_SECRET", "sk-test-0123456789", 1);
  auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, chat_body("ok")}});
  auto cassette = std::make_shared<Cassette>();
  Gateway g(p, t, cassette, CassetteMode::kRecord, [](double) {});
  g.complete("hi", CallKey{});
  EXPECT_EQ(t->requests.at(0).headers.at("Authorization"), "Bearer sk-test-0123456789");
  EXPECT_EQ(cassette->dump().find("sk-test"), std::string::npos);
  ::unsetenv("BUBBLELAB_TEST_SECRET");
  EXPECT_THROW(g.complete("hi", CallKey{}), TransportError);
}

TEST(Gateway, ReplayChecksKeyAndDigest) {
  auto cassette = std::make_shared<Cassette>();
  {
    auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, chat_body("recorded")}});
    Gateway g(ProviderProfile{}, t, cassette, CassetteMode::kRecord, [](double) {});
    g.complete("prompt one", CallKey{3, Phase::kMain, 2, "act", 0});
  }
  const auto reloaded = Cassette::parse(cassette->dump());
  Gateway replay(ProviderProfile{}, nullptr, reloaded, CassetteMode::kReplay);
  const auto c = replay.complete("prompt one", CallKey{3, Phase::kMain, 2, "act", 0});
  EXPECT_EQ(c.text, "recorded");
  EXPECT_TRUE(c.replayed);
  EXPECT_THROW(replay.complete("prompt two", CallKey{3, Phase::kMain, 2, "act", 0}), ReplayMismatch);
  EXPECT_THROW(replay.complete("prompt one", CallKey{3, Phase::kMain, 3, "act", 0}), ReplayMismatch);
  EXPECT_EQ(replay.transport_calls(), 0);
}

TEST(Gateway, DigestIgnoresNewlineStyle) {
  ProviderProfile p;
  EXPECT_EQ(request_digest(p, "a\r\nb"), request_digest(p, "a\nb"));
  EXPECT_NE(request_digest(p, "a\nb"), request_digest(p, "a\nc"));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Gateway, ProfileJsonRoundTripAndValidation) {
  ProviderProfile p;
  p.name = "openai";
  p.sampling = {{"temperature", 0.7}};
  p.headers["X-Org"] = "lab";
  const auto back = nlohmann::json(p).get<ProviderProfile>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(p));
  EXPECT_THROW(nlohmann::json({{"timeout_seconds", -1}}).get<ProviderProfile>(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"max_retries", "many"}}).get<ProviderProfile>(), ConfigError);
}

// ---- LLM agents through the stub provider ----------------------------------

struct LlmRun {
  std::string log;
  std::shared_ptr<Cassette> cassette;
  std::int64_t transport_calls = 0;
  std::vector<std::string> incidents;
};

LlmRun run_llm(const SessionConfig& c, std::shared_ptr<Transport> transport, std::shared_ptr<Cassette> cassette,
               CassetteMode mode, bool parallel) {
  ProviderProfile profile;
  auto gateway = std::make_shared<Gateway>(profile, std::move(transport), cassette, mode, [](double) {});
  const int llm = c.n_agents > 2 ? c.n_agents / 2 : c.n_agents;
  std::string spec = std::to_string(llm) + "xllm:stub";
  if (llm < c.n_agents) spec += "," + std::to_string(c.n_agents - llm) + "xnoise";
  auto agents = build_roster(parse_roster(spec), c,
                             [&](const std::string&, std::uint32_t i) { return std::make_unique<LlmAgent>(gateway, i, c); });
  EngineOptions opts;
  opts.parallel_agents = parallel;
  auto log = run_session(c, std::move(agents), opts);
  log.provenance.cassette_ids = {gateway->cassette()->id()};
  LlmRun out{serialize(log), gateway->cassette(), gateway->transport_calls(), {}};
  for (const auto& r : log.records) {
    for (const auto& a : r.agents) {
      if (a.incident) out.incidents.push_back(*a.incident);
    }
  }
  return out;
}

SessionConfig small_llm_config() {
  SessionConfig c;
  c.n_agents = 4;
  c.practice_rounds = 2;
  c.main_rounds = 8;
  c.rng_seed = 5;
  c.shock = ShockConfig{5, ShockFactor::kHalve};
  c.risk_elicitation = RiskElicitationConfig{};
  return c;
}

TEST(LlmSession, ReplayReproducesLogByteForByte) {
  const auto c = small_llm_config();
  auto stub = std::make_shared<StubTransport>(5);
  const auto recorded = run_llm(c, stub, std::make_shared<Cassette>(), CassetteMode::kRecord, true);
  EXPECT_GT(stub->calls(), 0);
  bool retried = false;
  for (const auto& i : recorded.incidents) retried |= i.find("corrective") != std::string::npos;
  EXPECT_TRUE(retried) << "stub should force at least one corrective retry";

  const auto replayed = run_llm(c, nullptr, Cassette::parse(recorded.cassette->dump()), CassetteMode::kReplay, false);
  EXPECT_EQ(replayed.transport_calls, 0);
  EXPECT_EQ(replayed.log, recorded.log);
}

TEST(LlmSession, ReplayAgainstEditedConfigFailsLoudly) {
  auto c = small_llm_config();
  const auto recorded = run_llm(c, std::make_shared<StubTransport>(), std::make_shared<Cassette>(), CassetteMode::kRecord, false);
  c.interest_rate = Decimal::parse("0.06");
  EXPECT_THROW(run_llm(c, nullptr, Cassette::parse(recorded.cassette->dump()), CassetteMode::kReplay, false), ReplayMismatch);
}

/// Always answers with prose.
class ProseTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest&) override { return {200, chat_body("I would rather not say.")}; }
};

TEST(LlmSession, UnusableRepliesFallBackAfterThreeAttempts) {
  auto c = small_llm_config();
  c.n_agents = 2;
  c.practice_rounds = 0;
  c.main_rounds = 2;
  const auto run = run_llm(c, std::make_shared<ProseTransport>(), std::make_shared<Cassette>(), CassetteMode::kRecord, false);
  ASSERT_EQ(run.incidents.size(), 4U);
  EXPECT_NE(run.incidents[0].find("unusable response after 3 attempts (NO_JSON"), std::string::npos);
  // Three act attempts per agent-round, one lottery per agent-round, one final reflection per agent.
  EXPECT_EQ(run.transport_calls, 2 * 2 * 3 + 2 * 2 + 2);
}

}  // namespace
}  // namespace bubblelab
