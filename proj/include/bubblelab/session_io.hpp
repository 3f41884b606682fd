#pragma once

// On-disk session directory layout shared by the CLI subcommands.
//
//   manifest.json     run inputs (roster, seed, cassette mode, profiles)
//   session.jsonl     the SessionLog, one JSON object per line
//   prices.csv        main-phase round, price, volume, fundamental_value
//   summary.json      final values, MSE, PV variance, market class
//   memory/agent_NN/  final PLANS.txt, INSIGHTS.txt and reflections
//   cassette.jsonl    recorded model exchanges (LLM rosters only)

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubblelab/analysis.hpp"
#include "bubblelab/config.hpp"
#include "bubblelab/records.hpp"

namespace bubblelab {

namespace fs = std::filesystem;

/// The output directory exists and is not empty, and overwrite was not asked for.
class OutputExists : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

/// Creates `dir`, refusing to reuse a non-empty directory unless `overwrite`.
inline void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw OutputExists(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) throw OutputExists(dir.string() + " is not empty; pass --overwrite to replace its contents");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string prices_csv(const SessionLog& log) {
  std::ostringstream out;
  out << "round,price,volume,fundamental_value\n";
  for (const auto* r : log.main_records()) {
    out << r->round << ',' << r->clearing.price << ',' << r->clearing.volume << ',' << r->fundamental_value << '\n';
  }
  return out.str();
}

inline nlohmann::json summary_json(const SessionLog& log) {
  nlohmann::json j;
  const auto s = price_series(log);
  nlohmann::json finals = nlohmann::json::array();
  for (const auto& f : log.final) {
    finals.push_back({{"agent", f.agent.value}, {"kind", f.kind}, {"final_value", f.final_value},
                      {"forecast_reward_cash", f.forecast_reward_cash},
                      {"lottery_payout", f.lottery_payout ? nlohmann::json(*f.lottery_payout) : nlohmann::json(nullptr)}});
  }
  j["final_values"] = finals;
  if (!s.prices.empty()) {
    const auto c = classify_market(s);
    j["mse_fundamental"] = c.mse;
    j["market_class"] = std::string(1, c.label);
    j["max_price"] = *std::max_element(s.prices.begin(), s.prices.end());
    j["min_price"] = *std::min_element(s.prices.begin(), s.prices.end());
    if (log.final.size() >= 2) {
      const auto pv = pv_variance(log);
      j["pv_variance"] = {{"round_mean", pv.round_mean}, {"final_round", pv.final_round}, {"final_value", pv.final_value}};
    }
  }
  std::size_t incidents = 0;
  for (const auto& r : log.records) {
    for (const auto& a : r.agents) incidents += a.incident ? 1 : 0;
  }
  j["incidents"] = incidents;
  return j;
}

inline void write_session(const fs::path& dir, const SessionLog& log) {
  write_text(dir / "session.jsonl", serialize(log));
  write_text(dir / "prices.csv", prices_csv(log));
  write_text(dir / "summary.json", summary_json(log).dump(2) + "\n");
  for (const auto& f : log.final) {
    char name[32];
    std::snprintf(name, sizeof name, "agent_%02u", f.agent.value);
    const auto m = dir / "memory" / name;
    write_text(m / "PLANS.txt", f.plans);
    write_text(m / "INSIGHTS.txt", f.insights);
    write_text(m / "PRACTICE_REFLECTION.txt", f.practice_reflection);
    write_text(m / "FINAL_REFLECTION.txt", f.final_reflection);
  }
}

inline SessionLog load_session(const fs::path& dir) {
  const auto path = fs::is_directory(dir) ? dir / "session.jsonl" : dir;
  try {
    return deserialize(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed session log " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
    throw ConfigError("malformed session log " + path.string() + ": " + e.what());
  }
}

// ---- text export -----------------------------------------------------------

struct TextDocument {
  std::string source;
  std::string agent;
  std::string round;
  std::string text;
};

/// Memory texts as documents. A PLANS or INSIGHTS text is emitted in the
/// round it was written (unchanged carry-overs and empty texts are skipped);
/// the final reflection is emitted with round END.
inline std::vector<TextDocument> export_documents(const SessionLog& log, const std::string& session_label,
                                                  bool include_practice = false) {
  std::vector<TextDocument> docs;
  const std::size_t n = log.final.size();
  std::vector<std::string> last_plans(n);
  std::vector<std::string> last_insights(n);
  auto source = [&](std::size_t i) { return log.final[i].kind; };
  auto agent = [&](std::size_t i) { return session_label + ":" + std::to_string(i); };
  for (const auto& r : log.records) {
    const bool keep = include_practice || r.phase == Phase::kMain;
    for (std::size_t i = 0; i < r.agents.size() && i < n; ++i) {
      const auto& a = r.agents[i];
      const std::string round = (r.phase == Phase::kPractice ? "P" : "") + std::to_string(r.round);
      if (a.plans != last_plans[i]) {
        if (keep && !a.plans.empty()) docs.push_back({source(i), agent(i), round, a.plans});
        last_plans[i] = a.plans;
      }
      if (a.insights != last_insights[i]) {
        if (keep && !a.insights.empty()) docs.push_back({source(i), agent(i), round, a.insights});
        last_insights[i] = a.insights;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (include_practice && !log.final[i].practice_reflection.empty()) {
      docs.push_back({source(i), agent(i), "PRACTICE_END", log.final[i].practice_reflection});
    }
    if (!log.final[i].final_reflection.empty()) docs.push_back({source(i), agent(i), "END", log.final[i].final_reflection});
  }
  return docs;
}

inline std::string documents_csv(const std::vector<TextDocument>& docs) {
  std::string out = "source,agent,round,text\n";
  for (const auto& d : docs) {
    out += csv_field(d.source) + "," + csv_field(d.agent) + "," + csv_field(d.round) + "," + csv_field(d.text) + "\n";
  }
  return out;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsRow {
  std::string session;
  std::size_t rounds = 0;
  double mse = 0.0;
  std::optional<double> pcc;
  std::optional<double> pv_round_mean;
  std::optional<double> pv_final_round;
  std::optional<double> pv_final_value;
  char market_class = 'E';
};

inline MetricsRow metrics_row(const std::string& label, const PriceSeries& s, const std::map<int, double>* reference) {
  MetricsRow m;
  m.session = label;
  m.rounds = s.prices.size();
  const auto c = classify_market(s);
  m.mse = c.mse;
  m.market_class = c.label;
  if (reference != nullptr) m.pcc = pcc_against(s, *reference);
  return m;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "session,rounds,mse_fundamental,pcc_reference,pv_variance_round_mean,pv_variance_final_round,"
         "pv_variance_final_value,market_class\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "N/A";
    }
  };
  for (const auto& r : rows) {
    out << csv_field(r.session) << ',' << r.rounds << ',' << r.mse << ',';
    opt(r.pcc);
    out << ',';
    opt(r.pv_round_mean);
    out << ',';
    opt(r.pv_final_round);
    out << ',';
    opt(r.pv_final_value);
    out << ',' << r.market_class << '\n';
  }
  return out.str();
}

/// Per-session rows plus, for several sessions, a pooled row over the
/// round-by-round mean price.
inline std::vector<MetricsRow> session_metrics(const std::vector<std::pair<std::string, SessionLog>>& sessions,
                                               const std::map<int, double>* reference) {
  std::vector<MetricsRow> rows;
  std::map<int, std::vector<double>> by_round_price;
  std::map<int, std::vector<double>> by_round_fv;
  std::vector<double> pv_means;
  std::vector<double> pv_finals;
  std::vector<double> pv_values;
  for (const auto& [label, log] : sessions) {
    const auto s = price_series(log);
    if (s.prices.empty()) throw ConfigError("session " + label + " has no main-phase rounds");
    auto row = metrics_row(label, s, reference);
    if (log.final.size() >= 2) {
      const auto pv = pv_variance(log);
      row.pv_round_mean = pv.round_mean;
      row.pv_final_round = pv.final_round;
      row.pv_final_value = pv.final_value;
      pv_means.push_back(pv.round_mean);
      pv_finals.push_back(pv.final_round);
      pv_values.push_back(pv.final_value);
    }
    rows.push_back(row);
    for (std::size_t i = 0; i < s.rounds.size(); ++i) {
      by_round_price[s.rounds[i]].push_back(s.prices[i]);
      by_round_fv[s.rounds[i]].push_back(s.fundamental[i]);
    }
  }
  if (sessions.size() > 1) {
    PriceSeries pooled;
    for (const auto& [round, prices] : by_round_price) {
      pooled.rounds.push_back(round);
      pooled.prices.push_back(stats::mean(prices));
      pooled.fundamental.push_back(stats::mean(by_round_fv[round]));
    }
    try {
      pooled.validate();
    } catch (const std::invalid_argument&) {
      throw ConfigError("sessions cover non-contiguous rounds; cannot pool");
    }
    auto row = metrics_row("pooled", pooled, reference);
    if (!pv_means.empty()) {
      row.pv_round_mean = stats::mean(pv_means);
      row.pv_final_round = stats::mean(pv_finals);
      row.pv_final_value = stats::mean(pv_values);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bubblelab
