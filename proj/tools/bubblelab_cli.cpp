// bubblelab: run experimental asset-market sessions, replay recorded model
// exchanges, and analyze the results.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bubblelab/analysis.hpp"
#include "bubblelab/http_transport.hpp"
#include "bubblelab/llm_agent.hpp"
#include "bubblelab/roster.hpp"
#include "bubblelab/session.hpp"
#include "bubblelab/session_io.hpp"
#include "bubblelab/stub_transport.hpp"

namespace {

using namespace bubblelab;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigFailure = 2,
  kTransportFailure = 3,
  kReplayMismatchFailure = 4,
};

struct RunOptions {
  std::string config_path;
  std::string roster;
  std::string out;
  bool overwrite = false;
  bool parallel = false;
  std::string profiles_path;
  std::string cassette_mode;
  std::string cassette_path;
  std::string prior;
  int stub_malformed = 7;
  std::vector<std::uint64_t> batch_seeds;
  int jobs = 1;

  std::optional<std::uint64_t> seed;
  std::optional<int> main_rounds;
  std::optional<int> practice_rounds;
  std::optional<int> n_agents;
  std::string shock;
  std::optional<int> shock_round;
  bool risk = false;
};

SessionConfig resolve_config(const RunOptions& o) {
  SessionConfig c;
  if (!o.config_path.empty()) {
    try {
      c = nlohmann::json::parse(read_text(o.config_path), nullptr, true, true).get<SessionConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + o.config_path + ": " + e.what());
    }
  }
  if (o.seed) c.rng_seed = *o.seed;
  if (o.main_rounds) c.main_rounds = *o.main_rounds;
  if (o.practice_rounds) c.practice_rounds = *o.practice_rounds;
  if (o.n_agents) c.n_agents = *o.n_agents;
  if (o.shock == "none") {
    c.shock.reset();
  } else if (o.shock == "double" || o.shock == "halve") {
    c.shock = ShockConfig{c.shock ? c.shock->round : 15, o.shock == "double" ? ShockFactor::kDouble : ShockFactor::kHalve};
  } else if (!o.shock.empty()) {
    throw ConfigError("--shock must be double, halve or none");
  }
  if (o.shock_round) {
    if (!c.shock) throw ConfigError("--shock-round needs a shock (set --shock)");
    c.shock->round = *o.shock_round;
  }
  if (o.risk && !c.risk_elicitation) c.risk_elicitation = RiskElicitationConfig{};
  c.validate();
  return c;
}

std::map<std::string, ProviderProfile> load_profiles(const std::string& path) {
  std::map<std::string, ProviderProfile> out;
  out["stub"] = ProviderProfile{};
  if (path.empty()) return out;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path), nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("profiles " + path + ": " + e.what());
  }
  if (j.is_object() && j.contains("profiles")) j = j.at("profiles");
  if (!j.is_array()) throw ConfigError("profiles file must hold a list of provider profiles");
  for (const auto& p : j) {
    auto profile = p.get<ProviderProfile>();
    out[profile.name] = profile;
  }
  return out;
}

/// Profile metadata safe to persist: no header values, only the name of the
/// environment variable that holds the credential.
nlohmann::json public_profile(const ProviderProfile& p) {
  nlohmann::json j = p;
  j.erase("headers");
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [k, _] : p.headers) names.push_back(k);
  j["header_names"] = names;
  return j;
}

struct PreparedRun {
  SessionConfig config;
  std::vector<std::unique_ptr<Agent>> agents;
  std::map<std::string, std::shared_ptr<Gateway>> gateways;
  std::shared_ptr<Cassette> cassette;
  CassetteMode mode = CassetteMode::kPassthrough;
  EngineOptions engine;
  nlohmann::json profiles_used = nlohmann::json::object();
};

PreparedRun prepare(const RunOptions& o, const SessionConfig& config, const std::string& roster_spec,
                    const fs::path& out_dir) {
  PreparedRun run;
  run.config = config;
  const auto entries = parse_roster(roster_spec);
  bool has_llm = false;
  for (const auto& e : entries) has_llm |= e.kind.rfind("llm:", 0) == 0;

  run.mode = o.cassette_mode.empty() ? (has_llm ? CassetteMode::kRecord : CassetteMode::kPassthrough)
                                     : cassette_mode_from_string(o.cassette_mode);
  if (run.mode == CassetteMode::kReplay) {
    const fs::path path = o.cassette_path.empty() ? out_dir / "cassette.jsonl" : fs::path(o.cassette_path);
    run.cassette = Cassette::load(path.string());
  } else {
    run.cassette = std::make_shared<Cassette>();
  }

  const auto profiles = has_llm ? load_profiles(o.profiles_path) : std::map<std::string, ProviderProfile>{};
  auto factory = [&](const std::string& name, std::uint32_t index) -> std::unique_ptr<Agent> {
    auto& gateway = run.gateways[name];
    if (!gateway) {
      const auto it = profiles.find(name);
      if (it == profiles.end()) throw ConfigError("unknown provider profile '" + name + "'");
      std::shared_ptr<Transport> transport;
      if (run.mode != CassetteMode::kReplay) {
        if (name == "stub") {
          transport = std::make_shared<StubTransport>(o.stub_malformed);
        } else {
          if (it->second.endpoint.empty()) throw ConfigError("profile '" + name + "' has no endpoint");
          transport = std::make_shared<HttpTransport>();
        }
      }
      gateway = std::make_shared<Gateway>(it->second, transport, run.cassette, run.mode);
      run.profiles_used[name] = public_profile(it->second);
    }
    return std::make_unique<LlmAgent>(gateway, index, run.config);
  };
  run.agents = build_roster(entries, run.config, factory);

  run.engine.parallel_agents = o.parallel;
  run.engine.provenance.extra = {{"roster_spec", roster_spec}, {"profiles", run.profiles_used}};
  if (!o.prior.empty()) run.engine.prior = experience_from(load_session(o.prior));
  return run;
}

SessionLog execute(PreparedRun& run) {
  auto log = run_session(run.config, std::move(run.agents), run.engine);
  if (!run.gateways.empty()) log.provenance.cassette_ids = {run.cassette->id()};
  return log;
}

nlohmann::json usage_json(const PreparedRun& run) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, g] : run.gateways) {
    nlohmann::json models = nlohmann::json::object();
    for (const auto& [model, u] : g->usage()) {
      models[model] = {{"calls", u.calls}, {"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
    }
    j[name] = {{"models", models}, {"transport_calls", g->transport_calls()}};
  }
  return j;
}

int run_one(const RunOptions& o, SessionConfig config, const fs::path& out_dir) {
  const std::string roster = o.roster.empty() ? std::to_string(config.n_agents) + "xfundamentalist" : o.roster;
  // Inputs (a replay cassette may live in out_dir) are read before the directory is reset.
  auto run = prepare(o, config, roster, out_dir);
  prepare_output_dir(out_dir, o.overwrite);
  const auto log = execute(run);

  nlohmann::json manifest = {{"config_path", o.config_path},
                             {"roster", roster},
                             {"cassette_mode", run.mode == CassetteMode::kRecord   ? "record"
                                               : run.mode == CassetteMode::kReplay ? "replay"
                                                                                   : "passthrough"},
                             {"output_dir", out_dir.string()},
                             {"seed", config.rng_seed},
                             {"parallel_agents", o.parallel},
                             {"prior_session", o.prior},
                             {"profiles", run.profiles_used},
                             {"config", config}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  write_session(out_dir, log);
  if (!run.gateways.empty()) {
    write_text(out_dir / "usage.json", usage_json(run).dump(2) + "\n");
    if (run.mode != CassetteMode::kPassthrough) run.cassette->save((out_dir / "cassette.jsonl").string());
  }
  const auto summary = summary_json(log);
  std::cout << out_dir.string() << ": " << config.main_rounds << " rounds, MSE "
            << summary.value("mse_fundamental", 0.0) << ", class " << summary.value("market_class", "-") << ", "
            << summary.value("incidents", 0) << " incidents\n";
  return kOk;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ReplayMismatch& e) {
    std::cerr << "replay mismatch: " << e.what() << "\n";
    return kReplayMismatchFailure;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kTransportFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int cmd_run(const RunOptions& o) {
  return guarded([&] {
    const auto base = resolve_config(o);
    if (o.out.empty()) throw ConfigError("--out is required");
    if (o.batch_seeds.empty()) return run_one(o, base, o.out);

    // Batch: one child process per seed, at most `jobs` at a time.
    prepare_output_dir(o.out, o.overwrite);
    std::map<pid_t, std::uint64_t> running;
    int worst = kOk;
    auto reap = [&] {
      int status = 0;
      const pid_t pid = ::wait(&status);
      if (pid <= 0) return;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kFailure;
      if (code != kOk) {
        std::cerr << "seed " << running[pid] << " failed with exit code " << code << "\n";
        if (worst == kOk) worst = code;
      }
      running.erase(pid);
    };
    for (const auto seed : o.batch_seeds) {
      while (static_cast<int>(running.size()) >= std::max(1, o.jobs)) reap();
      std::cout.flush();
      const pid_t pid = ::fork();
      if (pid < 0) throw std::runtime_error("fork failed");
      if (pid == 0) {
        auto config = base;
        config.rng_seed = seed;
        const int code = guarded([&] { return run_one(o, config, fs::path(o.out) / ("seed_" + std::to_string(seed))); });
        std::cout.flush();
        std::_Exit(code);
      }
      running[pid] = seed;
    }
    while (!running.empty()) reap();
    return worst;
  });
}

int cmd_replay_verify(const std::string& dir, const std::string& profiles_path) {
  return guarded([&] {
    const fs::path session(dir);
    const auto manifest = nlohmann::json::parse(read_text(session / "manifest.json"));
    const auto recorded_text = read_text(session / "session.jsonl");
    const auto recorded = deserialize(recorded_text);

    RunOptions o;
    o.cassette_mode = "replay";
    o.profiles_path = profiles_path;
    o.parallel = manifest.value("parallel_agents", false);
    o.prior = manifest.value("prior_session", std::string());
    if (!fs::exists(session / "cassette.jsonl")) throw ConfigError(dir + " has no cassette.jsonl to replay");

    // Profiles come from the manifest unless a file overrides them.
    std::string tmp_profiles;
    if (profiles_path.empty() && manifest.contains("profiles")) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& [name, p] : manifest.at("profiles").items()) {
        auto q = p;
        // Header values are not persisted; names alone keep the provenance identical.
        q["headers"] = nlohmann::json::object();
        for (const auto& h : p.value("header_names", nlohmann::json::array())) q["headers"][h.get<std::string>()] = "";
        q.erase("header_names");
        list.push_back(q);
      }
      tmp_profiles = (fs::temp_directory_path() / ("bubblelab_profiles_" + std::to_string(::getpid()) + ".json")).string();
      write_text(tmp_profiles, list.dump());
      o.profiles_path = tmp_profiles;
    }
    auto run = prepare(o, recorded.config, manifest.at("roster").get<std::string>(), session);
    if (!tmp_profiles.empty()) fs::remove(tmp_profiles);
    const auto replayed = serialize(execute(run));

    std::int64_t calls = 0;
    for (const auto& [_, g] : run.gateways) calls += g->transport_calls();
    if (replayed != recorded_text) {
      std::size_t at = 0;
      while (at < replayed.size() && at < recorded_text.size() && replayed[at] == recorded_text[at]) ++at;
      std::cerr << "replay mismatch: session log differs from byte " << at << "\n";
      return static_cast<int>(kReplayMismatchFailure);
    }
    std::cout << "replay verified: " << recorded_text.size() << " bytes identical, " << calls << " network calls\n";
    return static_cast<int>(kOk);
  });
}

int cmd_analyze(const std::vector<std::string>& dirs, const std::string& reference_path, const std::string& out,
                bool overwrite) {
  return guarded([&] {
    std::vector<std::pair<std::string, SessionLog>> sessions;
    std::set<std::string> labels;
    for (const auto& d : dirs) {
      std::string label = fs::path(d).filename().string();
      if (label.empty()) label = fs::path(d).parent_path().filename().string();
      while (labels.count(label)) label += "_";
      labels.insert(label);
      sessions.emplace_back(label, load_session(d));
    }
    std::optional<std::map<int, double>> reference;
    if (!reference_path.empty()) {
      try {
        reference = parse_reference_csv(read_text(reference_path));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    prepare_output_dir(out, overwrite);
    const auto rows = session_metrics(sessions, reference ? &*reference : nullptr);
    write_text(fs::path(out) / "metrics.csv", metrics_csv(rows));

    std::vector<AgentRationality> agents;
    std::string errors_csv = "session,agent,group,round,horizon,forecast,error\n";
    for (const auto& [label, log] : sessions) {
      for (auto a : rationality_by_agent(log)) agents.push_back(std::move(a));
      for (const auto& e : forecast_errors(log)) {
        std::ostringstream line;
        line << csv_field(label) << ',' << e.agent << ',' << csv_field(log.final.at(e.agent).kind) << ',' << e.round << ','
             << e.horizon << ',' << e.forecast << ',' << e.error << '\n';
        errors_csv += line.str();
      }
    }
    const auto report = aggregate_report(std::move(agents));
    write_text(fs::path(out) / "rationality.json", to_json(report).dump(2) + "\n");
    write_text(fs::path(out) / "rationality.csv", report_csv(report));
    write_text(fs::path(out) / "forecast_errors.csv", errors_csv);
    std::cout << metrics_csv(rows);
    return static_cast<int>(kOk);
  });
}

int cmd_export_text(const std::vector<std::string>& dirs, const std::string& out, bool include_practice, bool overwrite) {
  return guarded([&] {
    if (fs::exists(out) && !overwrite) throw OutputExists(out + " exists; pass --overwrite to replace it");
    std::vector<TextDocument> docs;
    for (const auto& d : dirs) {
      std::string label = fs::path(d).filename().string();
      if (label.empty()) label = fs::path(d).parent_path().filename().string();
      for (auto& doc : export_documents(load_session(d), label, include_practice)) docs.push_back(std::move(doc));
    }
    write_text(out, documents_csv(docs));
    std::cout << "wrote " << docs.size() << " documents to " << out << "\n";
    return static_cast<int>(kOk);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experimental asset-market sessions with scripted and language-model traders."};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run one session (or a batch of seeds) into an output directory");
  run_cmd->add_option("-c,--config", run.config_path, "Session config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("-r,--roster", run.roster, "Roster, e.g. 14xmomentum,6xfundamentalist or 4xllm:stub");
  run_cmd->add_option("-o,--out", run.out, "Output directory")->required();
  run_cmd->add_flag("--overwrite", run.overwrite, "Replace a non-empty output directory");
  run_cmd->add_option("--seed", run.seed, "Override rng_seed");
  run_cmd->add_option("--rounds", run.main_rounds, "Override main_rounds");
  run_cmd->add_option("--practice-rounds", run.practice_rounds, "Override practice_rounds");
  run_cmd->add_option("--agents", run.n_agents, "Override n_agents");
  run_cmd->add_option("--shock", run.shock, "Fundamental-value shock: double, halve or none");
  run_cmd->add_option("--shock-round", run.shock_round, "Round the shock takes effect");
  run_cmd->add_flag("--risk-elicitation", run.risk, "Present lottery pairs between rounds");
  run_cmd->add_option("--prior", run.prior, "Earlier session directory (experienced treatment)");
  run_cmd->add_flag("--parallel", run.parallel, "Query agents concurrently within a round");
  run_cmd->add_option("--profiles", run.profiles_path, "Provider profiles (JSON list)")->check(CLI::ExistingFile);
  run_cmd->add_option("--cassette-mode", run.cassette_mode, "record, replay or passthrough");
  run_cmd->add_option("--cassette", run.cassette_path, "Cassette to replay (default: <out>/cassette.jsonl)");
  run_cmd->add_option("--stub-malformed", run.stub_malformed, "Stub provider: every Nth first reply is unusable (0 = never)");
  run_cmd->add_option("--batch-seeds", run.batch_seeds, "Run one session per seed in child processes")->delimiter(',');
  run_cmd->add_option("--jobs", run.jobs, "Concurrent batch processes");

  std::string verify_dir;
  std::string verify_profiles;
  auto* verify_cmd = app.add_subcommand("replay-verify", "Replay a recorded session and compare logs byte for byte");
  verify_cmd->add_option("session", verify_dir, "Session directory")->required()->check(CLI::ExistingDirectory);
  verify_cmd->add_option("--profiles", verify_profiles, "Provider profiles (default: those in the manifest)");

  std::vector<std::string> analyze_dirs;
  std::string reference;
  std::string analyze_out;
  bool analyze_overwrite = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "Market metrics and forecast-rationality tests");
  analyze_cmd->add_option("sessions", analyze_dirs, "Session directories")->required()->check(CLI::ExistingPath);
  analyze_cmd->add_option("--reference", reference, "Reference price series CSV (round,price)")->check(CLI::ExistingFile);
  analyze_cmd->add_option("-o,--out", analyze_out, "Output directory")->required();
  analyze_cmd->add_flag("--overwrite", analyze_overwrite, "Replace a non-empty output directory");

  std::vector<std::string> export_dirs;
  std::string export_out;
  bool include_practice = false;
  bool export_overwrite = false;
  auto* export_cmd = app.add_subcommand("export-text", "Export memory texts as a documents CSV");
  export_cmd->add_option("sessions", export_dirs, "Session directories")->required()->check(CLI::ExistingPath);
  export_cmd->add_option("-o,--out", export_out, "Output CSV")->required();
  export_cmd->add_flag("--include-practice", include_practice, "Also export practice-phase texts");
  export_cmd->add_flag("--overwrite", export_overwrite, "Replace an existing output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  if (*run_cmd) return cmd_run(run);
  if (*verify_cmd) return cmd_replay_verify(verify_dir, verify_profiles);
  if (*analyze_cmd) return cmd_analyze(analyze_dirs, reference, analyze_out, analyze_overwrite);
  if (*export_cmd) return cmd_export_text(export_dirs, export_out, include_practice, export_overwrite);
  return kFailure;
}
