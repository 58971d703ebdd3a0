// hpyts: run strategy races, serve the advisor API, drive sessions.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

// Eigen before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "hpyts/http.hpp"
#include "hpyts/population.hpp"
#include "hpyts/service.hpp"
#include "hpyts/sim.hpp"

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hpyts::ConfigError("", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw hpyts::ConfigError(path, e.what());
  }
}

std::vector<hpyts::ArmLabelCounts> read_counts_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hpyts::ConfigError("", "cannot open '" + path + "'");
  try {
    return hpyts::read_arm_label_counts(in);
  } catch (const std::invalid_argument& e) {
    throw hpyts::ConfigError(path, e.what());
  }
}

json counts_json(const hpyts::ArmLabelCounts& a) {
  json c = json::object();
  for (const auto& [label, n] : a.counts) c[label] = n;
  return c;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> T;
  std::optional<int> R;
  std::vector<std::string> strategies;
};

int cmd_simulate(const SimulateArgs& a) {
  hpyts::ExperimentConfig cfg;
  try {
    if (a.config.empty() == a.preset.empty())
      throw hpyts::ConfigError("", "give exactly one of --config or --preset");
    cfg = a.config.empty() ? hpyts::preset_config(a.preset) : hpyts::load_experiment_config(a.config);
    if (a.seed) {
      cfg.seed = *a.seed;
    } else if (auto s = env("HPYTS_SEED")) {
      try {
        cfg.seed = std::stoull(*s);
      } catch (const std::exception&) {
        throw hpyts::ConfigError("HPYTS_SEED", "not an unsigned integer: '" + *s + "'");
      }
    }
    if (a.threads) cfg.threads = *a.threads;
    if (a.T) cfg.T = *a.T;
    if (a.R) cfg.R = *a.R;
    if (!a.strategies.empty()) {
      cfg.strategies.clear();
      for (const auto& s : a.strategies) cfg.strategies.push_back(hpyts::parse_strategy(s));
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const auto result = hpyts::run_experiment(cfg);
    hpyts::write_outputs(a.out, result, cfg);
    json report{{"out", a.out}, {"seed", cfg.seed}, {"final", json::object()}};
    for (const auto& row : result.summary(cfg.strategies))
      if (row.step == cfg.T) report["final"][hpyts::to_string(row.strategy)] = {{"mean", row.mean}, {"sd", row.sd}};
    std::cout << report.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string addr = "127.0.0.1:8080";
  std::string data_dir;
  std::string token;
};

int cmd_serve(const ServeArgs& a) {
  std::string host = a.addr;
  int port = 8080;
  if (const auto colon = a.addr.rfind(':'); colon != std::string::npos) {
    host = a.addr.substr(0, colon);
    try {
      port = std::stoi(a.addr.substr(colon + 1));
    } catch (const std::exception&) {
      std::cerr << "config error: bad --addr '" << a.addr << "'\n";
      return kExitConfig;
    }
  }
  std::string data_dir = a.data_dir;
  if (data_dir.empty()) data_dir = env("HPYTS_DATA_DIR").value_or("hpyts-data");
  std::string token = a.token;
  if (token.empty()) token = env("HPYTS_TOKEN").value_or("");

  try {
    hpyts::AdvisorService service({data_dir, true});
    httplib::Server server;
    hpyts::install_routes(server, service, {token});
    // SO_REUSEADDR only: httplib's default SO_REUSEPORT would let us share a busy port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    if (!server.bind_to_port(host, port)) {
      std::cerr << "error: cannot bind " << host << ':' << port << " (port busy?)\n";
      return kExitRuntime;
    }
    std::cerr << "hpyts: serving on " << host << ':' << port << ", data in " << data_dir << ", "
              << service.session_ids().size() << " session(s) restored\n";
    if (!server.listen_after_bind()) {
      std::cerr << "error: server stopped unexpectedly\n";
      return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SessionArgs {
  std::string url = "http://127.0.0.1:8080";
  std::string token;
  std::string id;
  std::string csv;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode = "incidence";
  int M = 25;
  std::string arm;
};

int print_response(const httplib::Result& res) {
  if (!res) {
    std::cerr << "error: request failed: " << httplib::to_string(res.error()) << '\n';
    return kExitRuntime;
  }
  std::cout << res->body << '\n';
  if (res->status >= 400) {
    std::cerr << "error: server answered " << res->status << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

httplib::Headers auth_headers(const SessionArgs& a) {
  std::string token = a.token.empty() ? env("HPYTS_TOKEN").value_or("") : a.token;
  if (token.empty()) return {};
  return {{"Authorization", "Bearer " + token}};
}

int cmd_session(const std::string& action, const SessionArgs& a) {
  json body;
  std::string path;
  try {
    if (action == "create") {
      if (a.csv.empty()) throw hpyts::ConfigError("--csv", "initial counts CSV is required");
      const auto rows = read_counts_csv(a.csv);
      if (rows.empty()) throw hpyts::ConfigError(a.csv, "no rows");
      body = json{{"arms", json::array()}, {"initial", json::object()}};
      for (const auto& r : rows) {
        body["arms"].push_back(r.arm);
        body["initial"][r.arm] = counts_json(r);
      }
      if (a.seed) body["seed"] = *a.seed;
      if (!a.config.empty()) body["config"] = read_json_file(a.config);
      path = "/sessions";
    } else if (action == "recommend") {
      body = json{{"mode", a.mode}, {"M", a.M}};
      if (a.seed) body["seed"] = *a.seed;
      path = "/sessions/" + a.id + "/recommend";
    } else if (action == "observe") {
      if (a.csv.empty()) throw hpyts::ConfigError("--csv", "observed counts CSV is required");
      const auto rows = read_counts_csv(a.csv);
      const hpyts::ArmLabelCounts* pick = nullptr;
      for (const auto& r : rows)
        if (a.arm.empty() ? rows.size() == 1 : r.arm == a.arm) pick = &r;
      if (!pick)
        throw hpyts::ConfigError("--arm", a.arm.empty() ? "CSV holds several arms; choose one with --arm"
                                                        : "arm '" + a.arm + "' not in the CSV");
      body = json{{"arm", pick->arm}, {"counts", counts_json(*pick)}};
      path = "/sessions/" + a.id + "/observations";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  httplib::Client client(a.url);
  client.set_read_timeout(600, 0);
  const auto headers = auth_headers(a);
  if (action == "forecast") return print_response(client.Get("/sessions/" + a.id + "/forecast?M=" + std::to_string(a.M), headers));
  if (action == "get") return print_response(client.Get("/sessions/" + a.id, headers));
  if (action == "history") return print_response(client.Get("/sessions/" + a.id + "/history", headers));
  return print_response(client.Post(path, headers, body.dump(), "application/json"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hpyts: hierarchical Pitman-Yor Thompson sampling for species discovery"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a strategy race and write trace.csv / summary.csv");
  simulate->add_option("--config", sim.config, "Experiment config (JSON)");
  simulate->add_option("--preset", sim.preset, "Bundled preset: paper-fig1, paper-fig1-t100, desk-zipf, desk-replay");
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Master seed (overrides config and HPYTS_SEED)");
  simulate->add_option("--threads", sim.threads, "Worker threads for replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--T", sim.T, "Override the number of steps");
  simulate->add_option("--R", sim.R, "Override the number of replicates");
  simulate->add_option("--strategies", sim.strategies, "Override the strategy list");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the advisor HTTP service");
  serve_cmd->add_option("--addr", serve.addr, "host:port")->capture_default_str();
  serve_cmd->add_option("--data-dir", serve.data_dir, "Session storage (default $HPYTS_DATA_DIR or ./hpyts-data)");
  serve_cmd->add_option("--token", serve.token, "Shared bearer token (default $HPYTS_TOKEN)");

  SessionArgs sess;
  std::string action;
  auto* session = app.add_subcommand("session", "Talk to a running advisor service");
  session->require_subcommand(1);
  auto common = [&sess](CLI::App* c, bool needs_id) {
    c->add_option("--url", sess.url, "Service base URL")->capture_default_str();
    c->add_option("--token", sess.token, "Bearer token (default $HPYTS_TOKEN)");
    if (needs_id) c->add_option("--id", sess.id, "Session id")->required();
  };
  auto* s_create = session->add_subcommand("create", "Create a session from an arm,label[,count] CSV");
  common(s_create, false);
  s_create->add_option("--csv", sess.csv, "Initial counts CSV")->required();
  s_create->add_option("--config", sess.config, "Session config JSON");
  s_create->add_option("--seed", sess.seed, "Master seed");
  auto* s_rec = session->add_subcommand("recommend", "Ask for the next arm or allocation");
  common(s_rec, true);
  s_rec->add_option("--mode", sess.mode, "incidence or delayed")->capture_default_str();
  s_rec->add_option("--M", sess.M, "Batch size")->capture_default_str();
  s_rec->add_option("--seed", sess.seed, "Request seed");
  auto* s_obs = session->add_subcommand("observe", "Post an observed batch from an arm,label[,count] CSV");
  common(s_obs, true);
  s_obs->add_option("--csv", sess.csv, "Observed counts CSV")->required();
  s_obs->add_option("--arm", sess.arm, "Arm to take from the CSV");
  auto* s_fc = session->add_subcommand("forecast", "Per-arm forecast of new species");
  common(s_fc, true);
  s_fc->add_option("--M", sess.M, "Batch size")->capture_default_str();
  auto* s_get = session->add_subcommand("get", "Session summary");
  common(s_get, true);
  auto* s_hist = session->add_subcommand("history", "Event log and discovery curve");
  common(s_hist, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (simulate->parsed()) return cmd_simulate(sim);
  if (serve_cmd->parsed()) return cmd_serve(serve);
  for (auto* c : {s_create, s_rec, s_obs, s_fc, s_get, s_hist})
    if (c->parsed()) return cmd_session(c->get_name(), sess);
  return kExitConfig;
}
