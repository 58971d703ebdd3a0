#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

// hpyts (and Eigen) before httplib: <resolv.h> defines a `_res` macro.
#include "hpyts/http.hpp"
#include "hpyts/service.hpp"

#include "httplib.h"

using namespace hpyts;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hpyts-test-service-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json light_config() {
  return json{{"particles", 10},
              {"gibbs", {{"n_sweeps", 40}, {"burn_in", 20}}},
              {"snapshot_every", 3},
              {"forecast_M", 5},
              {"forecast_draws", 20}};
}

json create_request(std::uint64_t seed = 11) {
  return json{{"arms", {"embryo", "fetal"}},
              {"initial", {{"embryo", {{"a", 3}, {"b", 1}}}, {"fetal", {{"a", 1}, {"c", 2}, {"d", 1}}}}},
              {"seed", seed},
              {"config", light_config()}};
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string out_file = (fs::temp_directory_path() / "hpyts-test-service-cli.out").string();
  const int status = std::system((std::string(HPYTS_CLI) + " " + args + " >" + out_file + " 2>/dev/null").c_str());
  if (output) {
    std::ifstream in(out_file);
    output->assign(std::istreambuf_iterator<char>(in), {});
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct LiveServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LiveServer(AdvisorService& service, HttpOptions options = {}) {
    install_routes(server, service, std::move(options));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("canonical label order") {
  CHECK(canonical_labels({{"b", 2}, {"a", 1}}) == std::vector<std::string>{"a", "b", "b"});
  CHECK(canonical_labels({}).empty());
}

TEST_CASE("create, recommend, observe, forecast") {
  AdvisorService service({scratch("flow"), true});
  const auto created = service.create_session(create_request());
  const std::string id = created.at("id");
  CHECK(created.at("forecast").at("arms").size() == 2);
  CHECK(created.at("session").at("seq") == 0);
  CHECK(created.at("session").at("distinct_total") == 4);
  CHECK(service.session_ids() == std::vector<std::string>{id});

  const auto rec = service.recommend(id, json{{"mode", "incidence"}, {"M", 25}});
  CHECK(rec.at("kind") == "recommended");
  CHECK(rec.at("arm").get<int>() >= 0);
  CHECK(rec.at("expected_new").size() == 2);
  CHECK(rec.contains("seed"));

  const auto delayed = service.recommend(id, json{{"mode", "delayed"}, {"M", 100}});
  int total = 0;
  for (const auto& [arm, c] : delayed.at("allocation").items()) total += c.get<int>();
  CHECK(total == 100);

  const auto obs = service.observe(id, json{{"arm", "fetal"}, {"counts", {{"e", 2}, {"a", 1}}}});
  CHECK(obs.at("seq") == 3);
  CHECK(obs.at("new_species") == 1);
  CHECK(obs.at("distinct_total") == 5);
  CHECK(obs.at("ess").get<double>() > 0.0);
  CHECK(service.observe(id, json{{"arm", 0}, {"counts", {{"z", 1}}}}).at("seq") == 4);

  const auto zero = service.forecast(id, 0);
  for (const auto& a : zero.at("arms")) CHECK(a.at("mean") == 0.0);
  double previous = 0.0;
  for (int M : {1, 5, 20, 80}) {
    const auto f = service.forecast(id, M);
    const double mean = f.at("arms")[1].at("mean");
    CHECK(mean >= previous);
    CHECK(mean <= M);
    previous = mean;
  }
  const double p1 = service.forecast(id, 1).at("arms")[0].at("mean");
  CHECK(p1 > 0.0);
  CHECK(p1 < 1.0);

  const auto history = service.history(id);
  CHECK(history.at("events").size() == 5);
  CHECK(history.at("curve").size() == 3);
  for (std::size_t i = 0; i < 5; ++i) CHECK(history.at("events")[i].at("seq") == i);
}

TEST_CASE("minimal single-arm session") {
  AdvisorService service({scratch("single"), true});
  const auto created = service.create_session(
      json{{"arms", {"only"}}, {"initial", {{"only", {{"x", 1}}}}}, {"config", light_config()}});
  CHECK(created.at("forecast").at("arms").size() == 1);
  CHECK(service.recommend(created.at("id"), json{{"M", 3}}).at("arm") == 0);
}

TEST_CASE("error statuses") {
  AdvisorService service({scratch("errors"), true});
  const std::string id = service.create_session(create_request()).at("id");
  CHECK(status_of([&] { service.get_session("nope"); }) == 404);
  CHECK(status_of([&] { service.recommend("nope", json{{"M", 3}}); }) == 404);
  CHECK(status_of([&] { service.forecast("nope", 3); }) == 404);
  CHECK(status_of([&] { service.recommend(id, json{{"M", 0}}); }) == 400);
  CHECK(status_of([&] { service.recommend(id, json{{"M", "x"}}); }) == 400);
  CHECK(status_of([&] { service.recommend(id, json{{"M", 3}, {"mode", "batch"}}); }) == 400);
  CHECK(status_of([&] { service.forecast(id, -1); }) == 400);
  CHECK(status_of([&] { service.observe(id, json{{"arm", "fetal"}, {"counts", json::object()}}); }) == 422);
  CHECK(status_of([&] { service.observe(id, json{{"arm", "fetal"}, {"counts", {{"a", -2}}}}); }) == 422);
  CHECK(status_of([&] { service.observe(id, json{{"arm", "lung"}, {"counts", {{"a", 1}}}}); }) == 422);
  CHECK(status_of([&] { service.observe(id, json{{"arm", 7}, {"counts", {{"a", 1}}}}); }) == 422);

  auto req = create_request();
  req["arms"] = {"a", "a"};
  CHECK(status_of([&] { service.create_session(req); }) == 422);
  req = create_request();
  req["initial"]["fetal"] = json::object();
  CHECK(status_of([&] { service.create_session(req); }) == 400);
  req = create_request();
  req["initial"].erase("fetal");
  CHECK(status_of([&] { service.create_session(req); }) == 400);
  req = create_request();
  req["initial"]["embryo"]["a"] = 1.5;
  CHECK(status_of([&] { service.create_session(req); }) == 422);
  req = create_request();
  req["config"]["particles"] = 1;
  CHECK(status_of([&] { service.create_session(req); }) == 422);
  CHECK(service.session_ids().size() == 1);
}

TEST_CASE("recommend leaves the posterior untouched") {
  AdvisorService service({scratch("readonly"), true});
  const std::string id = service.create_session(create_request()).at("id");
  const auto before = service.snapshot(id).at("particles");
  const auto a = service.recommend(id, json{{"M", 10}, {"seed", 5}});
  const auto b = service.recommend(id, json{{"M", 10}, {"seed", 5}});
  CHECK(service.snapshot(id).at("particles") == before);
  CHECK(a.at("arm") == b.at("arm"));
  CHECK(a.at("expected_new") == b.at("expected_new"));
  CHECK(a.at("seq") != b.at("seq"));
  service.observe(id, json{{"arm", 0}, {"counts", {{"q", 1}}}});
  CHECK(service.snapshot(id).at("particles") != before);
}

TEST_CASE("event-log replay reproduces the particle snapshot byte for byte") {
  const auto dir = scratch("replay");
  std::string id;
  std::string live;
  {
    AdvisorService service({dir, true});
    id = service.create_session(create_request(21)).at("id");
    service.recommend(id, json{{"M", 4}});
    for (int i = 0; i < 6; ++i)
      service.observe(id, json{{"arm", i % 2}, {"counts", {{"n" + std::to_string(i), 1}, {"a", 2}}}});
    live = service.snapshot(id).dump();
  }
  CHECK(AdvisorService::replay_snapshot(dir / id).dump() == live);
  CHECK(fs::exists(dir / id / "snapshots" / "000006.json"));

  AdvisorService restarted({dir, true});
  CHECK(restarted.snapshot(id).dump() == live);
  AdvisorService from_log({dir, false});
  CHECK(from_log.snapshot(id).dump() == live);
  CHECK(restarted.get_session(id).at("seq") == 7);
  CHECK(restarted.history(id).at("events").size() == 8);

  // The restarted service carries on exactly like the original would have.
  const auto next = restarted.observe(id, json{{"arm", 1}, {"counts", {{"zz", 1}}}});
  CHECK(next.at("seq") == 8);
  CHECK(AdvisorService::replay_snapshot(dir / id).dump() == restarted.snapshot(id).dump());
}

TEST_CASE("concurrent observers are serialized") {
  const auto dir = scratch("stress");
  AdvisorService service({dir, true});
  const std::string id = service.create_session(create_request()).at("id");
  const int per_writer = 15;
  std::vector<std::uint64_t> seqs[2];
  std::thread writers[2];
  for (int w = 0; w < 2; ++w)
    writers[w] = std::thread([&, w] {
      for (int i = 0; i < per_writer; ++i) {
        const auto r = service.observe(
            id, json{{"arm", w}, {"counts", {{"w" + std::to_string(w) + "_" + std::to_string(i), 1}}}});
        seqs[w].push_back(r.at("seq").get<std::uint64_t>());
      }
    });
  for (auto& t : writers) t.join();
  std::set<std::uint64_t> all;
  for (const auto& s : seqs) {
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] > s[i - 1]);
    all.insert(s.begin(), s.end());
  }
  CHECK(all.size() == 2 * per_writer);
  CHECK(*all.begin() == 1);
  CHECK(*all.rbegin() == 2 * per_writer);
  const auto session = service.get_session(id);
  CHECK(session.at("distinct_total") == 4 + 2 * per_writer);
  CHECK(AdvisorService::replay_snapshot(dir / id).dump() == service.snapshot(id).dump());
}

TEST_CASE("HTTP routes") {
  AdvisorService service({scratch("http"), true});
  LiveServer live(service);
  httplib::Client client("127.0.0.1", live.port);

  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto created = client.Post("/sessions", create_request().dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("id");

  auto rec = client.Post("/sessions/" + id + "/recommend", R"({"mode": "incidence", "M": 25})", "application/json");
  CHECK(rec->status == 200);
  auto obs = client.Post("/sessions/" + id + "/observations", R"({"arm": "embryo", "counts": {"k": 2}})",
                         "application/json");
  CHECK(obs->status == 200);
  CHECK(json::parse(obs->body).at("new_species") == 1);
  auto fc = client.Get("/sessions/" + id + "/forecast?M=7");
  CHECK(fc->status == 200);
  CHECK(json::parse(fc->body).at("M") == 7);
  CHECK(client.Get("/sessions/" + id + "/forecast")->status == 200);
  CHECK(client.Get("/sessions/" + id + "/history")->status == 200);
  CHECK(client.Get("/sessions/" + id)->status == 200);

  auto missing = client.Get("/sessions/nope");
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).at("code") == "not_found");
  CHECK(client.Get("/sessions/" + id + "/forecast?M=-1")->status == 400);
  CHECK(client.Get("/sessions/" + id + "/forecast?M=abc")->status == 400);
  CHECK(client.Post("/sessions/" + id + "/recommend", R"({"M": 0})", "application/json")->status == 400);
  CHECK(client.Post("/sessions/" + id + "/recommend", "{oops", "application/json")->status == 400);
  auto bad = client.Post("/sessions/" + id + "/observations", R"({"arm": "embryo", "counts": {}})", "application/json");
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body).contains("message"));
  CHECK(client.Get("/nothing-here")->status == 404);
}

TEST_CASE("HTTP bearer token") {
  AdvisorService service({scratch("token"), true});
  LiveServer live(service, HttpOptions{"s3cret"});
  httplib::Client client("127.0.0.1", live.port);
  CHECK(client.Get("/healthz")->status == 200);
  CHECK(client.Post("/sessions", create_request().dump(), "application/json")->status == 401);
  client.set_bearer_token_auth("wrong");
  CHECK(client.Get("/sessions/x")->status == 401);
  client.set_bearer_token_auth("s3cret");
  CHECK(client.Post("/sessions", create_request().dump(), "application/json")->status == 201);
}

TEST_CASE("command line serve and session") {
  const auto dir = scratch("cli");
  AdvisorService service({dir / "data", true});
  LiveServer live(service);
  const std::string url = "http://127.0.0.1:" + std::to_string(live.port);

  CHECK(run_cli("serve --addr 127.0.0.1:" + std::to_string(live.port) + " --data-dir " + (dir / "other").string()) ==
        3);

  {
    std::ofstream csv(dir / "initial.csv");
    csv << "arm,label,count\nembryo,a,3\nembryo,b,1\nfetal,c,2\n";
    std::ofstream cfg(dir / "config.json");
    cfg << light_config().dump();
  }
  std::string out;
  REQUIRE(run_cli("session create --url " + url + " --csv " + (dir / "initial.csv").string() + " --config " +
                      (dir / "config.json").string() + " --seed 4",
                  &out) == 0);
  const std::string id = json::parse(out).at("id");
  CHECK(run_cli("session recommend --url " + url + " --id " + id + " --M 10", &out) == 0);
  CHECK(json::parse(out).at("kind") == "recommended");
  {
    std::ofstream batch(dir / "batch.csv");
    batch << "fetal,c,1\nfetal,x,2\n";
  }
  CHECK(run_cli("session observe --url " + url + " --id " + id + " --arm fetal --csv " + (dir / "batch.csv").string(),
                &out) == 0);
  CHECK(json::parse(out).at("new_species") == 1);
  CHECK(run_cli("session forecast --url " + url + " --id " + id + " --M 3", &out) == 0);
  CHECK(json::parse(out).at("M") == 3);
  CHECK(run_cli("session get --url " + url + " --id missing") == 3);
  CHECK(run_cli("session recommend --url " + url + " --id " + id + " --M 0") == 3);
  CHECK(run_cli("session create --url " + url) == 2);
}
