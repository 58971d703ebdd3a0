#include "hpyts/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "hpyts/reward.hpp"

namespace hpyts {

namespace fs = std::filesystem;
using nlohmann::json;

void SessionConfig::validate(int arm_count) const {
  if (particles < 2) throw std::invalid_argument("config.particles must be >= 2");
  if (snapshot_every < 1) throw std::invalid_argument("config.snapshot_every must be >= 1");
  if (forecast_M < 0) throw std::invalid_argument("config.forecast_M must be >= 0");
  if (forecast_draws < 1) throw std::invalid_argument("config.forecast_draws must be >= 1");
  for (double q : quantiles)
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("config.quantiles must lie in [0, 1]");
  GibbsConfig g = gibbs;
  g.n_particles = particles;
  g.validate(arm_count);
}

void to_json(json& j, const SessionConfig& c) {
  j = json{{"particles", c.particles},       {"gibbs", c.gibbs},
           {"snapshot_every", c.snapshot_every}, {"forecast_M", c.forecast_M},
           {"forecast_draws", c.forecast_draws}, {"quantiles", c.quantiles}};
}

SessionConfig session_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be an object");
  SessionConfig c;
  c.particles = j.value("particles", c.particles);
  if (j.contains("gibbs")) c.gibbs = gibbs_config_from_json(j.at("gibbs"));
  c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  c.forecast_M = j.value("forecast_M", c.forecast_M);
  c.forecast_draws = j.value("forecast_draws", c.forecast_draws);
  if (j.contains("quantiles")) c.quantiles = j.at("quantiles").get<std::vector<double>>();
  c.gibbs.n_particles = c.particles;
  return c;
}

std::vector<std::string> canonical_labels(const LabelCounts& counts) {
  std::vector<std::string> out;
  for (const auto& [label, c] : counts)
    for (int i = 0; i < c; ++i) out.push_back(label);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kForecastStream = 0xF0CA57;

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string new_session_id() {
  std::random_device rd;
  const std::uint64_t x = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

[[noreturn]] void unprocessable(const std::string& message) { throw ServiceError(422, "unprocessable", message); }
[[noreturn]] void bad_request(const std::string& message) { throw ServiceError(400, "bad_request", message); }

bool is_seed(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
}

LabelCounts parse_counts(const json& j, const std::string& where) {
  if (!j.is_object()) unprocessable(where + ": counts must be an object label -> positive integer");
  LabelCounts out;
  for (const auto& [label, c] : j.items()) {
    if (label.empty()) unprocessable(where + ": empty label");
    if (!c.is_number_integer() || c.get<long long>() < 1 || c.get<long long>() > 1000000)
      unprocessable(where + ": count for '" + label + "' must be a positive integer");
    out[label] = c.get<int>();
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

struct AdvisorService::Session {
  std::string id;
  fs::path dir;
  std::vector<std::string> arms;
  SessionConfig config;
  std::uint64_t seed = 0;
  std::string created;
  std::string updated;
  std::optional<ParticleSet> particles;
  std::vector<json> events;
  std::vector<LabelCounts> observed;
  std::unordered_set<std::string> seen;
  std::vector<std::pair<std::uint64_t, int>> curve;
  LiuWestStepInfo last_info;
  mutable std::shared_mutex mutex;

  std::uint64_t next_seq() const { return events.size(); }

  int arm_index(const json& arm) const {
    if (arm.is_number_integer()) {
      const auto i = arm.get<long long>();
      if (i < 0 || i >= static_cast<long long>(arms.size())) unprocessable("arm index out of range");
      return static_cast<int>(i);
    }
    if (arm.is_string()) {
      for (std::size_t j = 0; j < arms.size(); ++j)
        if (arms[j] == arm.get<std::string>()) return static_cast<int>(j);
      unprocessable("unknown arm '" + arm.get<std::string>() + "'");
    }
    unprocessable("arm must be a name or an index");
  }

  int absorb(int arm, const LabelCounts& counts) {
    int fresh = 0;
    for (const auto& [label, c] : counts) {
      observed[arm][label] += c;
      if (seen.insert(label).second) ++fresh;
    }
    return fresh;
  }

  // Applies one event.  With `rebuild` false the particle set is left alone
  // (it has been restored from a snapshot at or after this event).
  void apply(const json& ev, bool rebuild) {
    const auto seq = ev.at("seq").get<std::uint64_t>();
    if (seq != events.size()) throw std::runtime_error("event log: sequence gap at " + std::to_string(seq));
    const auto kind = ev.at("kind").get<std::string>();
    if (kind == "created") {
      arms = ev.at("arms").get<std::vector<std::string>>();
      config = session_config_from_json(ev.at("config"));
      seed = ev.at("seed").get<std::uint64_t>();
      created = ev.at("ts").get<std::string>();
      observed.assign(arms.size(), {});
      std::vector<LabeledBatch> batches;
      for (std::size_t j = 0; j < arms.size(); ++j) {
        const auto counts = parse_counts(ev.at("initial").at(arms[j]), "initial");
        absorb(static_cast<int>(j), counts);
        batches.push_back(LabeledBatch{static_cast<int>(j), canonical_labels(counts)});
      }
      curve.emplace_back(seq, static_cast<int>(seen.size()));
      if (rebuild) {
        GibbsConfig g = config.gibbs;
        g.n_particles = config.particles;
        Rng rng(derive_seed(seed, 0));
        particles.emplace(gibbs_run(batches, static_cast<int>(arms.size()), g, rng));
      }
    } else if (kind == "observed") {
      const int arm = ev.at("arm").get<int>();
      const auto counts = parse_counts(ev.at("counts"), "observed");
      if (rebuild) {
        Rng rng(derive_seed(seed, seq));
        auto result = filter_update(*particles, LabeledBatch{arm, canonical_labels(counts)}, rng);
        particles.emplace(std::move(result.particles));
        last_info = result.info;
      }
      absorb(arm, counts);
      curve.emplace_back(seq, static_cast<int>(seen.size()));
    } else if (kind != "recommended") {
      throw std::runtime_error("event log: unknown event kind '" + kind + "'");
    }
    updated = ev.at("ts").get<std::string>();
    events.push_back(ev);
  }

  json snapshot_doc() const {
    return json{{"seq", events.empty() ? 0 : events.size() - 1}, {"particles", *particles}};
  }

  void persist(const json& ev) {
    std::ofstream out(dir / "events.jsonl", std::ios::app);
    out << ev.dump() << '\n';
    out.flush();
    if (!out) throw ServiceError(500, "storage", "cannot append to the event log");
    const auto seq = ev.at("seq").get<std::uint64_t>();
    if (seq % static_cast<std::uint64_t>(config.snapshot_every) == 0) {
      fs::create_directories(dir / "snapshots");
      char name[32];
      std::snprintf(name, sizeof name, "%06llu.json", static_cast<unsigned long long>(seq));
      std::ofstream snap(dir / "snapshots" / name);
      snap << snapshot_doc().dump() << '\n';
    }
  }

  void record(const json& ev) {
    apply(ev, true);
    persist(ev);
  }

  json forecast_doc(int M) const {
    Rng rng(derive_seed(derive_seed(seed, kForecastStream), events.size(), static_cast<std::uint64_t>(M)));
    const auto f = posterior_mean_forecast(*particles, M, config.forecast_draws, config.quantiles, rng);
    json arms_out = json::array();
    for (std::size_t j = 0; j < arms.size(); ++j) {
      json q = json::array();
      for (std::size_t k = 0; k < f[j].probs.size(); ++k) q.push_back({{"p", f[j].probs[k]}, {"value", f[j].quantiles[k]}});
      arms_out.push_back({{"arm", arms[j]}, {"mean", f[j].mean}, {"sd", f[j].sd}, {"quantiles", std::move(q)}});
    }
    return json{{"M", M}, {"seq", events.size() - 1}, {"draws", config.forecast_draws}, {"arms", std::move(arms_out)}};
  }

  json summary() const {
    json arms_out = json::array();
    for (std::size_t j = 0; j < arms.size(); ++j) {
      int n = 0;
      for (const auto& [label, c] : observed[j]) n += c;
      arms_out.push_back({{"name", arms[j]}, {"n", n}, {"distinct", observed[j].size()}});
    }
    return json{{"id", id},
                {"arms", std::move(arms_out)},
                {"seq", events.size() - 1},
                {"created", created},
                {"updated", updated},
                {"seed", seed},
                {"config", config},
                {"distinct_total", seen.size()},
                {"ess", effective_sample_size(*particles)}};
  }
};

// ---------------------------------------------------------------------------

AdvisorService::AdvisorService(Options options) : options_(std::move(options)) {
  if (options_.data_dir.empty()) throw std::invalid_argument("AdvisorService: data_dir is required");
  fs::create_directories(options_.data_dir);
  load_existing();
}

namespace {

std::vector<json> read_events(const fs::path& dir) {
  std::ifstream in(dir / "events.jsonl");
  if (!in) throw std::runtime_error("cannot open " + (dir / "events.jsonl").string());
  std::vector<json> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error((dir / "events.jsonl").string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (events.empty()) throw std::runtime_error((dir / "events.jsonl").string() + ": empty log");
  return events;
}

}  // namespace

void AdvisorService::load_existing() {
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "events.jsonl")) continue;
    auto s = std::make_shared<Session>();
    s->id = entry.path().filename().string();
    s->dir = entry.path();
    const auto events = read_events(s->dir);

    std::optional<json> snap;
    if (options_.use_snapshots && fs::exists(s->dir / "snapshots")) {
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(s->dir / "snapshots"))
        if (f.path().extension() == ".json") files.push_back(f.path());
      std::sort(files.begin(), files.end());
      for (auto it = files.rbegin(); it != files.rend() && !snap; ++it) {
        std::ifstream in(*it);
        try {
          json doc = json::parse(in);
          if (doc.at("seq").get<std::size_t>() < events.size()) snap = std::move(doc);
        } catch (const json::exception&) {
          // A torn snapshot is skipped; an older one or the log takes over.
        }
      }
    }
    const std::size_t restored = snap ? snap->at("seq").get<std::size_t>() : 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const bool covered = snap && i <= restored;
      if (snap && i == restored) {
        s->apply(events[i], false);
        s->particles.emplace(particle_set_from_json(snap->at("particles")));
      } else {
        s->apply(events[i], !covered);
      }
    }
    sessions_[s->id] = std::move(s);
  }
}

json AdvisorService::replay_snapshot(const fs::path& session_dir) {
  Session s;
  s.dir = session_dir;
  for (const auto& ev : read_events(session_dir)) s.apply(ev, true);
  return s.snapshot_doc();
}

std::shared_ptr<AdvisorService::Session> AdvisorService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  return it->second;
}

std::vector<std::string> AdvisorService::session_ids() const {
  std::lock_guard lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

json AdvisorService::create_session(const json& request) {
  if (!request.is_object()) unprocessable("request body must be an object");
  if (!request.contains("arms") || !request.at("arms").is_array() || request.at("arms").empty())
    unprocessable("'arms' must be a nonempty array of names");
  std::vector<std::string> arms;
  for (const auto& a : request.at("arms")) {
    if (!a.is_string() || a.get<std::string>().empty()) unprocessable("arm names must be nonempty strings");
    const auto name = a.get<std::string>();
    if (std::find(arms.begin(), arms.end(), name) != arms.end()) unprocessable("duplicate arm name '" + name + "'");
    arms.push_back(name);
  }
  if (!request.contains("initial") || !request.at("initial").is_object())
    unprocessable("'initial' must map each arm name to label counts");
  const auto& initial = request.at("initial");
  for (const auto& [name, counts] : initial.items())
    if (std::find(arms.begin(), arms.end(), name) == arms.end()) unprocessable("initial counts for unknown arm '" + name + "'");
  json initial_canonical = json::object();
  for (const auto& name : arms) {
    if (!initial.contains(name)) bad_request("arm '" + name + "' has no initial observations");
    const auto counts = parse_counts(initial.at(name), "initial." + name);
    if (counts.empty()) bad_request("arm '" + name + "' has no initial observations");
    initial_canonical[name] = counts;
  }
  SessionConfig config;
  try {
    if (request.contains("config")) config = session_config_from_json(request.at("config"));
    config.validate(static_cast<int>(arms.size()));
  } catch (const std::exception& e) {
    unprocessable(e.what());
  }
  std::uint64_t seed = random_seed();
  if (request.contains("seed")) {
    if (!is_seed(request.at("seed"))) unprocessable("seed must be a non-negative integer");
    seed = request.at("seed").get<std::uint64_t>();
  }

  auto s = std::make_shared<Session>();
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      s->id = new_session_id();
    } while (sessions_.contains(s->id) || fs::exists(options_.data_dir / s->id));
    s->dir = options_.data_dir / s->id;
    fs::create_directories(s->dir);
  }
  std::unique_lock session_lock(s->mutex);
  const json ev{{"seq", 0},  {"kind", "created"}, {"ts", now_iso()},      {"arms", arms},
                {"seed", seed}, {"config", config}, {"initial", initial_canonical}};
  s->record(ev);
  json out{{"id", s->id}, {"session", s->summary()}, {"forecast", s->forecast_doc(s->config.forecast_M)}};
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_[s->id] = s;
  }
  return out;
}

json AdvisorService::get_session(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mutex);
  return s->summary();
}

json AdvisorService::recommend(const std::string& id, const json& request) {
  auto s = find(id);
  if (!request.is_object()) bad_request("request body must be an object");
  Mode mode = Mode::incidence;
  try {
    mode = parse_mode(request.value("mode", std::string("incidence")));
  } catch (const std::exception& e) {
    bad_request(e.what());
  }
  if (!request.contains("M") || !request.at("M").is_number_integer()) bad_request("'M' must be an integer");
  const auto M = request.at("M").get<long long>();
  if (M < 1 || M > 100000) bad_request("'M' must lie in [1, 100000]");

  std::unique_lock lock(s->mutex);
  const std::uint64_t seq = s->next_seq();
  std::uint64_t sub_seed = derive_seed(s->seed, seq);
  if (request.contains("seed")) {
    if (!is_seed(request.at("seed"))) bad_request("seed must be a non-negative integer");
    sub_seed = request.at("seed").get<std::uint64_t>();
  }
  Rng rng(sub_seed);
  json ev{{"seq", seq}, {"kind", "recommended"}, {"ts", now_iso()}, {"mode", to_string(mode)}, {"M", M},
          {"seed", sub_seed}};
  const RewardDraw* draw = nullptr;
  HpytsChoice choice;
  HpytsAllocation alloc;
  if (mode == Mode::incidence) {
    choice = hpyts_select(*s->particles, static_cast<int>(M), rng);
    draw = &choice.draw;
    ev["arm"] = choice.arm;
    ev["arm_name"] = s->arms[choice.arm];
    ev["particle"] = choice.particle;
  } else {
    alloc = hpyts_allocate_delayed(*s->particles, static_cast<int>(M), rng);
    draw = &alloc.draw;
    json a = json::object();
    for (std::size_t j = 0; j < s->arms.size(); ++j) a[s->arms[j]] = alloc.allocation.counts[j];
    ev["allocation"] = std::move(a);
    ev["particle"] = alloc.particle;
  }
  json expected = json::object();
  json p = json::object();
  for (std::size_t j = 0; j < s->arms.size(); ++j) {
    expected[s->arms[j]] = draw->expected_new[j];
    p[s->arms[j]] = draw->p[j];
  }
  ev["beta0"] = draw->beta0;
  ev["p"] = std::move(p);
  ev["expected_new"] = std::move(expected);
  s->record(ev);
  return ev;
}

json AdvisorService::observe(const std::string& id, const json& request) {
  auto s = find(id);
  if (!request.is_object()) unprocessable("request body must be an object");
  if (!request.contains("arm")) unprocessable("'arm' is required");
  if (!request.contains("counts")) unprocessable("'counts' is required");
  std::unique_lock lock(s->mutex);
  const int arm = s->arm_index(request.at("arm"));
  const auto counts = parse_counts(request.at("counts"), "counts");
  if (counts.empty()) unprocessable("empty batch");
  const std::uint64_t seq = s->next_seq();
  const auto before = static_cast<int>(s->seen.size());
  const json ev{{"seq", seq}, {"kind", "observed"}, {"ts", now_iso()}, {"arm", arm}, {"arm_name", s->arms[arm]},
                {"counts", counts}};
  s->record(ev);
  return json{{"seq", seq},
              {"ess", s->last_info.ess},
              {"jittered", s->last_info.jittered},
              {"new_species", static_cast<int>(s->seen.size()) - before},
              {"distinct_total", s->seen.size()},
              {"session", s->summary()},
              {"forecast", s->forecast_doc(s->config.forecast_M)}};
}

json AdvisorService::forecast(const std::string& id, int M) const {
  auto s = find(id);
  if (M < 0) bad_request("'M' must be >= 0");
  if (M > 100000) bad_request("'M' must be <= 100000");
  std::shared_lock lock(s->mutex);
  return s->forecast_doc(M);
}

json AdvisorService::history(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mutex);
  json curve = json::array();
  for (const auto& [seq, c] : s->curve) curve.push_back({{"seq", seq}, {"cumulative", c}});
  return json{{"id", s->id}, {"events", s->events}, {"curve", std::move(curve)}};
}

json AdvisorService::snapshot(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mutex);
  return s->snapshot_doc();
}

}  // namespace hpyts
