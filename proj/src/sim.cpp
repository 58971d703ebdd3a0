#include "hpyts/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "hpyts/parallel.hpp"
#include "hpyts/smc.hpp"

namespace hpyts {

void ExperimentConfig::validate() const {
  if (arms.empty()) throw ConfigError("arms", "at least one arm is required");
  if (strategies.empty()) throw ConfigError("strategies", "at least one strategy is required");
  for (std::size_t i = 0; i < strategies.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (strategies[i] == strategies[k]) throw ConfigError("strategies", "duplicate strategy " + to_string(strategies[i]));
  if (n_init < 1) throw ConfigError("n_init", "must be >= 1");
  if (M < 1) throw ConfigError("M", "must be >= 1");
  if (T < 0) throw ConfigError("T", "must be >= 0");
  if (R < 1) throw ConfigError("R", "must be >= 1");
  if (particles < 2) throw ConfigError("particles", "must be >= 2");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  GibbsConfig g = gibbs;
  g.n_particles = particles;
  try {
    g.validate(static_cast<int>(arms.size()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("gibbs", e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON config

namespace {

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + key, std::string("wrong type (") + j.at(key).type_name() + ")");
  }
}

GtSmoothing smoothing_from_json(const nlohmann::json& j) {
  GtSmoothing s;
  const auto kind = field<std::string>(j, "kind", "smoothing.", "binomial");
  if (kind == "none")
    s.kind = GtSmoothing::Kind::none;
  else if (kind == "binomial")
    s.kind = GtSmoothing::Kind::binomial;
  else
    throw ConfigError("smoothing.kind", "expected none or binomial, got '" + kind + "'");
  if (j.contains("k")) s.k = field<int>(j, "k", "smoothing.", 0);
  if (j.contains("q")) s.q = field<double>(j, "q", "smoothing.", 0.0);
  return s;
}

std::vector<PopulationSpec> arms_from_json(const nlohmann::json& arms) {
  if (!arms.is_array()) throw ConfigError("arms", "must be an array");
  std::vector<PopulationSpec> out;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto& a = arms[i];
    const std::string path = "arms[" + std::to_string(i) + "].";
    if (!a.is_object()) throw ConfigError(path, "must be an object");
    const int repeat = field<int>(a, "repeat", path, 1);
    if (repeat < 1) throw ConfigError(path + "repeat", "must be >= 1");
    const auto name = field<std::string>(a, "name", path, "arm" + std::to_string(i));
    for (int r = 0; r < repeat; ++r) {
      const std::string arm_name = repeat > 1 ? name + "_" + std::to_string(r + 1) : name;
      if (a.contains("zipf")) {
        const auto& z = a.at("zipf");
        const int N = field<int>(z, "N", path + "zipf.", 0);
        const double s = field<double>(z, "s", path + "zipf.", 0.0);
        const int offset = field<int>(a, "label_offset", path, 0);
        try {
          out.push_back(zipf_population(N, s, arm_name, offset));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(path + "zipf", e.what());
        }
      } else if (a.contains("categorical")) {
        const auto& c = a.at("categorical");
        std::vector<std::string> labels;
        std::vector<double> weights;
        if (!c.is_object() || c.empty()) throw ConfigError(path + "categorical", "must be a nonempty object label -> weight");
        for (const auto& [label, w] : c.items()) {
          if (!w.is_number()) throw ConfigError(path + "categorical." + label, "weight must be a number");
          labels.push_back(label);
          weights.push_back(w.get<double>());
        }
        try {
          out.emplace_back(arm_name, "categorical", std::move(labels), std::move(weights));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(path + "categorical", e.what());
        }
      } else {
        throw ConfigError(path, "expected a 'zipf' or 'categorical' entry");
      }
    }
  }
  return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  ExperimentConfig c;
  if (j.contains("arms") && j.contains("replay")) throw ConfigError("replay", "give either 'arms' or 'replay', not both");
  if (j.contains("arms")) {
    c.arms = arms_from_json(j.at("arms"));
  } else if (j.contains("replay")) {
    const auto& r = j.at("replay");
    const auto path = field<std::string>(r, "path", "replay.", "");
    if (path.empty()) throw ConfigError("replay.path", "missing");
    std::optional<std::vector<std::string>> expected;
    if (r.contains("arms")) expected = field<std::vector<std::string>>(r, "arms", "replay.", {});
    const auto full = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                               : std::filesystem::path(base_dir) / path;
    try {
      c.arms = load_replay_file(full.string(), expected);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("replay", e.what());
    }
  } else {
    throw ConfigError("arms", "missing (or give 'replay')");
  }
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : field<std::vector<std::string>>(j, "strategies", "", {})) {
      try {
        c.strategies.push_back(parse_strategy(s));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("strategies", e.what());
      }
    }
  }
  c.n_init = field<int>(j, "n_init", "", c.n_init);
  c.M = field<int>(j, "M", "", c.M);
  c.T = field<int>(j, "T", "", c.T);
  c.R = field<int>(j, "R", "", c.R);
  c.particles = field<int>(j, "particles", "", c.particles);
  c.threads = field<int>(j, "threads", "", c.threads);
  c.seed = field<std::uint64_t>(j, "seed", "", c.seed);
  try {
    c.mode = parse_mode(field<std::string>(j, "mode", "", "incidence"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mode", e.what());
  }
  if (j.contains("gibbs")) {
    try {
      c.gibbs = gibbs_config_from_json(j.at("gibbs"));
    } catch (const std::exception& e) {
      throw ConfigError("gibbs", e.what());
    }
  }
  if (j.contains("smoothing")) c.smoothing = smoothing_from_json(j.at("smoothing"));
  c.gibbs.n_particles = c.particles;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("line " + std::to_string(line), e.what());
  }
  return experiment_config_from_json(j, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Presets

namespace {

ExperimentConfig zipf_world(int winning, int others, int N, int T, int R) {
  ExperimentConfig c;
  for (int i = 0; i < winning; ++i) c.arms.push_back(zipf_population(N, 1.3, "win_" + std::to_string(i + 1)));
  for (int i = 0; i < others; ++i) c.arms.push_back(zipf_population(N, 2.0, "low_" + std::to_string(i + 1)));
  c.n_init = 20;
  c.M = 50;
  c.T = T;
  c.R = R;
  c.particles = 100;
  c.gibbs.n_particles = c.particles;
  return c;
}

// Four developmental-stage arms over 100 cell types; "fetal" carries 60 of
// them, the others a handful of common types plus a few private ones.
std::vector<PopulationSpec> synthetic_atlas() {
  auto arm = [](const std::string& name, std::vector<int> types, double s) {
    std::vector<std::string> labels;
    std::vector<double> weights;
    for (std::size_t r = 0; r < types.size(); ++r) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "ct%03d", types[r]);
      labels.emplace_back(buf);
      weights.push_back(std::round(1000.0 * std::pow(static_cast<double>(r + 1), -s)));
    }
    return PopulationSpec(name, "categorical", std::move(labels), std::move(weights));
  };
  auto range = [](int lo, int hi) {
    std::vector<int> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
  };
  auto join = [](std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  return {arm("embryo", range(1, 20), 1.5), arm("fetal", range(1, 60), 0.8),
          arm("newborn", join(range(1, 15), range(61, 70)), 1.5),
          arm("adult", join(range(1, 10), range(71, 85)), 1.5)};
}

}  // namespace

std::vector<std::string> preset_names() { return {"paper-fig1", "paper-fig1-t100", "desk-zipf", "desk-replay"}; }

ExperimentConfig preset_config(const std::string& name) {
  if (name == "paper-fig1") return zipf_world(4, 96, 20000, 500, 50);
  if (name == "paper-fig1-t100") return zipf_world(4, 96, 20000, 100, 50);
  if (name == "desk-zipf") return zipf_world(2, 8, 2000, 100, 20);
  if (name == "desk-replay") {
    ExperimentConfig c;
    c.arms = synthetic_atlas();
    c.n_init = 50;
    c.M = 25;
    c.T = 20;
    c.R = 50;
    c.particles = 100;
    c.gibbs.n_particles = c.particles;
    return c;
  }
  std::string known;
  for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
  throw ConfigError("preset", "unknown preset '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Runs

namespace {

struct World {
  std::unordered_set<std::string> seen;
  std::vector<std::unordered_map<std::string, int>> counts;

  // Records a batch and returns how many of its labels were new to the joint sample.
  int absorb(int arm, const std::vector<std::string>& labels) {
    int fresh = 0;
    for (const auto& l : labels) {
      if (seen.insert(l).second) ++fresh;
      ++counts[arm][l];
    }
    return fresh;
  }

  std::vector<FreqOfFreq> freq() const {
    std::vector<FreqOfFreq> out;
    out.reserve(counts.size());
    for (const auto& c : counts) out.push_back(FreqOfFreq::from_label_counts(c));
    return out;
  }
};

}  // namespace

std::vector<TraceRow> run_replicate(const ExperimentConfig& cfg, Strategy strategy, int replicate) {
  const int J = static_cast<int>(cfg.arms.size());
  const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replicate));
  const auto sid = static_cast<std::uint64_t>(strategy);
  Rng init_rng(derive_seed(rep_seed, 0));
  Rng world_rng(derive_seed(rep_seed, 1, sid));
  Rng decide_rng(derive_seed(rep_seed, 2, sid));

  World world;
  world.counts.resize(J);
  std::vector<LabeledBatch> initial;
  int cumulative = 0;
  for (int j = 0; j < J; ++j) {
    LabeledBatch b{j, cfg.arms[j].sample(cfg.n_init, init_rng)};
    cumulative += world.absorb(j, b.labels);
    initial.push_back(std::move(b));
  }

  std::vector<TraceRow> rows;
  rows.reserve(cfg.T + 1);
  TraceRow first;
  first.strategy = strategy;
  first.replicate = replicate;
  first.new_species = cumulative;
  first.cumulative = cumulative;
  rows.push_back(first);

  std::optional<ParticleSet> ps;
  if (strategy == Strategy::hpyts) {
    GibbsConfig g = cfg.gibbs;
    g.n_particles = cfg.particles;
    ps = gibbs_run(initial, J, g, decide_rng);
  }

  for (int t = 1; t <= cfg.T; ++t) {
    Allocation alloc;
    switch (strategy) {
      case Strategy::hpyts:
        if (cfg.mode == Mode::incidence)
          alloc = Allocation::single(J, hpyts_select(*ps, cfg.M, decide_rng).arm, cfg.M);
        else
          alloc = hpyts_allocate_delayed(*ps, cfg.M, decide_rng).allocation;
        break;
      case Strategy::gtts: {
        const auto f = world.freq();
        alloc = cfg.mode == Mode::incidence
                    ? Allocation::single(J, gtts_select(f, cfg.M, decide_rng, cfg.smoothing), cfg.M)
                    : gtts_allocate_delayed(f, cfg.M, decide_rng, cfg.smoothing);
        break;
      }
      case Strategy::uniform:
        alloc = cfg.mode == Mode::incidence ? Allocation::single(J, uniform_select(J, decide_rng), cfg.M)
                                            : uniform_allocate_delayed(J, cfg.M, decide_rng);
        break;
      case Strategy::oracle:
        alloc = cfg.mode == Mode::incidence
                    ? Allocation::single(J, oracle_select(cfg.arms, world.seen, decide_rng), cfg.M)
                    : oracle_allocate_delayed(cfg.arms, world.seen, cfg.M, decide_rng);
        break;
    }

    TraceRow row;
    row.strategy = strategy;
    row.replicate = replicate;
    row.step = t;
    row.allocation = alloc.counts;
    row.arm = alloc.chosen_arm;
    for (int j = 0; j < J; ++j) {
      if (alloc.counts[j] == 0) continue;
      LabeledBatch batch{j, cfg.arms[j].sample(alloc.counts[j], world_rng)};
      row.new_species += world.absorb(j, batch.labels);
      if (ps) {
        auto result = filter_update(*ps, batch, decide_rng);
        ps.emplace(std::move(result.particles));
        row.ess = row.ess < 0.0 ? result.info.ess : std::min(row.ess, result.info.ess);
        row.jittered = row.jittered || result.info.jittered;
      }
    }
    cumulative += row.new_species;
    row.cumulative = cumulative;
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t S = cfg.strategies.size();
  const auto R = static_cast<std::size_t>(cfg.R);
  std::vector<std::vector<TraceRow>> parts(S * R);
  parallel_for(S * R, cfg.threads, [&](std::size_t idx) {
    parts[idx] = run_replicate(cfg, cfg.strategies[idx / R], static_cast<int>(idx % R));
  });
  ExperimentResult result;
  for (auto& p : parts)
    for (auto& row : p) result.trace.push_back(std::move(row));
  return result;
}

// ---------------------------------------------------------------------------
// Outputs

std::vector<double> ExperimentResult::final_cumulative(Strategy s) const {
  std::map<int, std::pair<int, int>> last;  // replicate -> (step, cumulative)
  for (const auto& r : trace) {
    if (r.strategy != s) continue;
    auto& slot = last[r.replicate];
    if (r.step >= slot.first) slot = {r.step, r.cumulative};
  }
  std::vector<double> out;
  for (const auto& [rep, v] : last) out.push_back(v.second);
  return out;
}

std::vector<SummaryRow> ExperimentResult::summary(const std::vector<Strategy>& order) const {
  std::vector<SummaryRow> out;
  for (Strategy s : order) {
    std::map<int, std::vector<double>> by_step;
    for (const auto& r : trace)
      if (r.strategy == s) by_step[r.step].push_back(r.cumulative);
    for (const auto& [step, values] : by_step) {
      SummaryRow row;
      row.strategy = s;
      row.step = step;
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      out.push_back(row);
    }
  }
  return out;
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, const ExperimentResult& result, Mode mode) {
  out << "strategy,replicate,step,arm,new,cumulative,ess,jittered\n";
  for (const auto& r : result.trace) {
    out << to_string(r.strategy) << ',' << r.replicate << ',' << r.step << ',';
    if (r.step == 0) {
      out << "init";
    } else if (mode == Mode::incidence) {
      out << r.arm;
    } else {
      for (std::size_t j = 0; j < r.allocation.size(); ++j) out << (j ? ";" : "") << r.allocation[j];
    }
    out << ',' << r.new_species << ',' << r.cumulative << ',';
    if (r.ess >= 0.0) out << num(r.ess) << ',' << (r.jittered ? 1 : 0);
    else out << ',';
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const ExperimentResult& result, const std::vector<Strategy>& order) {
  out << "strategy,step,mean,sd\n";
  for (const auto& r : result.summary(order))
    out << to_string(r.strategy) << ',' << r.step << ',' << num(r.mean) << ',' << num(r.sd) << '\n';
}

nlohmann::json plot_data(const ExperimentResult& result, const std::vector<Strategy>& order) {
  nlohmann::json series = nlohmann::json::object();
  for (const auto& r : result.summary(order)) {
    auto& s = series[to_string(r.strategy)];
    s["step"].push_back(r.step);
    s["mean"].push_back(r.mean);
    s["lower"].push_back(r.mean - r.sd);
    s["upper"].push_back(r.mean + r.sd);
  }
  return nlohmann::json{{"x", "step"}, {"y", "cumulative distinct species"}, {"band", "mean +/- 1 sd"},
                        {"series", std::move(series)}};
}

void write_outputs(const std::string& dir, const ExperimentResult& result, const ExperimentConfig& cfg) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out(base / "trace.csv");
    write_trace_csv(out, result, cfg.mode);
  }
  {
    std::ofstream out(base / "summary.csv");
    write_summary_csv(out, result, cfg.strategies);
  }
  {
    std::ofstream out(base / "plot_data.json");
    out << plot_data(result, cfg.strategies).dump(2) << '\n';
  }
}

}  // namespace hpyts
