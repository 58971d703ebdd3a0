#pragma once

// Advisor sessions.  Every session is an append-only event log; the particle
// set is a deterministic fold of the log from the session's master seed, with
// periodic snapshots so a restart does not need to replay from scratch.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "hpyts/gibbs.hpp"
#include "hpyts/smc.hpp"
#include "hpyts/strategies.hpp"

namespace hpyts {

/// Error carrying an HTTP status and a machine-readable code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct SessionConfig {
  int particles = 100;
  GibbsConfig gibbs;
  int snapshot_every = 10;  // S: snapshot after every S-th event
  int forecast_M = 25;      // M used for the forecasts returned by create/observe
  int forecast_draws = 200;
  std::vector<double> quantiles{0.1, 0.5, 0.9};

  void validate(int arm_count) const;
};

void to_json(nlohmann::json& j, const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

/// Label counts for one arm, kept sorted by label.
using LabelCounts = std::map<std::string, int>;

/// Expands counts to a label sequence in canonical order (label order, each
/// label repeated count times).
std::vector<std::string> canonical_labels(const LabelCounts& counts);

class AdvisorService {
 public:
  struct Options {
    std::filesystem::path data_dir;
    bool use_snapshots = true;  // on load, start from the newest snapshot
  };

  explicit AdvisorService(Options options);

  /// Body: {arms: [names], initial: {arm: {label: count}}, seed?, config?}.
  nlohmann::json create_session(const nlohmann::json& request);
  nlohmann::json get_session(const std::string& id) const;
  /// Body: {mode, M, seed?}.  Never changes the posterior.
  nlohmann::json recommend(const std::string& id, const nlohmann::json& request);
  /// Body: {arm: name or index, counts: {label: count}}.
  nlohmann::json observe(const std::string& id, const nlohmann::json& request);
  nlohmann::json forecast(const std::string& id, int M) const;
  nlohmann::json history(const std::string& id) const;

  /// Particle-set snapshot document of the current state.
  nlohmann::json snapshot(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  /// Rebuilds a session purely from its event log (no snapshots).
  static nlohmann::json replay_snapshot(const std::filesystem::path& session_dir);

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  void load_existing();

  Options options_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace hpyts
