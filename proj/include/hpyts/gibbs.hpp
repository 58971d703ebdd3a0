#pragma once

// Gibbs initialization: table memberships are resampled given the observed
// dishes, and the hyperparameters move by component-wise random-walk
// Metropolis-Hastings on the logit/log scale.  The last N post-burn-in states
// become the equally weighted time-0 particle set.

#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"

#include "hpyts/crf.hpp"
#include "hpyts/random.hpp"
#include "hpyts/smc.hpp"

namespace hpyts {

/// sigma, sigma_j ~ Uniform(0, 1); theta, theta_j ~ Gamma(1, 1); independent.
struct PriorSpec {
  static double log_density(const PyParams& p) { return -p.theta(); }
  static double log_density(const HpyParams& eta);

  /// Prior density of the unconstrained coordinates (logit sigma, log theta),
  /// i.e. log_density plus the log Jacobian.
  static double log_density_unconstrained(const PyParams& p);
  static double log_density_unconstrained(const HpyParams& eta);
};

struct GibbsConfig {
  int n_sweeps = 2000;
  int burn_in = 1000;
  int n_particles = 100;
  /// Random-walk standard deviation per unconstrained coordinate, in the order
  /// of to_unconstrained.  Empty means `default_step` everywhere.
  std::vector<double> step_sizes;
  double default_step = 0.25;
  bool update_hyperparameters = true;
  std::optional<HpyParams> initial;  // defaults to sigma = 0.5, theta = 1 everywhere

  void validate(int arm_count) const;
  double step(std::size_t coordinate) const;
};

void to_json(nlohmann::json& j, const GibbsConfig& c);
GibbsConfig gibbs_config_from_json(const nlohmann::json& j);

/// min(1, exp(log_proposed - log_current)) for a symmetric proposal.
double mh_acceptance_probability(double log_current, double log_proposed);

/// log pEPPF(state | eta) + log prior density of eta on the unconstrained scale.
double log_hyper_target(const CrfState& state, const HpyParams& eta);

class GibbsSampler {
 public:
  GibbsSampler(const std::vector<LabeledBatch>& data, int arm_count, GibbsConfig config, Rng& rng);

  /// One sweep: table reseating followed, if enabled, by one MH move per coordinate.
  void sweep(Rng& rng);
  void reseat_tables(Rng& rng);
  void update_hyperparameters(Rng& rng);

  const CrfState& state() const noexcept { return state_; }
  const HpyParams& params() const noexcept { return eta_; }
  const GibbsConfig& config() const noexcept { return config_; }
  double log_target() const { return log_hyper_target(state_, eta_); }
  double acceptance_rate() const;

 private:
  double component_target(std::size_t coordinate, const HpyParams& eta) const;

  GibbsConfig config_;
  CrfState state_;
  HpyParams eta_;
  std::size_t proposals_ = 0;
  std::size_t accepted_ = 0;
};

/// Runs the chain and harvests the last n_particles post-burn-in states with
/// equal thinning.  If `trace` is given, writes one CSV row per sweep:
/// sweep,sigma,theta,sigma_1,theta_1,...,log_peppf.
ParticleSet gibbs_run(const std::vector<LabeledBatch>& data, int arm_count, const GibbsConfig& config, Rng& rng,
                      std::ostream* trace = nullptr);

}  // namespace hpyts
