#include "hpyts/gibbs.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "hpyts/special.hpp"

namespace hpyts {

double PriorSpec::log_density(const HpyParams& eta) {
  double out = log_density(eta.global);
  for (const auto& a : eta.arms) out += log_density(a);
  return out;
}

double PriorSpec::log_density_unconstrained(const PyParams& p) {
  // d sigma / d logit = sigma (1 - sigma); d theta / d log = theta.
  return log_density(p) + std::log(p.sigma()) + std::log1p(-p.sigma()) + std::log(p.theta());
}

double PriorSpec::log_density_unconstrained(const HpyParams& eta) {
  double out = log_density_unconstrained(eta.global);
  for (const auto& a : eta.arms) out += log_density_unconstrained(a);
  return out;
}

// ---------------------------------------------------------------------------

void GibbsConfig::validate(int arm_count) const {
  if (burn_in < 0) throw std::invalid_argument("GibbsConfig: burn_in must be >= 0");
  if (n_sweeps <= burn_in) throw std::invalid_argument("GibbsConfig: n_sweeps must exceed burn_in");
  if (n_particles < 2) throw std::invalid_argument("GibbsConfig: n_particles must be >= 2");
  if (n_sweeps - burn_in < n_particles)
    throw std::invalid_argument("GibbsConfig: need at least n_particles post-burn-in sweeps");
  const auto dim = static_cast<std::size_t>(2 * (arm_count + 1));
  if (!step_sizes.empty() && step_sizes.size() != dim)
    throw std::invalid_argument("GibbsConfig: expected " + std::to_string(dim) + " step sizes");
  if (!(default_step > 0.0)) throw std::invalid_argument("GibbsConfig: step sizes must be positive");
  for (double s : step_sizes)
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("GibbsConfig: step sizes must be positive");
  if (initial && initial->arm_count() != arm_count)
    throw std::invalid_argument("GibbsConfig: initial parameters have the wrong number of arms");
}

double GibbsConfig::step(std::size_t coordinate) const {
  return step_sizes.empty() ? default_step : step_sizes.at(coordinate);
}

void to_json(nlohmann::json& j, const GibbsConfig& c) {
  j = nlohmann::json{{"n_sweeps", c.n_sweeps},
                     {"burn_in", c.burn_in},
                     {"n_particles", c.n_particles},
                     {"default_step", c.default_step},
                     {"update_hyperparameters", c.update_hyperparameters}};
  if (!c.step_sizes.empty()) j["step_sizes"] = c.step_sizes;
  if (c.initial) j["initial"] = *c.initial;
}

GibbsConfig gibbs_config_from_json(const nlohmann::json& j) {
  GibbsConfig c;
  c.n_sweeps = j.value("n_sweeps", c.n_sweeps);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.n_particles = j.value("n_particles", c.n_particles);
  c.default_step = j.value("default_step", c.default_step);
  c.update_hyperparameters = j.value("update_hyperparameters", c.update_hyperparameters);
  if (j.contains("step_sizes")) c.step_sizes = j.at("step_sizes").get<std::vector<double>>();
  if (j.contains("initial")) c.initial = hpy_params_from_json(j.at("initial"));
  return c;
}

// ---------------------------------------------------------------------------

double mh_acceptance_probability(double log_current, double log_proposed) {
  if (std::isnan(log_proposed) || log_proposed == kNegInf) return 0.0;
  const double diff = log_proposed - log_current;
  return diff >= 0.0 ? 1.0 : std::exp(diff);
}

double log_hyper_target(const CrfState& state, const HpyParams& eta) {
  return log_peppf(state, eta) + PriorSpec::log_density_unconstrained(eta);
}

// ---------------------------------------------------------------------------

namespace {

HpyParams initial_params(const GibbsConfig& config, int arm_count) {
  return config.initial ? *config.initial : HpyParams::uniform(arm_count, 0.5, 1.0);
}

}  // namespace

GibbsSampler::GibbsSampler(const std::vector<LabeledBatch>& data, int arm_count, GibbsConfig config, Rng& rng)
    : config_(std::move(config)), state_(arm_count), eta_(initial_params(config_, arm_count)) {
  config_.validate(arm_count);
  for (const auto& batch : data) {
    batch.validate(arm_count);
    for (const auto& label : batch.labels) seat_observation(state_, batch.arm, label, eta_, rng);
  }
  for (int j = 0; j < arm_count; ++j)
    if (state_.customers(j) == 0)
      throw std::invalid_argument("gibbs: arm " + std::to_string(j) + " has no initial observations");
}

void GibbsSampler::reseat_tables(Rng& rng) {
  // Random scan: for each (arm, dish) pick n_jk customers at random, each one
  // removed and reseated from its conditional given the dish.
  for (int j = 0; j < state_.arm_count(); ++j) {
    std::vector<std::string> dishes;
    dishes.reserve(state_.arm_tables(j).size());
    for (const auto& [dish, occ] : state_.arm_tables(j)) dishes.push_back(dish);
    for (const auto& dish : dishes) {
      const int n = state_.customers(j, dish);
      for (int r = 0; r < n; ++r) {
        const auto& occ = state_.arm_tables(j).at(dish);
        std::vector<double> w(occ.begin(), occ.end());
        const std::size_t table = sample_categorical(w, rng);
        remove_observation(state_, j, dish, table);
        seat_observation(state_, j, dish, eta_, rng);
      }
    }
  }
}

double GibbsSampler::component_target(std::size_t coordinate, const HpyParams& eta) const {
  if (coordinate < 2)
    return log_peppf_global_term(state_, eta.global) + PriorSpec::log_density_unconstrained(eta.global);
  const int j = static_cast<int>(coordinate / 2) - 1;
  return log_peppf_arm_term(state_, j, eta.arms[j]) + PriorSpec::log_density_unconstrained(eta.arms[j]);
}

void GibbsSampler::update_hyperparameters(Rng& rng) {
  Eigen::VectorXd x = to_unconstrained(eta_);
  for (std::size_t c = 0; c < static_cast<std::size_t>(x.size()); ++c) {
    const auto idx = static_cast<Eigen::Index>(c);
    const double current = component_target(c, eta_);
    Eigen::VectorXd y = x;
    y(idx) += config_.step(c) * standard_normal(rng);
    const HpyParams proposal = from_unconstrained(y);
    const double proposed = component_target(c, proposal);
    ++proposals_;
    if (uniform01(rng) < mh_acceptance_probability(current, proposed)) {
      x = std::move(y);
      eta_ = proposal;
      ++accepted_;
    }
  }
}

void GibbsSampler::sweep(Rng& rng) {
  reseat_tables(rng);
  if (config_.update_hyperparameters) update_hyperparameters(rng);
}

double GibbsSampler::acceptance_rate() const {
  return proposals_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(proposals_);
}

// ---------------------------------------------------------------------------

ParticleSet gibbs_run(const std::vector<LabeledBatch>& data, int arm_count, const GibbsConfig& config, Rng& rng,
                      std::ostream* trace) {
  GibbsSampler sampler(data, arm_count, config, rng);
  const int n = config.n_particles;
  const int thin = std::max(1, (config.n_sweeps - config.burn_in) / n);
  const int first_kept = config.n_sweeps - n * thin;

  if (trace) {
    *trace << "sweep,sigma,theta";
    for (int j = 1; j <= arm_count; ++j) *trace << ",sigma_" << j << ",theta_" << j;
    *trace << ",log_peppf\n";
  }
  std::vector<Particle> particles;
  particles.reserve(n);
  for (int s = 0; s < config.n_sweeps; ++s) {
    sampler.sweep(rng);
    if (trace) {
      const HpyParams& eta = sampler.params();
      *trace << s << ',' << eta.global.sigma() << ',' << eta.global.theta();
      for (const auto& a : eta.arms) *trace << ',' << a.sigma() << ',' << a.theta();
      *trace << ',' << log_peppf(sampler.state(), eta) << '\n';
    }
    if (s >= first_kept && (config.n_sweeps - 1 - s) % thin == 0)
      particles.push_back(Particle{sampler.params(), sampler.state(), 1.0});
  }
  return ParticleSet(std::move(particles));
}

}  // namespace hpyts
