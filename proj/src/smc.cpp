#include "hpyts/smc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hpyts {

MixtureMoments kernel_mixture_moments(const Eigen::MatrixXd& locations, const Eigen::VectorXd& w, double h,
                                      const Eigen::MatrixXd& V) {
  MixtureMoments out;
  out.mean = weighted_mean(locations, w);
  out.cov = weighted_covariance(locations, w) + h * h * V;
  return out;
}

Eigen::MatrixXd kernel_cholesky(const Eigen::MatrixXd& V, bool* jittered) {
  if (jittered) *jittered = false;
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd L = llt.matrixL();
    if (L.allFinite() && (L.diagonal().array() > 0.0).all()) return L;
  }
  const auto d = static_cast<double>(V.rows());
  const double trace = V.trace();
  const double eps = trace > 0.0 ? 1e-8 * trace / d : 1e-8;
  if (jittered) *jittered = true;
  Eigen::MatrixXd Vj = V;
  Vj.diagonal().array() += eps;
  Eigen::LLT<Eigen::MatrixXd> retry(Vj);
  if (retry.info() != Eigen::Success)
    throw std::runtime_error("kernel_cholesky: covariance is not positive semi-definite");
  return retry.matrixL();
}

std::vector<std::size_t> systematic_resample(const Eigen::VectorXd& weights, Rng& rng) {
  const auto n = static_cast<std::size_t>(weights.size());
  if (n == 0) throw std::invalid_argument("systematic_resample: no weights");
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::invalid_argument("systematic_resample: weights must have a positive finite sum");
  std::vector<std::size_t> out(n);
  const double u0 = uniform01(rng);
  double cumulative = weights(0) / total;
  std::size_t i = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double u = (u0 + static_cast<double>(s)) / static_cast<double>(n);
    while (u >= cumulative && i + 1 < n) cumulative += weights(static_cast<Eigen::Index>(++i)) / total;
    out[s] = i;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kSigmaFloor = 1e-12;
constexpr double kLogThetaBound = 700.0;

double to_sigma(double u) { return std::clamp(inv_logit(u), kSigmaFloor, 1.0 - kSigmaFloor); }
double to_theta(double u) { return std::exp(std::clamp(u, -kLogThetaBound, kLogThetaBound)); }

}  // namespace

Eigen::VectorXd to_unconstrained(const HpyParams& eta) {
  Eigen::VectorXd x(2 * (eta.arm_count() + 1));
  x(0) = logit(eta.global.sigma());
  x(1) = std::log(eta.global.theta());
  for (int j = 0; j < eta.arm_count(); ++j) {
    x(2 * j + 2) = logit(eta.arms[j].sigma());
    x(2 * j + 3) = std::log(eta.arms[j].theta());
  }
  return x;
}

HpyParams from_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 4 || x.size() % 2 != 0)
    throw std::invalid_argument("from_unconstrained: expected 2 (J + 1) coordinates");
  if (!x.allFinite()) throw std::invalid_argument("from_unconstrained: non-finite coordinate");
  const int arms = static_cast<int>(x.size() / 2) - 1;
  std::vector<PyParams> lower;
  lower.reserve(arms);
  for (int j = 0; j < arms; ++j) lower.emplace_back(to_sigma(x(2 * j + 2)), to_theta(x(2 * j + 3)));
  return HpyParams(PyParams(to_sigma(x(0)), to_theta(x(1))), std::move(lower));
}

// ---------------------------------------------------------------------------

ParticleSet::ParticleSet(std::vector<Particle> particles, std::optional<double> h)
    : particles_(std::move(particles)) {
  const auto n = particles_.size();
  if (n < 2) throw std::invalid_argument("ParticleSet: need at least two particles");
  const int arms = particles_.front().state.arm_count();
  double total = 0.0;
  for (const auto& p : particles_) {
    if (p.state.arm_count() != arms || p.eta.arm_count() != arms)
      throw std::invalid_argument("ParticleSet: particles disagree on the number of arms");
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight))
      throw std::invalid_argument("ParticleSet: weights must be finite and non-negative");
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("ParticleSet: all weights are zero");
  // Already-normalized weights are kept bit-for-bit so snapshots round-trip.
  if (std::abs(total - 1.0) > 1e-12)
    for (auto& p : particles_) p.weight /= total;
  h_ = h.value_or(1.0 / static_cast<double>(n));
  if (!(h_ > 0.0 && h_ < 1.0)) throw std::invalid_argument("ParticleSet: h must lie in (0, 1)");
}

std::vector<double> ParticleSet::weights() const {
  std::vector<double> w;
  w.reserve(size());
  for (const auto& p : particles_) w.push_back(p.weight);
  return w;
}

Eigen::MatrixXd ParticleSet::unconstrained() const {
  Eigen::MatrixXd X(2 * (arm_count() + 1), static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) X.col(static_cast<Eigen::Index>(i)) = to_unconstrained(particles_[i].eta);
  return X;
}

namespace {

Eigen::VectorXd weight_vector(const ParticleSet& ps) {
  const auto w = ps.weights();
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

}  // namespace

Eigen::VectorXd ParticleSet::mean_unconstrained() const { return weighted_mean(unconstrained(), weight_vector(*this)); }

Eigen::MatrixXd ParticleSet::covariance_unconstrained() const {
  return weighted_covariance(unconstrained(), weight_vector(*this));
}

// ---------------------------------------------------------------------------

std::pair<double, CrfState> batch_loglik(const HpyParams& eta, const CrfState& state, const LabeledBatch& batch,
                                         Rng& rng) {
  batch.validate(state.arm_count());
  if (eta.arm_count() != state.arm_count())
    throw std::invalid_argument("batch_loglik: parameter and state arm counts differ");
  CrfState seated = state;
  double total = 0.0;
  for (const auto& label : batch.labels) total += seat_observation(seated, batch.arm, label, eta, rng);
  return {total, std::move(seated)};
}

FilterResult filter_update(const ParticleSet& ps, const LabeledBatch& batch, Rng& rng, const FilterOptions& options) {
  batch.validate(ps.arm_count());
  Eigen::MatrixXd X = ps.unconstrained();
  Eigen::VectorXd w = weight_vector(ps);
  std::vector<CrfState> states;
  states.reserve(ps.size());
  for (const auto& p : ps) states.push_back(p.state);

  auto loglik = [&batch](const Eigen::VectorXd& x, const CrfState& state, Rng& local) {
    return batch_loglik(from_unconstrained(x), state, batch, local);
  };
  const LiuWestStepInfo info = liu_west_step(X, states, w, ps.h(), loglik, rng, options.threads);

  std::vector<Particle> next;
  next.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    next.push_back(Particle{from_unconstrained(X.col(static_cast<Eigen::Index>(i))), std::move(states[i]),
                            w(static_cast<Eigen::Index>(i))});
  }
  return FilterResult{ParticleSet(std::move(next), ps.h()), info};
}

double effective_sample_size(const std::vector<double>& weights) {
  double total = 0.0;
  double squares = 0.0;
  for (double w : weights) {
    total += w;
    squares += w * w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("effective_sample_size: all weights are zero");
  return total * total / squares;
}

double effective_sample_size(const ParticleSet& ps) { return effective_sample_size(ps.weights()); }

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ParticleSet& ps) {
  nlohmann::json particles = nlohmann::json::array();
  for (const auto& p : ps) particles.push_back({{"eta", p.eta}, {"state", p.state}, {"weight", p.weight}});
  j = nlohmann::json{{"h", ps.h()}, {"particles", std::move(particles)}};
}

ParticleSet particle_set_from_json(const nlohmann::json& j) {
  std::vector<Particle> particles;
  for (const auto& p : j.at("particles")) {
    particles.push_back(Particle{hpy_params_from_json(p.at("eta")), crf_state_from_json(p.at("state")),
                                 p.at("weight").get<double>()});
  }
  return ParticleSet(std::move(particles), j.at("h").get<double>());
}

}  // namespace hpyts
