#pragma once

// Liu-West auxiliary particle filter.  The kernel-shrinkage core is generic
// over the parameter dimension and the per-particle payload; the HPY filter
// instantiates it with unconstrained hyperparameters and franchise seatings.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "json.hpp"

#include "hpyts/crf.hpp"
#include "hpyts/parallel.hpp"
#include "hpyts/random.hpp"
#include "hpyts/special.hpp"

namespace hpyts {

// ---------------------------------------------------------------------------
// Weighted moments and kernel shrinkage.  Columns of X are particles.

template <typename DerivedX, typename DerivedW>
Eigen::Matrix<typename DerivedX::Scalar, DerivedX::RowsAtCompileTime, 1> weighted_mean(
    const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedW>& w) {
  return X * w;
}

/// sum_i w_i (x_i - xbar)(x_i - xbar)^T with weights summing to one.
template <typename DerivedX, typename DerivedW>
Eigen::Matrix<typename DerivedX::Scalar, DerivedX::RowsAtCompileTime, DerivedX::RowsAtCompileTime>
weighted_covariance(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedW>& w) {
  const auto mean = weighted_mean(X, w);
  const auto centered = (X.colwise() - mean).eval();
  return centered * w.asDiagonal() * centered.transpose();
}

/// Kernel locations m_i = a x_i + (1 - a) xbar.
template <typename DerivedX, typename DerivedW>
Eigen::Matrix<typename DerivedX::Scalar, DerivedX::RowsAtCompileTime, DerivedX::ColsAtCompileTime>
shrink_locations(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedW>& w,
                 typename DerivedX::Scalar a) {
  const auto mean = weighted_mean(X, w);
  return (a * X).colwise() + ((1 - a) * mean);
}

struct MixtureMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Mean and covariance of sum_i w_i Normal(m_i, h^2 V).
MixtureMoments kernel_mixture_moments(const Eigen::MatrixXd& locations, const Eigen::VectorXd& w, double h,
                                      const Eigen::MatrixXd& V);

/// Lower Cholesky factor of V, adding eps * I (eps = 1e-8 * trace(V) / d, or
/// 1e-8 when the trace is zero) when V is not positive definite.
Eigen::MatrixXd kernel_cholesky(const Eigen::MatrixXd& V, bool* jittered = nullptr);

/// Indices of a systematic resample of `weights` (normalized), size N.
std::vector<std::size_t> systematic_resample(const Eigen::VectorXd& weights, Rng& rng);

inline double shrinkage_for(double h) { return std::sqrt(1.0 - h * h); }

struct LiuWestStepInfo {
  double ess = 0.0;          // of the second-stage weights, before resampling
  bool jittered = false;     // kernel covariance needed the jitter fallback
  double log_mean_first_stage = 0.0;
};

/// One Liu-West update.  `loglik(x, payload, rng)` returns the log likelihood
/// of the new data at parameter x together with the payload after absorbing
/// the data.  On return X/payloads hold an equally weighted resample and w is
/// uniform.
template <typename Payload, typename LogLik>
LiuWestStepInfo liu_west_step(Eigen::MatrixXd& X, std::vector<Payload>& payloads, Eigen::VectorXd& w,
                              double h, LogLik&& loglik, Rng& rng, int threads = 1) {
  const auto n = static_cast<std::size_t>(X.cols());
  if (n < 2) throw std::invalid_argument("liu_west_step: need at least two particles");
  if (payloads.size() != n || static_cast<std::size_t>(w.size()) != n)
    throw std::invalid_argument("liu_west_step: particle, payload and weight counts differ");
  if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("liu_west_step: h must lie in (0, 1)");
  w /= w.sum();
  const double a = shrinkage_for(h);
  const Eigen::MatrixXd V = weighted_covariance(X, w);
  const Eigen::MatrixXd locations = shrink_locations(X, w, a);
  const std::uint64_t step_seed = rng();

  // First stage: likelihood at the shrunk locations.
  std::vector<double> first(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng local(derive_seed(step_seed, 1, i));
    first[i] = loglik(Eigen::VectorXd(locations.col(i)), payloads[i], local).first;
  });
  std::vector<double> log_g(n);
  for (std::size_t i = 0; i < n; ++i) log_g[i] = std::log(w(i)) + first[i];
  const double log_norm = log_sum_exp(log_g);
  if (!std::isfinite(log_norm))
    throw std::runtime_error("liu_west_step: every first-stage weight is zero; the data are incompatible with all particles");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(log_g[i] - log_norm);

  LiuWestStepInfo info;
  info.log_mean_first_stage = log_norm;
  const Eigen::MatrixXd L = h * kernel_cholesky(V, &info.jittered);

  std::vector<std::size_t> parent(n);
  for (std::size_t s = 0; s < n; ++s) parent[s] = sample_categorical(g, rng);

  // Second stage: propose around the chosen kernel and reweight.
  Eigen::MatrixXd proposed(X.rows(), static_cast<Eigen::Index>(n));
  std::vector<std::optional<Payload>> next(n);
  std::vector<double> log_w(n);
  parallel_for(n, threads, [&](std::size_t s) {
    Rng local(derive_seed(step_seed, 2, s));
    Eigen::VectorXd z(X.rows());
    for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = standard_normal(local);
    const std::size_t k = parent[s];
    Eigen::VectorXd x = locations.col(static_cast<Eigen::Index>(k)) + L * z;
    auto [ll, payload] = loglik(x, payloads[k], local);
    proposed.col(static_cast<Eigen::Index>(s)) = x;
    next[s].emplace(std::move(payload));
    log_w[s] = ll - first[k];
  });
  const double log_total = log_sum_exp(log_w);
  if (!std::isfinite(log_total))
    throw std::runtime_error("liu_west_step: every second-stage weight is zero");
  Eigen::VectorXd w2(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) w2(static_cast<Eigen::Index>(s)) = std::exp(log_w[s] - log_total);
  w2 /= w2.sum();
  info.ess = 1.0 / w2.squaredNorm();

  const auto keep = systematic_resample(w2, rng);
  Eigen::MatrixXd resampled(X.rows(), static_cast<Eigen::Index>(n));
  std::vector<Payload> kept;
  kept.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    resampled.col(static_cast<Eigen::Index>(s)) = proposed.col(static_cast<Eigen::Index>(keep[s]));
    kept.push_back(*next[keep[s]]);
  }
  X = std::move(resampled);
  payloads = std::move(kept);
  w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  return info;
}

// ---------------------------------------------------------------------------
// HPY particles.

/// [logit sigma, log theta, logit sigma_1, log theta_1, ...].
Eigen::VectorXd to_unconstrained(const HpyParams& eta);
HpyParams from_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& x);

struct Particle {
  HpyParams eta;
  CrfState state;
  double weight = 1.0;

  friend bool operator==(const Particle&, const Particle&) = default;
};

class ParticleSet {
 public:
  /// Weights are normalized; h defaults to 1/N.
  explicit ParticleSet(std::vector<Particle> particles, std::optional<double> h = std::nullopt);

  std::size_t size() const noexcept { return particles_.size(); }
  int arm_count() const { return particles_.front().state.arm_count(); }
  const Particle& operator[](std::size_t i) const { return particles_[i]; }
  auto begin() const { return particles_.begin(); }
  auto end() const { return particles_.end(); }

  double h() const noexcept { return h_; }
  double a() const noexcept { return shrinkage_for(h_); }

  std::vector<double> weights() const;
  Eigen::MatrixXd unconstrained() const;
  Eigen::VectorXd mean_unconstrained() const;
  Eigen::MatrixXd covariance_unconstrained() const;

  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;

 private:
  std::vector<Particle> particles_;
  double h_;
};

/// Seats the batch in a copy of `state` under `eta`, returning the summed log
/// predictive probability of the observed labels and the seated copy.
std::pair<double, CrfState> batch_loglik(const HpyParams& eta, const CrfState& state, const LabeledBatch& batch,
                                         Rng& rng);

struct FilterOptions {
  int threads = 1;
};

struct FilterResult {
  ParticleSet particles;
  LiuWestStepInfo info;
};

FilterResult filter_update(const ParticleSet& ps, const LabeledBatch& batch, Rng& rng,
                           const FilterOptions& options = {});

double effective_sample_size(const ParticleSet& ps);
double effective_sample_size(const std::vector<double>& weights);

void to_json(nlohmann::json& j, const ParticleSet& ps);
ParticleSet particle_set_from_json(const nlohmann::json& j);

}  // namespace hpyts
