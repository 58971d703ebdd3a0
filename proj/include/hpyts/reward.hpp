#pragma once

// Thompson draws of the expected number of new species in a further batch of M
// observations from one arm, given a franchise seating and hyperparameters.

#include <vector>

#include "hpyts/crf.hpp"
#include "hpyts/pyp.hpp"
#include "hpyts/random.hpp"

namespace hpyts {

class ParticleSet;

/// One Thompson draw: beta0, p_j = P_j(A) and E[K_j^(M) | Y, beta0, p_j] per arm.
struct RewardDraw {
  int M = 0;
  double beta0 = 0.0;
  std::vector<double> p;
  std::vector<double> expected_new;
};

/// Everything the expected-new-species formula needs about one arm.
struct ArmRewardContext {
  PyParams global;
  PyParams arm;
  int dishes = 0;      // K
  int arm_tables = 0;  // m_{j.}
};

ArmRewardContext reward_context(const CrfState& state, const HpyParams& params, int arm);

/// beta0 ~ Beta(theta + K sigma, m.. - sigma K).  Requires K >= 1.
double sample_beta0(const CrfState& state, const HpyParams& params, Rng& rng);

/// p_j ~ Beta(c beta0, c (1 - beta0) + n_j - sigma_j m_j) with c = theta_j + sigma_j m_j.
/// Requires the arm to hold at least one observation.
double sample_pj(const CrfState& state, const HpyParams& params, int arm, double beta0, Rng& rng);

/// E[K_j^(M) | Y, beta0, p_j]:
///   ((theta + K sigma) / sigma) * sum_{i=1}^M Binom(i; M, p)
///     * sum_{m=1}^i F(i, m; sigma_j, (theta_j + sigma_j m_j) beta0)
///       * [ (theta + K sigma + sigma)_m / (theta + K sigma)_m - 1 ].
/// `arm_gfc` must be built for sigma_j with n_max >= M.  O(M^2).
double expected_new_species(int M, double beta0, double p, const ArmRewardContext& ctx,
                            const GfcTable& arm_gfc);

/// Same, fetching the table from the global cache.
double expected_new_species(int M, double beta0, double p, const ArmRewardContext& ctx);

/// One full draw across all arms (shared beta0, independent p_j).
RewardDraw draw_rewards(const CrfState& state, const HpyParams& params, int M, Rng& rng);

struct Forecast {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> probs;      // requested quantile levels
  std::vector<double> quantiles;  // matching quantile values
};

/// Monte-Carlo integration of the reward over (beta0, p_j) for every arm.
std::vector<Forecast> posterior_mean_forecast(const CrfState& state, const HpyParams& params, int M,
                                              int n_draws, const std::vector<double>& probs, Rng& rng);

/// Same, additionally integrating over the weighted particles.
std::vector<Forecast> posterior_mean_forecast(const ParticleSet& particles, int M, int n_draws,
                                              const std::vector<double>& probs, Rng& rng);

}  // namespace hpyts
