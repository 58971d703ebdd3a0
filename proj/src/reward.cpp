#include "hpyts/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hpyts/smc.hpp"
#include "hpyts/special.hpp"

namespace hpyts {

namespace {

// Binomial terms whose weight falls below this are skipped; the neglected
// mass is at most M * 1e-300 times a quantity bounded by M.
constexpr double kLogSkip = -690.7755278982137;  // log(1e-300)

double clamp_open_unit(double x) {
  if (x <= 0.0) return std::numeric_limits<double>::min();
  if (x >= 1.0) return std::nextafter(1.0, 0.0);
  return x;
}

std::vector<Forecast> summarize(const std::vector<std::vector<double>>& values,
                                const std::vector<double>& probs) {
  std::vector<Forecast> out;
  out.reserve(values.size());
  for (const auto& column : values) {
    Forecast f;
    f.probs = probs;
    const double n = static_cast<double>(column.size());
    double sum = 0.0;
    for (double v : column) sum += v;
    f.mean = sum / n;
    double ss = 0.0;
    for (double v : column) ss += (v - f.mean) * (v - f.mean);
    f.sd = column.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    for (double q : probs) {
      if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("forecast: quantile level outside [0, 1]");
      const double h = (n - 1.0) * q;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      f.quantiles.push_back(sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]));
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

ArmRewardContext reward_context(const CrfState& state, const HpyParams& params, int arm) {
  return ArmRewardContext{params.global, params.arms.at(arm), state.dishes(), state.tables(arm)};
}

double sample_beta0(const CrfState& state, const HpyParams& params, Rng& rng) {
  const int k = state.dishes();
  if (k == 0) throw std::domain_error("sample_beta0: the franchise is empty; seat an initial sample first");
  const double sigma = params.global.sigma();
  const double theta = params.global.theta();
  return clamp_open_unit(sample_beta(theta + k * sigma, state.total_tables() - sigma * k, rng));
}

double sample_pj(const CrfState& state, const HpyParams& params, int arm, double beta0, Rng& rng) {
  if (!(beta0 > 0.0 && beta0 < 1.0)) throw std::invalid_argument("sample_pj: beta0 must lie in (0, 1)");
  const int n = state.customers(arm);
  if (n == 0)
    throw std::domain_error("sample_pj: arm " + std::to_string(arm) + " has no observations");
  const PyParams& lower = params.arms.at(arm);
  const int m = state.tables(arm);
  const double c = lower.theta() + lower.sigma() * m;
  const double p = sample_beta(c * beta0, c * (1.0 - beta0) + n - lower.sigma() * m, rng);
  return p >= 1.0 ? std::nextafter(1.0, 0.0) : p;
}

double expected_new_species(int M, double beta0, double p, const ArmRewardContext& ctx,
                            const GfcTable& arm_gfc) {
  if (M < 0) throw std::invalid_argument("expected_new_species: M must be >= 0");
  if (std::isnan(beta0) || std::isnan(p)) throw std::invalid_argument("expected_new_species: NaN input");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("expected_new_species: p must lie in [0, 1]");
  if (!(beta0 >= 0.0 && beta0 <= 1.0))
    throw std::invalid_argument("expected_new_species: beta0 must lie in [0, 1]");
  if (M == 0 || p == 0.0) return 0.0;

  const double sigma = ctx.global.sigma();
  const double base = ctx.global.theta() + ctx.dishes * sigma;  // theta + K sigma
  const double sigma_j = ctx.arm.sigma();
  const double strength = (ctx.arm.theta() + sigma_j * ctx.arm_tables) * beta0;
  if (arm_gfc.sigma() != sigma_j)
    throw std::invalid_argument("expected_new_species: table built for another sigma");
  if (arm_gfc.n_max() < M) throw std::out_of_range("expected_new_species: table smaller than M");

  // excess[m] = (base + sigma)_m / (base)_m - 1, via running log1p sums.
  std::vector<double> excess(M + 1, 0.0);
  std::vector<double> log_prefix(M + 1, 0.0);  // log prod_{r<m} (strength + r sigma_j)
  std::vector<double> log_rising(M + 1, 0.0);  // log (strength + 1)_{i-1}
  double log_ratio = 0.0;
  for (int m = 1; m <= M; ++m) {
    log_ratio += std::log1p(sigma / (base + m - 1));
    excess[m] = std::expm1(log_ratio);
    if (m >= 2) {
      log_prefix[m] = log_prefix[m - 1] + std::log(strength + (m - 1) * sigma_j);
      log_rising[m] = log_rising[m - 1] + std::log(strength + (m - 1));
    }
  }

  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double log_sigma_j = std::log(sigma_j);
  double log_choose = 0.0;  // log C(M, i)
  double total = 0.0;
  for (int i = 1; i <= M; ++i) {
    log_choose += std::log(static_cast<double>(M - i + 1)) - std::log(static_cast<double>(i));
    const double log_w = log_choose + i * log_p + (M - i == 0 ? 0.0 : (M - i) * log_q);
    if (!(log_w > kLogSkip)) continue;
    double inner = 0.0;
    for (int m = 1; m <= i; ++m) {
      const double log_f = log_prefix[m] + arm_gfc.log_c(i, m) - m * log_sigma_j - log_rising[i];
      inner += std::exp(log_f) * excess[m];
    }
    total += std::exp(log_w) * inner;
  }
  const double raw = base / sigma * total;
  if (!(raw >= -1e-8))
    throw std::logic_error("expected_new_species: negative value " + std::to_string(raw));
  if (!(raw <= M * (1.0 + 1e-9)))
    throw std::logic_error("expected_new_species: value " + std::to_string(raw) + " exceeds M");
  return std::max(raw, 0.0);
}

double expected_new_species(int M, double beta0, double p, const ArmRewardContext& ctx) {
  if (M == 0 || p == 0.0) return expected_new_species(M, beta0, p, ctx, GfcTable(ctx.arm.sigma(), 1));
  const auto table = GfcCache::global().get(ctx.arm.sigma(), M);
  return expected_new_species(M, beta0, p, ctx, *table);
}

RewardDraw draw_rewards(const CrfState& state, const HpyParams& params, int M, Rng& rng) {
  if (M < 0) throw std::invalid_argument("draw_rewards: M must be >= 0");
  RewardDraw draw;
  draw.M = M;
  draw.beta0 = sample_beta0(state, params, rng);
  const int arms = state.arm_count();
  draw.p.resize(arms);
  draw.expected_new.resize(arms);
  for (int j = 0; j < arms; ++j) {
    draw.p[j] = sample_pj(state, params, j, draw.beta0, rng);
    draw.expected_new[j] = expected_new_species(M, draw.beta0, draw.p[j], reward_context(state, params, j));
  }
  return draw;
}

std::vector<Forecast> posterior_mean_forecast(const CrfState& state, const HpyParams& params, int M,
                                              int n_draws, const std::vector<double>& probs, Rng& rng) {
  if (n_draws < 1) throw std::invalid_argument("posterior_mean_forecast: n_draws must be >= 1");
  std::vector<std::vector<double>> values(state.arm_count());
  for (int d = 0; d < n_draws; ++d) {
    const RewardDraw draw = draw_rewards(state, params, M, rng);
    for (int j = 0; j < state.arm_count(); ++j) values[j].push_back(draw.expected_new[j]);
  }
  return summarize(values, probs);
}

std::vector<Forecast> posterior_mean_forecast(const ParticleSet& particles, int M, int n_draws,
                                              const std::vector<double>& probs, Rng& rng) {
  if (n_draws < 1) throw std::invalid_argument("posterior_mean_forecast: n_draws must be >= 1");
  const int arms = particles.arm_count();
  std::vector<std::vector<double>> values(arms);
  const std::vector<double> weights = particles.weights();
  for (int d = 0; d < n_draws; ++d) {
    const Particle& pick = particles[sample_categorical(weights, rng)];
    const RewardDraw draw = draw_rewards(pick.state, pick.eta, M, rng);
    for (int j = 0; j < arms; ++j) values[j].push_back(draw.expected_new[j]);
  }
  return summarize(values, probs);
}

}  // namespace hpyts
