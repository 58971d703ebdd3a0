#include "hpyts/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hpyts/special.hpp"

namespace hpyts {

std::string to_string(Mode m) { return m == Mode::incidence ? "incidence" : "delayed"; }

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::hpyts: return "hpyts";
    case Strategy::gtts: return "gtts";
    case Strategy::uniform: return "uniform";
    case Strategy::oracle: return "oracle";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  if (s == "incidence") return Mode::incidence;
  if (s == "delayed") return Mode::delayed;
  throw std::invalid_argument("unknown mode '" + s + "' (expected incidence or delayed)");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "hpyts") return Strategy::hpyts;
  if (s == "gtts") return Strategy::gtts;
  if (s == "uniform") return Strategy::uniform;
  if (s == "oracle") return Strategy::oracle;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected hpyts, gtts, uniform or oracle)");
}

Allocation Allocation::single(int arm_count, int arm, int M) {
  if (arm < 0 || arm >= arm_count) throw std::out_of_range("Allocation: arm out of range");
  Allocation a;
  a.counts.assign(arm_count, 0);
  a.counts[arm] = M;
  a.chosen_arm = arm;
  return a;
}

int Allocation::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

FreqOfFreq FreqOfFreq::from_counts(const std::map<std::string, int>& label_counts) {
  return from_label_counts(label_counts);
}

// ---------------------------------------------------------------------------

std::size_t argmax_random_tie(std::span<const double> values, Rng& rng) {
  if (values.empty()) throw std::invalid_argument("argmax_random_tie: no values");
  const double best = *std::max_element(values.begin(), values.end());
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == best) ties.push_back(i);
  return ties.size() == 1 ? ties.front() : ties[uniform_index(ties.size(), rng)];
}

std::vector<int> proportional_allocation(std::span<const double> weights, int M, Rng& rng) {
  if (weights.empty()) throw std::invalid_argument("proportional_allocation: no arms");
  if (M < 0) throw std::invalid_argument("proportional_allocation: M must be >= 0");
  const std::size_t J = weights.size();
  std::vector<double> w(J);
  double total = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    if (std::isnan(weights[j])) throw std::invalid_argument("proportional_allocation: NaN weight");
    w[j] = std::max(weights[j], 0.0);
    total += w[j];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(w.begin(), w.end(), 1.0);
    total = static_cast<double>(J);
  }
  std::vector<int> out(J);
  std::vector<double> frac(J);
  int assigned = 0;
  for (std::size_t j = 0; j < J; ++j) {
    const double quota = static_cast<double>(M) * w[j] / total;
    out[j] = static_cast<int>(std::floor(quota));
    frac[j] = quota - out[j];
    assigned += out[j];
  }
  std::vector<std::uint64_t> coin(J);
  for (auto& c : coin) c = rng();
  std::vector<std::size_t> order(J);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return coin[a] < coin[b];
  });
  for (std::size_t r = 0; assigned < M; ++r, ++assigned) ++out[order[r % J]];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::pair<std::size_t, RewardDraw> thompson_draw(const ParticleSet& ps, int M, Rng& rng) {
  if (M < 1) throw std::invalid_argument("hpyts: M must be >= 1");
  const auto weights = ps.weights();
  const std::size_t i = sample_categorical(weights, rng);
  return {i, draw_rewards(ps[i].state, ps[i].eta, M, rng)};
}

}  // namespace

HpytsChoice hpyts_select(const ParticleSet& ps, int M, Rng& rng) {
  auto [i, draw] = thompson_draw(ps, M, rng);
  HpytsChoice out;
  out.particle = i;
  out.arm = static_cast<int>(argmax_random_tie(draw.expected_new, rng));
  out.draw = std::move(draw);
  return out;
}

HpytsAllocation hpyts_allocate_delayed(const ParticleSet& ps, int M, Rng& rng) {
  auto [i, draw] = thompson_draw(ps, M, rng);
  HpytsAllocation out;
  out.particle = i;
  out.allocation.counts = proportional_allocation(draw.expected_new, M, rng);
  out.draw = std::move(draw);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// P(L >= i) for L ~ Binomial(k, q), i = 0..k+1.
std::vector<double> binomial_tail(int k, double q) {
  std::vector<double> pmf(k + 1);
  for (int i = 0; i <= k; ++i) {
    double lp = log_binomial(k, i);
    if (i > 0) lp += i * std::log(q);
    if (k - i > 0) lp += (k - i) * std::log1p(-q);
    pmf[i] = std::exp(lp);
  }
  std::vector<double> tail(k + 2, 0.0);
  for (int i = k; i >= 0; --i) tail[i] = tail[i + 1] + pmf[i];
  return tail;
}

}  // namespace

double gt_estimate(const FreqOfFreq& f, int M, const GtSmoothing& smoothing) {
  if (f.n < 1) throw std::invalid_argument("gt_estimate: arm has no observations");
  if (M < 0) throw std::invalid_argument("gt_estimate: M must be >= 0");
  if (M == 0 || f.phi.empty()) return 0.0;
  const double t = static_cast<double>(M) / f.n;
  std::vector<double> tail;
  if (smoothing.kind == GtSmoothing::Kind::binomial && t > 1.0) {
    const int k = smoothing.k.value_or(
        static_cast<int>(std::ceil(0.5 * std::log2(f.n * t * t / (t - 1.0)))));
    const double q = smoothing.q.value_or(2.0 / (t + 2.0));
    if (k < 0) throw std::invalid_argument("gt_estimate: binomial k must be >= 0");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("gt_estimate: binomial q must lie in (0, 1]");
    tail = binomial_tail(k, q);
  }
  double u = 0.0;
  for (const auto& [i, phi] : f.phi) {
    if (i < 1 || phi == 0) continue;
    double weight = 1.0;
    if (!tail.empty()) {
      if (i >= static_cast<int>(tail.size())) break;
      weight = tail[i];
    }
    const double sign = (i % 2 == 1) ? -1.0 : 1.0;  // (-1)^i
    u -= sign * std::pow(t, i) * weight * phi;
  }
  return std::clamp(u, 0.0, static_cast<double>(M));
}

namespace {

std::vector<double> gt_all(std::span<const FreqOfFreq> per_arm, int M, const GtSmoothing& smoothing) {
  if (per_arm.empty()) throw std::invalid_argument("gtts: no arms");
  std::vector<double> u;
  u.reserve(per_arm.size());
  for (const auto& f : per_arm) u.push_back(gt_estimate(f, M, smoothing));
  return u;
}

}  // namespace

int gtts_select(std::span<const FreqOfFreq> per_arm, int M, Rng& rng, const GtSmoothing& smoothing) {
  auto u = gt_all(per_arm, M, smoothing);
  for (auto& x : u) x = std::max(x, 1e-6);
  return static_cast<int>(sample_categorical(u, rng));
}

Allocation gtts_allocate_delayed(std::span<const FreqOfFreq> per_arm, int M, Rng& rng,
                                 const GtSmoothing& smoothing) {
  const auto u = gt_all(per_arm, M, smoothing);
  Allocation a;
  a.counts = proportional_allocation(u, M, rng);
  return a;
}

// ---------------------------------------------------------------------------

std::vector<double> unseen_mass(std::span<const PopulationSpec> truth, const std::unordered_set<std::string>& seen) {
  std::vector<double> out;
  out.reserve(truth.size());
  for (const auto& pop : truth) {
    double mass = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k)
      if (!seen.contains(pop.labels()[k])) mass += pop.probs()[k];
    out.push_back(mass);
  }
  return out;
}

int oracle_select(std::span<const PopulationSpec> truth, const std::unordered_set<std::string>& seen, Rng& rng) {
  if (truth.empty()) throw std::invalid_argument("oracle: no arms");
  const auto mass = unseen_mass(truth, seen);
  return static_cast<int>(argmax_random_tie(mass, rng));
}

Allocation oracle_allocate_delayed(std::span<const PopulationSpec> truth,
                                   const std::unordered_set<std::string>& seen, int M, Rng& rng) {
  if (truth.empty()) throw std::invalid_argument("oracle: no arms");
  Allocation a;
  a.counts = proportional_allocation(unseen_mass(truth, seen), M, rng);
  return a;
}

int uniform_select(int arm_count, Rng& rng) {
  if (arm_count < 1) throw std::invalid_argument("uniform: need at least one arm");
  return static_cast<int>(uniform_index(static_cast<std::size_t>(arm_count), rng));
}

Allocation uniform_allocate_delayed(int arm_count, int M, Rng& rng) {
  if (arm_count < 1) throw std::invalid_argument("uniform: need at least one arm");
  Allocation a;
  a.counts = proportional_allocation(std::vector<double>(arm_count, 1.0), M, rng);
  return a;
}

}  // namespace hpyts
