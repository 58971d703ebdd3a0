#pragma once

// Arm-selection policies: HPY-TS, the smoothed Good-Toulmin Thompson baseline,
// the Oracle and Uniform.  Incidence mode sends the whole batch to one arm;
// delayed mode splits it across arms.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hpyts/population.hpp"
#include "hpyts/random.hpp"
#include "hpyts/reward.hpp"
#include "hpyts/smc.hpp"

namespace hpyts {

enum class Mode { incidence, delayed };
enum class Strategy { hpyts, gtts, uniform, oracle };

std::string to_string(Mode m);
std::string to_string(Strategy s);
Mode parse_mode(const std::string& s);
Strategy parse_strategy(const std::string& s);

struct Allocation {
  std::vector<int> counts;  // per arm, sums to M
  int chosen_arm = -1;      // incidence mode only

  static Allocation single(int arm_count, int arm, int M);
  int total() const;
};

/// Species frequencies within one arm: phi[i] = number of species seen exactly i times.
struct FreqOfFreq {
  std::map<int, int> phi;
  int n = 0;

  static FreqOfFreq from_counts(const std::map<std::string, int>& label_counts);
  template <typename Map>
  static FreqOfFreq from_label_counts(const Map& label_counts) {
    FreqOfFreq f;
    for (const auto& [label, c] : label_counts) {
      if (c <= 0) continue;
      ++f.phi[c];
      f.n += c;
    }
    return f;
  }
};

/// Index of the largest value; ties broken uniformly at random.
std::size_t argmax_random_tie(std::span<const double> values, Rng& rng);

/// Largest-remainder rounding of M * w_j / sum(w) (negative weights count as
/// zero; all-zero weights give an equal split).  Remainder ties are broken by
/// a random coin.
std::vector<int> proportional_allocation(std::span<const double> weights, int M, Rng& rng);

struct HpytsChoice {
  int arm = 0;
  std::size_t particle = 0;
  RewardDraw draw;
};

/// Thompson step: one particle by weight, then one reward draw across arms.
HpytsChoice hpyts_select(const ParticleSet& ps, int M, Rng& rng);

struct HpytsAllocation {
  Allocation allocation;
  std::size_t particle = 0;
  RewardDraw draw;
};

HpytsAllocation hpyts_allocate_delayed(const ParticleSet& ps, int M, Rng& rng);

struct GtSmoothing {
  enum class Kind { none, binomial };
  Kind kind = Kind::binomial;
  std::optional<int> k;     // binomial trials; default ceil(0.5 log2(n t^2 / (t - 1)))
  std::optional<double> q;  // success probability; default 2 / (t + 2)
};

/// Smoothed Good-Toulmin estimate of the number of new species in M further
/// draws, clamped to [0, M].
double gt_estimate(const FreqOfFreq& f, int M, const GtSmoothing& smoothing = {});

/// Arm drawn with probability proportional to max(U_j, 1e-6).
int gtts_select(std::span<const FreqOfFreq> per_arm, int M, Rng& rng, const GtSmoothing& smoothing = {});
Allocation gtts_allocate_delayed(std::span<const FreqOfFreq> per_arm, int M, Rng& rng,
                                 const GtSmoothing& smoothing = {});

/// Unseen mass sum_{k not in seen} p_j(k) of each arm.
std::vector<double> unseen_mass(std::span<const PopulationSpec> truth, const std::unordered_set<std::string>& seen);

int oracle_select(std::span<const PopulationSpec> truth, const std::unordered_set<std::string>& seen, Rng& rng);
Allocation oracle_allocate_delayed(std::span<const PopulationSpec> truth,
                                   const std::unordered_set<std::string>& seen, int M, Rng& rng);

int uniform_select(int arm_count, Rng& rng);
Allocation uniform_allocate_delayed(int arm_count, int M, Rng& rng);

}  // namespace hpyts
