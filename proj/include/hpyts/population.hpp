#pragma once

// True (simulation) or empirical (replay) per-arm species distributions.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hpyts/random.hpp"

namespace hpyts {

class PopulationSpec {
 public:
  /// Weights need not be normalized; they must be positive and finite.
  PopulationSpec(std::string name, std::string kind, std::vector<std::string> labels, std::vector<double> weights);

  const std::string& name() const noexcept { return name_; }
  const std::string& kind() const noexcept { return kind_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return labels_.size(); }

  /// Index of one draw with replacement.
  std::size_t draw_index(Rng& rng) const;
  std::vector<std::string> sample(int n, Rng& rng) const;

 private:
  std::string name_;
  std::string kind_;
  std::vector<std::string> labels_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

/// p(k) = k^-s / sum_{i<=N} i^-s over labels "s<offset + k>", k = 1..N.
/// Species with the same rank (and offset) are the same species in every arm.
PopulationSpec zipf_population(int N, double s, std::string name = "zipf", int label_offset = 0);

/// Per-arm label counts in first-seen order (labels in first-seen order too).
struct ArmLabelCounts {
  std::string arm;
  std::vector<std::pair<std::string, long long>> counts;
};

/// Parses "arm,label[,count]" rows; see load_replay for the format.
std::vector<ArmLabelCounts> read_arm_label_counts(
    std::istream& in, const std::optional<std::vector<std::string>>& expected_arms = std::nullopt);

/// Reads "arm,label[,count]" rows (optional header line "arm,label[,count]",
/// blank lines and '#' comments ignored).  Arms appear in first-seen order,
/// or in the order of `expected_arms`, in which case other arm values are
/// rejected.  Errors carry the line number.
std::vector<PopulationSpec> load_replay(std::istream& in,
                                        const std::optional<std::vector<std::string>>& expected_arms = std::nullopt);
std::vector<PopulationSpec> load_replay_file(const std::string& path,
                                             const std::optional<std::vector<std::string>>& expected_arms = std::nullopt);

}  // namespace hpyts
