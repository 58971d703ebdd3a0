#pragma once

// Single-population Pitman-Yor combinatorics: the Chinese restaurant
// predictive, the EPPF, generalized factorial coefficients and the law of the
// number of distinct values in a sample.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hpyts/random.hpp"

namespace hpyts {

/// Discount `sigma` in (0, 1) and strength `theta` > 0.
class PyParams {
 public:
  PyParams(double sigma, double theta);

  double sigma() const noexcept { return sigma_; }
  double theta() const noexcept { return theta_; }

  friend bool operator==(const PyParams&, const PyParams&) = default;

 private:
  double sigma_;
  double theta_;
};

/// Cluster multiplicities (n_1, ..., n_K) of an exchangeable sample.
class ClusterCounts {
 public:
  ClusterCounts() = default;
  explicit ClusterCounts(std::vector<int> counts);

  const std::vector<int>& counts() const noexcept { return counts_; }
  int total() const noexcept { return total_; }
  int clusters() const noexcept { return static_cast<int>(counts_.size()); }
  bool empty() const noexcept { return counts_.empty(); }

 private:
  std::vector<int> counts_;
  int total_ = 0;
};

/// Predictive law of the next draw: entries 0..K-1 are the existing clusters,
/// entry K is "new".  `sigma` may be 0 here (Dirichlet limit).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> crp_predictive(const ClusterCounts& counts, Scalar sigma,
                                                        Scalar theta) {
  if (!(sigma >= Scalar(0)) || !(sigma < Scalar(1)) || !(theta > -sigma))
    throw std::invalid_argument("crp_predictive: need 0 <= sigma < 1 and theta > -sigma");
  const int k = counts.clusters();
  const Scalar denom = theta + Scalar(counts.total());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(k + 1);
  for (int i = 0; i < k; ++i) out(i) = (Scalar(counts.counts()[i]) - sigma) / denom;
  out(k) = (theta + Scalar(k) * sigma) / denom;
  return out;
}

inline Eigen::VectorXd crp_predictive(const ClusterCounts& counts, const PyParams& params) {
  return crp_predictive<double>(counts, params.sigma(), params.theta());
}

/// log EPPF, normalized so it sums to one over the set partitions of [n]:
///   prod_{i<K} (theta + i sigma) * prod_k (1 - sigma)_{n_k - 1} / (theta + 1)_{n - 1}.
double eppf_log(const ClusterCounts& counts, const PyParams& params);
double eppf_log(const std::vector<int>& counts, double sigma, double theta);

/// Triangular table of log C(n, k; sigma), 1 <= k <= n <= n_max.
class GfcTable {
 public:
  static constexpr int kDefaultCap = 4096;

  GfcTable(double sigma, int n_max, int cap = kDefaultCap);

  double sigma() const noexcept { return sigma_; }
  int n_max() const noexcept { return n_max_; }

  /// log C(n, k; sigma); -inf outside 1 <= k <= n (and C(0,0) = 1 gives 0).
  double log_c(int n, int k) const;

  /// Copy extended to a larger n_max, reusing the rows already computed.
  GfcTable extended(int n_max, int cap = kDefaultCap) const;

 private:
  GfcTable() = default;
  void fill_rows(int from, int to);
  static std::size_t offset(int n) { return static_cast<std::size_t>(n) * (n - 1) / 2; }

  double sigma_ = 0.5;
  int n_max_ = 0;
  std::vector<double> values_;
};

/// Process-wide cache of GfcTables keyed by the exact bit pattern of sigma.
/// Tables are immutable once published; lookups are shared-locked.
class GfcCache {
 public:
  explicit GfcCache(std::size_t max_entries = 512) : max_entries_(max_entries) {}

  std::shared_ptr<const GfcTable> get(double sigma, int n_min);

  static GfcCache& global();

 private:
  std::size_t max_entries_;
  std::shared_mutex mutex_;
  std::map<std::uint64_t, std::shared_ptr<const GfcTable>> tables_;
};

/// F(n, k; sigma, theta) = P(J_n = k) for k = 1..n, returned at index k-1.
/// `theta` may be 0 (limit of a vanishing strength).
Eigen::VectorXd distinct_count_pmf(int n, double sigma, double theta, const GfcTable& table);

inline Eigen::VectorXd distinct_count_pmf(int n, const PyParams& params, const GfcTable& table) {
  return distinct_count_pmf(n, params.sigma(), params.theta(), table);
}

/// Lazily generated stick-breaking weights of a PY random measure with
/// V_k ~ Beta(1 - sigma, theta + k sigma).
class StickBreaking {
 public:
  StickBreaking(const PyParams& params, int truncation);

  /// Weight of atom k (0-based), generating sticks on demand.
  double weight(int k, Rng& rng);

  /// Atom index of one draw; draws beyond the truncation land on fresh
  /// atoms numbered from `truncation` upward.
  int draw(Rng& rng);

 private:
  PyParams params_;
  int truncation_;
  int fresh_ = 0;
  double remaining_ = 1.0;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

/// The first `truncation` stick-breaking weights.
Eigen::VectorXd stick_breaking_sample(const PyParams& params, int truncation, Rng& rng);

}  // namespace hpyts
