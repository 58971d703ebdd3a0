#include "hpyts/pyp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <string>

#include "hpyts/special.hpp"

namespace hpyts {

PyParams::PyParams(double sigma, double theta) : sigma_(sigma), theta_(theta) {
  if (!(sigma > 0.0 && sigma < 1.0))
    throw std::invalid_argument("PyParams: sigma must lie in (0, 1), got " + std::to_string(sigma));
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw std::invalid_argument("PyParams: theta must be positive, got " + std::to_string(theta));
}

ClusterCounts::ClusterCounts(std::vector<int> counts) : counts_(std::move(counts)) {
  for (int c : counts_) {
    if (c < 1) throw std::invalid_argument("ClusterCounts: every count must be >= 1");
    total_ += c;
  }
}

double eppf_log(const std::vector<int>& counts, double sigma, double theta) {
  int n = 0;
  for (int c : counts) n += c;
  if (n <= 1) return 0.0;
  const int k = static_cast<int>(counts.size());
  double out = 0.0;
  for (int i = 1; i < k; ++i) out += std::log(theta + i * sigma);
  for (int c : counts) out += log_pochhammer(1.0 - sigma, c - 1);
  return out - log_pochhammer(theta + 1.0, n - 1);
}

double eppf_log(const ClusterCounts& counts, const PyParams& params) {
  return eppf_log(counts.counts(), params.sigma(), params.theta());
}

// ---------------------------------------------------------------------------

GfcTable::GfcTable(double sigma, int n_max, int cap) : sigma_(sigma), n_max_(n_max) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("GfcTable: sigma must lie in (0, 1)");
  if (n_max < 1) throw std::invalid_argument("GfcTable: n_max must be >= 1");
  if (n_max > cap)
    throw std::length_error("GfcTable: n_max " + std::to_string(n_max) + " exceeds cap " +
                            std::to_string(cap));
  values_.assign(offset(n_max + 1), kNegInf);
  fill_rows(1, n_max);
}

void GfcTable::fill_rows(int from, int to) {
  const double log_sigma = std::log(sigma_);
  for (int n = from; n <= to; ++n) {
    double* row = values_.data() + offset(n);
    if (n == 1) {
      row[0] = log_sigma;
      continue;
    }
    const double* prev = values_.data() + offset(n - 1);
    for (int k = 1; k <= n; ++k) {
      // C(n,k) = sigma C(n-1,k-1) + (n-1-k sigma) C(n-1,k); C(n-1,0) = 0 for n >= 2.
      const double from_diag = (k >= 2) ? log_sigma + prev[k - 2] : kNegInf;
      const double from_left = (k <= n - 1) ? std::log(n - 1 - k * sigma_) + prev[k - 1] : kNegInf;
      row[k - 1] = log_add_exp(from_diag, from_left);
    }
  }
}

double GfcTable::log_c(int n, int k) const {
  if (n == 0 && k == 0) return 0.0;
  if (n < 1 || k < 1 || k > n) return kNegInf;
  if (n > n_max_) throw std::out_of_range("GfcTable::log_c: n beyond table size");
  return values_[offset(n) + (k - 1)];
}

GfcTable GfcTable::extended(int n_max, int cap) const {
  if (n_max <= n_max_) return *this;
  if (n_max > cap)
    throw std::length_error("GfcTable: n_max " + std::to_string(n_max) + " exceeds cap " +
                            std::to_string(cap));
  GfcTable out;
  out.sigma_ = sigma_;
  out.n_max_ = n_max;
  out.values_ = values_;
  out.values_.resize(offset(n_max + 1), kNegInf);
  out.fill_rows(n_max_ + 1, n_max);
  return out;
}

std::shared_ptr<const GfcTable> GfcCache::get(double sigma, int n_min) {
  const auto key = std::bit_cast<std::uint64_t>(sigma);
  {
    std::shared_lock lock(mutex_);
    auto it = tables_.find(key);
    if (it != tables_.end() && it->second->n_max() >= n_min) return it->second;
  }
  std::unique_lock lock(mutex_);
  auto it = tables_.find(key);
  if (it != tables_.end() && it->second->n_max() >= n_min) return it->second;
  std::shared_ptr<const GfcTable> table =
      it != tables_.end() ? std::make_shared<const GfcTable>(it->second->extended(n_min))
                          : std::make_shared<const GfcTable>(sigma, std::max(n_min, 1));
  if (it == tables_.end() && tables_.size() >= max_entries_) tables_.clear();
  tables_[key] = table;
  return table;
}

GfcCache& GfcCache::global() {
  static GfcCache cache;
  return cache;
}

Eigen::VectorXd distinct_count_pmf(int n, double sigma, double theta, const GfcTable& table) {
  if (n < 1) throw std::invalid_argument("distinct_count_pmf: n must be >= 1");
  if (n > table.n_max()) throw std::out_of_range("distinct_count_pmf: n exceeds the table size");
  if (sigma != table.sigma()) throw std::invalid_argument("distinct_count_pmf: table built for another sigma");
  if (!(theta >= 0.0)) throw std::invalid_argument("distinct_count_pmf: theta must be >= 0");
  const double log_sigma = std::log(sigma);
  double log_denominator = 0.0;  // log (theta + 1)_{n-1}
  for (int r = 1; r < n; ++r) log_denominator += std::log(theta + r);
  Eigen::VectorXd out(n);
  double log_prefix = 0.0;  // log prod_{i<k} (theta + i sigma)
  for (int k = 1; k <= n; ++k) {
    if (k >= 2) log_prefix += std::log(theta + (k - 1) * sigma);
    out(k - 1) = std::exp(log_prefix + table.log_c(n, k) - k * log_sigma - log_denominator);
  }
  return out;
}

// ---------------------------------------------------------------------------

StickBreaking::StickBreaking(const PyParams& params, int truncation)
    : params_(params), truncation_(truncation) {
  if (truncation < 1) throw std::invalid_argument("StickBreaking: truncation must be >= 1");
}

double StickBreaking::weight(int k, Rng& rng) {
  if (k < 0 || k >= truncation_) throw std::out_of_range("StickBreaking::weight: index beyond truncation");
  while (static_cast<int>(weights_.size()) <= k) {
    const int index = static_cast<int>(weights_.size()) + 1;
    const double v = sample_beta(1.0 - params_.sigma(), params_.theta() + index * params_.sigma(), rng);
    const double w = v * remaining_;
    remaining_ *= (1.0 - v);
    weights_.push_back(w);
    cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + w);
  }
  return weights_[k];
}

int StickBreaking::draw(Rng& rng) {
  const double u = uniform01(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it != cumulative_.end()) return static_cast<int>(it - cumulative_.begin());
  while (static_cast<int>(weights_.size()) < truncation_) {
    weight(static_cast<int>(weights_.size()), rng);
    if (cumulative_.back() > u) return static_cast<int>(weights_.size()) - 1;
  }
  return truncation_ + fresh_++;
}

Eigen::VectorXd stick_breaking_sample(const PyParams& params, int truncation, Rng& rng) {
  StickBreaking sticks(params, truncation);
  Eigen::VectorXd out(truncation);
  for (int k = 0; k < truncation; ++k) out(k) = sticks.weight(k, rng);
  return out;
}

}  // namespace hpyts
