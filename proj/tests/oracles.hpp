#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner.  Nothing here calls into the engine's combinatorics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "hpyts/crf.hpp"
#include "hpyts/random.hpp"

namespace oracle {

// Calls fn(block_of) for every set partition of {0..n-1}, where block_of[i]
// is the block index of element i in restricted-growth form.
inline void for_each_set_partition(int n, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> a(n, 0);
  std::function<void(int, int)> rec = [&](int i, int blocks) {
    if (i == n) {
      fn(a);
      return;
    }
    for (int b = 0; b <= blocks; ++b) {
      a[i] = b;
      rec(i + 1, std::max(blocks, b + 1));
    }
  };
  if (n == 0) {
    fn(a);
    return;
  }
  rec(0, 0);
}

inline std::vector<int> block_sizes(const std::vector<int>& block_of) {
  std::vector<int> sizes;
  for (int b : block_of) {
    if (b >= static_cast<int>(sizes.size())) sizes.resize(b + 1, 0);
    ++sizes[b];
  }
  return sizes;
}

// Product of (x + i * step) for i in [0, count).
inline double rising(double x, int count, double step = 1.0) {
  double out = 1.0;
  for (int i = 0; i < count; ++i) out *= x + i * step;
  return out;
}

// Pitman-Yor EPPF in linear space, straight from the product formula.
inline double eppf(const std::vector<int>& sizes, double sigma, double theta) {
  int n = 0;
  for (int s : sizes) n += s;
  const int k = static_cast<int>(sizes.size());
  double num = 1.0;
  for (int i = 1; i < k; ++i) num *= theta + i * sigma;
  for (int s : sizes) num *= rising(1.0 - sigma, s - 1);
  return num / rising(theta + 1.0, n - 1);
}

// P(K_n = k), k = 1..n, by the sequential "new cluster" recursion.
inline std::vector<double> distinct_count_law(int n, double sigma, double theta) {
  std::vector<double> p(n + 2, 0.0);
  p[1] = 1.0;
  for (int m = 1; m < n; ++m) {
    std::vector<double> q(n + 2, 0.0);
    for (int k = 1; k <= m; ++k) {
      if (p[k] == 0.0) continue;
      const double fresh = (theta + k * sigma) / (theta + m);
      q[k + 1] += p[k] * fresh;
      q[k] += p[k] * (1.0 - fresh);
    }
    p = q;
  }
  return std::vector<double>(p.begin() + 1, p.begin() + n + 1);
}

// Number of distinct clusters after n CRP draws.
inline int crp_distinct(int n, double sigma, double theta, hpyts::Rng& rng) {
  std::vector<int> counts;
  for (int m = 0; m < n; ++m) {
    const double u = hpyts::uniform01(rng) * (theta + m);
    double acc = 0.0;
    bool placed = false;
    for (auto& c : counts) {
      acc += c - sigma;
      if (u < acc) {
        ++c;
        placed = true;
        break;
      }
    }
    if (!placed) counts.push_back(1);
  }
  return static_cast<int>(counts.size());
}

// ---------------------------------------------------------------------------
// Labeled franchise configurations: a table partition of each arm's customers
// and a dish partition of all tables (numbered arm by arm).

struct FranchiseConfig {
  std::vector<std::vector<int>> table_of;  // per arm: customer -> table within the arm
  std::vector<int> tables_in;              // per arm: number of tables
  std::vector<int> dish_of;                // global table index -> dish

  int global_table(int arm, int table) const {
    int offset = 0;
    for (int j = 0; j < arm; ++j) offset += tables_in[j];
    return offset + table;
  }
  std::string dish_label(int arm, int customer) const {
    return "d" + std::to_string(dish_of[global_table(arm, table_of[arm][customer])]);
  }

  // Direct product-form probability under eta.
  double probability(const hpyts::HpyParams& eta) const {
    double p = eppf(block_sizes(dish_of), eta.global.sigma(), eta.global.theta());
    for (std::size_t j = 0; j < table_of.size(); ++j)
      if (!table_of[j].empty()) p *= eppf(block_sizes(table_of[j]), eta.arms[j].sigma(), eta.arms[j].theta());
    return p;
  }
};

inline void for_each_franchise(const std::vector<int>& customers,
                               const std::function<void(const FranchiseConfig&)>& fn) {
  const int J = static_cast<int>(customers.size());
  FranchiseConfig cfg;
  cfg.table_of.resize(J);
  cfg.tables_in.resize(J);
  std::function<void(int)> arm_level = [&](int j) {
    if (j == J) {
      int total = 0;
      for (int t : cfg.tables_in) total += t;
      for_each_set_partition(total, [&](const std::vector<int>& dishes) {
        cfg.dish_of = dishes;
        fn(cfg);
      });
      return;
    }
    for_each_set_partition(customers[j], [&](const std::vector<int>& tables) {
      cfg.table_of[j] = tables;
      cfg.tables_in[j] = static_cast<int>(block_sizes(tables).size());
      arm_level(j + 1);
    });
  };
  arm_level(0);
}

// One seating step: customer of `arm` eating `dish` at `table`, an index into
// that arm's tables for the dish (equal to their count means a new table).
struct SeatStep {
  int arm;
  std::string dish;
  std::size_t table;
};

// Steps realizing `cfg` when customers arrive in `order` (pairs arm, customer).
inline std::vector<SeatStep> seating_steps(const FranchiseConfig& cfg,
                                           const std::vector<std::pair<int, int>>& order) {
  std::map<std::pair<int, int>, std::size_t> index;  // (arm, table) -> index within dish
  std::map<std::pair<int, std::string>, std::size_t> opened;
  std::vector<SeatStep> steps;
  for (const auto& [arm, c] : order) {
    const int table = cfg.table_of[arm][c];
    const std::string dish = cfg.dish_label(arm, c);
    auto it = index.find({arm, table});
    if (it == index.end()) it = index.emplace(std::pair{arm, table}, opened[{arm, dish}]++).first;
    steps.push_back({arm, dish, it->second});
  }
  return steps;
}

inline std::vector<std::pair<int, int>> arm_major_order(const std::vector<int>& customers) {
  std::vector<std::pair<int, int>> order;
  for (int j = 0; j < static_cast<int>(customers.size()); ++j)
    for (int c = 0; c < customers[j]; ++c) order.push_back({j, c});
  return order;
}

// ---------------------------------------------------------------------------
// Franchise predictive by brute force.

struct PlainFranchise {
  std::vector<std::vector<std::pair<int, int>>> arms;  // per arm: (dish, occupancy) per table
  std::vector<int> dish_tables;                        // m_{.k}
  int seen_dishes = 0;                                 // dishes present before simulation

  static PlainFranchise from(const hpyts::CrfState& s) {
    PlainFranchise f;
    f.arms.resize(s.arm_count());
    std::map<std::string, int> index;
    for (const auto& [dish, m] : s.dish_tables()) {
      index[dish] = static_cast<int>(f.dish_tables.size());
      f.dish_tables.push_back(m);
    }
    f.seen_dishes = static_cast<int>(f.dish_tables.size());
    for (int j = 0; j < s.arm_count(); ++j)
      for (const auto& [dish, occ] : s.arm_tables(j))
        for (int o : occ) f.arms[j].push_back({index.at(dish), o});
    return f;
  }
};

// Seats M customers in `arm` by the two-level Chinese restaurant rules and
// returns the number of dishes that were not served anywhere before.
inline int forward_new_dishes(PlainFranchise f, const hpyts::HpyParams& eta, int arm, int M, hpyts::Rng& rng) {
  const double sj = eta.arms[arm].sigma(), tj = eta.arms[arm].theta();
  const double s0 = eta.global.sigma(), t0 = eta.global.theta();
  auto& tables = f.arms[arm];
  int n = 0;
  for (const auto& t : tables) n += t.second;
  int m_all = std::accumulate(f.dish_tables.begin(), f.dish_tables.end(), 0);
  for (int c = 0; c < M; ++c) {
    double u = hpyts::uniform01(rng) * (tj + n);
    bool seated = false;
    for (auto& t : tables) {
      u -= t.second - sj;
      if (u < 0.0) {
        ++t.second;
        seated = true;
        break;
      }
    }
    ++n;
    if (seated) continue;
    const int K = static_cast<int>(f.dish_tables.size());
    double v = hpyts::uniform01(rng) * (t0 + m_all);
    int dish = K;
    for (int k = 0; k < K; ++k) {
      v -= f.dish_tables[k] - s0;
      if (v < 0.0) {
        dish = k;
        break;
      }
    }
    if (dish == K) f.dish_tables.push_back(0);
    ++f.dish_tables[dish];
    ++m_all;
    tables.push_back({dish, 1});
  }
  return static_cast<int>(f.dish_tables.size()) - f.seen_dishes;
}

// Exact E[new dishes] for M further customers of `arm`: the number of new
// tables follows a Markov chain in (customers, tables), and each new table is
// one draw from the upper restaurant.
inline double exact_expected_new(const hpyts::CrfState& s, const hpyts::HpyParams& eta, int arm, int M) {
  const double sj = eta.arms[arm].sigma(), tj = eta.arms[arm].theta();
  const double s0 = eta.global.sigma(), t0 = eta.global.theta();
  const int n = s.customers(arm), m = s.tables(arm);
  const int K = s.dishes(), m_all = s.total_tables();
  std::vector<double> tables(M + 1, 0.0);  // P(r new tables)
  tables[0] = 1.0;
  for (int c = 0; c < M; ++c) {
    std::vector<double> next(M + 1, 0.0);
    for (int r = 0; r <= c; ++r) {
      const double open = (tj + sj * (m + r)) / (tj + n + c);
      next[r + 1] += tables[r] * open;
      next[r] += tables[r] * (1.0 - open);
    }
    tables = next;
  }
  // e[r] = expected new dishes among r upper draws.
  std::vector<double> e(M + 1, 0.0);
  std::vector<double> fresh(M + 1, 0.0);  // P(k new dishes so far)
  fresh[0] = 1.0;
  for (int d = 0; d < M; ++d) {
    std::vector<double> next(M + 1, 0.0);
    double p_new = 0.0;
    for (int k = 0; k <= d; ++k) {
      const double q = (t0 + (K + k) * s0) / (t0 + m_all + d);
      p_new += fresh[k] * q;
      next[k + 1] += fresh[k] * q;
      next[k] += fresh[k] * (1.0 - q);
    }
    fresh = next;
    e[d + 1] = e[d] + p_new;
  }
  double out = 0.0;
  for (int r = 0; r <= M; ++r) out += tables[r] * e[r];
  return out;
}

// ---------------------------------------------------------------------------
// Statistics.

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline Moments moments(const std::vector<double>& x) {
  Moments m;
  m.n = x.size();
  if (x.empty()) return m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  m.se = m.sd / std::sqrt(static_cast<double>(x.size()));
  return m;
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_greater = 1.0;  // one-sided p-value for mean(a) > mean(b)
};

inline WelchResult welch_greater(const std::vector<double>& a, const std::vector<double>& b) {
  const Moments ma = moments(a), mb = moments(b);
  const double va = ma.sd * ma.sd / static_cast<double>(ma.n);
  const double vb = mb.sd * mb.sd / static_cast<double>(mb.n);
  WelchResult r;
  const double se = std::sqrt(va + vb);
  if (se == 0.0) {
    r.t = ma.mean > mb.mean ? INFINITY : (ma.mean < mb.mean ? -INFINITY : 0.0);
    r.p_greater = ma.mean > mb.mean ? 0.0 : 1.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / se;
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(ma.n - 1) + vb * vb / static_cast<double>(mb.n - 1));
  boost::math::students_t dist(r.df);
  r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// Standard error of the mean of a correlated series by batch means.
inline double batch_means_se(const std::vector<double>& x, int batches) {
  const std::size_t size = x.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < size; ++i) s += x[b * size + i];
    means.push_back(s / static_cast<double>(size));
  }
  return moments(means).se;
}

}  // namespace oracle
