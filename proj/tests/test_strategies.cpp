#include "doctest.h"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <set>

#include "hpyts/strategies.hpp"

using namespace hpyts;

namespace {

ParticleSet particles_for(const HpyParams& eta, const std::vector<std::vector<std::string>>& arms, int N = 4) {
  CrfState s(static_cast<int>(arms.size()));
  Rng seat(1);
  for (int j = 0; j < static_cast<int>(arms.size()); ++j)
    for (const auto& l : arms[j]) seat_observation(s, j, l, eta, seat);
  std::vector<Particle> ps(N, Particle{eta, s, 1.0});
  return ParticleSet(std::move(ps));
}

FreqOfFreq fof(std::map<int, int> phi) {
  FreqOfFreq f;
  f.phi = std::move(phi);
  for (const auto& [i, c] : f.phi) f.n += i * c;
  return f;
}

}  // namespace

TEST_CASE("names parse and print") {
  for (auto s : {Strategy::hpyts, Strategy::gtts, Strategy::uniform, Strategy::oracle})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK(parse_mode("delayed") == Mode::delayed);
  CHECK_THROWS_AS(parse_strategy("greedy"), std::invalid_argument);
  CHECK_THROWS_AS(parse_mode("batch"), std::invalid_argument);
}

TEST_CASE("Allocation::single and FreqOfFreq") {
  const auto a = Allocation::single(3, 1, 7);
  CHECK(a.counts == std::vector<int>{0, 7, 0});
  CHECK(a.total() == 7);
  CHECK(a.chosen_arm == 1);
  CHECK_THROWS(Allocation::single(3, 3, 1));

  const auto f = FreqOfFreq::from_counts({{"a", 2}, {"b", 1}, {"c", 1}, {"d", 0}});
  CHECK(f.n == 4);
  CHECK(f.phi.at(1) == 2);
  CHECK(f.phi.at(2) == 1);
  CHECK_FALSE(f.phi.contains(0));
}

TEST_CASE("argmax ties split evenly") {
  Rng rng(2);
  const std::vector<double> v{3.2, 1.1, 3.2};
  int first = 0;
  const int runs = 20000;
  for (int r = 0; r < runs; ++r) {
    const auto i = argmax_random_tie(v, rng);
    REQUIRE((i == 0 || i == 2));
    first += i == 0;
  }
  CHECK(std::abs(first / double(runs) - 0.5) <= 3.0 * std::sqrt(0.25 / runs));
  const std::vector<double> single{4.0};
  CHECK(argmax_random_tie(single, rng) == 0);
}

TEST_CASE("proportional allocation examples") {
  Rng rng(3);
  const std::vector<double> w{2.0, 1.0, 1.0};
  CHECK(proportional_allocation(w, 4, rng) == std::vector<int>{2, 1, 1});

  std::set<std::vector<int>> seen;
  const std::vector<double> even{1.0, 1.0};
  for (int r = 0; r < 200; ++r) {
    const auto a = proportional_allocation(even, 3, rng);
    CHECK((a == std::vector<int>{2, 1} || a == std::vector<int>{1, 2}));
    seen.insert(a);
  }
  CHECK(seen.size() == 2);

  const std::vector<double> zero(4, 0.0);
  CHECK(proportional_allocation(zero, 4, rng) == std::vector<int>{1, 1, 1, 1});
  const std::vector<double> neg{-1.0, 2.0};
  CHECK(proportional_allocation(neg, 5, rng) == std::vector<int>{0, 5});
  CHECK(proportional_allocation(w, 0, rng) == std::vector<int>{0, 0, 0});
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(proportional_allocation(bad, 2, rng), std::invalid_argument);
}

TEST_CASE("allocations are invariant to rescaling the scores") {
  Rng gen(4);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> w(1 + uniform_index(6, gen)), scaled;
    for (auto& x : w) x = uniform01(gen);
    const double c = std::exp(10.0 * standard_normal(gen));
    for (double x : w) scaled.push_back(c * x);
    const int M = static_cast<int>(uniform_index(50, gen));
    Rng a(rep), b(rep);
    const auto lhs = proportional_allocation(w, M, a);
    CHECK(lhs == proportional_allocation(scaled, M, b));
    int total = 0;
    for (int x : lhs) total += x;
    CHECK(total == M);
    Rng c1(rep), c2(rep);
    CHECK(argmax_random_tie(w, c1) == argmax_random_tie(scaled, c2));
  }
}

TEST_CASE("Good-Toulmin examples") {
  FreqOfFreq empty;
  empty.phi = {{1, 0}, {3, 0}};
  empty.n = 3;
  CHECK(gt_estimate(empty, 5, {GtSmoothing::Kind::none}) == 0.0);
  CHECK(gt_estimate(empty, 5) == 0.0);
  CHECK(gt_estimate(fof({{1, 1}}), 1, {GtSmoothing::Kind::none}) == doctest::Approx(1.0));
  CHECK(gt_estimate(fof({{1, 2}, {2, 1}}), 2, {GtSmoothing::Kind::none}) == doctest::Approx(0.75));
  CHECK(gt_estimate(fof({{1, 2}, {2, 1}}), 0) == 0.0);
  CHECK_THROWS_AS(gt_estimate(FreqOfFreq{}, 3), std::invalid_argument);
  CHECK_THROWS_AS(gt_estimate(fof({{1, 1}}), -1), std::invalid_argument);
  // Unsmoothed extrapolation far beyond n is clamped into [0, M].
  const double wild = gt_estimate(fof({{1, 3}, {2, 4}}), 1000, {GtSmoothing::Kind::none});
  CHECK(wild >= 0.0);
  CHECK(wild <= 1000.0);
  CHECK(gt_estimate(fof({{1, 10}}), 1000, {GtSmoothing::Kind::none}) == 1000.0);
}

TEST_CASE("smoothed Good-Toulmin matches a term-by-term series") {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    std::map<int, int> phi;
    const int species = 1 + static_cast<int>(uniform_index(20, rng));
    for (int s = 0; s < species; ++s) ++phi[1 + static_cast<int>(uniform_index(8, rng))];
    const auto f = fof(phi);
    const int M = 1 + static_cast<int>(uniform_index(4 * f.n, rng));
    const double t = static_cast<double>(M) / f.n;
    double expected = 0.0;
    if (t <= 1.0) {
      for (const auto& [i, c] : phi) expected += -std::pow(-t, i) * c;
    } else {
      const int k = static_cast<int>(std::ceil(0.5 * std::log2(f.n * t * t / (t - 1.0))));
      const boost::math::binomial_distribution<double> L(k, 2.0 / (t + 2.0));
      for (const auto& [i, c] : phi) {
        if (i > k) continue;
        const double tail = i == 0 ? 1.0 : boost::math::cdf(boost::math::complement(L, i - 1));
        expected += -std::pow(-t, i) * tail * c;
      }
    }
    expected = std::clamp(expected, 0.0, static_cast<double>(M));
    CHECK(gt_estimate(f, M) == doctest::Approx(expected).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("GT-TS draws arms in proportion to the estimates") {
  const std::vector<FreqOfFreq> arms{fof({{1, 1}, {2, 1}}), fof({{1, 3}, {2, 1}})};
  const GtSmoothing none{GtSmoothing::Kind::none};
  const double u0 = gt_estimate(arms[0], 3, none), u1 = gt_estimate(arms[1], 3, none);
  Rng rng(6);
  int zero = 0;
  const int runs = 50000;
  for (int r = 0; r < runs; ++r) zero += gtts_select(arms, 3, rng, none) == 0;
  const double p = u0 / (u0 + u1);
  CHECK(std::abs(zero / double(runs) - p) <= 3.0 * std::sqrt(p * (1 - p) / runs));

  // Both estimates zero: the floor makes the draw uniform.
  const std::vector<FreqOfFreq> flat{fof({{2, 2}}), fof({{4, 1}})};
  Rng r0(12);
  int first = 0;
  for (int r = 0; r < runs; ++r) first += gtts_select(flat, 1, r0, none) == 0;
  CHECK(std::abs(first / double(runs) - 0.5) <= 3.0 * std::sqrt(0.25 / runs));

  const std::vector<FreqOfFreq> dead{fof({{2, 3}}), fof({{1, 4}})};
  Rng r2(7);
  const auto a = gtts_allocate_delayed(dead, 4, r2, none);
  CHECK(a.total() == 4);
  CHECK(a.counts[1] >= a.counts[0]);
}

TEST_CASE("oracle follows the unseen mass") {
  const std::vector<PopulationSpec> truth{PopulationSpec("a", "custom", {"x", "y"}, {0.5, 0.5}),
                                          PopulationSpec("b", "custom", {"x", "z"}, {0.8, 0.2})};
  const std::unordered_set<std::string> seen{"x"};
  const auto mass = unseen_mass(truth, seen);
  CHECK(mass[0] == doctest::Approx(0.5));
  CHECK(mass[1] == doctest::Approx(0.2));
  Rng rng(8);
  CHECK(oracle_select(truth, seen, rng) == 0);

  const std::unordered_set<std::string> all{"x", "y", "z"};
  std::set<int> picks;
  for (int r = 0; r < 100; ++r) picks.insert(oracle_select(truth, all, rng));
  CHECK(picks.size() == 2);
  CHECK(oracle_allocate_delayed(truth, all, 4, rng).counts == std::vector<int>{2, 2});
  CHECK(oracle_allocate_delayed(truth, seen, 7, rng).counts == std::vector<int>{5, 2});
}

TEST_CASE("uniform choice passes a chi-squared test") {
  Rng rng(9);
  const int J = 5, runs = 100000;
  std::vector<int> hist(J, 0);
  for (int r = 0; r < runs; ++r) ++hist[uniform_select(J, rng)];
  double stat = 0.0;
  const double e = static_cast<double>(runs) / J;
  for (int h : hist) stat += (h - e) * (h - e) / e;
  const boost::math::chi_squared_distribution<double> chi(J - 1);
  CHECK(stat < boost::math::quantile(chi, 0.999));

  const auto a = uniform_allocate_delayed(3, 7, rng);
  CHECK(a.total() == 7);
  for (int c : a.counts) CHECK((c == 2 || c == 3));
}

TEST_CASE("HPY-TS with one arm always picks it") {
  const auto ps = particles_for(HpyParams::uniform(1, 0.5, 1.0), {{"a", "b", "a"}});
  Rng rng(10);
  for (int r = 0; r < 50; ++r) CHECK(hpyts_select(ps, 5, rng).arm == 0);
  CHECK_THROWS_AS(hpyts_select(ps, 0, rng), std::invalid_argument);
}

TEST_CASE("HPY-TS prefers the arm whose posterior promises novelty") {
  const HpyParams eta(PyParams(0.5, 5.0), {PyParams(0.05, 0.05), PyParams(0.9, 20.0)});
  std::vector<std::string> dull(30, "a"), rich;
  for (int i = 0; i < 30; ++i) rich.push_back("r" + std::to_string(i));
  const auto ps = particles_for(eta, {dull, rich});
  Rng rng(11);
  int rich_picks = 0;
  for (int r = 0; r < 200; ++r) {
    const auto c = hpyts_select(ps, 10, rng);
    REQUIRE(c.draw.expected_new.size() == 2);
    rich_picks += c.arm == 1;
  }
  CHECK(rich_picks > 180);

  const auto d = hpyts_allocate_delayed(ps, 10, rng);
  CHECK(d.allocation.total() == 10);
  CHECK(d.allocation.counts[1] > d.allocation.counts[0]);
}

TEST_CASE("HPY-TS is deterministic under a fixed seed") {
  const auto ps = particles_for(HpyParams::uniform(3, 0.5, 1.0), {{"a"}, {"a", "b"}, {"c", "c"}});
  for (int seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    const auto x = hpyts_select(ps, 4, a);
    const auto y = hpyts_select(ps, 4, b);
    CHECK(x.arm == y.arm);
    CHECK(x.particle == y.particle);
    CHECK(x.draw.expected_new == y.draw.expected_new);
  }
}
