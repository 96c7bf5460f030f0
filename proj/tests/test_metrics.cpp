#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ppde/metrics.hpp"
#include "test_support.hpp"

using namespace ppde;

namespace {

const Vocabulary kABC("ABC");

std::vector<OneHotSequence> pop(std::initializer_list<const char*> seqs) {
  std::vector<OneHotSequence> out;
  for (const char* s : seqs) out.push_back(encode(s, kABC));
  return out;
}

ChainTrace trace(std::size_t id, const std::vector<double>& logp) {
  ChainTrace t;
  t.chain_id = id;
  for (std::size_t k = 0; k < logp.size(); ++k) t.steps.push_back({std::int64_t(k + 1), true, logp[k], 0, {}});
  return t;
}

}  // namespace

TEST(Diversity, HandCountedFixtures) {
  EXPECT_EQ(diversity(pop({"AA", "AB", "BA", "CC"})), 100.0);
  EXPECT_EQ(diversity(pop({"AB", "AB", "AB", "AB"})), 0.0);
  EXPECT_EQ(diversity(pop({"AA", "AA", "BB", "CC"})), 50.0);
  EXPECT_EQ(diversity(pop({"AA", "AA", "BB", "CC"}), UniqueMode::distinct), 75.0);
  EXPECT_EQ(diversity(pop({"AB", "AB", "AB", "AB"}), UniqueMode::distinct), 25.0);
  EXPECT_THROW(diversity({}), EmptyPopulation);
  EXPECT_THROW(diversity({encode("AA", kABC), encode("AAA", kABC)}), ShapeMismatch);
}

TEST(Diversity, OrderInvariantAndBounded) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<OneHotSequence> p;
    for (int k = 0; k < 12; ++k) p.push_back(ref::random_seq(2, 3, rng));
    const double d = diversity(p);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 100.0);
    std::shuffle(p.begin(), p.end(), rng);
    EXPECT_EQ(diversity(p), d);
    EXPECT_LE(d, diversity(p, UniqueMode::distinct));
  }
}

TEST(MutationStats, HandComputedFixtures) {
  const auto wt = encode("AAA", kABC);
  const auto a = mutation_stats(pop({"AAA", "AAA"}), wt);
  EXPECT_EQ(a.mean, 0.0);
  EXPECT_EQ(a.std, 0.0);
  const auto b = mutation_stats(pop({"ABA", "BCB"}), wt);
  EXPECT_EQ(b.mean, 2.0);
  EXPECT_EQ(b.std, 1.0);
  EXPECT_THROW(mutation_stats({}, wt), EmptyPopulation);
  EXPECT_THROW(mutation_stats(pop({"AA"}), wt), ShapeMismatch);
}

TEST(MutationStats, MatchesDirectLoopAndZeroMeanOnlyAtWildType) {
  std::mt19937_64 rng(10);
  const auto wt = ref::random_seq(6, 4, rng);
  for (int t = 0; t < 30; ++t) {
    std::vector<OneHotSequence> p;
    for (int k = 0; k < 9; ++k) p.push_back(ref::random_seq(6, 4, rng));
    double sum = 0.0, sq = 0.0;
    for (const auto& x : p) {
      double d = 0.0;
      for (std::size_t i = 0; i < 6; ++i) d += x.token(i) != wt.token(i);
      sum += d;
      sq += d * d;
    }
    const double mean = sum / 9.0;
    const auto s = mutation_stats(p, wt);
    EXPECT_NEAR(s.mean, mean, 1e-12);
    EXPECT_NEAR(s.std, std::sqrt(std::max(0.0, sq / 9.0 - mean * mean)), 1e-9);
    EXPECT_EQ(s.mean == 0.0, std::all_of(p.begin(), p.end(), [&](const auto& x) { return x == wt; }));
  }
  EXPECT_EQ(mutation_stats({wt, wt, wt}, wt).mean, 0.0);
}

TEST(Percentiles, NearestRankFixtures) {
  std::vector<double> hundred(100);
  for (int k = 0; k < 100; ++k) hundred[k] = k + 1;
  std::shuffle(hundred.begin(), hundred.end(), std::mt19937_64(4));
  const auto t = percentile_scores(hundred);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].score, 50.0);
  EXPECT_EQ(t[1].score, 80.0);
  EXPECT_EQ(t[2].score, 100.0);
  for (double p : {0.0, 33.0, 100.0}) EXPECT_EQ(percentile_scores({-2.5}, {p})[0].score, -2.5);
  EXPECT_EQ(percentile_scores({3, 1, 2}, {100})[0].score, 3.0);
  EXPECT_EQ(percentile_scores({3, 1, 2}, {50})[0].score, 2.0);
  EXPECT_EQ(percentile_scores({4, 1, 3, 2}, {50, 80})[1].score, 4.0);  // ceil(3.2) = 4
  EXPECT_EQ(percentile_scores({10, 20, 30, 40, 50}, {80})[0].score, 40.0);
  EXPECT_THROW(percentile_scores({}), EmptyPopulation);
  EXPECT_THROW(percentile_scores({1.0}, {101.0}), InvalidArgument);
}

TEST(Percentiles, NonDecreasingInP) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(1 + rng() % 40);
    for (double& v : s) v = nd(rng);
    const auto rows = percentile_scores(s, {0, 10, 50, 80, 99, 100});
    for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(rows[k - 1].score, rows[k].score);
    EXPECT_EQ(rows.back().score, *std::max_element(s.begin(), s.end()));
  }
}

TEST(CumulativeMax, Fixtures) {
  EXPECT_EQ(cumulative_max_curve({trace(0, {1, 2, 3})}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(cumulative_max_curve({trace(0, {1, 0, 2})}), (std::vector<double>{1, 1, 2}));
  EXPECT_EQ(cumulative_max_curve({trace(0, {1, 0, 2}), trace(1, {0, 3, 1})}), (std::vector<double>{0.5, 2, 2.5}));
  EXPECT_THROW(cumulative_max_curve({}), EmptyPopulation);
  EXPECT_THROW(cumulative_max_curve({trace(0, {1, 2}), trace(1, {1})}), ShapeMismatch);
  auto shifted = trace(1, {1, 2});
  shifted.steps[1].step = 5;
  EXPECT_THROW(cumulative_max_curve({trace(0, {1, 2}), shifted}), ShapeMismatch);
}

TEST(CumulativeMax, NonDecreasingOnRandomTraces) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 30; ++t) {
    std::vector<ChainTrace> traces;
    for (std::size_t c = 0; c < 5; ++c) {
      std::vector<double> v(40);
      for (double& x : v) x = nd(rng);
      traces.push_back(trace(c, v));
    }
    const auto curve = cumulative_max_curve(traces);
    for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_LE(curve[k - 1], curve[k]);
  }
}

TEST(HittingStep, FirstStepReachingTarget) {
  const auto t = trace(0, {0.5, 1.9, 2.0, 1.0, 2.0});
  EXPECT_EQ(hitting_step(t, 2.0).value(), 3);
  EXPECT_EQ(hitting_step(t, 0.1).value(), 1);
  EXPECT_FALSE(hitting_step(t, 2.1).has_value());
}

TEST(PopulationReport, ExplicitMutationCountsAgreeWithWildTypeForm) {
  const auto wt = encode("AAA", kABC);
  const auto p = pop({"AAB", "CCC", "AAB", "ABA"});
  const std::vector<double> scores{1.0, 4.0, 2.0, 3.0};
  const auto a = population_report(p, scores, wt);
  const auto b = population_report(p, scores, std::vector<std::size_t>{1, 3, 1, 1});
  EXPECT_EQ(a.population_size, 4u);
  EXPECT_EQ(a.diversity_pct, 50.0);
  EXPECT_EQ(a.mutations.mean, 1.5);
  EXPECT_EQ(a.mutations.mean, b.mutations.mean);
  EXPECT_EQ(a.mutations.std, b.mutations.std);
  EXPECT_EQ(a.percentiles[0].score, 2.0);
  EXPECT_EQ(a.percentiles[2].score, 4.0);
  EXPECT_THROW(population_report(p, {1.0}, wt), ShapeMismatch);
}
