#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "seqevade/attack.hpp"
#include "tiny.hpp"

namespace seqevade {
namespace {

using testing::make_tiny;
using testing::TinyInstance;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

// With m = 3 the default rate factors clamp to 1 (every gene replaced), so
// the comparison uses unsaturated rates.
MinimizerParams tiny_params() {
  MinimizerParams p;
  p.low_rate_factor = 1.0;
  p.high_rate_factor = 2.0;
  return p;
}

TEST(Ea, ZeroGenerationsReturnsBestOfInitialPopulation) {
  std::vector<std::uint32_t> domain{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<std::vector<std::uint32_t>> seen;
  auto fitness = [&](std::span<const std::uint32_t> g) {
    seen.emplace_back(g.begin(), g.end());
    return 10.0 + g[0] + 0.1 * g[1];
  };
  MinimizerParams p;
  p.stop_below = -1.0;
  Rng rng(1);
  auto r = ea_minimize(fitness, domain, {7, 7}, p.population, p, rng);
  EXPECT_EQ(r.evaluations, seen.size());
  EXPECT_LE(r.evaluations, p.population);
  double best = 1e9;
  for (const auto& g : seen) best = std::min(best, 10.0 + g[0] + 0.1 * g[1]);
  EXPECT_DOUBLE_EQ(r.best.fitness, best);
  EXPECT_EQ(seen.front(), (std::vector<std::uint32_t>{7, 7}));
}

TEST(Ea, BudgetHistoryAndEarlyStop) {
  std::vector<std::uint32_t> domain{0, 1, 2, 3};
  auto fitness = [](std::span<const std::uint32_t> g) {
    double s = 0;
    for (auto x : g) s += x;
    return s;
  };
  MinimizerParams p;
  p.stop_below = -1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto r = ea_minimize(fitness, domain, std::vector<std::uint32_t>(12, 3), 60, p, rng);
    EXPECT_LE(r.evaluations, 60u);
    EXPECT_EQ(r.best_history.size(), r.evaluations);
    for (std::size_t i = 1; i < r.best_history.size(); ++i) EXPECT_LE(r.best_history[i], r.best_history[i - 1]);
    EXPECT_DOUBLE_EQ(r.best.fitness, r.best_history.back());
    EXPECT_FALSE(r.reached_target);
  }
  p.stop_below = 20.0;
  Rng rng(3);
  auto r = ea_minimize(fitness, domain, std::vector<std::uint32_t>(12, 3), 60, p, rng);
  EXPECT_TRUE(r.reached_target);
  EXPECT_LT(r.best.fitness, 20.0);
  EXPECT_LT(r.evaluations, 60u);
}

TEST(Ea, RejectsBadArguments) {
  auto f = [](std::span<const std::uint32_t>) { return 1.0; };
  MinimizerParams p;
  Rng rng(1);
  EXPECT_THROW(ea_minimize(f, std::vector<std::uint32_t>{}, {0}, 10, p, rng), ConfigError);
  EXPECT_THROW(ea_minimize(f, std::vector<std::uint32_t>{0, 1}, {0}, p.population - 1, p, rng), ConfigError);
  EXPECT_THROW(ga_minimize(f, std::vector<std::uint32_t>{0, 1}, {0}, p.population - 1, p, rng), ConfigError);
}

TEST(Ea, RepeatedCandidatesCostNoEvaluation) {
  std::size_t calls = 0;
  auto f = [&](std::span<const std::uint32_t>) {
    ++calls;
    return 1.0;
  };
  MinimizerParams p;
  Rng rng(2);
  // Two-valued domain, one gene: only two distinct candidates exist.
  auto r = ea_minimize(f, std::vector<std::uint32_t>{0, 1}, {0}, 50, p, rng);
  EXPECT_EQ(calls, 2u);
  EXPECT_EQ(r.evaluations, 2u);
}

TEST(Ga, CrossoverOfIdenticalParentsIsIdentity) {
  std::vector<std::uint32_t> a{4, 1, 3, 3, 0};
  for (std::size_t point = 0; point <= a.size(); ++point) EXPECT_EQ(single_point_crossover(a, a, point), a);
  std::vector<std::uint32_t> b{9, 9, 9, 9, 9};
  EXPECT_EQ(single_point_crossover(a, b, 2), (std::vector<std::uint32_t>{4, 1, 9, 9, 9}));
}

TEST(Ga, MutationRateWithinThreeSigma) {
  const std::vector<std::uint32_t> domain{0, 1, 2, 3, 4, 5};
  for (double rate : {0.05, 0.2, 0.5}) {
    Rng rng(42);
    std::size_t flips = 0;
    const std::size_t trials = 10000;
    for (std::size_t i = 0; i < trials; ++i) {
      std::vector<std::uint32_t> g{static_cast<std::uint32_t>(i % domain.size())};
      auto before = g;
      detail::mutate(g, domain, rate, rng);
      flips += g != before;
    }
    const double sigma = std::sqrt(trials * rate * (1 - rate));
    EXPECT_NEAR(static_cast<double>(flips), trials * rate, 3 * sigma) << rate;
  }
  EXPECT_DOUBLE_EQ(detail::per_gene_rate(1.0, 4), 0.25);
  EXPECT_DOUBLE_EQ(detail::per_gene_rate(16.0, 4), 1.0);
}

TEST(Tiny, InstanceOracleIsExhaustive) {
  auto t = make_tiny(5);
  EXPECT_EQ(t.all_assignments().size(), 125u);
  EXPECT_EQ(t.window(std::vector<std::uint32_t>{0, 0, 0}).size(), TinyInstance::kN);
}

// Evaluations until the first evading candidate; budget + 1 when none.
struct Race {
  std::vector<double> ea, ga, random;
  std::size_t solvable = 0, ea_found = 0;
};

Race race(std::size_t instances, const MinimizerParams& p) {
  Race out;
  for (std::uint64_t s = 0; out.solvable < instances; ++s) {
    auto t = make_tiny(s);
    if (t.evading_count() == 0) continue;
    ++out.solvable;
    auto f = [&](std::span<const std::uint32_t> g) { return t.score(g); };
    Rng seed_rng(s * 7 + 1);
    auto init = detail::random_genes(3, t.domain, seed_rng);
    Rng r1(s), r2(s), r3(s);
    auto e = ea_minimize(f, t.domain, init, 200, p, r1);
    auto g = ga_minimize(f, t.domain, init, 200, p, r2);
    out.ea_found += e.reached_target;
    out.ea.push_back(e.reached_target ? static_cast<double>(e.evaluations) : 201.0);
    out.ga.push_back(g.reached_target ? static_cast<double>(g.evaluations) : 201.0);
    double k = 201.0;
    for (int i = 1; i <= 200; ++i)
      if (t.score(detail::random_genes(3, t.domain, r3)) < 0.5) {
        k = i;
        break;
      }
    out.random.push_back(k);
  }
  return out;
}

TEST(Tiny, EaFindsEvasionWheneverOneExists) {
  auto r = race(300, MinimizerParams{});
  EXPECT_GE(static_cast<double>(r.ea_found) / static_cast<double>(r.solvable), 0.95);
}

TEST(Tiny, EaAndGaBeatRandomSearchInMedianEvaluations) {
  auto r = race(600, tiny_params());
  EXPECT_LT(median(r.ea), median(r.random));
  EXPECT_LT(median(r.ga), median(r.random));
}

}  // namespace
}  // namespace seqevade
