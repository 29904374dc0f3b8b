// Copyright 2026 The Seqevade Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Gradient-free minimizers over discrete gene vectors.
//
// A candidate is m genes, each drawn from a shared domain (token ids for
// value search, window positions for position search). Fitness is the
// oracle's malicious score; lower is better. Both minimizers spend at most
// `iterations` fitness evaluations and stop as soon as one candidate scores
// below `stop_below`.

#ifndef SEQEVADE_ATTACK_OPTIMIZERS_HPP_
#define SEQEVADE_ATTACK_OPTIMIZERS_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "seqevade/core.hpp"

namespace seqevade {

enum class MutationRate : std::uint8_t { low, high };

struct Candidate {
  std::vector<std::uint32_t> genes;
  MutationRate rate = MutationRate::low;
  double fitness = std::numeric_limits<double>::infinity();
};

struct MinimizerParams {
  std::size_t population = 5;
  // Per-gene mutation probabilities are factor / m for m genes.
  double low_rate_factor = 4.0;
  double high_rate_factor = 16.0;
  // Probability that a selected parent switches between low and high.
  double switch_probability = 0.4;
  // Fixed per-gene rate factor of the genetic algorithm.
  double ga_rate_factor = 1.0;
  double stop_below = 0.5;
};

struct MinimizeResult {
  Candidate best;
  std::size_t evaluations = 0;
  bool reached_target = false;
  // Best-ever fitness after each evaluation.
  std::vector<double> best_history;
};

namespace detail {

inline double per_gene_rate(double factor, std::size_t m) {
  return m == 0 ? 0.0 : std::min(1.0, factor / static_cast<double>(m));
}

// Replaces each gene with probability `rate` by a different domain value.
template <class Rng>
void mutate(std::vector<std::uint32_t>& genes, std::span<const std::uint32_t> domain, double rate, Rng& rng) {
  if (domain.size() < 2) return;
  std::bernoulli_distribution flip(rate);
  std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 2);
  for (auto& g : genes) {
    if (!flip(rng)) continue;
    std::uint32_t v = domain[pick(rng)];
    if (v == g) v = domain.back();
    g = v;
  }
}

template <class Rng>
std::vector<std::uint32_t> random_genes(std::size_t m, std::span<const std::uint32_t> domain, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 1);
  std::vector<std::uint32_t> g(m);
  for (auto& x : g) x = domain[pick(rng)];
  return g;
}

// Best of two uniform picks; ties broken uniformly.
template <class Rng>
const Candidate& tournament(const std::vector<Candidate>& pop, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  const Candidate& a = pop[pick(rng)];
  const Candidate& b = pop[pick(rng)];
  if (a.fitness < b.fitness) return a;
  if (b.fitness < a.fitness) return b;
  return std::bernoulli_distribution(0.5)(rng) ? a : b;
}

// Shared bookkeeping: evaluation budget, best-ever tracking, early stop.
// Fitness is assumed deterministic, so a candidate seen before is scored from
// a cache without spending an evaluation. Offspring are capped at 64 per
// evaluation so that a degenerate search (all clones) still terminates.
template <class Fitness>
class Evaluator {
 public:
  Evaluator(Fitness& fitness, std::size_t budget, double stop_below)
      : fitness_(fitness), budget_(budget), stop_below_(stop_below) {}

  bool exhausted() const {
    return result_.evaluations >= budget_ || result_.reached_target || offspring_ >= 64 * budget_;
  }

  void Evaluate(Candidate& c) {
    ++offspring_;
    if (auto it = seen_.find(c.genes); it != seen_.end()) {
      c.fitness = it->second;
      return;
    }
    c.fitness = fitness_(std::span<const std::uint32_t>(c.genes));
    seen_.emplace(c.genes, c.fitness);
    ++result_.evaluations;
    if (c.fitness < result_.best.fitness) result_.best = c;
    result_.best_history.push_back(result_.best.fitness);
    if (c.fitness < stop_below_) result_.reached_target = true;
  }

  MinimizeResult Take() { return std::move(result_); }

 private:
  Fitness& fitness_;
  std::size_t budget_;
  double stop_below_;
  std::size_t offspring_ = 0;
  std::map<std::vector<std::uint32_t>, double> seen_;
  MinimizeResult result_;
};

template <class Fitness, class Rng>
std::vector<Candidate> initial_population(detail::Evaluator<Fitness>& ev, std::size_t population,
                                          std::span<const std::uint32_t> domain,
                                          const std::vector<std::uint32_t>& initial, Rng& rng) {
  std::vector<Candidate> pop;
  for (std::size_t i = 0; i < population && !ev.exhausted(); ++i) {
    Candidate c;
    c.genes = i == 0 && !initial.empty() ? initial : random_genes(initial.size(), domain, rng);
    c.rate = std::bernoulli_distribution(0.5)(rng) ? MutationRate::high : MutationRate::low;
    ev.Evaluate(c);
    pop.push_back(std::move(c));
  }
  return pop;
}

}  // namespace detail

inline std::vector<std::uint32_t> single_point_crossover(std::span<const std::uint32_t> a,
                                                         std::span<const std::uint32_t> b, std::size_t point) {
  std::vector<std::uint32_t> child(a.begin(), a.end());
  for (std::size_t i = std::min(point, b.size()); i < child.size(); ++i) child[i] = b[i];
  return child;
}

// Self-adaptive EA with uniform mixing of two mutation rates. Each offspring:
// tournament-selected parent, rate switch with probability p, replication
// with per-gene mutation at the (new) rate. Generations do not overlap.
//
// `initial` seeds the first candidate; its length fixes m.
template <class Fitness, class Rng>
MinimizeResult ea_minimize(Fitness&& fitness, std::span<const std::uint32_t> domain,
                           const std::vector<std::uint32_t>& initial, std::size_t iterations,
                           const MinimizerParams& p, Rng& rng) {
  if (domain.empty()) throw ConfigError("minimizer gene domain is empty");
  if (p.population == 0 || iterations < p.population)
    throw ConfigError("minimizer needs iterations >= population size");
  const std::size_t m = initial.size();
  const double low = detail::per_gene_rate(p.low_rate_factor, m);
  const double high = detail::per_gene_rate(p.high_rate_factor, m);
  detail::Evaluator<std::remove_reference_t<Fitness>> ev(fitness, iterations, p.stop_below);
  auto pop = detail::initial_population(ev, p.population, domain, initial, rng);
  std::bernoulli_distribution do_switch(p.switch_probability);
  while (!ev.exhausted()) {
    std::vector<Candidate> next;
    next.reserve(pop.size());
    for (std::size_t i = 0; i < pop.size() && !ev.exhausted(); ++i) {
      Candidate child = detail::tournament(pop, rng);
      if (do_switch(rng)) child.rate = child.rate == MutationRate::low ? MutationRate::high : MutationRate::low;
      detail::mutate(child.genes, domain, child.rate == MutationRate::low ? low : high, rng);
      ev.Evaluate(child);
      next.push_back(std::move(child));
    }
    // A generation cut short by the budget still replaces its parents only
    // where offspring exist.
    for (std::size_t i = 0; i < next.size(); ++i) pop[i] = std::move(next[i]);
  }
  return ev.Take();
}

// Baseline genetic algorithm: two tournament parents, single-point crossover,
// fixed per-gene mutation rate.
template <class Fitness, class Rng>
MinimizeResult ga_minimize(Fitness&& fitness, std::span<const std::uint32_t> domain,
                           const std::vector<std::uint32_t>& initial, std::size_t iterations,
                           const MinimizerParams& p, Rng& rng) {
  if (domain.empty()) throw ConfigError("minimizer gene domain is empty");
  if (p.population == 0 || iterations < p.population)
    throw ConfigError("minimizer needs iterations >= population size");
  const std::size_t m = initial.size();
  const double rate = detail::per_gene_rate(p.ga_rate_factor, m);
  detail::Evaluator<std::remove_reference_t<Fitness>> ev(fitness, iterations, p.stop_below);
  auto pop = detail::initial_population(ev, p.population, domain, initial, rng);
  while (!ev.exhausted()) {
    std::vector<Candidate> next;
    next.reserve(pop.size());
    for (std::size_t i = 0; i < pop.size() && !ev.exhausted(); ++i) {
      const Candidate& a = detail::tournament(pop, rng);
      const Candidate& b = detail::tournament(pop, rng);
      Candidate child;
      std::size_t point = m < 2 ? 0 : std::uniform_int_distribution<std::size_t>(1, m - 1)(rng);
      child.genes = single_point_crossover(a.genes, b.genes, point);
      detail::mutate(child.genes, domain, rate, rng);
      ev.Evaluate(child);
      next.push_back(std::move(child));
    }
    for (std::size_t i = 0; i < next.size(); ++i) pop[i] = std::move(next[i]);
  }
  return ev.Take();
}

}  // namespace seqevade

#endif  // SEQEVADE_ATTACK_OPTIMIZERS_HPP_
