// Generate a corpus, train a k = 140 logistic-regression target, and run the
// decision-based benign-perturbation attack with backtracking on a few
// malicious samples.

#include <cstdio>

#include "seqevade/attack.hpp"
#include "seqevade/bench.hpp"
#include "seqevade/datagen.hpp"
#include "seqevade/targets.hpp"

using namespace seqevade;

int main() {
  auto spec = attack_benchmark_spec();
  spec.samples_per_class = 500;
  auto corpus = generate_corpus(spec);
  auto parts = holdout_split(corpus);
  auto test = gather(corpus, parts.test);
  auto trained = train(gather(corpus, parts.train), test, corpus.vocab, ModelKind::logistic_regression, 140);
  std::printf("target: k=%zu heldout accuracy %.3f\n", trained.model.k, trained.heldout_accuracy);

  auto cfg = AttackConfig::For(corpus.vocab);
  cfg.knowledge = Knowledge::decision;
  cfg.perturb = PerturbType::benign;
  cfg.method = AddingMethod::logarithmic_backtracking;
  auto provider = BenignProvider::Markov(gather(corpus, parts.benign_holdout), cfg.attacker_vocab, 1);

  std::vector<SampleResult> results;
  for (const auto& t : test) {
    if (t.label != Label::malicious || results.size() == 10) continue;
    cfg.seed = results.size() + 1;
    QueryMeter meter;
    ModelOracle oracle(trained.model, cfg.knowledge, &meter);
    auto o = full_sequence_attack(oracle, t, &provider, cfg);
    std::printf("%s: evaded=%d queries=%zu overhead=%.1f%% still a subsequence=%d\n", o.sample_id.c_str(), o.evaded,
                o.queries.total(), 100.0 * o.overhead, is_subsequence<TokenId>(t.ids(), o.final_trace.ids()));
    results.push_back(SampleResult::From(o));
  }
  std::printf("effectiveness %.1f%%, mean overhead of evasive samples %.1f%%\n", compute_effectiveness(results),
              compute_overhead_avg(results));
}
