// Shared corpora and models for the test suites. Built once per process.

#ifndef SEQEVADE_TESTS_FIXTURES_HPP_
#define SEQEVADE_TESTS_FIXTURES_HPP_

#include <vector>

#include "seqevade/attack.hpp"
#include "seqevade/datagen.hpp"
#include "seqevade/targets.hpp"

namespace seqevade::testing {

struct Fixture {
  Corpus corpus;
  Partitions parts;
  std::vector<Trace> train;
  std::vector<Trace> test;
  std::vector<Trace> benign_holdout;
  TrainResult trained;
  std::vector<Trace> malicious_test;  // test traces the model flags

  const TrainedModel& model() const { return trained.model; }
};

inline Fixture make_fixture(CorpusSpec spec, std::size_t k) {
  Fixture f;
  f.corpus = generate_corpus(spec);
  f.parts = holdout_split(f.corpus);
  f.train = gather(f.corpus, f.parts.train);
  f.test = gather(f.corpus, f.parts.test);
  f.benign_holdout = gather(f.corpus, f.parts.benign_holdout);
  f.trained = train(f.train, f.test, f.corpus.vocab, ModelKind::logistic_regression, k);
  for (const auto& t : f.test)
    if (t.label == Label::malicious && classify_trace(f.trained.model, t).malicious()) f.malicious_test.push_back(t);
  return f;
}

// k = n = 140 attack setting on a reduced corpus.
inline const Fixture& attack_fixture() {
  static const Fixture f = [] {
    auto spec = attack_benchmark_spec();
    spec.samples_per_class = 500;
    spec.static_dim = 0;
    return make_fixture(spec, 140);
  }();
  return f;
}

inline AttackConfig attack_config(const Fixture& f) {
  auto cfg = AttackConfig::For(f.corpus.vocab);
  cfg.n = 140;
  cfg.max_insertions = 70;
  return cfg;
}

inline const BenignProvider& attack_provider() {
  static const BenignProvider p = [] {
    const auto& f = attack_fixture();
    return BenignProvider::Markov(f.benign_holdout, f.corpus.vocab.insertable(), 1);
  }();
  return p;
}

}  // namespace seqevade::testing

#endif  // SEQEVADE_TESTS_FIXTURES_HPP_
