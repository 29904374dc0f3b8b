// Attack a model served over HTTP with per-query billing and a throttle,
// then read the bill.

#include <cstdio>

#include "seqevade/attack.hpp"
#include "seqevade/datagen.hpp"
#include "seqevade/service.hpp"

using namespace seqevade;

int main() {
  auto spec = attack_benchmark_spec();
  spec.samples_per_class = 300;
  auto corpus = generate_corpus(spec);
  auto parts = holdout_split(corpus);
  auto test = gather(corpus, parts.test);
  auto trained = train(gather(corpus, parts.train), test, corpus.vocab, ModelKind::logistic_regression, 140);

  ClassificationService service(trained.model,
                                BillingPolicy{0.002, Throttle{1000, std::chrono::seconds(60)}, Knowledge::score});
  service.Start();
  std::printf("service on %s\n", service.endpoint().c_str());

  auto cfg = AttackConfig::For(corpus.vocab);
  cfg.knowledge = Knowledge::score;
  auto provider = BenignProvider::Markov(gather(corpus, parts.benign_holdout), cfg.attacker_vocab, 1);
  RemoteOracle oracle(service.endpoint(), "demo-client");
  std::size_t attacked = 0;
  for (const auto& t : test) {
    if (t.label != Label::malicious || attacked == 5) continue;
    cfg.seed = ++attacked;
    auto o = full_sequence_attack(oracle, t, &provider, cfg);
    std::printf("%s: evaded=%d stop=%s queries=%zu\n", o.sample_id.c_str(), o.evaded,
                std::string(to_string(o.stop)).c_str(), o.queries.total());
  }
  std::printf("bill: %s\n", oracle.stats().dump().c_str());
  service.Stop();
}
