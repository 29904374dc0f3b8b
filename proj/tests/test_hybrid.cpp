#include <gtest/gtest.h>

#include <functional>

#include "fixtures.hpp"

namespace seqevade {
namespace {

// Benign once at least `need` bits of [lo, hi) are set.
StaticOracle threshold_oracle(std::uint32_t lo, std::uint32_t hi, std::size_t need, std::size_t* calls) {
  return [=](const StaticFeatureVector& v) {
    ++*calls;
    std::size_t n = 0;
    for (auto b = lo; b < hi; ++b) n += v.test(b);
    return ClassificationResponse{n >= need ? Decision::benign : Decision::malicious, std::nullopt};
  };
}

BenignProfile range_profile(std::uint32_t lo, std::uint32_t hi) {
  BenignProfile p;
  for (auto b = lo; b < hi; ++b) p.bits.push_back(b);
  return p;
}

AttackConfig static_cfg(AddingMethod m, PerturbType p) {
  AttackConfig c;
  c.method = m;
  c.perturb = p;
  c.knowledge = Knowledge::decision;
  c.attacker_vocab = {1};
  return c;
}

TEST(BenignProfile, MostFrequentFirst) {
  std::vector<StaticFeatureVector> v{StaticFeatureVector(10, {1, 2}), StaticFeatureVector(10, {2, 3}),
                                     StaticFeatureVector(10, {2, 3})};
  auto p = BenignProfile::FromVectors(v);
  EXPECT_EQ(p.bits, (std::vector<std::uint32_t>{2, 3, 1}));
  EXPECT_EQ(BenignProfile::FromVectors(v, 2).bits.size(), 2u);
}

TEST(StaticAttack, AlreadyBenignFlipsNothing) {
  std::size_t calls = 0;
  auto oracle = threshold_oracle(0, 10, 0, &calls);
  StaticFeatureVector v(1000, {1, 5});
  QueryBudget budget(100);
  Rng rng(1);
  auto r = static_attack(oracle, v, nullptr, static_cfg(AddingMethod::linear_iteration, PerturbType::random), budget, rng);
  EXPECT_TRUE(r.evaded);
  EXPECT_FALSE(r.initially_malicious);
  EXPECT_TRUE(r.vector.added().empty());
  EXPECT_EQ(r.queries, 1u);
}

TEST(StaticAttack, BenignBitsEvadeAndKeepOriginals) {
  auto profile = range_profile(500, 600);
  for (auto m : {AddingMethod::linear_iteration, AddingMethod::logarithmic_backtracking}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::size_t calls = 0;
      auto oracle = threshold_oracle(500, 600, 3, &calls);
      Rng rng(seed);
      std::vector<std::uint32_t> ones;
      for (std::uint32_t b = seed; b < 1000; b += 37) ones.push_back(b);
      StaticFeatureVector v(1000, ones);
      QueryBudget budget(200);
      auto r = static_attack(oracle, v, &profile, static_cfg(m, PerturbType::benign), budget, rng);
      ASSERT_TRUE(r.evaded);
      ASSERT_EQ(r.queries, calls);
      ASSERT_FALSE(oracle(r.vector).malicious());
      for (auto b : ones) ASSERT_TRUE(r.vector.test(b));
      for (auto b : r.vector.added()) ASSERT_TRUE(b >= 500 && b < 600);
      if (m == AddingMethod::logarithmic_backtracking) {
        ASSERT_LE(r.backtrack_queries, 2 * (ceil_log2(70) + 1));
        // Monotone target: pruning reaches a small set.
        ASSERT_LE(r.vector.added().size(), 6u);
      }
    }
  }
}

TEST(StaticAttack, BudgetAndConfigErrors) {
  std::size_t calls = 0;
  auto oracle = threshold_oracle(0, 10, 1000, &calls);
  StaticFeatureVector v(1000, {});
  QueryBudget budget(12);
  Rng rng(1);
  auto r = static_attack(oracle, v, nullptr, static_cfg(AddingMethod::linear_iteration, PerturbType::random), budget, rng);
  EXPECT_FALSE(r.evaded);
  EXPECT_TRUE(r.budget_hit);
  EXPECT_EQ(calls, 12u);
  QueryBudget b2(10);
  EXPECT_THROW(static_attack(oracle, v, nullptr, static_cfg(AddingMethod::linear_iteration, PerturbType::benign), b2, rng),
               ConfigError);
}

class ScriptedHybrid final : public HybridOracle {
 public:
  using Fn = std::function<ClassificationResponse(std::span<const TokenId>, const StaticFeatureVector&)>;
  explicit ScriptedHybrid(Fn f) : f_(std::move(f)) {}
  Knowledge knowledge() const override { return Knowledge::decision; }
  ClassificationResponse classify_window(std::span<const TokenId> w, const StaticFeatureVector& s) override {
    ++calls;
    static_touched += !s.added().empty();
    return f_(w, s);
  }
  ClassificationResponse classify_trace(std::span<const TokenId> t, const StaticFeatureVector& s) override {
    ++calls;
    static_touched += !s.added().empty();
    return f_(t, s);
  }
  std::size_t calls = 0, static_touched = 0;

 private:
  Fn f_;
};

struct HybridCase {
  Trace trace = Trace::FromIds("h", Label::malicious, std::vector<TokenId>(300, 7));
  StaticFeatureVector vec = StaticFeatureVector(1000, {3, 4});
  BenignProfile profile = range_profile(500, 600);
  AttackConfig cfg = [] {
    AttackConfig c;
    c.attacker_vocab = {1, 2, 3};
    c.knowledge = Knowledge::decision;
    c.perturb = PerturbType::random;
    return c;
  }();
};

std::size_t count_in(const StaticFeatureVector& s, std::uint32_t lo, std::uint32_t hi) {
  std::size_t n = 0;
  for (auto b = lo; b < hi; ++b) n += s.test(b);
  return n;
}

TEST(HybridAttack, DynamicSuccessSkipsStaticPhase) {
  HybridCase h;
  ScriptedHybrid oracle([](std::span<const TokenId> t, const StaticFeatureVector&) {
    bool perturbed = std::any_of(t.begin(), t.end(), [](TokenId x) { return x != 7 && x != kNullToken; });
    return ClassificationResponse{perturbed ? Decision::benign : Decision::malicious, std::nullopt};
  });
  auto o = hybrid_attack(oracle, h.trace, h.vec, nullptr, &h.profile, h.cfg);
  EXPECT_TRUE(o.evaded);
  EXPECT_TRUE(o.static_added.empty());
  EXPECT_EQ(oracle.static_touched, 0u);
  EXPECT_EQ(o.queries.total(), oracle.calls);
  EXPECT_GT(o.ledger.active_count(), 0u);
}

TEST(HybridAttack, StaticPhaseCompletesTheEvasion) {
  HybridCase h;
  h.cfg.perturb = PerturbType::random;
  ScriptedHybrid oracle([](std::span<const TokenId>, const StaticFeatureVector& s) {
    return ClassificationResponse{count_in(s, 500, 600) >= 2 ? Decision::benign : Decision::malicious, std::nullopt};
  });
  auto cfg = h.cfg;
  cfg.perturb = PerturbType::benign;
  std::vector<Trace> benign{Trace::FromIds("b", Label::benign, std::vector<TokenId>{1, 2, 3, 1, 2, 3})};
  auto provider = BenignProvider::Markov(benign, cfg.attacker_vocab, 1);
  auto o = hybrid_attack(oracle, h.trace, h.vec, &provider, &h.profile, cfg);
  EXPECT_TRUE(o.evaded);
  EXPECT_FALSE(o.static_added.empty());
  EXPECT_EQ(o.queries.total(), oracle.calls);
  EXPECT_TRUE(is_subsequence<TokenId>(h.trace.ids(), o.final_trace.ids()));
  StaticFeatureVector check = h.vec;
  for (auto b : o.static_added) check.add(b);
  EXPECT_FALSE(oracle.classify_trace(o.final_trace.ids(), check).malicious());
  EXPECT_TRUE(check.test(3) && check.test(4));
}

TEST(HybridAttack, BothPhasesFailing) {
  HybridCase h;
  ScriptedHybrid oracle(
      [](std::span<const TokenId>, const StaticFeatureVector&) { return ClassificationResponse{Decision::malicious, {}}; });
  auto o = hybrid_attack(oracle, h.trace, h.vec, nullptr, &h.profile, h.cfg);
  EXPECT_FALSE(o.evaded);
  EXPECT_TRUE(o.originally_malicious);
  EXPECT_EQ(o.queries.total(), oracle.calls);
  EXPECT_LE(o.queries.total(), 2 * h.cfg.sample_budget + 1);
}

TEST(HybridAttack, StaticFirstOrder) {
  HybridCase h;
  ScriptedHybrid oracle([](std::span<const TokenId>, const StaticFeatureVector& s) {
    return ClassificationResponse{count_in(s, 500, 600) >= 1 ? Decision::benign : Decision::malicious, std::nullopt};
  });
  h.cfg.perturb = PerturbType::benign;
  auto o = hybrid_attack(oracle, h.trace, h.vec, nullptr, &h.profile, h.cfg,
                         {FeaturePhase::static_features, FeaturePhase::dynamic});
  EXPECT_TRUE(o.evaded);
  EXPECT_EQ(o.ledger.active_count(), 0u);
  EXPECT_EQ(o.final_trace, h.trace);
}

TEST(HybridAttack, NotMaliciousIsOneQuery) {
  HybridCase h;
  ScriptedHybrid oracle(
      [](std::span<const TokenId>, const StaticFeatureVector&) { return ClassificationResponse{Decision::benign, {}}; });
  auto o = hybrid_attack(oracle, h.trace, h.vec, nullptr, &h.profile, h.cfg);
  EXPECT_TRUE(o.evaded);
  EXPECT_EQ(o.stop, StopReason::not_malicious);
  EXPECT_EQ(oracle.calls, 1u);
}

}  // namespace
}  // namespace seqevade
