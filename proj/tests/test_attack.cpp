#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "fixtures.hpp"

namespace seqevade {
namespace {

using testing::attack_config;
using testing::attack_fixture;
using testing::attack_provider;

std::vector<AttackConfig> all_configs(const AttackConfig& base) {
  std::vector<AttackConfig> out;
  for (auto k : {Knowledge::decision, Knowledge::score})
    for (auto p : {PerturbType::random, PerturbType::benign})
      for (auto m : {AddingMethod::linear_iteration, AddingMethod::logarithmic_backtracking}) {
        auto c = base;
        c.knowledge = k;
        c.perturb = p;
        c.method = m;
        out.push_back(c);
      }
  return out;
}

// Oracle with scripted responses, counting every call.
class ScriptedOracle final : public Oracle {
 public:
  using Fn = std::function<ClassificationResponse(std::span<const TokenId>)>;
  ScriptedOracle(Knowledge k, Fn window, Fn trace) : k_(k), window_(std::move(window)), trace_(std::move(trace)) {}
  Knowledge knowledge() const override { return k_; }
  ClassificationResponse classify_window(std::span<const TokenId> w) override {
    ++window_calls;
    return strip(window_(w), k_);
  }
  ClassificationResponse classify_trace(std::span<const TokenId> t) override {
    ++trace_calls;
    return strip(trace_(t), k_);
  }
  std::size_t window_calls = 0, trace_calls = 0;

 private:
  Knowledge k_;
  Fn window_, trace_;
};

ClassificationResponse always_malicious(std::span<const TokenId>) { return {Decision::malicious, 0.9}; }

WindowBase plain_base(std::size_t n, TokenId fill = 1) {
  auto ledger = PerturbationLedger(std::make_shared<const Trace>(Trace::FromIds("w", Label::malicious, Window(n, fill))));
  auto layout = ledger.layout();
  return window_base(ledger, layout, 0, n);
}

TEST(Config, Defaults) {
  AttackConfig c;
  EXPECT_EQ(c.budget_per_window(), c.max_insertions);
  EXPECT_EQ(ceil_log2(140), 8u);
  EXPECT_EQ(ceil_log2(70), 7u);
  EXPECT_EQ(ceil_log2(1), 0u);
  EXPECT_DOUBLE_EQ(c.overhead_cap(), 0.5);
  auto v = attack_fixture().corpus.vocab;
  auto f = AttackConfig::For(v);
  for (auto t : f.attacker_vocab) EXPECT_FALSE(v.is_forbidden(t));
  EXPECT_EQ(f.attacker_vocab.size(), v.size() - 1 - 2);
  auto j = to_json(f);
  auto back = attack_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  f.attacker_vocab.push_back(v.forbidden_ids().front());
  EXPECT_THROW(f.Validate(), ConfigError);
}

TEST(WindowAttack, ScoreMinimizerBudgetFollowsFormula) {
  auto cfg = attack_config(attack_fixture());
  cfg.knowledge = Knowledge::score;
  cfg.perturb = PerturbType::random;
  cfg.sample_budget = 0;
  auto base = plain_base(140);
  for (auto [method, expected] : {std::pair{AddingMethod::logarithmic_backtracking, 62u},
                                  std::pair{AddingMethod::linear_iteration, 70u}}) {
    cfg.method = method;
    ScriptedOracle oracle(Knowledge::score, always_malicious, always_malicious);
    QueryBudget budget(0);
    AttackSession s(oracle, budget);
    Rng rng(1);
    auto r = window_attack(s, base, {}, cfg, 70, rng);
    EXPECT_EQ(r.attempts, expected);
    EXPECT_EQ(oracle.window_calls, expected + 1);
    EXPECT_FALSE(r.solved);
  }
}

TEST(WindowAttack, AlreadyBenignWindowCostsOneQuery) {
  auto cfg = attack_config(attack_fixture());
  auto base = plain_base(140);
  for (auto c : all_configs(cfg)) {
    ScriptedOracle oracle(c.knowledge, [](auto) { return ClassificationResponse{Decision::benign, 0.1}; },
                          always_malicious);
    QueryBudget budget(0);
    AttackSession s(oracle, budget);
    Rng rng(1);
    Window wb(140, 2);
    auto r = window_attack(s, base, wb, c, 70, rng);
    EXPECT_TRUE(r.solved);
    EXPECT_EQ(r.active_count(), 0u);
    EXPECT_EQ(oracle.window_calls, 1u);
  }
}

TEST(DecisionWindowAttack, LinearAndBacktrackingRounds) {
  auto cfg = attack_config(attack_fixture());
  auto base = plain_base(140);
  Window wb(140, 2);
  for (auto perturb : {PerturbType::random, PerturbType::benign}) {
    cfg.perturb = perturb;
    cfg.method = AddingMethod::logarithmic_backtracking;
    ScriptedOracle oracle(Knowledge::decision, always_malicious, always_malicious);
    QueryBudget budget(0);
    AttackSession s(oracle, budget);
    Rng rng(3);
    auto r = decision_window_attack(s, base, wb, cfg, 70, rng);
    EXPECT_EQ(r.active_count(), 70u);
    EXPECT_EQ(oracle.window_calls, 0u);

    cfg.method = AddingMethod::linear_iteration;
    ScriptedOracle lin(Knowledge::decision, always_malicious, always_malicious);
    AttackSession s2(lin, budget);
    auto r2 = decision_window_attack(s2, base, wb, cfg, 70, rng);
    EXPECT_EQ(r2.active_count(), 70u);
    EXPECT_EQ(lin.window_calls, 70u);
    for (const auto& ins : r2.insertions)
      if (perturb == PerturbType::benign) {
        EXPECT_EQ(ins.token, 2u);
      }
  }
}

TEST(DecisionWindowAttack, WindowAttackDelegatesWithSameSeed) {
  auto cfg = attack_config(attack_fixture());
  cfg.method = AddingMethod::linear_iteration;
  cfg.perturb = PerturbType::random;
  auto base = plain_base(140);
  // Evades once 30 insertions are present.
  auto evade_at_30 = [](std::span<const TokenId> w) {
    std::size_t inserted = 0;
    for (auto t : w) inserted += t != 1;
    return ClassificationResponse{inserted >= 30 ? Decision::benign : Decision::malicious, std::nullopt};
  };
  ScriptedOracle a(Knowledge::decision, evade_at_30, always_malicious), b(Knowledge::decision, evade_at_30, always_malicious);
  QueryBudget ba(0), bb(0);
  AttackSession sa(a, ba), sb(b, bb);
  Rng ra(9), rb(9);
  auto direct = decision_window_attack(sa, base, {}, cfg, 70, ra);
  auto full = window_attack(sb, base, {}, cfg, 70, rb);
  ASSERT_EQ(direct.insertions.size(), full.insertions.size());
  for (std::size_t i = 0; i < direct.insertions.size(); ++i) {
    EXPECT_EQ(direct.insertions[i].slot, full.insertions[i].slot);
    EXPECT_EQ(direct.insertions[i].token, full.insertions[i].token);
  }
  EXPECT_EQ(direct.window, full.window);
  EXPECT_TRUE(full.solved);
}

TEST(Compose, InsertionsPushTokensOut) {
  auto ledger = PerturbationLedger(std::make_shared<const Trace>(Trace::FromIds("w", Label::malicious, Window{1, 2, 3, 4})));
  auto layout = ledger.layout();
  auto base = window_base(ledger, layout, 0, 4);
  ASSERT_EQ(base.slot_pos.size(), 4u);
  std::vector<PendingInsertion> ins{{1, 9}, {1, 8}};
  EXPECT_EQ(compose(base, ins, {}, 4), (Window{1, 9, 8, 2}));
  auto tail = window_base(ledger, layout, 0, 6);
  ASSERT_EQ(tail.slot_pos.size(), 5u);  // room after the last call
  EXPECT_EQ(compose(tail, std::vector<PendingInsertion>{{4, 7}}, {}, 6), (Window{1, 2, 3, 4, 7}));
  auto slots = slots_for_positions(base, std::vector<std::uint32_t>{0, 2, 2});
  EXPECT_EQ(compose(base, std::vector<PendingInsertion>{{slots[0], 7}, {slots[1], 8}, {slots[2], 9}}, {}, 4),
            (Window{7, 1, 8, 9}));
}

// Exhaustive soundness on small sets: arbitrary predicates with a known
// evading full set.
TEST(LogBacktrack, SoundAndWithinBound) {
  Rng rng(11);
  for (std::size_t size : {1u, 2u, 3u, 5u, 8u, 13u, 70u}) {
    for (int trial = 0; trial < 300; ++trial) {
      std::map<std::vector<char>, bool> table;
      std::bernoulli_distribution coin(trial % 3 == 0 ? 0.2 : 0.6);
      std::vector<char> full(size, 1);
      auto evades = [&](std::span<const char> mask) {
        std::vector<char> key(mask.begin(), mask.end());
        if (key == full) return true;
        auto it = table.find(key);
        if (it == table.end()) it = table.emplace(key, coin(rng)).first;
        return it->second;
      };
      std::vector<char> active = full;
      auto st = log_backtrack(active, evades, [] { return true; }, rng);
      EXPECT_TRUE(evades(active));
      EXPECT_LE(st.queries, 2 * (ceil_log2(size) + 1));
      EXPECT_GE(std::count(active.begin(), active.end(), 1), 1);
    }
  }
}

TEST(LogBacktrack, MonotoneTargetShrinksToKeySet) {
  Rng rng(2);
  std::vector<char> active(70, 1);
  auto evades = [](std::span<const char> m) { return m[17] != 0; };
  auto st = log_backtrack(active, evades, [] { return true; }, rng);
  EXPECT_EQ(std::count(active.begin(), active.end(), 1), 1);
  EXPECT_TRUE(active[17]);
  EXPECT_LE(st.queries, 16u);
}

TEST(LogBacktrack, StopsWhenBudgetEnds) {
  Rng rng(2);
  std::vector<char> active(70, 1);
  std::size_t left = 3;
  auto st = log_backtrack(active, [](auto) { return false; }, [&] { return left-- > 0; }, rng);
  EXPECT_TRUE(st.budget_hit);
  EXPECT_EQ(std::count(active.begin(), active.end(), 1), 70);
}

struct Invariants {
  std::size_t runs = 0, evaded = 0;
};

void check_outcome(const AttackOutcome& o, const Trace& t, const AttackConfig& c, const TrainedModel& model,
                   const QueryMeter& meter, const QueryCounts& before) {
  auto ids = o.final_trace.ids();
  ASSERT_TRUE(is_subsequence<TokenId>(t.ids(), ids));
  for (const auto& r : o.ledger.records()) ASSERT_TRUE(std::find(c.forbidden.begin(), c.forbidden.end(), r.token.type) == c.forbidden.end());
  std::map<std::size_t, std::size_t> per_window;
  for (const auto& r : o.ledger.records()) per_window[r.window_index] += r.active;
  for (auto [w, n] : per_window) ASSERT_LE(n, c.max_insertions);
  ASSERT_LE(o.overhead, c.overhead_cap() + 1e-12);
  ASSERT_LE(o.queries.total(), c.sample_budget);
  ASSERT_EQ(o.queries.total(), (meter.snapshot() - before).invocations);
  if (o.evaded) {
    ASSERT_FALSE(classify_trace(model, o.final_trace).malicious());
  }
  for (const auto& w : o.per_window) {
    if (c.knowledge == Knowledge::decision && c.method == AddingMethod::linear_iteration) {
      ASSERT_LE(w.queries, c.max_insertions + 1);
    }
    ASSERT_LE(w.backtrack_queries, 2 * (ceil_log2(c.max_insertions) + 1));
    if (c.knowledge == Knowledge::score) {
      ASSERT_LE(w.attempts, c.method == AddingMethod::logarithmic_backtracking ? 62u : 70u);
    }
  }
}

TEST(FullSequence, InvariantsAcrossAllConfigurations) {
  const auto& f = attack_fixture();
  const auto& provider = attack_provider();
  std::size_t evaded = 0, runs = 0;
  for (auto c : all_configs(attack_config(f))) {
    for (std::size_t i = 0; i < 12 && i < f.malicious_test.size(); ++i) {
      c.seed = 100 + i;
      QueryMeter meter;
      auto before = meter.snapshot();
      ModelOracle oracle(f.model(), c.knowledge, &meter);
      auto o = full_sequence_attack(oracle, f.malicious_test[i], &provider, c);
      EXPECT_TRUE(o.originally_malicious);
      check_outcome(o, f.malicious_test[i], c, f.model(), meter, before);
      evaded += o.evaded;
      ++runs;
    }
  }
  EXPECT_GT(evaded, runs / 4);
}

TEST(FullSequence, SeedDeterminism) {
  const auto& f = attack_fixture();
  for (auto c : all_configs(attack_config(f))) {
    c.seed = 77;
    ModelOracle a(f.model(), c.knowledge, nullptr), b(f.model(), c.knowledge, nullptr);
    auto x = full_sequence_attack(a, f.malicious_test[0], &attack_provider(), c);
    auto y = full_sequence_attack(b, f.malicious_test[0], &attack_provider(), c);
    EXPECT_EQ(x.evaded, y.evaded);
    EXPECT_EQ(x.queries, y.queries);
    EXPECT_EQ(x.ledger.digest(), y.ledger.digest());
    EXPECT_EQ(x.final_trace, y.final_trace);
  }
}

TEST(FullSequence, BenignSampleIsOneQuery) {
  const auto& f = attack_fixture();
  for (const auto& t : f.test) {
    if (classify_trace(f.model(), t).malicious()) continue;
    auto c = attack_config(f);
    ModelOracle oracle(f.model(), c.knowledge, nullptr);
    auto o = full_sequence_attack(oracle, t, &attack_provider(), c);
    EXPECT_TRUE(o.evaded);
    EXPECT_FALSE(o.originally_malicious);
    EXPECT_EQ(o.stop, StopReason::not_malicious);
    EXPECT_EQ(o.queries.total(), 1u);
    EXPECT_DOUBLE_EQ(o.overhead, 0.0);
    return;
  }
  FAIL() << "no benign-classified test sample";
}

TEST(FullSequence, WindowMismatchAndVocabularyRelations) {
  const auto& f = attack_fixture();
  for (std::size_t n : {100u, 200u}) {
    auto c = attack_config(f);
    c.n = n;
    c.max_insertions = n / 2;
    c.knowledge = Knowledge::score;
    QueryMeter meter;
    ModelOracle oracle(f.model(), c.knowledge, &meter);
    auto o = full_sequence_attack(oracle, f.malicious_test[1], &attack_provider(), c);
    check_outcome(o, f.malicious_test[1], c, f.model(), meter, {});
  }
  // D' as a strict subset of D.
  auto c = attack_config(f);
  c.perturb = PerturbType::random;
  c.attacker_vocab.resize(40);
  ModelOracle oracle(f.model(), c.knowledge, nullptr);
  auto o = full_sequence_attack(oracle, f.malicious_test[2], nullptr, c);
  std::set<TokenId> allowed(c.attacker_vocab.begin(), c.attacker_vocab.end());
  for (const auto& r : o.ledger.records()) EXPECT_TRUE(allowed.count(r.token.type));
}

TEST(FullSequence, DecisionModeIgnoresScores) {
  const auto& f = attack_fixture();
  auto c = attack_config(f);
  c.knowledge = Knowledge::decision;
  auto leak = [&](std::span<const TokenId> w) { return classify_sequence(f.model(), w); };
  auto full = [&](std::span<const TokenId> t) { return classify_trace(f.model(), t); };
  // A leaking oracle that claims decision knowledge but returns scores.
  class Leaky final : public Oracle {
   public:
    Leaky(ScriptedOracle::Fn w, ScriptedOracle::Fn t) : w_(std::move(w)), t_(std::move(t)) {}
    Knowledge knowledge() const override { return Knowledge::decision; }
    ClassificationResponse classify_window(std::span<const TokenId> x) override { return w_(x); }
    ClassificationResponse classify_trace(std::span<const TokenId> x) override { return t_(x); }

   private:
    ScriptedOracle::Fn w_, t_;
  } leaky(leak, full);
  for (auto method : {AddingMethod::linear_iteration, AddingMethod::logarithmic_backtracking}) {
    c.method = method;
    c.seed = 5;
    ModelOracle stripped(f.model(), Knowledge::decision, nullptr);
    auto a = full_sequence_attack(stripped, f.malicious_test[3], &attack_provider(), c);
    auto b = full_sequence_attack(leaky, f.malicious_test[3], &attack_provider(), c);
    EXPECT_EQ(a.ledger.digest(), b.ledger.digest());
    EXPECT_EQ(a.queries, b.queries);
  }
}

TEST(FullSequence, ConfigurationErrors) {
  const auto& f = attack_fixture();
  auto c = attack_config(f);
  c.knowledge = Knowledge::score;
  ModelOracle dec(f.model(), Knowledge::decision, nullptr);
  EXPECT_THROW(full_sequence_attack(dec, f.malicious_test[0], &attack_provider(), c), ConfigError);
  c.knowledge = Knowledge::decision;
  EXPECT_THROW(full_sequence_attack(dec, f.malicious_test[0], nullptr, c), ConfigError);
  c.sample_budget = 1;
  EXPECT_THROW(full_sequence_attack(dec, f.malicious_test[0], &attack_provider(), c), ConfigError);
}

TEST(FullSequence, ThrottleAndOutageAreRecorded) {
  const auto& f = attack_fixture();
  auto c = attack_config(f);
  std::size_t calls = 0;
  auto window = [&](std::span<const TokenId>) -> ClassificationResponse {
    if (++calls > 5) throw ThrottledError("throttled");
    return {Decision::malicious, std::nullopt};
  };
  ScriptedOracle throttled(Knowledge::decision, window, always_malicious);
  auto o = full_sequence_attack(throttled, f.malicious_test[0], &attack_provider(), c);
  EXPECT_EQ(o.stop, StopReason::throttled);
  EXPECT_FALSE(o.evaded);
  EXPECT_TRUE(o.originally_malicious);

  auto down = [](std::span<const TokenId>) -> ClassificationResponse { throw OracleError("down", true); };
  ScriptedOracle unavailable(Knowledge::decision, down, down);
  auto u = full_sequence_attack(unavailable, f.malicious_test[0], &attack_provider(), c);
  EXPECT_EQ(u.stop, StopReason::oracle_unavailable);
  EXPECT_FALSE(u.evaded);
}

TEST(FullSequence, BudgetExhaustionEndsTheAttack) {
  const auto& f = attack_fixture();
  auto c = attack_config(f);
  c.sample_budget = 10;
  ScriptedOracle never(Knowledge::decision, always_malicious, always_malicious);
  auto o = full_sequence_attack(never, f.malicious_test[0], &attack_provider(), c);
  EXPECT_EQ(o.stop, StopReason::budget_exhausted);
  EXPECT_FALSE(o.evaded);
  EXPECT_EQ(o.queries.total(), 10u);
  EXPECT_EQ(never.window_calls + never.trace_calls, 10u);
}

TEST(FullSequence, InsertedCallsCarryNoOpArguments) {
  const auto& f = attack_fixture();
  auto c = attack_config(f);
  c.knowledge = Knowledge::score;
  ModelOracle oracle(f.model(), c.knowledge, nullptr);
  auto o = full_sequence_attack(oracle, f.malicious_test[0], &attack_provider(), c);
  ASSERT_GT(o.ledger.active_count(), 0u);
  for (const auto& r : o.ledger.records()) {
    auto it = c.arg_pools.find(r.token.type);
    if (it == c.arg_pools.end()) {
      EXPECT_TRUE(r.token.args.empty());
    } else {
      EXPECT_NE(std::find(it->second.begin(), it->second.end(), r.token.args), it->second.end());
    }
  }
}

}  // namespace
}  // namespace seqevade
