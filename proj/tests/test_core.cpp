#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "seqevade/core.hpp"
#include "seqevade/io.hpp"

namespace seqevade {
namespace {

Vocabulary small_vocab() { return Vocabulary({"<null>", "a", "b", "c", "x", "y", "Exit"}, {"Exit"}); }

Trace ids_trace(std::vector<TokenId> ids) { return Trace::FromIds("t", Label::malicious, ids); }

PerturbationLedger ledger_for(std::vector<TokenId> ids, std::vector<TokenId> forbidden = {},
                              std::size_t cap = PerturbationLedger::kUnlimited) {
  return PerturbationLedger(std::make_shared<const Trace>(ids_trace(std::move(ids))), std::move(forbidden), cap);
}

// Longest common subsequence length; the needle is a subsequence iff it
// equals the needle length.
std::size_t lcs(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = a[i - 1] == b[j - 1] ? d[i - 1][j - 1] + 1 : std::max(d[i - 1][j], d[i][j - 1]);
  return d[a.size()][b.size()];
}

TEST(Vocabulary, DenseIdsWithPaddingAndForbidden) {
  auto v = small_vocab();
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.find("<null>"), kNullToken);
  EXPECT_TRUE(v.is_forbidden(*v.find("Exit")));
  auto ins = v.insertable();
  EXPECT_EQ(ins, (std::vector<TokenId>{1, 2, 3, 4, 5}));
  EXPECT_EQ(v.forbidden_ids(), (std::vector<TokenId>{6}));
}

TEST(Vocabulary, RejectsBadDefinitions) {
  EXPECT_THROW(Vocabulary({"<null>", "a", "a"}, {}), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a"}, {"b"}), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a"}, {"<null>"}), ConfigError);
}

TEST(Vocabulary, HashTracksTokensAndForbiddenSet) {
  EXPECT_EQ(small_vocab().hash(), small_vocab().hash());
  EXPECT_NE(small_vocab().hash(), Vocabulary({"<null>", "a", "b", "c", "x", "y", "Exit"}, {}).hash());
}

TEST(Windows, SplitPadsLastWindow) {
  std::vector<TokenId> t{1, 2, 3, 4, 5};
  auto w = split_windows(t, 2);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2], (Window{5, kNullToken}));
  EXPECT_TRUE(split_windows(std::vector<TokenId>{}, 3).empty());
  EXPECT_THROW(split_windows(t, 0), ConfigError);
}

TEST(Windows, PaperScaleCounts) {
  EXPECT_EQ(split_windows(std::vector<TokenId>(280, 1), 140).size(), 2u);
  EXPECT_EQ(window_count(10000, 140), 72u);
  EXPECT_EQ(split_windows(std::vector<TokenId>(10000, 1), 140).size(), 72u);
}

TEST(Windows, ConcatenationMinusPaddingIsTheTrace) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t len = rng() % 300, n = 1 + rng() % 40;
    std::vector<TokenId> t(len);
    for (auto& x : t) x = 1 + static_cast<TokenId>(rng() % 9);
    auto w = split_windows(t, n);
    ASSERT_EQ(w.size(), (len + n - 1) / n);
    std::vector<TokenId> joined;
    for (const auto& win : w) {
      ASSERT_EQ(win.size(), n);
      for (auto x : win)
        if (x != kNullToken) joined.push_back(x);
    }
    EXPECT_EQ(joined, t);
  }
}

TEST(OneHot, EncodesRowsAndZeroPadding) {
  EXPECT_EQ(one_hot(Window{1, 2}, 3), (std::vector<float>{0, 1, 0, 0, 0, 1}));
  EXPECT_EQ(one_hot(Window{1, kNullToken}, 3), (std::vector<float>{0, 1, 0, 0, 0, 0}));
  EXPECT_THROW(one_hot(Window{3}, 3), EncodingError);
  EXPECT_EQ(one_hot(Window(140, 1), 314).size(), 43960u);
}

TEST(Ledger, MaterializeExamples) {
  auto l = ledger_for({1, 2, 3});
  EXPECT_EQ(l.materialize_ids(), (std::vector<TokenId>{1, 2, 3}));
  l.insert(1, {4, {}}, 0);
  EXPECT_EQ(l.materialize_ids(), (std::vector<TokenId>{1, 4, 2, 3}));

  auto two = ledger_for({1, 2});
  two.insert(0, {4, {}}, 0);
  two.insert(0, {5, {}}, 0);
  EXPECT_EQ(two.materialize_ids(), (std::vector<TokenId>{4, 5, 1, 2}));
  EXPECT_EQ(materialize(two).calls.size(), 4u);
}

TEST(Ledger, SameOffsetOrderMatchesBruteForceInterleavings) {
  // Every interleaving of the two insertions with [a, b] that keeps [a, b] in
  // order; record order x, y at offset 0 must produce exactly [x, y, a, b].
  std::vector<TokenId> target{4, 5, 1, 2};
  std::vector<std::vector<TokenId>> valid;
  std::vector<TokenId> perm{1, 2, 4, 5};
  std::sort(perm.begin(), perm.end());
  do {
    if (lcs({1, 2}, perm) == 2) valid.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_NE(std::find(valid.begin(), valid.end(), target), valid.end());
  auto l = ledger_for({1, 2});
  l.insert(0, {4, {}}, 0);
  l.insert(0, {5, {}}, 0);
  EXPECT_EQ(l.materialize_ids(), target);
}

TEST(Ledger, RejectsInvalidInsertions) {
  auto l = ledger_for({1, 2, 3}, {6}, 2);
  EXPECT_THROW(l.insert(4, {1, {}}, 0), LedgerError);
  EXPECT_THROW(l.insert(0, {kNullToken, {}}, 0), LedgerError);
  EXPECT_THROW(l.insert(0, {6, {}}, 0), LedgerError);
  l.insert(0, {1, {}}, 0);
  l.insert(3, {1, {}}, 0);
  EXPECT_THROW(l.insert(1, {1, {}}, 0), LedgerError);
  EXPECT_NO_THROW(l.insert(1, {1, {}}, 1));
  auto idle = l.insert(1, {2, {}}, 0, false);
  EXPECT_THROW(l.set_active(idle, true), LedgerError);
  l.set_active(0, false);
  EXPECT_NO_THROW(l.set_active(idle, true));
  EXPECT_EQ(l.active_in_window(0), 2u);
}

TEST(Ledger, OverheadIsAddedFraction) {
  auto l = ledger_for(std::vector<TokenId>(140, 1));
  EXPECT_DOUBLE_EQ(l.overhead(), 0.0);
  for (int i = 0; i < 70; ++i) l.insert(static_cast<std::size_t>(i), {2, {}}, 0);
  EXPECT_DOUBLE_EQ(overhead(l), 0.5);
  auto m = ledger_for(std::vector<TokenId>(100, 1));
  for (int i = 0; i < 22; ++i) m.insert(50, {2, {}}, 0);
  EXPECT_DOUBLE_EQ(m.overhead(), 0.22);
  EXPECT_DOUBLE_EQ(static_cast<double>(m.materialize_ids().size() - 100) / 100.0, m.overhead());
}

TEST(Ledger, DigestReflectsActivePerturbation) {
  auto a = ledger_for({1, 2, 3});
  auto b = ledger_for({1, 2, 3});
  EXPECT_EQ(a.digest(), b.digest());
  a.insert(1, {4, {"arg"}}, 0);
  EXPECT_NE(a.digest(), b.digest());
  b.insert(1, {4, {"other"}}, 0);
  EXPECT_NE(a.digest(), b.digest());
  a.set_active(0, false);
  EXPECT_EQ(a.digest(), ledger_for({1, 2, 3}).digest());
}

// Random insert/toggle sequences: original always an in-order subsequence,
// forbidden tokens never present in records, caps hold, and toggling is
// deterministic and idempotent.
TEST(LedgerProperty, RandomOperationSequences) {
  std::mt19937_64 rng(17);
  const std::vector<TokenId> forbidden{6};
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t len = 1 + rng() % 40;
    std::vector<TokenId> orig(len);
    for (auto& x : orig) x = 1 + static_cast<TokenId>(rng() % 6);
    const std::size_t cap = 1 + rng() % 5;
    auto l = ledger_for(orig, forbidden, cap);
    for (int op = 0; op < 60; ++op) {
      if (rng() % 3 == 0 && !l.records().empty()) {
        std::size_t r = rng() % l.records().size();
        try {
          l.set_active(r, !l.records()[r].active);
        } catch (const LedgerError&) {
        }
      } else {
        std::size_t off = rng() % (len + 1);
        TokenId t = 1 + static_cast<TokenId>(rng() % 6);
        try {
          l.insert(off, {t, {}}, off / 8);
        } catch (const LedgerError&) {
        }
      }
      auto ids = l.materialize_ids();
      ASSERT_TRUE(is_subsequence<TokenId>(orig, ids));
      ASSERT_EQ(ids.size(), len + l.active_count());
      for (const auto& rec : l.records()) ASSERT_NE(rec.token.type, 6u);
      for (std::size_t w = 0; w <= len / 8; ++w) ASSERT_LE(l.active_in_window(w), cap);
    }
    auto before = l.materialize_ids();
    std::vector<std::size_t> toggled;
    for (std::size_t r = 0; r < l.records().size(); ++r)
      if (l.records()[r].active && rng() % 2) toggled.push_back(r);
    for (auto r : toggled) l.set_active(r, false);
    auto once = l.materialize_ids();
    for (auto r : toggled) l.set_active(r, false);
    EXPECT_EQ(l.materialize_ids(), once);
    for (auto r : toggled) l.set_active(r, true);
    EXPECT_EQ(l.materialize_ids(), before);
  }
}

TEST(Subsequence, MatchesLcsOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<TokenId> a(rng() % 6), b(rng() % 10);
    for (auto& x : a) x = static_cast<TokenId>(rng() % 3);
    for (auto& x : b) x = static_cast<TokenId>(rng() % 3);
    EXPECT_EQ(is_subsequence<TokenId>(a, b), lcs(a, b) == a.size());
  }
}

TEST(StaticVector, AddOnly) {
  StaticFeatureVector v(10, {3, 1, 3});
  EXPECT_EQ(v.original_ones(), (std::vector<std::uint32_t>{1, 3}));
  EXPECT_FALSE(v.add(3));
  EXPECT_TRUE(v.add(7));
  EXPECT_TRUE(v.test(7));
  EXPECT_THROW(v.add(10), EncodingError);
  v.clear_added();
  EXPECT_TRUE(v.test(1));
  EXPECT_FALSE(v.test(7));
  EXPECT_THROW(StaticFeatureVector(4, {4}), EncodingError);
}

TEST(Io, TraceJsonRoundTrip) {
  Trace t{"s1", Label::benign, {{1, {"C:\\tmp\\a", "x"}}, {2, {}}}};
  StaticFeatureVector s(8, {2, 5});
  auto j = trace_to_json(t, &s);
  EXPECT_EQ(trace_from_json(j), t);
  auto v = small_vocab();
  EXPECT_EQ(vocab_from_json(vocab_to_json(v)).hash(), v.hash());
}

}  // namespace
}  // namespace seqevade
