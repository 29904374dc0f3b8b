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

// Vocabulary, traces, window views and the perturbation ledger.
//
// Every adversarial edit in this library is an insertion keyed to an offset
// of the ORIGINAL trace. The ledger never removes or reorders original calls,
// so the original trace is always an in-order subsequence of the
// materialized one.

#ifndef SEQEVADE_CORE_HPP_
#define SEQEVADE_CORE_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqevade {

using TokenId = std::uint32_t;

// Padding id. Never counted as an API call.
inline constexpr TokenId kNullToken = 0;

//============= Errors ===============

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ledger offsets out of range, forbidden insertions, per-window cap breaches.
class LedgerError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

//============= Hashing ===============

// 64-bit FNV-1a. Used for vocabulary fingerprints and ledger digests, where a
// stable cross-platform value matters more than distribution quality.
class Fnv1a {
 public:
  void Update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void Update(std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (value >> (8 * i)) & 0xffU;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string HexDigest(std::uint64_t value) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) out[i] = kHex[value & 0xf];
  return out;
}

//============= Vocabulary ===============

// Dense token ids 0..size()-1; id 0 is the padding token.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary({"<null>"}, {}) {}

  Vocabulary(std::vector<std::string> tokens,
             const std::vector<std::string>& forbidden_names)
      : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw ConfigError("vocabulary needs a padding token");
    forbidden_.assign(tokens_.size(), false);
    for (TokenId id = 0; id < tokens_.size(); ++id) {
      if (!index_.emplace(tokens_[id], id).second)
        throw ConfigError("duplicate vocabulary token: " + tokens_[id]);
    }
    for (const auto& name : forbidden_names) {
      auto id = find(name);
      if (!id) throw ConfigError("forbidden token not in vocabulary: " + name);
      if (*id == kNullToken) throw ConfigError("padding token cannot be forbidden");
      forbidden_[*id] = true;
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& name(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(TokenId id) const { return id < tokens_.size(); }

  std::optional<TokenId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Ids outside the vocabulary are unmonitored, hence never forbidden.
  bool is_forbidden(TokenId id) const {
    return id < forbidden_.size() && forbidden_[id];
  }

  std::vector<std::string> forbidden_names() const {
    std::vector<std::string> out;
    for (TokenId id = 0; id < tokens_.size(); ++id)
      if (forbidden_[id]) out.push_back(tokens_[id]);
    return out;
  }

  std::vector<TokenId> forbidden_ids() const {
    std::vector<TokenId> out;
    for (TokenId id = 0; id < tokens_.size(); ++id)
      if (forbidden_[id]) out.push_back(id);
    return out;
  }

  // Every real token an attacker may insert (no padding, no forbidden ids).
  std::vector<TokenId> insertable() const {
    std::vector<TokenId> out;
    for (TokenId id = 1; id < tokens_.size(); ++id)
      if (!forbidden_[id]) out.push_back(id);
    return out;
  }

  std::uint64_t hash() const {
    Fnv1a h;
    h.Update(static_cast<std::uint64_t>(tokens_.size()));
    for (const auto& t : tokens_) {
      h.Update(t);
      h.Update(std::string_view("\0", 1));
    }
    for (TokenId id = 0; id < tokens_.size(); ++id)
      if (forbidden_[id]) h.Update(static_cast<std::uint64_t>(id));
    return h.digest();
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> forbidden_;
  std::unordered_map<std::string, TokenId> index_;
};

//============= Traces ===============

enum class Label { malicious, benign, unknown };

inline std::string_view to_string(Label label) {
  switch (label) {
    case Label::malicious: return "malicious";
    case Label::benign: return "benign";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

inline Label label_from_string(std::string_view s) {
  if (s == "malicious") return Label::malicious;
  if (s == "benign") return Label::benign;
  if (s == "unknown") return Label::unknown;
  throw ConfigError("unknown label: " + std::string(s));
}

// One API call. `args` holds the level-2 (discriminative) argument values.
struct ApiToken {
  TokenId type = kNullToken;
  std::vector<std::string> args;

  friend bool operator==(const ApiToken&, const ApiToken&) = default;
};

struct Trace {
  std::string id;
  Label label = Label::unknown;
  std::vector<ApiToken> calls;

  std::size_t size() const { return calls.size(); }

  std::vector<TokenId> ids() const {
    std::vector<TokenId> out;
    out.reserve(calls.size());
    for (const auto& c : calls) out.push_back(c.type);
    return out;
  }

  static Trace FromIds(std::string id, Label label, std::span<const TokenId> ids) {
    Trace t{std::move(id), label, {}};
    t.calls.reserve(ids.size());
    for (TokenId x : ids) t.calls.push_back(ApiToken{x, {}});
    return t;
  }

  friend bool operator==(const Trace&, const Trace&) = default;
};

//============= Windows ===============

using Window = std::vector<TokenId>;

inline std::size_t window_count(std::size_t length, std::size_t n) {
  if (n == 0) throw ConfigError("window size must be >= 1");
  return (length + n - 1) / n;
}

// Consecutive non-overlapping windows; the last one is padded with
// kNullToken. An empty trace yields no windows.
inline std::vector<Window> split_windows(std::span<const TokenId> trace, std::size_t n) {
  std::vector<Window> out(window_count(trace.size(), n), Window(n, kNullToken));
  for (std::size_t i = 0; i < trace.size(); ++i) out[i / n][i % n] = trace[i];
  return out;
}

inline std::vector<Window> split_windows(const Trace& trace, std::size_t n) {
  return split_windows(trace.ids(), n);
}

// Dense one-hot encoding, length n * vocab_size. Padding rows stay zero.
inline std::vector<float> one_hot(std::span<const TokenId> window, std::size_t vocab_size) {
  std::vector<float> out(window.size() * vocab_size, 0.0f);
  for (std::size_t pos = 0; pos < window.size(); ++pos) {
    TokenId t = window[pos];
    if (t >= vocab_size) throw EncodingError("token id " + std::to_string(t) + " outside vocabulary");
    if (t != kNullToken) out[pos * vocab_size + t] = 1.0f;
  }
  return out;
}

inline std::vector<float> one_hot(std::span<const TokenId> window, const Vocabulary& vocab) {
  return one_hot(window, vocab.size());
}

//============= Perturbation ledger ===============

struct InsertionRecord {
  std::size_t original_offset = 0;  // inserted before original[original_offset]
  ApiToken token;
  std::size_t window_index = 0;
  bool active = true;

  friend bool operator==(const InsertionRecord&, const InsertionRecord&) = default;
};

// Where a materialized position came from.
struct Provenance {
  bool inserted = false;
  std::size_t index = 0;  // original offset, or record index when inserted
};

class PerturbationLedger {
 public:
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  PerturbationLedger() : PerturbationLedger(std::make_shared<const Trace>()) {}

  explicit PerturbationLedger(std::shared_ptr<const Trace> original,
                              std::vector<TokenId> forbidden = {},
                              std::size_t max_per_window = kUnlimited)
      : original_(std::move(original)),
        forbidden_(std::move(forbidden)),
        max_per_window_(max_per_window) {
    if (!original_) throw LedgerError("ledger needs an original trace");
    std::sort(forbidden_.begin(), forbidden_.end());
  }

  const Trace& original() const { return *original_; }
  std::shared_ptr<const Trace> original_ptr() const { return original_; }
  const std::vector<InsertionRecord>& records() const { return records_; }
  std::size_t max_per_window() const { return max_per_window_; }

  // Appends a record and returns its index. An inactive record documents a discarded insertion and is exempt from
  // the cap until reactivated.
  std::size_t insert(std::size_t offset, ApiToken token, std::size_t window, bool active = true) {
    if (offset > original_->size())
      throw LedgerError("insertion offset " + std::to_string(offset) +
                        " beyond original length " + std::to_string(original_->size()));
    if (token.type == kNullToken) throw LedgerError("cannot insert the padding token");
    if (std::binary_search(forbidden_.begin(), forbidden_.end(), token.type))
      throw LedgerError("forbidden token " + std::to_string(token.type) + " cannot be inserted");
    if (active && active_in_window(window) >= max_per_window_)
      throw LedgerError("window " + std::to_string(window) + " already holds the maximum insertions");
    records_.push_back(InsertionRecord{offset, std::move(token), window, active});
    if (!active) return records_.size() - 1;
    ++active_per_window_[window];
    ++active_total_;
    return records_.size() - 1;
  }

  void set_active(std::size_t record, bool active) {
    auto& r = records_.at(record);
    if (r.active == active) return;
    if (active && active_in_window(r.window_index) >= max_per_window_)
      throw LedgerError("reactivation would exceed the per-window cap");
    r.active = active;
    if (active) {
      ++active_per_window_[r.window_index];
      ++active_total_;
    } else {
      --active_per_window_[r.window_index];
      --active_total_;
    }
  }

  std::size_t active_count() const { return active_total_; }

  std::size_t active_in_window(std::size_t window) const {
    auto it = active_per_window_.find(window);
    return it == active_per_window_.end() ? 0 : it->second;
  }

  // Materialized order as provenance entries. Records sharing an offset keep
  // their creation order.
  std::vector<Provenance> layout() const {
    const std::size_t n = original_->size();
    std::vector<std::size_t> bucket_start(n + 2, 0);
    for (const auto& r : records_)
      if (r.active) ++bucket_start[r.original_offset + 1];
    for (std::size_t i = 1; i < bucket_start.size(); ++i) bucket_start[i] += bucket_start[i - 1];
    std::vector<std::size_t> by_offset(bucket_start.back());
    std::vector<std::size_t> fill(bucket_start.begin(), bucket_start.end() - 1);
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].active) by_offset[fill[records_[i].original_offset]++] = i;

    std::vector<Provenance> out;
    out.reserve(n + by_offset.size());
    for (std::size_t off = 0; off <= n; ++off) {
      for (std::size_t k = bucket_start[off]; k < bucket_start[off + 1]; ++k)
        out.push_back(Provenance{true, by_offset[k]});
      if (off < n) out.push_back(Provenance{false, off});
    }
    return out;
  }

  Trace materialize() const {
    Trace out{original_->id, original_->label, {}};
    auto lay = layout();
    out.calls.reserve(lay.size());
    for (const auto& p : lay)
      out.calls.push_back(p.inserted ? records_[p.index].token : original_->calls[p.index]);
    return out;
  }

  std::vector<TokenId> materialize_ids() const {
    std::vector<TokenId> out;
    auto lay = layout();
    out.reserve(lay.size());
    for (const auto& p : lay)
      out.push_back(p.inserted ? records_[p.index].token.type : original_->calls[p.index].type);
    return out;
  }

  // Added calls as a fraction of the original length.
  double overhead() const {
    if (original_->calls.empty()) return 0.0;
    return static_cast<double>(active_count()) / static_cast<double>(original_->size());
  }

  // Digest over the active insertions (offset, type, window, args) in
  // materialized order. Equal digests mean equal perturbations.
  std::uint64_t digest() const {
    Fnv1a h;
    for (const auto& p : layout()) {
      if (!p.inserted) continue;
      const auto& r = records_[p.index];
      h.Update(static_cast<std::uint64_t>(r.original_offset));
      h.Update(static_cast<std::uint64_t>(r.token.type));
      h.Update(static_cast<std::uint64_t>(r.window_index));
      for (const auto& a : r.token.args) {
        h.Update(a);
        h.Update(std::string_view("\0", 1));
      }
    }
    return h.digest();
  }

 private:
  std::shared_ptr<const Trace> original_;
  std::vector<TokenId> forbidden_;
  std::size_t max_per_window_;
  std::vector<InsertionRecord> records_;
  std::unordered_map<std::size_t, std::size_t> active_per_window_;
  std::size_t active_total_ = 0;
};

inline Trace materialize(const PerturbationLedger& ledger) { return ledger.materialize(); }
inline double overhead(const PerturbationLedger& ledger) { return ledger.overhead(); }

// True when `needle` appears in `haystack` in order (not necessarily
// contiguously).
template <class T>
bool is_subsequence(std::span<const T> needle, std::span<const T> haystack) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < haystack.size() && i < needle.size(); ++j)
    if (haystack[j] == needle[i]) ++i;
  return i == needle.size();
}

//============= Static features ===============

// Boolean string-presence vector stored sparsely. Attacks may only add bits.
class StaticFeatureVector {
 public:
  StaticFeatureVector() = default;
  StaticFeatureVector(std::size_t dim, std::vector<std::uint32_t> ones) : dim_(dim), ones_(std::move(ones)) {
    std::sort(ones_.begin(), ones_.end());
    ones_.erase(std::unique(ones_.begin(), ones_.end()), ones_.end());
    if (!ones_.empty() && ones_.back() >= dim_) throw EncodingError("static bit outside dimension");
  }

  std::size_t dim() const { return dim_; }
  const std::vector<std::uint32_t>& original_ones() const { return ones_; }
  const std::vector<std::uint32_t>& added() const { return added_; }

  bool test(std::uint32_t bit) const {
    return std::binary_search(ones_.begin(), ones_.end(), bit) ||
           std::binary_search(added_.begin(), added_.end(), bit);
  }

  // Flips a zero bit on. Returns false when the bit was already set.
  bool add(std::uint32_t bit) {
    if (bit >= dim_) throw EncodingError("static bit outside dimension");
    if (test(bit)) return false;
    added_.insert(std::upper_bound(added_.begin(), added_.end(), bit), bit);
    return true;
  }

  void clear_added() { added_.clear(); }

  template <class F>
  void for_each_one(F&& f) const {
    for (auto b : ones_) f(b);
    for (auto b : added_) f(b);
  }

  friend bool operator==(const StaticFeatureVector&, const StaticFeatureVector&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> ones_;
  std::vector<std::uint32_t> added_;
};

}  // namespace seqevade

#endif  // SEQEVADE_CORE_HPP_
