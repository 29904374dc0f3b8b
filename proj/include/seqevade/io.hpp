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

// Corpus and vocabulary file formats.
//
//   vocab.json    {"tokens": [string], "forbidden": [string]}
//   corpus.jsonl  one record per line:
//                 {"id", "label", "calls": [{"t": int, "a": [string]}],
//                  "static": {"dim": int, "ones": [int]}}   (static optional)

#ifndef SEQEVADE_IO_HPP_
#define SEQEVADE_IO_HPP_

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqevade/core.hpp"

namespace seqevade {

struct Corpus {
  Vocabulary vocab;
  std::vector<Trace> traces;
  // Parallel to `traces`; empty when the corpus carries no static features.
  std::vector<StaticFeatureVector> statics;

  bool has_static() const { return !statics.empty(); }
};

inline nlohmann::json vocab_to_json(const Vocabulary& v) {
  return {{"tokens", v.tokens()}, {"forbidden", v.forbidden_names()}};
}

inline Vocabulary vocab_from_json(const nlohmann::json& j) {
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                    j.value("forbidden", std::vector<std::string>{}));
}

inline nlohmann::json trace_to_json(const Trace& t, const StaticFeatureVector* s = nullptr) {
  nlohmann::json calls = nlohmann::json::array();
  for (const auto& c : t.calls) {
    nlohmann::json cj = {{"t", c.type}};
    cj["a"] = c.args;
    calls.push_back(std::move(cj));
  }
  nlohmann::json j = {{"id", t.id}, {"label", to_string(t.label)}, {"calls", std::move(calls)}};
  if (s) {
    std::vector<std::uint32_t> ones;
    s->for_each_one([&](std::uint32_t b) { ones.push_back(b); });
    std::sort(ones.begin(), ones.end());
    j["static"] = {{"dim", s->dim()}, {"ones", ones}};
  }
  return j;
}

inline Trace trace_from_json(const nlohmann::json& j, const Vocabulary* vocab = nullptr) {
  Trace t;
  t.id = j.at("id").get<std::string>();
  t.label = label_from_string(j.value("label", "unknown"));
  for (const auto& cj : j.at("calls")) {
    ApiToken tok;
    tok.type = cj.at("t").get<TokenId>();
    if (vocab && !vocab->contains(tok.type))
      throw EncodingError("trace " + t.id + " uses token id outside vocabulary");
    if (cj.contains("a")) tok.args = cj.at("a").get<std::vector<std::string>>();
    t.calls.push_back(std::move(tok));
  }
  return t;
}

inline void write_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << vocab_to_json(v).dump() << '\n';
}

inline Vocabulary read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return vocab_from_json(nlohmann::json::parse(in));
}

inline void write_corpus_records(const Corpus& c, std::ostream& out) {
  for (std::size_t i = 0; i < c.traces.size(); ++i)
    out << trace_to_json(c.traces[i], c.has_static() ? &c.statics[i] : nullptr).dump() << '\n';
}

inline void write_corpus(const Corpus& c, const std::string& dir) {
  write_vocab(c.vocab, dir + "/vocab.json");
  std::ofstream out(dir + "/corpus.jsonl");
  if (!out) throw Error("cannot write " + dir + "/corpus.jsonl");
  write_corpus_records(c, out);
}

inline Corpus read_corpus(const std::string& dir) {
  Corpus c;
  c.vocab = read_vocab(dir + "/vocab.json");
  std::ifstream in(dir + "/corpus.jsonl");
  if (!in) throw Error("cannot read " + dir + "/corpus.jsonl");
  std::string line;
  std::size_t with_static = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    c.traces.push_back(trace_from_json(j, &c.vocab));
    if (j.contains("static")) {
      const auto& s = j.at("static");
      c.statics.emplace_back(s.at("dim").get<std::size_t>(), s.at("ones").get<std::vector<std::uint32_t>>());
      ++with_static;
    } else {
      c.statics.emplace_back();
    }
  }
  if (with_static == 0) c.statics.clear();
  else if (with_static != c.traces.size()) throw EncodingError("corpus mixes records with and without static features");
  return c;
}

}  // namespace seqevade

#endif  // SEQEVADE_IO_HPP_
