#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "entlm/corpus.hpp"
#include "entlm/decode.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"

namespace entlm {

// Exact-match span scoring: a predicted span is correct iff its start,
// end, and class all equal a gold span's. Overall numbers are micro
// (pooled counts across classes).
struct SpanF1Report {
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
  };

  Counts overall;
  std::map<std::string, Counts> per_class;
};

// Errors when the two datasets differ in sentence count or any sentence
// length.
SpanF1Report span_f1(const Dataset& gold, const Dataset& predicted);

// Number of candidate spans a template-enumeration decoder must score
// for an n-token sentence: every (i, j) with i <= j, n(n+1)/2 of them.
std::size_t enumeration_cost(std::size_t n);

// Same with span length capped at max_span_len tokens:
// sum over l = 1..min(L, n) of (n - l + 1).
std::size_t enumeration_cost(std::size_t n, std::size_t max_span_len);

// Decoding cost comparison over one dataset. The one-pass methods run
// for real; the template baseline is simulated by invoking the same
// model once per candidate span as a stand-in scorer, so its forward
// count is the structural query count.
struct CostReport {
  std::size_t sentences = 0;

  std::uint64_t onepass_forwards = 0;    // greedy decoding
  std::uint64_t viterbi_forwards = 0;    // 0 when no transitions given
  std::uint64_t template_queries = 0;    // sum of enumeration_cost(n_i)
  std::uint64_t template_queries_per_class = 0;  //ticked per span x class

  double onepass_millis = 0.0;
  double viterbi_millis = 0.0;
  double template_millis = 0.0;
};

CostReport bench_decoding(const TinyMLM& model, const Dataset& dataset,
                          const LabelWordMap& map, const Vocabulary& vocab,
                          const TransitionMatrix* trans = nullptr);

}  // namespace entlm
