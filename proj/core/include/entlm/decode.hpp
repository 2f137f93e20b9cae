#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"

namespace entlm {

// Per-position label probabilities, one row per token. Column layout
// follows LabelSet: 0 = O, then the positive classes in order. Rows sum
// to 1.
struct LabelDistribution {
  Eigen::MatrixXd probs;        // n x n_labels
  std::vector<bool> oov;       // original token missing from the vocabulary

  std::size_t size() const { return static_cast<std::size_t>(probs.rows()); }
  std::size_t n_labels() const { return static_cast<std::size_t>(probs.cols()); }
};

// One forward pass on the raw sentence. Per position, a positive class
// scores the softmax probability of its label word (or reserved slot)
// and O scores the probability of the original token; the gathered
// scores are renormalized. An out-of-vocabulary original token falls
// back to the unknown-token probability and flags the position.
LabelDistribution label_distribution(const TinyMLM& model, const Sentence& sentence,
                                     const LabelWordMap& map, const LabelSet& labels,
                                     const Vocabulary& vocab);

// Per-position argmax; ties resolve to the lowest label index, so O
// first, then class declaration order.
TagSequence decode_greedy(const LabelDistribution& dist, const LabelSet& labels);

// Row-stochastic tag bigram matrix: row 0 is the start state, row 1 + i
// continues from label index i; columns are the next label.
struct TransitionMatrix {
  Eigen::MatrixXd probs;  // (1 + n_labels) x n_labels

  std::size_t n_labels() const { return static_cast<std::size_t>(probs.cols()); }
};

// Add-alpha smoothed bigram frequencies over the dataset's IO tags,
// including start -> first-tag transitions. Rows that stay all-zero
// (alpha = 0 and the context never occurs) fall back to uniform so the
// matrix remains row-stochastic.
TransitionMatrix estimate_transitions(const Dataset& annotated,
                                      double smoothing = 1.0);

// Highest-scoring tag path under sum of log label and log transition
// probabilities, by dynamic programming. Ties resolve to the lowest
// label index at every max. Errors when every path has zero
// probability.
TagSequence viterbi_decode(const LabelDistribution& dist,
                           const TransitionMatrix& trans, const LabelSet& labels);

struct EntitySpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  std::string cls;

  bool operator==(const EntitySpan&) const = default;
};

// Each maximal run of identical I-C tags becomes one span.
std::vector<EntitySpan> extract_spans(const TagSequence& tags);

// Inverse view: spans painted onto an all-O sequence. Errors on
// overlapping or out-of-range spans. Note adjacent same-class spans
// merge under extract_spans; the IO scheme cannot keep them apart.
TagSequence tags_from_spans(const std::vector<EntitySpan>& spans,
                            std::size_t length);

}  // namespace entlm
