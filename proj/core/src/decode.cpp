#include "entlm/decode.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace entlm {

LabelDistribution label_distribution(const TinyMLM& model, const Sentence& sentence,
                                     const LabelWordMap& map, const LabelSet& labels,
                                     const Vocabulary& vocab) {
  if (sentence.tokens.empty())
    throw std::invalid_argument("label_distribution: empty sentence");

  Sentence encoded = sentence;
  encode(encoded, vocab);
  const auto fwd = model.forward(encoded.token_ids);

  const auto n = static_cast<Eigen::Index>(encoded.size());
  const auto n_labels = static_cast<Eigen::Index>(labels.n_labels());

  std::vector<int> class_ids;  // label word per positive class, class order
  class_ids.reserve(labels.positive_classes.size());
  for (const auto& cls : labels.positive_classes)
    class_ids.push_back(map.label_token_id(cls));

  LabelDistribution dist;
  dist.probs.resize(n, n_labels);
  dist.oov.resize(encoded.size());

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = fwd.logits.row(i);
    const double m = row.maxCoeff();
    const Eigen::ArrayXd exps = (row.array() - m).exp();
    const double denom = exps.sum();

    dist.oov[static_cast<std::size_t>(i)] =
        !vocab.contains(encoded.tokens[static_cast<std::size_t>(i)]);
    dist.probs(i, 0) = exps(encoded.token_ids[static_cast<std::size_t>(i)]) / denom;
    for (std::size_t c = 0; c < class_ids.size(); ++c)
      dist.probs(i, static_cast<Eigen::Index>(c) + 1) =
          exps(class_ids[c]) / denom;

    const double total = dist.probs.row(i).sum();
    if (!(total > 0))
      throw std::runtime_error("label_distribution: zero probability mass");
    dist.probs.row(i) /= total;
  }
  return dist;
}

namespace {

// First strict maximum, scanning label indices upward: O wins exact
// ties, then earlier classes.
Eigen::Index argmax_low(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

}  // namespace

TagSequence decode_greedy(const LabelDistribution& dist, const LabelSet& labels) {
  if (dist.n_labels() != labels.n_labels())
    throw std::invalid_argument("decode_greedy: label count mismatch");
  TagSequence tags;
  tags.tags.reserve(dist.size());
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
    const auto j = argmax_low(dist.probs.row(i));
    const auto& name = labels.name_of(static_cast<int>(j));
    tags.tags.push_back(j == 0 ? name : TagSequence::tag_for(name));
  }
  return tags;
}

TransitionMatrix estimate_transitions(const Dataset& annotated, double smoothing) {
  if (smoothing < 0)
    throw std::invalid_argument("estimate_transitions: smoothing must be >= 0");
  const auto& labels = annotated.label_set;
  const auto L = static_cast<Eigen::Index>(labels.n_labels());

  auto index_of_tag = [&labels](const std::string& tag) {
    return TagSequence::is_entity(tag)
               ? labels.index_of(TagSequence::class_of(tag))
               : 0;
  };

  TransitionMatrix trans;
  trans.probs = Eigen::MatrixXd::Constant(1 + L, L, smoothing);
  for (const auto& example : annotated.examples) {
    Eigen::Index from = 0;  // row 0: start state
    for (const auto& tag : example.tags.tags) {
      const auto to = static_cast<Eigen::Index>(index_of_tag(tag));
      trans.probs(from, to) += 1.0;
      from = 1 + to;
    }
  }
  for (Eigen::Index r = 0; r < trans.probs.rows(); ++r) {
    const double total = trans.probs.row(r).sum();
    if (total > 0) {
      trans.probs.row(r) /= total;
    } else {
      trans.probs.row(r).setConstant(1.0 / static_cast<double>(L));
    }
  }
  return trans;
}

TagSequence viterbi_decode(const LabelDistribution& dist,
                           const TransitionMatrix& trans, const LabelSet& labels) {
  const auto L = static_cast<Eigen::Index>(labels.n_labels());
  if (dist.probs.cols() != L)
    throw std::invalid_argument("viterbi_decode: label count mismatch");
  if (trans.probs.rows() != 1 + L || trans.probs.cols() != L)
    throw std::invalid_argument("viterbi_decode: transition shape mismatch");
  const auto n = dist.probs.rows();
  if (n == 0) throw std::invalid_argument("viterbi_decode: empty distribution");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd log_dist = dist.probs.array().log().matrix();
  const Eigen::MatrixXd log_trans = trans.probs.array().log().matrix();

  Eigen::MatrixXd score(n, L);
  Eigen::MatrixXi back(n, L);
  score.row(0) = log_dist.row(0) + log_trans.row(0);
  back.row(0).setConstant(-1);

  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index to = 0; to < L; ++to) {
      double best = neg_inf;
      Eigen::Index best_prev = 0;
      for (Eigen::Index prev = 0; prev < L; ++prev) {
        const double candidate = score(i - 1, prev) + log_trans(1 + prev, to);
        if (candidate > best) {
          best = candidate;
          best_prev = prev;
        }
      }
      score(i, to) = best + log_dist(i, to);
      back(i, to) = static_cast<int>(best_prev);
    }
  }

  const auto last = argmax_low(score.row(n - 1));
  if (score(n - 1, last) == neg_inf)
    throw std::runtime_error("viterbi_decode: every path has zero probability");

  std::vector<int> path(static_cast<std::size_t>(n));
  path.back() = static_cast<int>(last);
  for (Eigen::Index i = n - 1; i > 0; --i)
    path[static_cast<std::size_t>(i - 1)] =
        back(i, path[static_cast<std::size_t>(i)]);

  TagSequence tags;
  tags.tags.reserve(path.size());
  for (const int j : path) {
    const auto& name = labels.name_of(j);
    tags.tags.push_back(j == 0 ? name : TagSequence::tag_for(name));
  }
  return tags;
}

std::vector<EntitySpan> extract_spans(const TagSequence& tags) {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < tags.size()) {
    if (!TagSequence::is_entity(tags.tags[i])) {
      ++i;
      continue;
    }
    const auto& tag = tags.tags[i];
    std::size_t j = i + 1;
    while (j < tags.size() && tags.tags[j] == tag) ++j;
    spans.push_back(EntitySpan{i, j - 1, TagSequence::class_of(tag)});
    i = j;
  }
  return spans;
}

TagSequence tags_from_spans(const std::vector<EntitySpan>& spans,
                            std::size_t length) {
  TagSequence tags;
  tags.tags.assign(length, "O");
  for (const auto& span : spans) {
    if (span.start > span.end || span.end >= length)
      throw std::invalid_argument("tags_from_spans: span out of range");
    for (std::size_t i = span.start; i <= span.end; ++i) {
      if (tags.tags[i] != "O")
        throw std::invalid_argument("tags_from_spans: overlapping spans");
      tags.tags[i] = TagSequence::tag_for(span.cls);
    }
  }
  return tags;
}

}  // namespace entlm
