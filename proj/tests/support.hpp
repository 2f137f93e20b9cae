#pragma once

// Helpers shared between unit tests and the acceptance suite.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"
#include "entlm/train.hpp"

namespace entlm::testsupport {

// Same reduction backward_and_step uses: mean over items of the per-item
// mean cross-entropy.
inline double batch_loss(const TinyMLM& model, const std::vector<TrainItem>& items) {
  double loss = 0.0;
  for (const auto& item : items) {
    const auto fwd = model.forward(item.input_ids);
    loss += cross_entropy_loss(fwd.logits, item.target_ids, item.position_mask).loss /
            static_cast<double>(items.size());
  }
  return loss;
}

inline Eigen::VectorXd analytic_gradient(const TinyMLM& model,
                                         const std::vector<TrainItem>& items) {
  Eigen::VectorXd grad =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
  for (const auto& item : items) {
    const auto fwd = model.forward(item.input_ids);
    auto part = cross_entropy_loss(fwd.logits, item.target_ids, item.position_mask);
    part.dlogits /= static_cast<double>(items.size());
    model.backward(fwd, part.dlogits, grad);
  }
  return grad;
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

// Central finite differences against the analytic gradient over every
// parameter. A coordinate passes when |a - f| <= 1e-9 absolute or the
// relative error |a - f| / max(|a|, |f|) stays below the caller's bound;
// the report carries the worst relative error among coordinates that
// exceed the absolute floor.
inline GradCheckReport finite_difference_check(TinyMLM& model,
                                               const std::vector<TrainItem>& items,
                                               double step = 1e-5) {
  const auto analytic = analytic_gradient(model, items);
  GradCheckReport report;
  auto& params = model.params();
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = params(i);
    params(i) = saved + step;
    const double up = batch_loss(model, items);
    params(i) = saved - step;
    const double down = batch_loss(model, items);
    params(i) = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = analytic(i);
    const double diff = std::abs(a - fd);
    ++report.n_checked;
    if (diff <= 1e-9) continue;
    const double rel = diff / std::max(std::abs(a), std::abs(fd));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = static_cast<std::size_t>(i);
    }
  }
  return report;
}

// ---- label-word selection oracles ----
// Deliberately naive rescans of the annotated corpus; they share nothing
// with the production counting code beyond the tie rules.

using WordScores = std::map<std::string, double>;

inline std::vector<std::string> oracle_rank(const WordScores& scores,
                                            std::size_t top_n) {
  std::vector<std::pair<std::string, double>> items(scores.begin(), scores.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  for (const auto& [word, score] : items) {
    if (words.size() == top_n) break;
    if (score > 0) words.push_back(word);
  }
  return words;
}

inline WordScores oracle_data_scores(const Dataset& annotated, const std::string& cls) {
  WordScores scores;
  for (const auto& example : annotated.examples)
    for (std::size_t i = 0; i < example.tags.size(); ++i)
      if (example.tags.tags[i] == TagSequence::tag_for(cls))
        scores[example.sentence.tokens[i]] += 1.0;
  return scores;
}

// Full softmax row, full sort, top k real tokens.
inline WordScores oracle_topk_scores(const TinyMLM& model, const Dataset& annotated,
                                     std::size_t k, const Vocabulary& vocab,
                                     const std::string& cls) {
  WordScores scores;
  for (const auto& example : annotated.examples) {
    bool entity = false;
    for (const auto& tag : example.tags.tags) entity |= tag != "O";
    if (!entity) continue;
    Sentence sentence = example.sentence;
    encode(sentence, vocab);
    const auto fwd = model.forward(sentence.token_ids);
    for (std::size_t i = 0; i < example.tags.size(); ++i) {
      if (example.tags.tags[i] != TagSequence::tag_for(cls)) continue;
      const auto row = fwd.logits.row(static_cast<Eigen::Index>(i));
      const double m = row.maxCoeff();
      std::vector<std::pair<double, int>> probs;
      for (int id = vocab.first_corpus_id(); id < static_cast<int>(vocab.size()); ++id)
        probs.emplace_back(std::exp(row(id) - m), id);
      std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t j = 0; j < k && j < probs.size(); ++j)
        scores[vocab.token_of(probs[j].second)] += 1.0;
    }
  }
  return scores;
}

inline WordScores oracle_combined_scores(const WordScores& data,
                                         const WordScores& topk) {
  WordScores scores;
  for (const auto& [word, count] : data) {
    const auto it = topk.find(word);
    if (it != topk.end()) scores[word] = count * it->second;
  }
  return scores;
}

inline std::vector<std::string> oracle_remove_conflicts(
    const std::vector<std::string>& candidates, const std::string& cls,
    const Dataset& annotated, double threshold) {
  std::vector<std::string> kept;
  for (const auto& word : candidates) {
    double mine = 0.0, all = 0.0;
    for (const auto& example : annotated.examples)
      for (std::size_t i = 0; i < example.tags.size(); ++i) {
        if (example.sentence.tokens[i] != word) continue;
        const auto& tag = example.tags.tags[i];
        if (tag == "O") continue;
        all += 1.0;
        if (tag == TagSequence::tag_for(cls)) mine += 1.0;
      }
    if (all > 0.0 && mine / all > threshold) kept.push_back(word);
  }
  return kept;
}

}  // namespace entlm::testsupport
