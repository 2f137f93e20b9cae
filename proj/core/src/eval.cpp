#include "entlm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace entlm {

namespace {

void finish(SpanF1Report::Counts& counts) {
  const auto tp = static_cast<double>(counts.tp);
  const auto predicted = tp + static_cast<double>(counts.fp);
  const auto gold = tp + static_cast<double>(counts.fn);
  counts.precision = predicted > 0 ? tp / predicted : 0.0;
  counts.recall = gold > 0 ? tp / gold : 0.0;
  const double pr = counts.precision + counts.recall;
  counts.f1 = pr > 0 ? 2.0 * counts.precision * counts.recall / pr : 0.0;
}

using SpanKey = std::tuple<std::size_t, std::size_t, std::string>;

}  // namespace

SpanF1Report span_f1(const Dataset& gold, const Dataset& predicted) {
  if (gold.size() != predicted.size())
    throw std::invalid_argument(
        "span_f1: " + std::to_string(gold.size()) + " gold vs " +
        std::to_string(predicted.size()) + " predicted sentences");

  SpanF1Report report;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold.examples[s];
    const auto& p = predicted.examples[s];
    if (g.tags.size() != p.tags.size())
      throw std::invalid_argument("span_f1: sentence " + std::to_string(s) +
                                  " length mismatch: " +
                                  std::to_string(g.tags.size()) + " vs " +
                                  std::to_string(p.tags.size()));

    std::set<SpanKey> gold_spans;
    for (const auto& span : extract_spans(g.tags))
      gold_spans.insert({span.start, span.end, span.cls});

    for (const auto& span : extract_spans(p.tags)) {
      const SpanKey key{span.start, span.end, span.cls};
      auto& cls = report.per_class[span.cls];
      if (gold_spans.erase(key) == 1) {
        ++report.overall.tp;
        ++cls.tp;
      } else {
        ++report.overall.fp;
        ++cls.fp;
      }
    }
    for (const auto& key : gold_spans) {  // unmatched gold spans
      ++report.overall.fn;
      ++report.per_class[std::get<2>(key)].fn;
    }
  }

  finish(report.overall);
  for (auto& [cls, counts] : report.per_class) finish(counts);
  return report;
}

std::size_t enumeration_cost(std::size_t n) { return n * (n + 1) / 2; }

std::size_t enumeration_cost(std::size_t n, std::size_t max_span_len) {
  std::size_t total = 0;
  for (std::size_t len = 1; len <= std::min(max_span_len, n); ++len)
    total += n - len + 1;
  return total;
}

CostReport bench_decoding(const TinyMLM& model, const Dataset& dataset,
                          const LabelWordMap& map, const Vocabulary& vocab,
                          const TransitionMatrix* trans) {
  using Clock = std::chrono::steady_clock;
  const auto millis_since = [](Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };
  const auto& labels = dataset.label_set;

  CostReport report;
  report.sentences = dataset.size();

  {
    const auto forwards_before = model.forward_count();
    const auto start = Clock::now();
    for (const auto& example : dataset.examples) {
      const auto dist =
          label_distribution(model, example.sentence, map, labels, vocab);
      decode_greedy(dist, labels);
    }
    report.onepass_millis = millis_since(start);
    report.onepass_forwards = model.forward_count() - forwards_before;
  }

  if (trans != nullptr) {
    const auto forwards_before = model.forward_count();
    const auto start = Clock::now();
    for (const auto& example : dataset.examples) {
      const auto dist =
          label_distribution(model, example.sentence, map, labels, vocab);
      viterbi_decode(dist, *trans, labels);
    }
    report.viterbi_millis = millis_since(start);
    report.viterbi_forwards = model.forward_count() - forwards_before;
  }

  {
    const auto forwards_before = model.forward_count();
    const auto start = Clock::now();
    for (const auto& example : dataset.examples) {
      Sentence sentence = example.sentence;
      encode(sentence, vocab);
      const auto queries = enumeration_cost(sentence.size());
      for (std::size_t q = 0; q < queries; ++q)
        model.forward(sentence.token_ids);  // stand-in span scorer
      report.template_queries_per_class +=
          queries * labels.positive_classes.size();
    }
    report.template_millis = millis_since(start);
    report.template_queries = model.forward_count() - forwards_before;
  }

  return report;
}

}  // namespace entlm
