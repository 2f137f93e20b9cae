#include "entlm/sampler.hpp"

#include <numeric>
#include <stdexcept>

#include "entlm/rng.hpp"

namespace entlm {

std::map<std::string, std::size_t> count_entities(const Sentence& sentence,
                                                  const TagSequence& tags) {
  if (sentence.size() != tags.size())
    throw std::invalid_argument("count_entities: sentence has " +
                                std::to_string(sentence.size()) + " tokens, tags " +
                                std::to_string(tags.size()));
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& tag = tags.tags[i];
    if (tag == "O") continue;
    if (i == 0 || tags.tags[i - 1] != tag) ++counts[TagSequence::class_of(tag)];
  }
  return counts;
}

SupportSet sample_kshot(const Dataset& dataset, std::size_t K, std::uint64_t seed) {
  SupportSet support;
  support.K = K;
  for (const auto& cls : dataset.label_set.positive_classes) support.counts[cls] = 0;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  auto complete = [&]() {
    for (const auto& [cls, count] : support.counts)
      if (count != K) return false;
    return true;
  };

  for (const auto idx : order) {
    if (complete()) break;
    const auto& example = dataset.examples[idx];
    const auto mentions = count_entities(example.sentence, example.tags);
    bool overshoots = false;
    for (const auto& [cls, count] : mentions) {
      if (support.counts.at(cls) + count > K) {
        overshoots = true;
        break;
      }
    }
    if (overshoots) continue;
    for (const auto& [cls, count] : mentions) support.counts[cls] += count;
    support.samples.push_back(example);
  }

  if (!complete()) {
    std::string deficient;
    for (const auto& [cls, count] : support.counts) {
      if (count == K) continue;
      if (!deficient.empty()) deficient += ", ";
      deficient += cls + " has " + std::to_string(count) + " of " + std::to_string(K);
    }
    throw std::runtime_error("sample_kshot: infeasible at K=" + std::to_string(K) +
                             ": " + deficient);
  }
  return support;
}

}  // namespace entlm
