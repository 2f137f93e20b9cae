#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "entlm/corpus.hpp"

namespace entlm {

// Exactly K entity mentions per positive class, assembled by greedy
// sentence selection over a seeded shuffle. Sentences are indivisible, so
// a sentence that would push any class past K is skipped whole.
struct SupportSet {
  std::vector<Example> samples;
  std::map<std::string, std::size_t> counts;  // class -> mention count
  std::size_t K = 0;
};

// One maximal I-C run counts as one mention.
std::map<std::string, std::size_t> count_entities(const Sentence& sentence,
                                                  const TagSequence& tags);

// Throws when the shuffled pass ends with any class short of K; the
// message names each deficient class with its achieved count.
SupportSet sample_kshot(const Dataset& dataset, std::size_t K, std::uint64_t seed);

}  // namespace entlm
