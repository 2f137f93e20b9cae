#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"

namespace entlm {

// Distant-supervision statistics backing label-word selection.
// data_counts: how often a surface word carries tag I-C in the annotated
// corpus. topk_counts: how often the word appears among the model's k
// most probable tokens at positions tagged I-C.
struct FrequencyTable {
  std::map<std::string, std::map<std::string, std::size_t>> data_counts;
  std::map<std::string, std::map<std::string, std::size_t>> topk_counts;
  std::size_t k = 0;  // width used to fill topk_counts

  std::size_t data_count(const std::string& word, const std::string& cls) const;
  std::size_t topk_count(const std::string& word, const std::string& cls) const;
  std::size_t data_total(const std::string& word) const;  // sum over classes
};

struct ConflictPolicy {
  double threshold = 0.6;  // minimum class share of a word's data counts
};

// Class -> label word mapping. token_ids drive both training targets and
// decoding: in discrete mode they are corpus token ids, in virtual mode
// reserved VIRTUAL slot ids whose W_lm columns hold class prototypes.
// O always maps to the original token at each position.
struct LabelWordMap {
  enum class Mode { kDiscrete, kVirtual };

  Mode mode = Mode::kDiscrete;
  std::map<std::string, int> token_ids;
  std::map<std::string, std::vector<std::string>> words;   // filtered, ranked
  std::map<std::string, Eigen::VectorXd> prototypes;       // virtual mode
  std::map<std::string, int> virtual_slots;                // virtual mode

  int label_token_id(const std::string& cls) const;  // throws on unknown class
};

FrequencyTable count_data_frequencies(const Dataset& annotated);

// One forward pass per sentence that contains an entity tag; at each
// entity position the k most probable corpus tokens (probability
// descending, id ascending on ties) are credited to the position's
// class. Reserved and virtual ids never count as predictions.
void count_lm_topk(const TinyMLM& model, const Dataset& annotated, std::size_t k,
                   const Vocabulary& vocab, FrequencyTable& table);

// Ranked selection; all orderings are count/score descending with
// lexicographic tie-break, zero-scored words excluded.
std::vector<std::string> select_data(const FrequencyTable& freq,
                                     const std::string& cls, std::size_t top_n);
std::vector<std::string> select_lm(const FrequencyTable& freq,
                                   const std::string& cls, std::size_t top_n);
std::vector<std::string> select_combined(const FrequencyTable& freq,
                                         const std::string& cls, std::size_t top_n);

// Keeps w iff data_count(w, cls) / data_total(w) > threshold, strictly;
// words with no data counts at all are dropped. Order preserved.
std::vector<std::string> remove_conflicts(const std::vector<std::string>& candidates,
                                          const std::string& cls,
                                          const FrequencyTable& freq,
                                          const ConflictPolicy& policy);

// Elementwise mean of the W_lm columns of the given words.
Eigen::VectorXd build_virtual_prototype(const TinyMLM& model,
                                        const std::vector<std::string>& words,
                                        const Vocabulary& vocab);

// Discrete mode: each class claims the first word of its filtered list
// not already claimed by an earlier class (class order = label set
// order); words missing from the vocabulary are skipped. Errors, naming
// the class, when a class ends up with nothing.
LabelWordMap build_label_word_map(
    const LabelSet& labels,
    const std::map<std::string, std::vector<std::string>>& selections,
    const Vocabulary& vocab);

// Virtual mode: class i takes VIRTUAL slot i and the prototype of its
// in-vocabulary words. Requires enough virtual slots.
LabelWordMap build_label_word_map(
    const LabelSet& labels,
    const std::map<std::string, std::vector<std::string>>& selections,
    const Vocabulary& vocab, const TinyMLM& model);

// Writes prototypes into the model's W_lm virtual columns. No-op for
// discrete maps.
void install_virtual_words(TinyMLM& model, const LabelWordMap& map,
                           const Vocabulary& vocab);

std::string serialize_label_word_map(const LabelWordMap& map,
                                     const Vocabulary& vocab);
LabelWordMap parse_label_word_map(const std::string& text, const LabelSet& labels,
                                  const Vocabulary& vocab);

// TSV dump "word<TAB>class<TAB>data_count<TAB>topk_count", word-major,
// classes alphabetical within a word.
std::string serialize_frequency_table(const FrequencyTable& table);

}  // namespace entlm
