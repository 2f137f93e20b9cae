#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace entlm {

// Label space: positive entity classes plus the implicit O class.
// Everything downstream uses one index convention: 0 = O, 1..P = the
// positive classes in declaration order.
struct LabelSet {
  std::vector<std::string> positive_classes;

  static LabelSet make(std::vector<std::string> classes);

  std::size_t n_labels() const { return positive_classes.size() + 1; }
  bool contains(const std::string& cls) const;
  // O -> 0, positive class -> 1-based position; throws on unknown class.
  int index_of(const std::string& cls) const;
  // Inverse of index_of; index 0 returns "O".
  const std::string& name_of(int index) const;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<int> token_ids;  // empty until encoded against a Vocabulary

  std::size_t size() const { return tokens.size(); }
};

// IO tags: "O" or "I-<class>".
struct TagSequence {
  std::vector<std::string> tags;

  std::size_t size() const { return tags.size(); }

  static bool is_entity(const std::string& tag) { return tag != "O"; }
  // "I-PER" -> "PER"; "O" -> "".
  static std::string class_of(const std::string& tag);
  static std::string tag_for(const std::string& cls) { return "I-" + cls; }
};

struct Example {
  Sentence sentence;
  TagSequence tags;
};

struct Dataset {
  std::vector<Example> examples;
  LabelSet label_set;
  std::string name;

  std::size_t size() const { return examples.size(); }
};

// Surface-form -> class dictionary used for distant annotation.
struct Gazetteer {
  struct Entry {
    std::vector<std::string> tokens;
    std::string cls;
  };
  std::vector<Entry> entries;         // file order
  std::vector<std::string> classes;   // first-appearance order

  // TSV lines "surface form<TAB>class"; single spaces split the surface
  // form into tokens.
  static Gazetteer parse_tsv(const std::string& text);

  LabelSet label_set() const { return LabelSet::make(classes); }
  std::size_t count_for_class(const std::string& cls) const;
};

// Token <-> id bijection with reserved ids up front:
//   0 <pad>, 1 <unk>, 2 <mask>, then n_virtual <v#> slots, then corpus
//   tokens. The virtual slots exist so class prototypes can live in the
//   LM head without resizing it.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kMaskId = 2;

  Vocabulary() : Vocabulary({}, 0) {}
  Vocabulary(const std::vector<std::string>& corpus_tokens, std::size_t n_virtual);

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t n_virtual() const { return n_virtual_; }
  std::size_t n_corpus_tokens() const { return size() - first_corpus_id(); }

  int id_of(const std::string& token) const;  // kUnkId when absent
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;

  int virtual_id(std::size_t slot) const;
  bool is_virtual(int id) const;
  int first_corpus_id() const { return 3 + static_cast<int>(n_virtual_); }
  // True for corpus tokens, false for pad/unk/mask/virtual ids.
  bool is_word(int id) const { return id >= first_corpus_id(); }

  std::string serialize() const;  // "id<TAB>token" per line
  static Vocabulary parse(const std::string& text);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::size_t n_virtual_ = 0;
};

// Column format: "token<TAB>tag" (tab or spaces), blank line between
// sentences. B- prefixes are rewritten to I- on load. When expected is
// given, tags outside it are an error and the result uses that label set;
// otherwise classes are collected in first-appearance order.
Dataset parse_conll(const std::string& text,
                    std::optional<LabelSet> expected = std::nullopt,
                    std::string name = "");

std::string serialize_conll(const Dataset& dataset);

// Leftmost-longest greedy matching, case-sensitive on exact tokens.
// Matched span tokens all get I-<class>, everything else O.
Dataset annotate_with_gazetteer(const std::vector<Sentence>& sentences,
                                const Gazetteer& gaz);

// Frequency >= min_count gets an id; ordering is frequency descending,
// ties lexicographic. Tokens colliding with reserved names are skipped.
Vocabulary build_vocabulary(const std::vector<const Dataset*>& datasets,
                            std::size_t min_count, std::size_t n_virtual = 8);

void encode(Sentence& sentence, const Vocabulary& vocab);
void encode(Dataset& dataset, const Vocabulary& vocab);

struct SyntheticCorpus {
  std::vector<Sentence> sentences;  // raw text view
  Dataset gold;                     // same sentences with gold tags
};

// Template-grammar sentences with entities drawn from the gazetteer
// (frequency-skewed) and class-conditioned cue words next to each
// entity slot. Deterministic given the seed. Requires >= 2 classes and
// >= 20 entries per class.
SyntheticCorpus generate_synthetic_corpus(const Gazetteer& gaz,
                                          std::uint64_t seed,
                                          std::size_t n_sentences);

}  // namespace entlm
