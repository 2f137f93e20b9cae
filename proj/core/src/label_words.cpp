#include "entlm/label_words.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace entlm {

namespace {

std::size_t lookup(const std::map<std::string, std::map<std::string, std::size_t>>& counts,
                   const std::string& word, const std::string& cls) {
  const auto it = counts.find(word);
  if (it == counts.end()) return 0;
  const auto jt = it->second.find(cls);
  return jt == it->second.end() ? 0 : jt->second;
}

// count descending, then lexicographic
std::vector<std::string> rank(std::vector<std::pair<std::string, double>> scored,
                              std::size_t top_n) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  for (const auto& [word, score] : scored) {
    if (words.size() == top_n) break;
    words.push_back(word);
  }
  return words;
}

}  // namespace

std::size_t FrequencyTable::data_count(const std::string& word,
                                       const std::string& cls) const {
  return lookup(data_counts, word, cls);
}

std::size_t FrequencyTable::topk_count(const std::string& word,
                                       const std::string& cls) const {
  return lookup(topk_counts, word, cls);
}

std::size_t FrequencyTable::data_total(const std::string& word) const {
  const auto it = data_counts.find(word);
  if (it == data_counts.end()) return 0;
  std::size_t total = 0;
  for (const auto& [cls, count] : it->second) total += count;
  return total;
}

int LabelWordMap::label_token_id(const std::string& cls) const {
  const auto it = token_ids.find(cls);
  if (it == token_ids.end())
    throw std::invalid_argument("LabelWordMap: no label word for class " + cls);
  return it->second;
}

FrequencyTable count_data_frequencies(const Dataset& annotated) {
  FrequencyTable table;
  for (const auto& example : annotated.examples) {
    for (std::size_t i = 0; i < example.tags.size(); ++i) {
      const auto& tag = example.tags.tags[i];
      if (tag == "O") continue;
      ++table.data_counts[example.sentence.tokens[i]][TagSequence::class_of(tag)];
    }
  }
  return table;
}

void count_lm_topk(const TinyMLM& model, const Dataset& annotated, std::size_t k,
                   const Vocabulary& vocab, FrequencyTable& table) {
  if (k == 0) throw std::invalid_argument("count_lm_topk: k must be >= 1");
  if (k > vocab.size())
    throw std::runtime_error("count_lm_topk: k=" + std::to_string(k) +
                             " exceeds vocabulary of " + std::to_string(vocab.size()));
  if (k > vocab.n_corpus_tokens())
    throw std::runtime_error("count_lm_topk: k=" + std::to_string(k) +
                             " exceeds the " + std::to_string(vocab.n_corpus_tokens()) +
                             " corpus tokens in the vocabulary");

  table.topk_counts.clear();
  table.k = k;

  std::vector<int> candidates;
  for (int id = vocab.first_corpus_id(); id < static_cast<int>(vocab.size()); ++id)
    candidates.push_back(id);

  for (const auto& example : annotated.examples) {
    const bool has_entity =
        std::any_of(example.tags.tags.begin(), example.tags.tags.end(),
                    [](const std::string& tag) { return tag != "O"; });
    if (!has_entity) continue;

    Sentence sentence = example.sentence;
    encode(sentence, vocab);
    const auto fwd = model.forward(sentence.token_ids);

    for (std::size_t i = 0; i < example.tags.size(); ++i) {
      const auto& tag = example.tags.tags[i];
      if (tag == "O") continue;
      auto order = candidates;
      const auto row = fwd.logits.row(static_cast<Eigen::Index>(i));
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(k),
                        order.end(), [&row](int a, int b) {
                          if (row(a) != row(b)) return row(a) > row(b);
                          return a < b;
                        });
      const auto cls = TagSequence::class_of(tag);
      for (std::size_t j = 0; j < k; ++j)
        ++table.topk_counts[vocab.token_of(order[j])][cls];
    }
  }
}

std::vector<std::string> select_data(const FrequencyTable& freq,
                                     const std::string& cls, std::size_t top_n) {
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [word, per_class] : freq.data_counts) {
    const auto count = lookup(freq.data_counts, word, cls);
    if (count > 0) scored.emplace_back(word, static_cast<double>(count));
  }
  return rank(std::move(scored), top_n);
}

std::vector<std::string> select_lm(const FrequencyTable& freq,
                                   const std::string& cls, std::size_t top_n) {
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [word, per_class] : freq.topk_counts) {
    const auto count = lookup(freq.topk_counts, word, cls);
    if (count > 0) scored.emplace_back(word, static_cast<double>(count));
  }
  return rank(std::move(scored), top_n);
}

std::vector<std::string> select_combined(const FrequencyTable& freq,
                                         const std::string& cls, std::size_t top_n) {
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [word, per_class] : freq.data_counts) {
    const double score = static_cast<double>(lookup(freq.data_counts, word, cls)) *
                         static_cast<double>(freq.topk_count(word, cls));
    if (score > 0) scored.emplace_back(word, score);
  }
  return rank(std::move(scored), top_n);
}

std::vector<std::string> remove_conflicts(const std::vector<std::string>& candidates,
                                          const std::string& cls,
                                          const FrequencyTable& freq,
                                          const ConflictPolicy& policy) {
  std::vector<std::string> kept;
  for (const auto& word : candidates) {
    const auto total = freq.data_total(word);
    if (total == 0) continue;
    const double share = static_cast<double>(freq.data_count(word, cls)) /
                         static_cast<double>(total);
    if (share > policy.threshold) kept.push_back(word);
  }
  return kept;
}

Eigen::VectorXd build_virtual_prototype(const TinyMLM& model,
                                        const std::vector<std::string>& words,
                                        const Vocabulary& vocab) {
  if (words.empty())
    throw std::invalid_argument("build_virtual_prototype: no words to average");
  Eigen::VectorXd proto = Eigen::VectorXd::Zero(model.config().hidden_dim);
  const auto w_lm = model.w_lm();
  for (const auto& word : words) {
    if (!vocab.contains(word))
      throw std::invalid_argument("build_virtual_prototype: word not in vocabulary: " +
                                  word);
    proto += w_lm.col(vocab.id_of(word));
  }
  return proto / static_cast<double>(words.size());
}

namespace {

std::vector<std::string> in_vocab_words(const std::vector<std::string>& words,
                                        const Vocabulary& vocab) {
  std::vector<std::string> usable;
  for (const auto& word : words)
    if (vocab.contains(word) && vocab.is_word(vocab.id_of(word)))
      usable.push_back(word);
  return usable;
}

const std::vector<std::string>& selection_for(
    const std::map<std::string, std::vector<std::string>>& selections,
    const std::string& cls) {
  static const std::vector<std::string> empty;
  const auto it = selections.find(cls);
  return it == selections.end() ? empty : it->second;
}

}  // namespace

LabelWordMap build_label_word_map(
    const LabelSet& labels,
    const std::map<std::string, std::vector<std::string>>& selections,
    const Vocabulary& vocab) {
  LabelWordMap map;
  map.mode = LabelWordMap::Mode::kDiscrete;
  std::set<int> claimed;
  for (const auto& cls : labels.positive_classes) {
    const auto usable = in_vocab_words(selection_for(selections, cls), vocab);
    int chosen = -1;
    for (const auto& word : usable) {
      const int id = vocab.id_of(word);
      if (claimed.insert(id).second) {
        chosen = id;
        break;
      }
    }
    if (chosen < 0)
      throw std::runtime_error("build_label_word_map: class " + cls +
                               " has no unclaimed in-vocabulary label word");
    map.token_ids[cls] = chosen;
    map.words[cls] = usable;
  }
  return map;
}

LabelWordMap build_label_word_map(
    const LabelSet& labels,
    const std::map<std::string, std::vector<std::string>>& selections,
    const Vocabulary& vocab, const TinyMLM& model) {
  if (labels.positive_classes.size() > vocab.n_virtual())
    throw std::runtime_error("build_label_word_map: " +
                             std::to_string(labels.positive_classes.size()) +
                             " classes but only " + std::to_string(vocab.n_virtual()) +
                             " virtual slots");
  LabelWordMap map;
  map.mode = LabelWordMap::Mode::kVirtual;
  for (std::size_t c = 0; c < labels.positive_classes.size(); ++c) {
    const auto& cls = labels.positive_classes[c];
    const auto usable = in_vocab_words(selection_for(selections, cls), vocab);
    if (usable.empty())
      throw std::runtime_error("build_label_word_map: class " + cls +
                               " has no in-vocabulary words for a prototype");
    map.words[cls] = usable;
    map.prototypes[cls] = build_virtual_prototype(model, usable, vocab);
    map.virtual_slots[cls] = static_cast<int>(c);
    map.token_ids[cls] = vocab.virtual_id(c);
  }
  return map;
}

void install_virtual_words(TinyMLM& model, const LabelWordMap& map,
                           const Vocabulary& vocab) {
  if (map.mode != LabelWordMap::Mode::kVirtual) return;
  auto w_lm = model.w_lm();
  for (const auto& [cls, proto] : map.prototypes) {
    if (proto.size() != model.config().hidden_dim)
      throw std::invalid_argument("install_virtual_words: prototype for " + cls +
                                  " has dimension " + std::to_string(proto.size()));
    const auto slot = static_cast<std::size_t>(map.virtual_slots.at(cls));
    w_lm.col(vocab.virtual_id(slot)) = proto;
  }
}

std::string serialize_label_word_map(const LabelWordMap& map,
                                     const Vocabulary& vocab) {
  nlohmann::ordered_json root;
  root["mode"] = map.mode == LabelWordMap::Mode::kDiscrete ? "discrete" : "virtual";
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [cls, words] : map.words) {
    nlohmann::ordered_json entry;
    entry["words"] = words;
    if (map.mode == LabelWordMap::Mode::kDiscrete) {
      // the claimed word, not necessarily words[0]
      entry["token"] = vocab.token_of(map.token_ids.at(cls));
    } else {
      const auto& proto = map.prototypes.at(cls);
      entry["vector"] = std::vector<double>(proto.data(), proto.data() + proto.size());
      entry["slot"] = map.virtual_slots.at(cls);
    }
    classes[cls] = std::move(entry);
  }
  root["classes"] = std::move(classes);
  return root.dump(2) + "\n";
}

LabelWordMap parse_label_word_map(const std::string& text, const LabelSet& labels,
                                  const Vocabulary& vocab) {
  const auto root = nlohmann::json::parse(text);
  LabelWordMap map;
  const std::string mode = root.at("mode").get<std::string>();
  if (mode == "discrete") {
    map.mode = LabelWordMap::Mode::kDiscrete;
  } else if (mode == "virtual") {
    map.mode = LabelWordMap::Mode::kVirtual;
  } else {
    throw std::runtime_error("label-word map: unknown mode " + mode);
  }

  const auto& classes = root.at("classes");
  for (const auto& cls : labels.positive_classes) {
    if (!classes.contains(cls))
      throw std::runtime_error("label-word map: class " + cls + " missing");
    const auto& entry = classes.at(cls);
    map.words[cls] = entry.at("words").get<std::vector<std::string>>();
    if (map.mode == LabelWordMap::Mode::kDiscrete) {
      const auto token = entry.at("token").get<std::string>();
      if (!vocab.contains(token))
        throw std::runtime_error("label-word map: token " + token +
                                 " for class " + cls + " not in vocabulary");
      map.token_ids[cls] = vocab.id_of(token);
    } else {
      const auto values = entry.at("vector").get<std::vector<double>>();
      map.prototypes[cls] =
          Eigen::Map<const Eigen::VectorXd>(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
      const int slot = entry.at("slot").get<int>();
      map.virtual_slots[cls] = slot;
      map.token_ids[cls] = vocab.virtual_id(static_cast<std::size_t>(slot));
    }
  }
  return map;
}

std::string serialize_frequency_table(const FrequencyTable& table) {
  std::ostringstream out;
  std::set<std::string> words;
  for (const auto& [word, per_class] : table.data_counts) words.insert(word);
  for (const auto& [word, per_class] : table.topk_counts) words.insert(word);
  for (const auto& word : words) {
    std::set<std::string> classes;
    if (const auto it = table.data_counts.find(word); it != table.data_counts.end())
      for (const auto& [cls, count] : it->second) classes.insert(cls);
    if (const auto it = table.topk_counts.find(word); it != table.topk_counts.end())
      for (const auto& [cls, count] : it->second) classes.insert(cls);
    for (const auto& cls : classes)
      out << word << "\t" << cls << "\t" << table.data_count(word, cls) << "\t"
          << table.topk_count(word, cls) << "\n";
  }
  return out.str();
}

}  // namespace entlm
