#include "entlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

#include "entlm/rng.hpp"

namespace entlm {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (in >> field) fields.push_back(std::move(field));
  return fields;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string::size_type start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

}  // namespace

LabelSet LabelSet::make(std::vector<std::string> classes) {
  std::set<std::string> seen;
  for (const auto& cls : classes) {
    if (cls.empty()) throw std::invalid_argument("LabelSet: empty class name");
    if (cls == "O") throw std::invalid_argument("LabelSet: O is not a positive class");
    if (!seen.insert(cls).second)
      throw std::invalid_argument("LabelSet: duplicate class " + cls);
  }
  LabelSet set;
  set.positive_classes = std::move(classes);
  return set;
}

bool LabelSet::contains(const std::string& cls) const {
  return std::find(positive_classes.begin(), positive_classes.end(), cls) !=
         positive_classes.end();
}

int LabelSet::index_of(const std::string& cls) const {
  if (cls == "O") return 0;
  auto it = std::find(positive_classes.begin(), positive_classes.end(), cls);
  if (it == positive_classes.end())
    throw std::invalid_argument("LabelSet: unknown class " + cls);
  return static_cast<int>(it - positive_classes.begin()) + 1;
}

const std::string& LabelSet::name_of(int index) const {
  static const std::string o = "O";
  if (index == 0) return o;
  if (index < 0 || index > static_cast<int>(positive_classes.size()))
    throw std::out_of_range("LabelSet: bad label index " + std::to_string(index));
  return positive_classes[static_cast<std::size_t>(index) - 1];
}

std::string TagSequence::class_of(const std::string& tag) {
  if (tag == "O") return "";
  return tag.substr(2);
}

Gazetteer Gazetteer::parse_tsv(const std::string& text) {
  Gazetteer gaz;
  std::set<std::string> seen_classes;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (is_blank(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw std::runtime_error("gazetteer line " + std::to_string(i + 1) +
                               ": expected surface<TAB>class");
    Entry entry;
    entry.tokens = split_ws(line.substr(0, tab));
    const auto cls_fields = split_ws(line.substr(tab + 1));
    if (entry.tokens.empty() || cls_fields.size() != 1)
      throw std::runtime_error("gazetteer line " + std::to_string(i + 1) +
                               ": expected surface<TAB>class");
    entry.cls = cls_fields[0];
    if (seen_classes.insert(entry.cls).second) gaz.classes.push_back(entry.cls);
    gaz.entries.push_back(std::move(entry));
  }
  if (gaz.entries.empty()) throw std::runtime_error("gazetteer: no entries");
  return gaz;
}

std::size_t Gazetteer::count_for_class(const std::string& cls) const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.cls == cls) ++n;
  return n;
}

Vocabulary::Vocabulary(const std::vector<std::string>& corpus_tokens,
                       std::size_t n_virtual)
    : n_virtual_(n_virtual) {
  id_to_token_ = {"<pad>", "<unk>", "<mask>"};
  for (std::size_t v = 0; v < n_virtual; ++v)
    id_to_token_.push_back("<v" + std::to_string(v) + ">");
  for (const auto& token : corpus_tokens) id_to_token_.push_back(token);
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
    if (!token_to_id_.emplace(id_to_token_[id], static_cast<int>(id)).second)
      throw std::invalid_argument("Vocabulary: duplicate token " + id_to_token_[id]);
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
    throw std::out_of_range("Vocabulary: bad id " + std::to_string(id));
  return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocabulary::virtual_id(std::size_t slot) const {
  if (slot >= n_virtual_)
    throw std::out_of_range("Vocabulary: virtual slot " + std::to_string(slot) +
                            " out of " + std::to_string(n_virtual_));
  return 3 + static_cast<int>(slot);
}

bool Vocabulary::is_virtual(int id) const {
  return id >= 3 && id < first_corpus_id();
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  out << "#n_virtual\t" << n_virtual_ << "\n";
  for (std::size_t id = 0; id < id_to_token_.size(); ++id)
    out << id << "\t" << id_to_token_[id] << "\n";
  return out.str();
}

Vocabulary Vocabulary::parse(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0].rfind("#n_virtual\t", 0) != 0)
    throw std::runtime_error("vocabulary: missing #n_virtual header");
  const std::size_t n_virtual = std::stoul(lines[0].substr(11));
  std::vector<std::string> corpus_tokens;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("vocabulary line " + std::to_string(i + 1) +
                               ": expected id<TAB>token");
    const int id = std::stoi(lines[i].substr(0, tab));
    std::string token = lines[i].substr(tab + 1);
    if (id != static_cast<int>(i) - 1)
      throw std::runtime_error("vocabulary line " + std::to_string(i + 1) +
                               ": ids out of order");
    if (id >= 3 + static_cast<int>(n_virtual))
      corpus_tokens.push_back(std::move(token));
  }
  return Vocabulary(corpus_tokens, n_virtual);
}

Dataset parse_conll(const std::string& text, std::optional<LabelSet> expected,
                    std::string name) {
  Dataset dataset;
  dataset.name = std::move(name);
  std::vector<std::string> classes;  // first appearance order
  std::set<std::string> seen;
  Example current;

  auto flush = [&]() {
    if (!current.sentence.tokens.empty()) dataset.examples.push_back(std::move(current));
    current = Example{};
  };

  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (is_blank(line)) {
      flush();
      continue;
    }
    const auto fields = split_ws(line);
    if (fields.size() != 2)
      throw std::runtime_error("conll line " + std::to_string(i + 1) + ": expected " +
                               "token and tag, got " + std::to_string(fields.size()) +
                               " fields");
    const auto& token = fields[0];
    std::string tag = fields[1];
    if (tag != "O") {
      if (tag.size() < 3 || (tag[0] != 'I' && tag[0] != 'B') || tag[1] != '-')
        throw std::runtime_error("conll line " + std::to_string(i + 1) +
                                 ": bad tag " + tag);
      tag[0] = 'I';  // IO scheme: boundary prefix carries no information here
      const std::string cls = tag.substr(2);
      if (expected) {
        if (!expected->contains(cls))
          throw std::runtime_error("conll line " + std::to_string(i + 1) +
                                   ": class " + cls + " not in label set");
      } else if (seen.insert(cls).second) {
        classes.push_back(cls);
      }
    }
    current.sentence.tokens.push_back(token);
    current.tags.tags.push_back(std::move(tag));
  }
  flush();

  dataset.label_set = expected ? *expected : LabelSet::make(classes);
  return dataset;
}

std::string serialize_conll(const Dataset& dataset) {
  std::ostringstream out;
  for (const auto& example : dataset.examples) {
    for (std::size_t i = 0; i < example.sentence.tokens.size(); ++i)
      out << example.sentence.tokens[i] << "\t" << example.tags.tags[i] << "\n";
    out << "\n";
  }
  return out.str();
}

Dataset annotate_with_gazetteer(const std::vector<Sentence>& sentences,
                                const Gazetteer& gaz) {
  if (gaz.entries.empty())
    throw std::invalid_argument("annotate_with_gazetteer: empty gazetteer");

  // first token -> candidate entries, longest first so the leftmost match
  // is also the longest one
  std::unordered_map<std::string, std::vector<const Gazetteer::Entry*>> index;
  for (const auto& entry : gaz.entries) index[entry.tokens[0]].push_back(&entry);
  for (auto& [first, candidates] : index) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Gazetteer::Entry* a, const Gazetteer::Entry* b) {
                       return a->tokens.size() > b->tokens.size();
                     });
  }

  Dataset dataset;
  dataset.label_set = gaz.label_set();
  dataset.name = "lexicon";
  for (const auto& sentence : sentences) {
    Example example;
    example.sentence = sentence;
    example.tags.tags.assign(sentence.tokens.size(), "O");
    std::size_t i = 0;
    while (i < sentence.tokens.size()) {
      const Gazetteer::Entry* hit = nullptr;
      auto it = index.find(sentence.tokens[i]);
      if (it != index.end()) {
        for (const auto* entry : it->second) {
          if (i + entry->tokens.size() > sentence.tokens.size()) continue;
          if (std::equal(entry->tokens.begin(), entry->tokens.end(),
                         sentence.tokens.begin() + static_cast<long>(i))) {
            hit = entry;
            break;
          }
        }
      }
      if (hit) {
        for (std::size_t j = 0; j < hit->tokens.size(); ++j)
          example.tags.tags[i + j] = TagSequence::tag_for(hit->cls);
        i += hit->tokens.size();
      } else {
        ++i;
      }
    }
    dataset.examples.push_back(std::move(example));
  }
  return dataset;
}

Vocabulary build_vocabulary(const std::vector<const Dataset*>& datasets,
                            std::size_t min_count, std::size_t n_virtual) {
  if (datasets.empty())
    throw std::invalid_argument("build_vocabulary: no datasets");
  if (min_count == 0) min_count = 1;

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto* dataset : datasets)
    for (const auto& example : dataset->examples)
      for (const auto& token : example.sentence.tokens) ++counts[token];

  const std::set<std::string> reserved = {"<pad>", "<unk>", "<mask>"};
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts) {
    if (count < min_count) continue;
    if (reserved.count(token)) continue;
    if (token.size() >= 4 && token[0] == '<' && token[1] == 'v' &&
        token.back() == '>')
      continue;
    kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [token, count] : kept) tokens.push_back(std::move(token));
  return Vocabulary(tokens, n_virtual);
}

void encode(Sentence& sentence, const Vocabulary& vocab) {
  sentence.token_ids.resize(sentence.tokens.size());
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i)
    sentence.token_ids[i] = vocab.id_of(sentence.tokens[i]);
}

void encode(Dataset& dataset, const Vocabulary& vocab) {
  for (auto& example : dataset.examples) encode(example.sentence, vocab);
}

namespace {

const std::vector<std::vector<std::string>> kCuePools = {
    {"president", "senator", "coach", "chairman"},
    {"city", "village", "region", "district"},
    {"company", "startup", "agency", "network"},
    {"festival", "ceremony", "summit", "forum"},
    {"professor", "doctor", "captain", "judge"},
    {"river", "harbor", "valley", "island"},
    {"union", "committee", "bureau", "council"},
    {"writer", "painter", "singer", "dancer"},
};

const std::vector<std::string> kVerbs = {"met",    "visited", "joined", "praised",
                                         "toured", "called",  "left",   "thanked"};

const std::vector<std::string> kPlain = {
    "the meeting ended early .",
    "it rained all day .",
    "the report was finished .",
    "everyone went home today .",
};

std::vector<std::string> cue_pool(const Gazetteer& gaz, std::size_t class_idx) {
  if (class_idx < kCuePools.size()) return kCuePools[class_idx];
  std::vector<std::string> pool;
  std::string base = gaz.classes[class_idx];
  std::transform(base.begin(), base.end(), base.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (int j = 0; j < 4; ++j) pool.push_back(base + "cue" + std::to_string(j));
  return pool;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const Gazetteer& gaz,
                                          std::uint64_t seed,
                                          std::size_t n_sentences) {
  if (gaz.classes.size() < 2)
    throw std::invalid_argument("generate_synthetic_corpus: need >= 2 classes, have " +
                                std::to_string(gaz.classes.size()));
  std::vector<std::vector<const Gazetteer::Entry*>> by_class(gaz.classes.size());
  for (const auto& entry : gaz.entries) {
    const auto pos = std::find(gaz.classes.begin(), gaz.classes.end(), entry.cls) -
                     gaz.classes.begin();
    by_class[static_cast<std::size_t>(pos)].push_back(&entry);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 20)
      throw std::invalid_argument("generate_synthetic_corpus: class " +
                                  gaz.classes[c] + " has " +
                                  std::to_string(by_class[c].size()) +
                                  " entries, need >= 20");
  }

  std::vector<std::vector<std::string>> cues;
  for (std::size_t c = 0; c < gaz.classes.size(); ++c)
    cues.push_back(cue_pool(gaz, c));

  Rng rng(seed);
  auto draw_class = [&]() {
    return static_cast<std::size_t>(rng.uniform_below(gaz.classes.size()));
  };
  // Quadratic skew keeps a stable head of frequent entries per class, so
  // distant counts separate real label words from noise.
  auto draw_entry = [&](std::size_t cls) -> const Gazetteer::Entry* {
    const auto& pool = by_class[cls];
    const double u = rng.uniform01();
    auto idx = static_cast<std::size_t>(u * u * static_cast<double>(pool.size()));
    if (idx >= pool.size()) idx = pool.size() - 1;
    return pool[idx];
  };
  auto draw_cue = [&](std::size_t cls) -> const std::string& {
    const auto& pool = cues[cls];
    return pool[rng.uniform_below(pool.size())];
  };
  auto draw_verb = [&]() -> const std::string& {
    return kVerbs[rng.uniform_below(kVerbs.size())];
  };

  SyntheticCorpus corpus;
  corpus.gold.label_set = gaz.label_set();
  corpus.gold.name = "synthetic";

  for (std::size_t s = 0; s < n_sentences; ++s) {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    auto push_plain = [&](const std::string& word) {
      tokens.push_back(word);
      tags.push_back("O");
    };
    auto push_entity = [&](std::size_t cls) {
      const auto* entry = draw_entry(cls);
      push_plain(draw_cue(cls));
      for (const auto& token : entry->tokens) {
        tokens.push_back(token);
        tags.push_back(TagSequence::tag_for(entry->cls));
      }
    };

    const auto roll = rng.uniform_below(10);
    if (roll == 0) {
      for (const auto& word : split_ws(kPlain[rng.uniform_below(kPlain.size())]))
        push_plain(word);
    } else {
      const std::size_t a = draw_class();
      const std::size_t b = draw_class();
      switch (rng.uniform_below(6)) {
        case 0:
          push_plain("the");
          push_entity(a);
          push_plain(draw_verb());
          push_plain("the");
          push_entity(b);
          push_plain(".");
          break;
        case 1:
          push_plain("the");
          push_entity(a);
          push_plain(draw_verb());
          push_plain("again");
          push_plain(".");
          break;
        case 2:
          push_plain("yesterday");
          push_plain("the");
          push_entity(a);
          push_plain(draw_verb());
          push_plain("the");
          push_entity(b);
          push_plain(".");
          break;
        case 3:
          push_plain("the");
          push_entity(a);
          push_plain("near");
          push_plain("the");
          push_entity(b);
          push_plain(draw_verb());
          push_plain(".");
          break;
        case 4:
          push_plain("a");
          push_entity(a);
          push_plain(draw_verb());
          push_plain("the");
          push_entity(b);
          push_plain("today");
          push_plain(".");
          break;
        default:
          push_plain("the");
          push_entity(a);
          push_plain("and");
          push_plain("the");
          push_entity(b);
          push_plain(draw_verb());
          push_plain(".");
          break;
      }
    }

    Example example;
    example.sentence.tokens = tokens;
    example.tags.tags = std::move(tags);
    corpus.sentences.push_back(Sentence{std::move(tokens), {}});
    corpus.gold.examples.push_back(std::move(example));
  }
  return corpus;
}

}  // namespace entlm
