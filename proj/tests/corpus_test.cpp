#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/rng.hpp"

using namespace entlm;

namespace {

Gazetteer test_gazetteer() {
  std::string tsv;
  for (int i = 0; i < 25; ++i) tsv += "alice" + std::to_string(i) + "\tPER\n";
  for (int i = 0; i < 25; ++i) {
    // every other entry is multi-token
    if (i % 2 == 0)
      tsv += "lake" + std::to_string(i) + "\tLOC\n";
    else
      tsv += "port" + std::to_string(i) + " bay" + std::to_string(i) + "\tLOC\n";
  }
  for (int i = 0; i < 25; ++i) tsv += "acme" + std::to_string(i) + "\tORG\n";
  return Gazetteer::parse_tsv(tsv);
}

// Reference matcher: enumerate every (start, length) span that equals a
// gazetteer entry, then pick spans left to right, longest first at each
// start, skipping overlaps.
TagSequence oracle_annotate(const Sentence& sentence, const Gazetteer& gaz) {
  struct Span {
    std::size_t start, len;
    std::string cls;
  };
  std::vector<Span> spans;
  for (std::size_t start = 0; start < sentence.tokens.size(); ++start) {
    for (const auto& entry : gaz.entries) {
      if (start + entry.tokens.size() > sentence.tokens.size()) continue;
      if (std::equal(entry.tokens.begin(), entry.tokens.end(),
                     sentence.tokens.begin() + static_cast<long>(start)))
        spans.push_back({start, entry.tokens.size(), entry.cls});
    }
  }
  std::stable_sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.len > b.len;
  });
  TagSequence tags;
  tags.tags.assign(sentence.tokens.size(), "O");
  std::size_t frontier = 0;
  for (const auto& span : spans) {
    if (span.start < frontier) continue;
    for (std::size_t j = 0; j < span.len; ++j)
      tags.tags[span.start + j] = TagSequence::tag_for(span.cls);
    frontier = span.start + span.len;
  }
  return tags;
}

}  // namespace

TEST_CASE("parse_conll reads tokens and tags") {
  const auto d = parse_conll("Obama\tI-PER\nspoke\tO\n\n");
  REQUIRE(d.size() == 1);
  CHECK(d.examples[0].sentence.tokens == std::vector<std::string>{"Obama", "spoke"});
  CHECK(d.examples[0].tags.tags == std::vector<std::string>{"I-PER", "O"});
  CHECK(d.label_set.positive_classes == std::vector<std::string>{"PER"});
}

TEST_CASE("parse_conll accepts space separated columns") {
  const auto d = parse_conll("Obama I-PER\nspoke O\n\n");
  REQUIRE(d.size() == 1);
  CHECK(d.examples[0].tags.tags == std::vector<std::string>{"I-PER", "O"});
}

TEST_CASE("parse_conll of empty text gives empty dataset") {
  const auto d = parse_conll("");
  CHECK(d.size() == 0);
  CHECK(d.label_set.n_labels() == 1);
}

TEST_CASE("parse_conll rewrites B- prefixes to I-") {
  const auto d = parse_conll("Obama\tB-PER\n\n");
  REQUIRE(d.size() == 1);
  CHECK(d.examples[0].tags.tags == std::vector<std::string>{"I-PER"});
}

TEST_CASE("parse_conll flushes a final sentence without trailing blank line") {
  const auto d = parse_conll("a\tO\nb\tO");
  REQUIRE(d.size() == 1);
  CHECK(d.examples[0].sentence.size() == 2);
}

TEST_CASE("parse_conll reports the offending line") {
  CHECK_THROWS_WITH_AS(parse_conll("ok\tO\nbroken\n\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_conll("ok\tO\nword\tPER\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_conll("word\tI-\n"), doctest::Contains("line 1"),
                       std::runtime_error);
}

TEST_CASE("parse_conll with expected label set rejects strangers") {
  const auto expected = LabelSet::make({"PER", "LOC"});
  const auto d = parse_conll("Obama\tI-PER\n\n", expected);
  CHECK(d.label_set.positive_classes == std::vector<std::string>{"PER", "LOC"});
  CHECK_THROWS_AS(parse_conll("Acme\tI-ORG\n\n", expected), std::runtime_error);
}

TEST_CASE("serialize then parse round-trips content") {
  const std::string text =
      "Obama\tB-PER\nvisited\tO\nNew\tI-LOC\nYork\tI-LOC\n\nhello\tO\n\n";
  const auto d = parse_conll(text);
  const auto round = parse_conll(serialize_conll(d));
  REQUIRE(round.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(round.examples[i].sentence.tokens == d.examples[i].sentence.tokens);
    CHECK(round.examples[i].tags.tags == d.examples[i].tags.tags);
  }
  // normalization already applied, so a second pass is byte-stable
  CHECK(serialize_conll(round) == serialize_conll(d));
}

TEST_CASE("label set index convention puts O at zero") {
  const auto set = LabelSet::make({"PER", "LOC"});
  CHECK(set.n_labels() == 3);
  CHECK(set.index_of("O") == 0);
  CHECK(set.index_of("PER") == 1);
  CHECK(set.index_of("LOC") == 2);
  CHECK(set.name_of(0) == "O");
  CHECK(set.name_of(2) == "LOC");
  CHECK_THROWS_AS(set.index_of("ORG"), std::invalid_argument);
  CHECK_THROWS_AS(LabelSet::make({"PER", "PER"}), std::invalid_argument);
  CHECK_THROWS_AS(LabelSet::make({"O"}), std::invalid_argument);
}

TEST_CASE("gazetteer tsv parsing keeps file order and class order") {
  const auto gaz = Gazetteer::parse_tsv("New York\tLOC\nObama\tPER\nYork\tLOC\n");
  REQUIRE(gaz.entries.size() == 3);
  CHECK(gaz.entries[0].tokens == std::vector<std::string>{"New", "York"});
  CHECK(gaz.entries[0].cls == "LOC");
  CHECK(gaz.classes == std::vector<std::string>{"LOC", "PER"});
  CHECK(gaz.count_for_class("LOC") == 2);
  CHECK_THROWS_AS(Gazetteer::parse_tsv(""), std::runtime_error);
  CHECK_THROWS_WITH_AS(Gazetteer::parse_tsv("Obama\tPER\nnotab\n"),
                       doctest::Contains("line 2"), std::runtime_error);
}

TEST_CASE("annotation tags a known span") {
  const auto gaz = Gazetteer::parse_tsv("New York\tLOC\n");
  const auto d = annotate_with_gazetteer({Sentence{{"I", "love", "New", "York"}, {}}}, gaz);
  REQUIRE(d.size() == 1);
  CHECK(d.examples[0].tags.tags ==
        std::vector<std::string>{"O", "O", "I-LOC", "I-LOC"});
}

TEST_CASE("annotation prefers the longest match at a position") {
  const auto gaz = Gazetteer::parse_tsv("York\tLOC\nNew York\tLOC\n");
  const auto d = annotate_with_gazetteer({Sentence{{"I", "love", "New", "York"}, {}}}, gaz);
  CHECK(d.examples[0].tags.tags ==
        std::vector<std::string>{"O", "O", "I-LOC", "I-LOC"});
}

TEST_CASE("annotation with no hits yields all O") {
  const auto gaz = Gazetteer::parse_tsv("Paris\tLOC\n");
  const auto d = annotate_with_gazetteer({Sentence{{"hello", "world"}, {}}}, gaz);
  CHECK(d.examples[0].tags.tags == std::vector<std::string>{"O", "O"});
  CHECK(d.label_set.positive_classes == std::vector<std::string>{"LOC"});
}

TEST_CASE("annotation is case-sensitive") {
  const auto gaz = Gazetteer::parse_tsv("Paris\tLOC\n");
  const auto d = annotate_with_gazetteer({Sentence{{"paris", "Paris"}, {}}}, gaz);
  CHECK(d.examples[0].tags.tags == std::vector<std::string>{"O", "I-LOC"});
}

TEST_CASE("annotation agrees with the exhaustive span oracle") {
  const auto gaz = test_gazetteer();
  // word soup built from gazetteer pieces and fillers, so overlaps and
  // adjacent entities actually occur
  std::vector<std::string> pool = {"the", "a", "visited", "near", "."};
  for (const auto& entry : gaz.entries)
    for (const auto& token : entry.tokens) pool.push_back(token);

  Rng rng(123);
  std::vector<Sentence> sentences;
  for (int s = 0; s < 300; ++s) {
    Sentence sentence;
    const auto len = 1 + rng.uniform_below(12);
    for (std::uint64_t i = 0; i < len; ++i)
      sentence.tokens.push_back(pool[rng.uniform_below(pool.size())]);
    sentences.push_back(std::move(sentence));
  }

  const auto annotated = annotate_with_gazetteer(sentences, gaz);
  REQUIRE(annotated.size() == sentences.size());
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto expected = oracle_annotate(sentences[s], gaz);
    CHECK(annotated.examples[s].tags.tags == expected.tags);
  }
}

TEST_CASE("vocabulary filters by min_count") {
  const auto d = parse_conll("a\tO\na\tO\na\tO\nb\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 2);
  CHECK(vocab.contains("a"));
  CHECK(!vocab.contains("b"));
  CHECK(vocab.id_of("b") == Vocabulary::kUnkId);
}

TEST_CASE("vocabulary of empty corpus is reserved tokens only") {
  const Dataset d;
  const auto vocab = build_vocabulary({&d}, 1, 4);
  CHECK(vocab.size() == 3 + 4);
  CHECK(vocab.n_corpus_tokens() == 0);
}

TEST_CASE("vocabulary breaks frequency ties lexicographically") {
  const auto d = parse_conll("b\tO\na\tO\nb\tO\na\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 1);
  CHECK(vocab.id_of("a") + 1 == vocab.id_of("b"));
  CHECK(vocab.id_of("a") == vocab.first_corpus_id());
}

TEST_CASE("vocabulary orders by frequency before the tie-break") {
  const auto d = parse_conll("z\tO\nz\tO\na\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 1);
  CHECK(vocab.id_of("z") < vocab.id_of("a"));
}

TEST_CASE("vocabulary reserved layout") {
  const auto d = parse_conll("word\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 1, 2);
  CHECK(vocab.token_of(Vocabulary::kPadId) == "<pad>");
  CHECK(vocab.token_of(Vocabulary::kUnkId) == "<unk>");
  CHECK(vocab.token_of(Vocabulary::kMaskId) == "<mask>");
  CHECK(vocab.virtual_id(0) == 3);
  CHECK(vocab.virtual_id(1) == 4);
  CHECK(vocab.is_virtual(3));
  CHECK(!vocab.is_virtual(5));
  CHECK(!vocab.is_word(Vocabulary::kMaskId));
  CHECK(vocab.is_word(vocab.id_of("word")));
  CHECK(vocab.first_corpus_id() == 5);
  CHECK_THROWS_AS(vocab.virtual_id(2), std::out_of_range);
  CHECK_THROWS_AS(vocab.token_of(99), std::out_of_range);
}

TEST_CASE("vocabulary serialization round-trips") {
  const auto d = parse_conll("b\tO\na\tO\nb\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 1, 3);
  const auto round = Vocabulary::parse(vocab.serialize());
  REQUIRE(round.size() == vocab.size());
  CHECK(round.n_virtual() == vocab.n_virtual());
  for (int id = 0; id < static_cast<int>(vocab.size()); ++id)
    CHECK(round.token_of(id) == vocab.token_of(id));
}

TEST_CASE("encode maps tokens to ids with UNK fallback") {
  auto d = parse_conll("a\tO\nb\tO\n\n");
  const auto vocab = build_vocabulary({&d}, 2);  // drops both
  encode(d, vocab);
  CHECK(d.examples[0].sentence.token_ids ==
        std::vector<int>{Vocabulary::kUnkId, Vocabulary::kUnkId});
}

TEST_CASE("synthetic corpus of size zero is empty") {
  const auto corpus = generate_synthetic_corpus(test_gazetteer(), 1, 0);
  CHECK(corpus.sentences.empty());
  CHECK(corpus.gold.size() == 0);
}

TEST_CASE("synthetic corpus is identical across reruns of a seed") {
  const auto gaz = test_gazetteer();
  const auto a = generate_synthetic_corpus(gaz, 99, 200);
  const auto b = generate_synthetic_corpus(gaz, 99, 200);
  CHECK(serialize_conll(a.gold) == serialize_conll(b.gold));
  const auto c = generate_synthetic_corpus(gaz, 100, 200);
  CHECK(serialize_conll(a.gold) != serialize_conll(c.gold));
}

TEST_CASE("synthetic corpus exercises every class") {
  const auto gaz = test_gazetteer();
  const auto corpus = generate_synthetic_corpus(gaz, 7, 5000);
  REQUIRE(corpus.sentences.size() == 5000);
  std::map<std::string, int> span_counts;
  for (const auto& example : corpus.gold.examples) {
    const auto& tags = example.tags.tags;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] != "O" && (i == 0 || tags[i - 1] != tags[i]))
        ++span_counts[TagSequence::class_of(tags[i])];
    }
  }
  for (const auto& cls : gaz.classes) CHECK(span_counts[cls] >= 100);
}

TEST_CASE("synthetic gold spans are gazetteer entries") {
  const auto gaz = test_gazetteer();
  const auto corpus = generate_synthetic_corpus(gaz, 21, 500);
  for (const auto& example : corpus.gold.examples) {
    const auto& tags = example.tags.tags;
    const auto& tokens = example.sentence.tokens;
    REQUIRE(tags.size() == tokens.size());
    std::size_t i = 0;
    while (i < tags.size()) {
      if (tags[i] == "O") {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < tags.size() && tags[j] == tags[i]) ++j;
      const std::vector<std::string> surface(tokens.begin() + static_cast<long>(i),
                                             tokens.begin() + static_cast<long>(j));
      const auto cls = TagSequence::class_of(tags[i]);
      bool found = false;
      for (const auto& entry : gaz.entries)
        if (entry.cls == cls && entry.tokens == surface) found = true;
      CHECK(found);
      i = j;
    }
  }
}

TEST_CASE("synthetic generation rejects thin gazetteers") {
  CHECK_THROWS_AS(generate_synthetic_corpus(
                      Gazetteer::parse_tsv("a\tPER\nb\tPER\n"), 1, 10),
                  std::invalid_argument);
  std::string tsv;
  for (int i = 0; i < 25; ++i) tsv += "p" + std::to_string(i) + "\tPER\n";
  tsv += "only\tLOC\n";
  CHECK_THROWS_WITH_AS(generate_synthetic_corpus(Gazetteer::parse_tsv(tsv), 1, 10),
                       doctest::Contains("LOC"), std::invalid_argument);
}
