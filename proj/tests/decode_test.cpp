#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/decode.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"
#include "entlm/rng.hpp"

using namespace entlm;

namespace {

ModelConfig small_config(int vocab_size, std::uint64_t seed = 3) {
  ModelConfig config;
  config.vocab_size = vocab_size;
  config.hidden_dim = 16;
  config.n_layers = 1;
  config.n_heads = 2;
  config.ffn_dim = 32;
  config.max_seq_len = 32;
  config.seed = seed;
  return config;
}

Sentence encoded_sentence(std::vector<std::string> tokens, const Vocabulary& vocab) {
  Sentence sentence;
  sentence.tokens = std::move(tokens);
  encode(sentence, vocab);
  return sentence;
}

// A fixed discrete setup: vocabulary, model, PER/LOC map.
struct Fixture {
  Vocabulary vocab{{"Obama", "was", "in", "America", "John", "England", "x1", "x2"},
                   4};
  LabelSet labels = LabelSet::make({"PER", "LOC"});
  TinyMLM model{small_config(static_cast<int>(vocab.size()), 21)};
  LabelWordMap map = build_label_word_map(
      labels, {{"PER", {"John"}}, {"LOC", {"England"}}}, vocab);
};

LabelDistribution dist_from_rows(const std::vector<std::vector<double>>& rows) {
  LabelDistribution dist;
  dist.probs.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      dist.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  dist.oov.assign(rows.size(), false);
  return dist;
}

LabelDistribution random_distribution(Rng& rng, std::size_t n, std::size_t L) {
  LabelDistribution dist;
  dist.probs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L));
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < dist.probs.cols(); ++j) {
      // Occasional hard zeros exercise the -inf branches.
      const double p = rng.uniform01() < 0.15 ? 0.0 : rng.uniform01() + 1e-3;
      dist.probs(i, j) = p;
      total += p;
    }
    if (total == 0.0) {
      dist.probs(i, 0) = 1.0;
      total = 1.0;
    }
    dist.probs.row(i) /= total;
  }
  dist.oov.assign(n, false);
  return dist;
}

TransitionMatrix random_transitions(Rng& rng, std::size_t L) {
  TransitionMatrix trans;
  trans.probs.resize(static_cast<Eigen::Index>(1 + L), static_cast<Eigen::Index>(L));
  for (Eigen::Index r = 0; r < trans.probs.rows(); ++r) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < trans.probs.cols(); ++c) {
      const double p = rng.uniform01() < 0.1 ? 0.0 : rng.uniform01() + 1e-3;
      trans.probs(r, c) = p;
      total += p;
    }
    if (total == 0.0) {
      trans.probs(r, 0) = 1.0;
      total = 1.0;
    }
    trans.probs.row(r) /= total;
  }
  return trans;
}

struct LogView {
  Eigen::MatrixXd dist;   // n x L
  Eigen::MatrixXd trans;  // (1 + L) x L
};

LogView log_view(const LabelDistribution& dist, const TransitionMatrix& trans) {
  return {dist.probs.array().log().matrix(), trans.probs.array().log().matrix()};
}

double path_score(const LogView& lv, const std::vector<int>& path) {
  double score = lv.trans(0, path[0]) + lv.dist(0, path[0]);
  for (std::size_t i = 1; i < path.size(); ++i)
    score += lv.trans(1 + path[i - 1], path[i]) +
             lv.dist(static_cast<Eigen::Index>(i), path[i]);
  return score;
}

// Exhaustive maximum over all L^n paths via an odometer walk.
double brute_force_best(const LogView& lv) {
  const auto n = static_cast<std::size_t>(lv.dist.rows());
  const auto L = static_cast<int>(lv.dist.cols());
  std::vector<int> path(n, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    best = std::max(best, path_score(lv, path));
    std::size_t i = 0;
    while (i < n && ++path[i] == L) {
      path[i] = 0;
      ++i;
    }
    if (i == n) break;
  }
  return best;
}

std::vector<int> tag_indices(const TagSequence& tags, const LabelSet& labels) {
  std::vector<int> indices;
  for (const auto& tag : tags.tags)
    indices.push_back(TagSequence::is_entity(tag)
                          ? labels.index_of(TagSequence::class_of(tag))
                          : 0);
  return indices;
}

}  // namespace

TEST_CASE("label distribution matches direct softmax gather and renormalize") {
  Fixture f;
  const auto sentence =
      encoded_sentence({"Obama", "was", "in", "America"}, f.vocab);
  const auto dist = label_distribution(f.model, sentence, f.map, f.labels, f.vocab);
  REQUIRE(dist.size() == 4);
  REQUIRE(dist.n_labels() == 3);

  const auto fwd = f.model.forward(sentence.token_ids);
  for (Eigen::Index i = 0; i < 4; ++i) {
    // Independent recomputation straight from the logits.
    const auto row = fwd.logits.row(i);
    std::vector<double> gathered;
    double denom = 0.0;
    for (Eigen::Index v = 0; v < row.size(); ++v) denom += std::exp(row(v));
    gathered.push_back(
        std::exp(row(sentence.token_ids[static_cast<std::size_t>(i)])) / denom);
    gathered.push_back(std::exp(row(f.vocab.id_of("John"))) / denom);
    gathered.push_back(std::exp(row(f.vocab.id_of("England"))) / denom);
    const double total = gathered[0] + gathered[1] + gathered[2];
    for (int j = 0; j < 3; ++j)
      CHECK(dist.probs(i, j) ==
            doctest::Approx(gathered[static_cast<std::size_t>(j)] / total)
                .epsilon(1e-10));
    CHECK(dist.probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(!dist.oov[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("renormalization never changes the winning label") {
  Fixture f;
  Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> tokens;
    const auto n = 1 + rng.uniform_below(6);
    for (std::size_t i = 0; i < n; ++i)
      tokens.push_back(rng.uniform01() < 0.5 ? "x1" : "Obama");
    const auto sentence = encoded_sentence(tokens, f.vocab);
    const auto dist =
        label_distribution(f.model, sentence, f.map, f.labels, f.vocab);
    const auto fwd = f.model.forward(sentence.token_ids);
    for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
      // Raw gathered scores, same order, no renormalization.
      const auto row = fwd.logits.row(i);
      Eigen::Vector3d raw{
          row(sentence.token_ids[static_cast<std::size_t>(i)]),
          row(f.vocab.id_of("John")), row(f.vocab.id_of("England"))};
      Eigen::Index raw_best = 0, dist_best = 0;
      for (Eigen::Index j = 1; j < 3; ++j) {
        if (raw(j) > raw(raw_best)) raw_best = j;
        if (dist.probs(i, j) > dist.probs(i, dist_best)) dist_best = j;
      }
      CHECK(raw_best == dist_best);
    }
  }
}

TEST_CASE("uniform logits give a uniform label distribution") {
  Fixture f;
  TinyMLM flat(f.model.config());
  flat.params() = f.model.params();
  flat.w_lm().setZero();  // every token scores alike
  const auto sentence = encoded_sentence({"Obama", "was"}, f.vocab);
  const auto dist = label_distribution(flat, sentence, f.map, f.labels, f.vocab);
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i)
    for (Eigen::Index j = 0; j < dist.probs.cols(); ++j)
      CHECK(dist.probs(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("out-of-vocabulary tokens fall back to the unknown-token score") {
  Fixture f;
  Sentence sentence;
  sentence.tokens = {"Obama", "zzz-never-seen"};
  const auto dist = label_distribution(f.model, sentence, f.map, f.labels, f.vocab);
  CHECK(!dist.oov[0]);
  CHECK(dist.oov[1]);

  Sentence encoded = sentence;
  encode(encoded, f.vocab);
  CHECK(encoded.token_ids[1] == Vocabulary::kUnkId);
  const auto fwd = f.model.forward(encoded.token_ids);
  const auto row = fwd.logits.row(1);
  double denom = 0.0;
  for (Eigen::Index v = 0; v < row.size(); ++v) denom += std::exp(row(v));
  const double unk = std::exp(row(Vocabulary::kUnkId)) / denom;
  const double john = std::exp(row(f.vocab.id_of("John"))) / denom;
  const double england = std::exp(row(f.vocab.id_of("England"))) / denom;
  CHECK(dist.probs(1, 0) ==
        doctest::Approx(unk / (unk + john + england)).epsilon(1e-10));
}

TEST_CASE("decoding performs exactly one forward pass per sentence") {
  Fixture f;
  f.model.reset_forward_count();
  std::vector<Sentence> sentences{
      encoded_sentence({"Obama"}, f.vocab),
      encoded_sentence({"Obama", "was", "in", "America"}, f.vocab),
      encoded_sentence({"x1", "x2", "was", "in", "England", "x1", "x2"}, f.vocab),
  };
  for (const auto& sentence : sentences) {
    const auto dist =
        label_distribution(f.model, sentence, f.map, f.labels, f.vocab);
    decode_greedy(dist, f.labels);
  }
  CHECK(f.model.forward_count() == sentences.size());
}

TEST_CASE("greedy decoding takes the per-position argmax") {
  const LabelSet labels = LabelSet::make({"PER", "LOC"});
  const auto dist = dist_from_rows({
      {0.1, 0.8, 0.1},   // PER dominant
      {0.9, 0.05, 0.05}, // O dominant
      {0.2, 0.2, 0.6},   // LOC dominant
  });
  const auto tags = decode_greedy(dist, labels);
  CHECK(tags.tags == std::vector<std::string>{"I-PER", "O", "I-LOC"});
}

TEST_CASE("greedy ties resolve to O, then class order") {
  const LabelSet labels = LabelSet::make({"PER", "LOC"});
  const auto dist = dist_from_rows({
      {0.5, 0.5, 0.0},   // exact O/PER tie -> O
      {0.2, 0.4, 0.4},   // PER/LOC tie -> PER
      {1.0 / 3, 1.0 / 3, 1.0 / 3},  // three-way -> O
  });
  const auto tags = decode_greedy(dist, labels);
  CHECK(tags.tags == std::vector<std::string>{"O", "I-PER", "O"});
}

TEST_CASE("all-O-dominant distributions decode to all O") {
  const LabelSet labels = LabelSet::make({"PER"});
  const auto dist = dist_from_rows({{0.7, 0.3}, {0.6, 0.4}, {0.51, 0.49}});
  CHECK(decode_greedy(dist, labels).tags == std::vector<std::string>(3, "O"));
}

TEST_CASE("transition estimation matches a hand-counted bigram table") {
  const std::string conll =
      "a\tI-PER\n"
      "b\tO\n"
      "c\tI-LOC\n"
      "\n"
      "d\tO\n"
      "e\tO\n"
      "\n"
      "f\tI-PER\n"
      "g\tI-PER\n";
  const auto dataset =
      parse_conll(conll, LabelSet::make({"PER", "LOC"}));
  // Rows: start, from-O, from-PER, from-LOC. Columns: O, PER, LOC.
  // Raw bigram counts:
  //   start:  O 1 (d), PER 2 (a, f), LOC 0
  //   from O: O 1 (d->e), PER 0, LOC 1 (b->c)
  //   from PER: O 1 (a->b), PER 1 (f->g), LOC 0
  //   from LOC: nothing
  SUBCASE("alpha = 1") {
    const auto trans = estimate_transitions(dataset, 1.0);
    Eigen::MatrixXd expected(4, 3);
    expected << 2.0 / 6, 3.0 / 6, 1.0 / 6,
                2.0 / 5, 1.0 / 5, 2.0 / 5,
                2.0 / 5, 2.0 / 5, 1.0 / 5,
                1.0 / 3, 1.0 / 3, 1.0 / 3;
    CHECK((trans.probs - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("alpha = 0 keeps raw frequencies, unseen rows fall back to uniform") {
    const auto trans = estimate_transitions(dataset, 0.0);
    Eigen::MatrixXd expected(4, 3);
    expected << 1.0 / 3, 2.0 / 3, 0.0,
                1.0 / 2, 0.0, 1.0 / 2,
                1.0 / 2, 1.0 / 2, 0.0,
                1.0 / 3, 1.0 / 3, 1.0 / 3;
    CHECK((trans.probs - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("all-O corpus with no smoothing pins O to O") {
  const auto dataset = parse_conll("a\tO\nb\tO\n\nc\tO\n",
                                   LabelSet::make({"PER"}));
  const auto trans = estimate_transitions(dataset, 0.0);
  CHECK(trans.probs(0, 0) == 1.0);  // start -> O
  CHECK(trans.probs(1, 0) == 1.0);  // O -> O
  // from-PER never occurs: uniform fallback.
  CHECK(trans.probs(2, 0) == doctest::Approx(0.5));
  CHECK(trans.probs(2, 1) == doctest::Approx(0.5));
}

TEST_CASE("smoothing an entity-free corpus toward uniform rows") {
  Dataset dataset;
  dataset.label_set = LabelSet::make({"PER", "LOC"});
  // With no data at all, every row is pure smoothing = uniform.
  const auto trans = estimate_transitions(dataset, 1.0);
  for (Eigen::Index r = 0; r < trans.probs.rows(); ++r)
    for (Eigen::Index c = 0; c < trans.probs.cols(); ++c)
      CHECK(trans.probs(r, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("transition rows always sum to one") {
  Rng rng(7);
  for (const double alpha : {0.0, 0.5, 1.0}) {
    const auto gazetteer = Gazetteer::parse_tsv([] {
      std::string tsv;
      for (int i = 0; i < 25; ++i) {
        tsv += "p" + std::to_string(i) + "\tPER\n";
        tsv += "q" + std::to_string(i) + "\tLOC\n";
      }
      return tsv;
    }());
    const auto corpus = generate_synthetic_corpus(gazetteer, 5, 40);
    const auto trans = estimate_transitions(
        annotate_with_gazetteer(corpus.sentences, gazetteer), alpha);
    for (Eigen::Index r = 0; r < trans.probs.rows(); ++r)
      CHECK(trans.probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("viterbi with uniform transitions reduces to greedy decoding") {
  Rng rng(11);
  const LabelSet labels = LabelSet::make({"A", "B", "C"});
  TransitionMatrix uniform;
  uniform.probs = Eigen::MatrixXd::Constant(5, 4, 0.25);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dist = random_distribution(rng, 1 + rng.uniform_below(8), 4);
    const auto greedy = decode_greedy(dist, labels);
    const auto viterbi = viterbi_decode(dist, uniform, labels);
    CHECK(greedy.tags == viterbi.tags);
  }
}

TEST_CASE("single-token viterbi weighs the start transitions") {
  const LabelSet labels = LabelSet::make({"PER"});
  const auto dist = dist_from_rows({{0.45, 0.55}});
  TransitionMatrix trans;
  trans.probs.resize(3, 2);
  // Start heavily prefers O: 0.45 * 0.9 > 0.55 * 0.1.
  trans.probs << 0.9, 0.1,
                 0.5, 0.5,
                 0.5, 0.5;
  CHECK(viterbi_decode(dist, trans, labels).tags ==
        std::vector<std::string>{"O"});
  // Neutral start hands the argmax back to the distribution.
  trans.probs.row(0) << 0.5, 0.5;
  CHECK(viterbi_decode(dist, trans, labels).tags ==
        std::vector<std::string>{"I-PER"});
}

TEST_CASE("viterbi path scores equal exhaustive enumeration") {
  Rng rng(13);
  const std::vector<std::string> class_pool{"A", "B", "C", "D"};
  for (int trial = 0; trial < 500; ++trial) {
    const auto n_classes = 1 + rng.uniform_below(4);  // |labels| up to 5
    std::vector<std::string> classes(class_pool.begin(),
                                     class_pool.begin() +
                                         static_cast<long>(n_classes));
    const LabelSet labels = LabelSet::make(classes);
    const auto L = labels.n_labels();
    const auto n = 1 + rng.uniform_below(8);
    const auto dist = random_distribution(rng, n, L);
    const auto trans = random_transitions(rng, L);
    const auto lv = log_view(dist, trans);

    const double expected = brute_force_best(lv);
    TagSequence tags;
    try {
      tags = viterbi_decode(dist, trans, labels);
    } catch (const std::runtime_error&) {
      // Legal only when no path has positive probability.
      CHECK(expected == -std::numeric_limits<double>::infinity());
      continue;
    }
    const double got = path_score(lv, tag_indices(tags, labels));
    CHECK(std::isfinite(got));
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("viterbi reports a deadlock instead of inventing a path") {
  const LabelSet labels = LabelSet::make({"PER"});
  const auto dist = dist_from_rows({{0.5, 0.5}, {0.0, 0.0}});
  TransitionMatrix trans;
  trans.probs = Eigen::MatrixXd::Constant(3, 2, 0.5);
  CHECK_THROWS_WITH_AS(viterbi_decode(dist, trans, labels),
                       doctest::Contains("zero probability"),
                       std::runtime_error);
}

TEST_CASE("viterbi validates shapes") {
  const LabelSet labels = LabelSet::make({"PER", "LOC"});
  const auto dist = dist_from_rows({{0.5, 0.5}});  // 2 columns, needs 3
  TransitionMatrix trans;
  trans.probs = Eigen::MatrixXd::Constant(4, 3, 1.0 / 3);
  CHECK_THROWS_AS(viterbi_decode(dist, trans, labels), std::invalid_argument);
  const auto good = dist_from_rows({{0.4, 0.3, 0.3}});
  TransitionMatrix bad;
  bad.probs = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3);  // needs 4 rows
  CHECK_THROWS_AS(viterbi_decode(good, bad, labels), std::invalid_argument);
}

TEST_CASE("span extraction groups maximal same-class runs") {
  const TagSequence tags{{"I-PER", "I-PER", "O", "I-LOC"}};
  const auto spans = extract_spans(tags);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == EntitySpan{0, 1, "PER"});
  CHECK(spans[1] == EntitySpan{3, 3, "LOC"});

  CHECK(extract_spans(TagSequence{{"O", "O", "O"}}).empty());
  CHECK(extract_spans(TagSequence{}).empty());

  const auto adjacent = extract_spans(TagSequence{{"I-PER", "I-LOC"}});
  REQUIRE(adjacent.size() == 2);
  CHECK(adjacent[0] == EntitySpan{0, 0, "PER"});
  CHECK(adjacent[1] == EntitySpan{1, 1, "LOC"});
}

TEST_CASE("spans round-trip through tags when no same-class spans touch") {
  Rng rng(41);
  const std::vector<std::string> classes{"PER", "LOC", "ORG"};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t length = 1 + rng.uniform_below(12);
    // Random non-overlapping spans, left to right.
    std::vector<EntitySpan> spans;
    std::size_t pos = 0;
    std::string last_cls;
    bool gap_before = true;
    while (pos < length) {
      if (rng.uniform01() < 0.4) {
        const auto end = std::min<std::size_t>(
            length - 1, pos + static_cast<std::size_t>(rng.uniform_below(3)));
        auto idx = static_cast<std::size_t>(rng.uniform_below(classes.size()));
        if (!gap_before && classes[idx] == last_cls)
          idx = (idx + 1) % classes.size();
        spans.push_back(EntitySpan{pos, end, classes[idx]});
        last_cls = classes[idx];
        gap_before = false;
        pos = end + 1;
      } else {
        gap_before = true;
        ++pos;
      }
    }
    const auto tags = tags_from_spans(spans, length);
    CHECK(extract_spans(tags) == spans);
  }
}

TEST_CASE("tags_from_spans validates its spans") {
  CHECK_THROWS_AS(tags_from_spans({EntitySpan{2, 1, "PER"}}, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(tags_from_spans({EntitySpan{3, 5, "PER"}}, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      tags_from_spans({EntitySpan{0, 2, "PER"}, EntitySpan{2, 3, "LOC"}}, 5),
      std::invalid_argument);
}
