#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "entlm/checkpoint.hpp"
#include "entlm/corpus.hpp"
#include "entlm/decode.hpp"
#include "entlm/eval.hpp"
#include "entlm/finetune.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"
#include "entlm/sampler.hpp"
#include "entlm/train.hpp"

namespace entlm {

// One way of running a cell of the experiment matrix, parsed from
// strings like "data_lm", "lm+virtual" or "data_lm+virtual+struct".
//   families:  tagger (classifier-head baseline), data, lm, data_lm
//   modifiers: +virtual (prototype label words), +struct (Viterbi decoding)
// The tagger takes no modifiers.
struct MethodSpec {
  enum class Family { kTagger, kData, kLm, kDataLm };

  Family family = Family::kDataLm;
  bool virtual_words = false;
  bool structured = false;

  static MethodSpec parse(const std::string& text);  // throws invalid_argument
  std::string to_string() const;

  bool is_tagger() const { return family == Family::kTagger; }
  bool operator==(const MethodSpec&) const = default;
};

// Everything one experiment needs, read from a "key = value" config
// file. Unset keys keep the defaults below.
struct ExperimentConfig {
  // Paths. corpus/distant default to files inside output_dir.
  std::string gazetteer_path;
  std::string corpus_path;
  std::string distant_path;
  std::string output_dir = "out";

  // Corpus generation.
  std::size_t n_sentences = 5000;
  double test_fraction = 0.2;
  std::uint64_t corpus_seed = 1;

  // Vocabulary and model shape.
  std::size_t min_count = 1;
  std::size_t n_virtual = 8;
  int hidden_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 128;
  int max_seq_len = 32;
  std::uint64_t model_seed = 7;

  // Masked-LM pre-training.
  std::size_t pretrain_steps = 2000;
  double pretrain_lr = 1e-3;
  std::size_t pretrain_batch = 8;
  std::uint64_t pretrain_seed = 11;
  double mask_prob = 0.15;

  // Few-shot protocol: for each K, n_splits support sets are drawn and
  // each is fine-tuned n_repeats times with distinct training seeds.
  std::vector<int> k_list = {5, 10, 20, 50};
  int n_splits = 3;
  int n_repeats = 4;
  std::uint64_t base_seed = 2026;

  // Label-word selection.
  double threshold = 0.6;
  std::size_t top_k = 6;

  // Fine-tuning (shared by every method, the tagger baseline included).
  TrainConfig train;

  // Decoding for methods without an explicit +struct modifier.
  std::string decode_variant = "greedy";  // or "viterbi"
  double transition_smoothing = 1.0;

  // Rows of the run_all matrix.
  std::vector<std::string> methods = {"tagger", "data_lm", "data_lm+struct"};

  void validate() const;  // throws std::invalid_argument

  // Derived artifact locations, all under output_dir unless overridden.
  std::string corpus_file() const;
  std::string distant_file() const;
  std::string vocab_file() const;
  std::string pretrained_file() const;
  std::string support_file(int K, int split) const;
  std::string label_words_file(const MethodSpec& method) const;
  std::string model_file(const MethodSpec& method, int K, int split,
                         int repeat) const;
  std::string predictions_file(const MethodSpec& method, int K, int split,
                               int repeat) const;
  std::string results_tsv_file() const;
  std::string results_jsonl_file() const;

  // Seed schedule. Split seeds are shared across K and methods so every
  // method sees the same support sets; training seeds are distinct per
  // (split, repeat).
  std::uint64_t split_seed(int split) const;
  std::uint64_t train_seed(int split, int repeat) const;
};

// Parses "key = value" lines; '#' starts a comment, blank lines are
// skipped, unknown keys and malformed values are errors.
ExperimentConfig parse_experiment_config(const std::string& text);

// Reads the file and resolves a relative gazetteer path against the
// config file's directory, so packaged configs work from anywhere.
ExperimentConfig load_experiment_config(const std::string& path);

// Shared state behind every matrix cell: the corpora, the vocabulary,
// the pre-trained weights, distant-supervision statistics, and the
// tag-transition estimate. Built once, reused by all runs.
struct Workspace {
  Gazetteer gazetteer;
  LabelSet labels;
  Dataset gold_train;
  Dataset gold_test;
  Dataset distant;
  Vocabulary vocab;
  TinyMLM pretrained;
  FrequencyTable freq;
  TransitionMatrix transitions;
};

// Loads corpus/distant/vocab/checkpoint artifacts (which must exist) and
// computes the derived statistics.
Workspace load_workspace(const ExperimentConfig& cfg);

// Ranked, conflict-filtered label-word selection for an EntLM method.
LabelWordMap select_for_method(const Workspace& ws, const MethodSpec& method,
                               const ExperimentConfig& cfg);

// Tags every sentence of `input` with the one-pass decoder; greedy when
// trans is null, Viterbi otherwise. The returned dataset shares the
// input's sentences with predicted tags.
Dataset decode_with_map(const TinyMLM& model, const Dataset& input,
                        const LabelWordMap& map, const LabelSet& labels,
                        const Vocabulary& vocab,
                        const TransitionMatrix* trans = nullptr);

// Classifier-head decoding: per-token argmax over the head's logits.
Dataset decode_with_head(const TinyMLM& model, const TaggerHead& head,
                         const Dataset& input, const LabelSet& labels,
                         const Vocabulary& vocab);

struct RunSpec {
  MethodSpec method;
  int K = 5;
  int split = 0;
  int repeat = 0;
};

// A fine-tuned cell before decoding: the adapted model plus whichever
// prediction attachment the method uses.
struct TrainedCell {
  TinyMLM model;
  LabelWordMap map;                // EntLM methods
  std::optional<TaggerHead> head;  // tagger baseline
  FinetuneReport report;
  SupportSet support;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
};

TrainedCell train_cell(const ExperimentConfig& cfg, const Workspace& ws,
                       const RunSpec& spec);

// One row of results.jsonl.
struct RunResult {
  std::string method;
  int K = 0;
  int split = 0;
  int repeat = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
  std::map<std::string, std::size_t> support_counts;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  SpanF1Report scores;
  std::uint64_t decode_forwards = 0;
  double decode_millis = 0.0;
};

RunResult run_cell(const ExperimentConfig& cfg, const Workspace& ws,
                   const RunSpec& spec);

// The full method x K x split x repeat matrix, in declaration order.
std::vector<RunResult> run_matrix(const ExperimentConfig& cfg,
                                  const Workspace& ws, std::ostream& log);

// Aggregated span-F1 table: one row per method, one column per K, cells
// "mean(std)" in percent. Deterministic given config and seeds (no
// timings), so reruns are byte-identical.
std::string results_to_tsv(const ExperimentConfig& cfg,
                           const std::vector<RunResult>& results);

// One JSON object per run: scores, seeds, support census, forward count
// and wall time.
std::string results_to_jsonl(const ExperimentConfig& cfg,
                             const std::vector<RunResult>& results);

// ---- Commands ------------------------------------------------------------
// Each command reads its declared inputs, (re)writes its outputs
// deterministically, and narrates to `log`. Failures throw; the CLI
// turns them into non-zero exits.

struct GenerateArtifacts {
  std::string corpus_path;
  std::size_t n_sentences = 0;
  std::map<std::string, std::size_t> entity_counts;
};
GenerateArtifacts cmd_generate(const ExperimentConfig& cfg, std::ostream& log);

struct AnnotateArtifacts {
  std::string distant_path;
  std::map<std::string, std::size_t> annotated_counts;
};
AnnotateArtifacts cmd_annotate(const ExperimentConfig& cfg, std::ostream& log);

struct PretrainArtifacts {
  std::string vocab_path;
  std::string checkpoint_path;
  std::size_t vocab_size = 0;
  std::size_t steps = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
};
PretrainArtifacts cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log);

struct SampleArtifacts {
  std::string support_path;
  std::map<std::string, std::size_t> counts;  // achieved mentions per class
};
SampleArtifacts cmd_sample(const ExperimentConfig& cfg, int K, int split,
                           std::ostream& log);

struct SelectArtifacts {
  std::string map_path;
  std::map<std::string, std::vector<std::string>> words;
};
SelectArtifacts cmd_select(const ExperimentConfig& cfg, const MethodSpec& method,
                           std::ostream& log);

struct FinetuneArtifacts {
  std::string model_path;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::map<std::string, std::size_t> support_counts;
};
FinetuneArtifacts cmd_finetune(const ExperimentConfig& cfg, const RunSpec& spec,
                               std::ostream& log);

struct DecodeArtifacts {
  std::string predictions_path;
  std::size_t n_sentences = 0;
};
DecodeArtifacts cmd_decode(const ExperimentConfig& cfg, const RunSpec& spec,
                           std::ostream& log);

struct EvalArtifacts {
  SpanF1Report scores;
};
EvalArtifacts cmd_eval(const ExperimentConfig& cfg, const RunSpec& spec,
                       std::ostream& log);

struct BenchArtifacts {
  CostReport report;
};
BenchArtifacts cmd_bench(const ExperimentConfig& cfg, std::ostream& log);

struct RunAllArtifacts {
  std::string tsv_path;
  std::string jsonl_path;
  std::string table;
  std::vector<RunResult> results;
};
// Builds any missing corpus/annotation/pre-training artifacts, runs the
// whole matrix, and writes the results table and per-run log.
RunAllArtifacts cmd_run_all(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace entlm
