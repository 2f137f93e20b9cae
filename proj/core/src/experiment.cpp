#include "entlm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <climits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace entlm {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream stream(s);
  std::string part;
  while (std::getline(stream, part, ',')) {
    part = trim(part);
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config key '" + key + "': bad value '" + value +
                              "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double parsed = std::stod(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return parsed;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long parsed = std::stoll(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return parsed;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  const long long parsed = parse_integer(key, value);
  if (parsed < 0) bad_value(key, value);
  return static_cast<std::uint64_t>(parsed);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

int parse_int(const std::string& key, const std::string& value) {
  const long long parsed = parse_integer(key, value);
  if (parsed < INT_MIN || parsed > INT_MAX) bad_value(key, value);
  return static_cast<int>(parsed);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path);
}

void require_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path))
    throw std::runtime_error("missing " + path + "; run `entlm " + hint +
                             "` first");
}

double millis_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

// Gold corpus split: the first (1 - test_fraction) of the file is the
// training pool, the tail is the held-out test set.
std::pair<Dataset, Dataset> split_corpus(const Dataset& all,
                                         double test_fraction) {
  const auto n = all.size();
  const auto n_test = static_cast<std::size_t>(test_fraction * n);
  if (n_test == 0 || n_test >= n)
    throw std::runtime_error("corpus of " + std::to_string(n) +
                             " sentences cannot be split with test fraction " +
                             std::to_string(test_fraction));
  Dataset train, test;
  train.label_set = test.label_set = all.label_set;
  train.name = all.name + "/train";
  test.name = all.name + "/test";
  train.examples.assign(all.examples.begin(),
                        all.examples.begin() + (n - n_test));
  test.examples.assign(all.examples.begin() + (n - n_test),
                       all.examples.end());
  return {std::move(train), std::move(test)};
}

std::map<std::string, std::size_t> mention_census(const Dataset& dataset) {
  std::map<std::string, std::size_t> total;
  for (const auto& example : dataset.examples)
    for (const auto& [cls, count] :
         count_entities(example.sentence, example.tags))
      total[cls] += count;
  return total;
}

std::string census_line(const std::map<std::string, std::size_t>& counts) {
  std::string line;
  for (const auto& [cls, count] : counts) {
    if (!line.empty()) line += " ";
    line += cls + "=" + std::to_string(count);
  }
  return line.empty() ? "none" : line;
}

Sentence head_of(const Sentence& sentence, std::size_t max_len) {
  Sentence copy;
  copy.tokens.assign(sentence.tokens.begin(),
                     sentence.tokens.begin() +
                         std::min(sentence.tokens.size(), max_len));
  return copy;
}

void pad_with_o(TagSequence& tags, std::size_t length) {
  while (tags.tags.size() < length) tags.tags.push_back("O");
}

}  // namespace

// ---- MethodSpec ----------------------------------------------------------

MethodSpec MethodSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream stream(trim(text));
  std::string part;
  while (std::getline(stream, part, '+')) parts.push_back(trim(part));
  if (parts.empty() || parts.front().empty())
    throw std::invalid_argument("empty method");

  MethodSpec spec;
  const std::string& family = parts.front();
  if (family == "tagger")
    spec.family = Family::kTagger;
  else if (family == "data")
    spec.family = Family::kData;
  else if (family == "lm")
    spec.family = Family::kLm;
  else if (family == "data_lm")
    spec.family = Family::kDataLm;
  else
    throw std::invalid_argument("unknown method '" + family +
                                "' (expected tagger, data, lm or data_lm)");

  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "virtual")
      spec.virtual_words = true;
    else if (parts[i] == "struct")
      spec.structured = true;
    else
      throw std::invalid_argument("unknown method modifier '+" + parts[i] +
                                  "' (expected +virtual or +struct)");
  }
  if (spec.is_tagger() && (spec.virtual_words || spec.structured))
    throw std::invalid_argument("the tagger baseline takes no modifiers");
  return spec;
}

std::string MethodSpec::to_string() const {
  std::string out;
  switch (family) {
    case Family::kTagger: out = "tagger"; break;
    case Family::kData: out = "data"; break;
    case Family::kLm: out = "lm"; break;
    case Family::kDataLm: out = "data_lm"; break;
  }
  if (virtual_words) out += "+virtual";
  if (structured) out += "+struct";
  return out;
}

// ---- ExperimentConfig ----------------------------------------------------

void ExperimentConfig::validate() const {
  if (gazetteer_path.empty())
    throw std::invalid_argument("config: gazetteer path is required");
  if (output_dir.empty())
    throw std::invalid_argument("config: output_dir is required");
  if (n_sentences == 0)
    throw std::invalid_argument("config: n_sentences must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("config: test_fraction must be in (0, 1)");
  if (min_count == 0)
    throw std::invalid_argument("config: min_count must be >= 1");
  if (hidden_dim < 1 || n_layers < 1 || n_heads < 1 || ffn_dim < 1 ||
      max_seq_len < 1)
    throw std::invalid_argument("config: model dimensions must be >= 1");
  if (pretrain_batch == 0)
    throw std::invalid_argument("config: pretrain_batch must be >= 1");
  if (!(mask_prob > 0.0 && mask_prob <= 1.0))
    throw std::invalid_argument("config: mask_prob must be in (0, 1]");
  if (k_list.empty()) throw std::invalid_argument("config: K list is empty");
  for (const int k : k_list)
    if (k < 0) throw std::invalid_argument("config: K values must be >= 0");
  if (n_splits < 1) throw std::invalid_argument("config: n_splits must be >= 1");
  if (n_repeats < 1)
    throw std::invalid_argument("config: n_repeats must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("config: threshold must be in [0, 1]");
  if (top_k == 0) throw std::invalid_argument("config: top_k must be >= 1");
  if (decode_variant != "greedy" && decode_variant != "viterbi")
    throw std::invalid_argument("config: decode must be greedy or viterbi");
  if (transition_smoothing < 0.0)
    throw std::invalid_argument("config: transition_smoothing must be >= 0");
  if (methods.empty())
    throw std::invalid_argument("config: methods list is empty");
  for (const auto& method : methods) MethodSpec::parse(method);
  train.validate();
}

std::string ExperimentConfig::corpus_file() const {
  return corpus_path.empty() ? output_dir + "/corpus.conll" : corpus_path;
}

std::string ExperimentConfig::distant_file() const {
  return distant_path.empty() ? output_dir + "/distant.conll" : distant_path;
}

std::string ExperimentConfig::vocab_file() const {
  return output_dir + "/vocab.tsv";
}

std::string ExperimentConfig::pretrained_file() const {
  return output_dir + "/pretrained.ckpt";
}

std::string ExperimentConfig::support_file(int K, int split) const {
  return output_dir + "/support_K" + std::to_string(K) + "_s" +
         std::to_string(split) + ".conll";
}

std::string ExperimentConfig::label_words_file(const MethodSpec& method) const {
  return output_dir + "/label_words_" + method.to_string() + ".json";
}

std::string ExperimentConfig::model_file(const MethodSpec& method, int K,
                                         int split, int repeat) const {
  return output_dir + "/model_" + method.to_string() + "_K" +
         std::to_string(K) + "_s" + std::to_string(split) + "_r" +
         std::to_string(repeat) + ".ckpt";
}

std::string ExperimentConfig::predictions_file(const MethodSpec& method, int K,
                                               int split, int repeat) const {
  return output_dir + "/pred_" + method.to_string() + "_K" +
         std::to_string(K) + "_s" + std::to_string(split) + "_r" +
         std::to_string(repeat) + ".conll";
}

std::string ExperimentConfig::results_tsv_file() const {
  return output_dir + "/results.tsv";
}

std::string ExperimentConfig::results_jsonl_file() const {
  return output_dir + "/results.jsonl";
}

std::uint64_t ExperimentConfig::split_seed(int split) const {
  return base_seed + static_cast<std::uint64_t>(split);
}

std::uint64_t ExperimentConfig::train_seed(int split, int repeat) const {
  return base_seed + 1000 * (static_cast<std::uint64_t>(split) + 1) +
         static_cast<std::uint64_t>(repeat);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");

    if (key == "gazetteer") cfg.gazetteer_path = value;
    else if (key == "corpus") cfg.corpus_path = value;
    else if (key == "distant") cfg.distant_path = value;
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "n_sentences") cfg.n_sentences = parse_size(key, value);
    else if (key == "test_fraction") cfg.test_fraction = parse_double(key, value);
    else if (key == "corpus_seed") cfg.corpus_seed = parse_u64(key, value);
    else if (key == "min_count") cfg.min_count = parse_size(key, value);
    else if (key == "n_virtual") cfg.n_virtual = parse_size(key, value);
    else if (key == "hidden_dim") cfg.hidden_dim = parse_int(key, value);
    else if (key == "n_layers") cfg.n_layers = parse_int(key, value);
    else if (key == "n_heads") cfg.n_heads = parse_int(key, value);
    else if (key == "ffn_dim") cfg.ffn_dim = parse_int(key, value);
    else if (key == "max_seq_len") cfg.max_seq_len = parse_int(key, value);
    else if (key == "model_seed") cfg.model_seed = parse_u64(key, value);
    else if (key == "pretrain_steps") cfg.pretrain_steps = parse_size(key, value);
    else if (key == "pretrain_lr") cfg.pretrain_lr = parse_double(key, value);
    else if (key == "pretrain_batch") cfg.pretrain_batch = parse_size(key, value);
    else if (key == "pretrain_seed") cfg.pretrain_seed = parse_u64(key, value);
    else if (key == "mask_prob") cfg.mask_prob = parse_double(key, value);
    else if (key == "K") {
      cfg.k_list.clear();
      for (const auto& item : split_list(value))
        cfg.k_list.push_back(parse_int(key, item));
    } else if (key == "n_splits") cfg.n_splits = parse_int(key, value);
    else if (key == "n_repeats") cfg.n_repeats = parse_int(key, value);
    else if (key == "base_seed") cfg.base_seed = parse_u64(key, value);
    else if (key == "threshold") cfg.threshold = parse_double(key, value);
    else if (key == "top_k") cfg.top_k = parse_size(key, value);
    else if (key == "lr") cfg.train.learning_rate = parse_double(key, value);
    else if (key == "batch_size") cfg.train.batch_size = parse_size(key, value);
    else if (key == "epochs") cfg.train.epochs = parse_size(key, value);
    else if (key == "weight_decay") cfg.train.weight_decay = parse_double(key, value);
    else if (key == "decode") cfg.decode_variant = value;
    else if (key == "transition_smoothing")
      cfg.transition_smoothing = parse_double(key, value);
    else if (key == "methods") cfg.methods = split_list(value);
    else
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  ExperimentConfig cfg = parse_experiment_config(read_text_file(path));
  // The gazetteer ships next to the config file; resolve it there.
  const fs::path gaz(cfg.gazetteer_path);
  if (!cfg.gazetteer_path.empty() && gaz.is_relative()) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) cfg.gazetteer_path = (parent / gaz).string();
  }
  return cfg;
}

// ---- Workspace -----------------------------------------------------------

Workspace load_workspace(const ExperimentConfig& cfg) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  require_file(cfg.corpus_file(), "generate");
  require_file(cfg.distant_file(), "annotate");
  require_file(cfg.vocab_file(), "pretrain");
  require_file(cfg.pretrained_file(), "pretrain");

  Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  LabelSet labels = gaz.label_set();
  const Dataset all =
      parse_conll(read_text_file(cfg.corpus_file()), labels, "corpus");
  auto [train, test] = split_corpus(all, cfg.test_fraction);
  Dataset distant =
      parse_conll(read_text_file(cfg.distant_file()), labels, "distant");
  Vocabulary vocab = Vocabulary::parse(read_text_file(cfg.vocab_file()));

  const Checkpoint ckpt = load_checkpoint(cfg.pretrained_file(),
                                          static_cast<int>(vocab.size()));
  TinyMLM model = model_from_checkpoint(ckpt);

  FrequencyTable freq = count_data_frequencies(distant);
  count_lm_topk(model, distant, cfg.top_k, vocab, freq);
  TransitionMatrix transitions =
      estimate_transitions(distant, cfg.transition_smoothing);

  return Workspace{std::move(gaz),     std::move(labels),
                   std::move(train),   std::move(test),
                   std::move(distant), std::move(vocab),
                   std::move(model),   std::move(freq),
                   std::move(transitions)};
}

LabelWordMap select_for_method(const Workspace& ws, const MethodSpec& method,
                               const ExperimentConfig& cfg) {
  if (method.is_tagger())
    throw std::invalid_argument("the tagger baseline has no label words");

  std::map<std::string, std::vector<std::string>> selections;
  for (const auto& cls : ws.labels.positive_classes) {
    std::vector<std::string> candidates;
    switch (method.family) {
      case MethodSpec::Family::kData:
        candidates = select_data(ws.freq, cls, cfg.top_k);
        break;
      case MethodSpec::Family::kLm:
        candidates = select_lm(ws.freq, cls, cfg.top_k);
        break;
      default:
        candidates = select_combined(ws.freq, cls, cfg.top_k);
        break;
    }
    selections[cls] =
        remove_conflicts(candidates, cls, ws.freq, {cfg.threshold});
  }
  return method.virtual_words
             ? build_label_word_map(ws.labels, selections, ws.vocab,
                                    ws.pretrained)
             : build_label_word_map(ws.labels, selections, ws.vocab);
}

// ---- Decoding over datasets ----------------------------------------------

Dataset decode_with_map(const TinyMLM& model, const Dataset& input,
                        const LabelWordMap& map, const LabelSet& labels,
                        const Vocabulary& vocab,
                        const TransitionMatrix* trans) {
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  Dataset out = input;
  for (auto& example : out.examples) {
    const Sentence view = head_of(example.sentence, max_len);
    const auto dist = label_distribution(model, view, map, labels, vocab);
    example.tags = trans ? viterbi_decode(dist, *trans, labels)
                         : decode_greedy(dist, labels);
    pad_with_o(example.tags, example.sentence.size());
  }
  return out;
}

Dataset decode_with_head(const TinyMLM& model, const TaggerHead& head,
                         const Dataset& input, const LabelSet& labels,
                         const Vocabulary& vocab) {
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  Dataset out = input;
  for (auto& example : out.examples) {
    Sentence view = head_of(example.sentence, max_len);
    encode(view, vocab);
    const auto fwd = model.forward(view.token_ids);
    const Eigen::MatrixXd logits = head.logits(fwd.hidden);
    example.tags.tags.clear();
    for (Eigen::Index row = 0; row < logits.rows(); ++row) {
      int best = 0;
      for (Eigen::Index col = 1; col < logits.cols(); ++col)
        if (logits(row, col) > logits(row, best))
          best = static_cast<int>(col);
      example.tags.tags.push_back(best == 0 ? "O"
                                            : TagSequence::tag_for(
                                                  labels.name_of(best)));
    }
    pad_with_o(example.tags, example.sentence.size());
  }
  return out;
}

// ---- Matrix cells --------------------------------------------------------

TrainedCell train_cell(const ExperimentConfig& cfg, const Workspace& ws,
                       const RunSpec& spec) {
  const std::uint64_t split_seed = cfg.split_seed(spec.split);
  const std::uint64_t train_seed = cfg.train_seed(spec.split, spec.repeat);
  SupportSet support = sample_kshot(ws.gold_train,
                                    static_cast<std::size_t>(spec.K),
                                    split_seed);
  TrainConfig train = cfg.train;
  train.seed = train_seed;

  TinyMLM model = ws.pretrained;
  if (spec.method.is_tagger()) {
    TaggerResult result =
        finetune_tagger(model, support, ws.labels, ws.vocab, train);
    return TrainedCell{std::move(model),        LabelWordMap{},
                       std::move(result.head),  std::move(result.report),
                       std::move(support),      split_seed,
                       train_seed};
  }
  LabelWordMap map = select_for_method(ws, spec.method, cfg);
  FinetuneReport report =
      finetune_entity_lm(model, support, map, ws.vocab, train);
  return TrainedCell{std::move(model), std::move(map),   std::nullopt,
                     std::move(report), std::move(support), split_seed,
                     train_seed};
}

RunResult run_cell(const ExperimentConfig& cfg, const Workspace& ws,
                   const RunSpec& spec) {
  TrainedCell cell = train_cell(cfg, ws, spec);

  const bool structured =
      !spec.method.is_tagger() &&
      (spec.method.structured || cfg.decode_variant == "viterbi");
  cell.model.reset_forward_count();
  const auto start = std::chrono::steady_clock::now();
  const Dataset predicted =
      spec.method.is_tagger()
          ? decode_with_head(cell.model, *cell.head, ws.gold_test, ws.labels,
                             ws.vocab)
          : decode_with_map(cell.model, ws.gold_test, cell.map, ws.labels,
                            ws.vocab, structured ? &ws.transitions : nullptr);

  RunResult result;
  result.method = spec.method.to_string();
  result.K = spec.K;
  result.split = spec.split;
  result.repeat = spec.repeat;
  result.split_seed = cell.split_seed;
  result.train_seed = cell.train_seed;
  result.support_counts = cell.support.counts;
  if (!cell.report.epoch_losses.empty()) {
    result.initial_loss = cell.report.initial_loss();
    result.final_loss = cell.report.final_loss();
  }
  result.decode_millis = millis_since(start);
  result.decode_forwards = cell.model.forward_count();
  result.scores = span_f1(ws.gold_test, predicted);
  return result;
}

std::vector<RunResult> run_matrix(const ExperimentConfig& cfg,
                                  const Workspace& ws, std::ostream& log) {
  std::vector<RunResult> results;
  for (const auto& method_text : cfg.methods) {
    const MethodSpec method = MethodSpec::parse(method_text);
    for (const int K : cfg.k_list) {
      for (int split = 0; split < cfg.n_splits; ++split) {
        for (int repeat = 0; repeat < cfg.n_repeats; ++repeat) {
          RunResult result = run_cell(cfg, ws, {method, K, split, repeat});
          log << result.method << " K=" << K << " split=" << split
              << " repeat=" << repeat
              << "  F1=" << percent(result.scores.overall.f1) << "\n";
          results.push_back(std::move(result));
        }
      }
    }
  }
  return results;
}

// ---- Reporting -----------------------------------------------------------

std::string results_to_tsv(const ExperimentConfig& cfg,
                           const std::vector<RunResult>& results) {
  std::map<std::pair<std::string, int>, std::vector<double>> cells;
  for (const auto& result : results)
    cells[{result.method, result.K}].push_back(result.scores.overall.f1);

  std::string out = "method";
  for (const int K : cfg.k_list) out += "\tK=" + std::to_string(K);
  out += "\n";
  for (const auto& method_text : cfg.methods) {
    const std::string method = MethodSpec::parse(method_text).to_string();
    out += method;
    for (const int K : cfg.k_list) {
      const auto it = cells.find({method, K});
      if (it == cells.end()) {
        out += "\t-";
        continue;
      }
      const auto& f1s = it->second;
      double mean = 0.0;
      for (const double f1 : f1s) mean += f1;
      mean /= static_cast<double>(f1s.size());
      double variance = 0.0;
      for (const double f1 : f1s) variance += (f1 - mean) * (f1 - mean);
      const double stddev =
          f1s.size() > 1
              ? std::sqrt(variance / static_cast<double>(f1s.size() - 1))
              : 0.0;
      char cell[64];
      std::snprintf(cell, sizeof(cell), "\t%.2f(%.2f)", 100.0 * mean,
                    100.0 * stddev);
      out += cell;
    }
    out += "\n";
  }
  return out;
}

std::string results_to_jsonl(const ExperimentConfig&,
                             const std::vector<RunResult>& results) {
  std::string out;
  for (const auto& result : results) {
    nlohmann::json line;
    line["method"] = result.method;
    line["K"] = result.K;
    line["split"] = result.split;
    line["repeat"] = result.repeat;
    line["split_seed"] = result.split_seed;
    line["train_seed"] = result.train_seed;
    line["support"] = result.support_counts;
    line["initial_loss"] = result.initial_loss;
    line["final_loss"] = result.final_loss;
    line["precision"] = result.scores.overall.precision;
    line["recall"] = result.scores.overall.recall;
    line["f1"] = result.scores.overall.f1;
    line["tp"] = result.scores.overall.tp;
    line["fp"] = result.scores.overall.fp;
    line["fn"] = result.scores.overall.fn;
    line["forwards"] = result.decode_forwards;
    line["millis"] = result.decode_millis;
    out += line.dump();
    out += "\n";
  }
  return out;
}

// ---- Commands ------------------------------------------------------------

GenerateArtifacts cmd_generate(const ExperimentConfig& cfg, std::ostream& log) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  const Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  const SyntheticCorpus corpus =
      generate_synthetic_corpus(gaz, cfg.corpus_seed, cfg.n_sentences);
  write_text_file(cfg.corpus_file(), serialize_conll(corpus.gold));

  GenerateArtifacts artifacts;
  artifacts.corpus_path = cfg.corpus_file();
  artifacts.n_sentences = corpus.gold.size();
  artifacts.entity_counts = mention_census(corpus.gold);
  log << "generated " << artifacts.n_sentences << " sentences -> "
      << artifacts.corpus_path << "\n"
      << "gold mentions: " << census_line(artifacts.entity_counts) << "\n";
  return artifacts;
}

AnnotateArtifacts cmd_annotate(const ExperimentConfig& cfg, std::ostream& log) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  require_file(cfg.corpus_file(), "generate");
  const Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  const Dataset gold =
      parse_conll(read_text_file(cfg.corpus_file()), gaz.label_set(), "corpus");
  std::vector<Sentence> sentences;
  sentences.reserve(gold.size());
  for (const auto& example : gold.examples)
    sentences.push_back(example.sentence);
  Dataset distant = annotate_with_gazetteer(sentences, gaz);
  distant.name = "distant";
  write_text_file(cfg.distant_file(), serialize_conll(distant));

  AnnotateArtifacts artifacts;
  artifacts.distant_path = cfg.distant_file();
  artifacts.annotated_counts = mention_census(distant);
  log << "annotated " << distant.size() << " sentences -> "
      << artifacts.distant_path << "\n"
      << "distant mentions: " << census_line(artifacts.annotated_counts)
      << "\n";
  return artifacts;
}

PretrainArtifacts cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  require_file(cfg.corpus_file(), "generate");
  const Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  Dataset gold =
      parse_conll(read_text_file(cfg.corpus_file()), gaz.label_set(), "corpus");
  const Vocabulary vocab =
      build_vocabulary({&gold}, cfg.min_count, cfg.n_virtual);
  write_text_file(cfg.vocab_file(), vocab.serialize());

  encode(gold, vocab);
  std::vector<std::vector<int>> id_corpus;
  id_corpus.reserve(gold.size());
  for (const auto& example : gold.examples)
    id_corpus.push_back(example.sentence.token_ids);

  ModelConfig model_config;
  model_config.vocab_size = static_cast<int>(vocab.size());
  model_config.hidden_dim = cfg.hidden_dim;
  model_config.n_layers = cfg.n_layers;
  model_config.n_heads = cfg.n_heads;
  model_config.ffn_dim = cfg.ffn_dim;
  model_config.max_seq_len = cfg.max_seq_len;
  model_config.seed = cfg.model_seed;
  TinyMLM model(model_config);

  TrainConfig pretrain = cfg.train;
  pretrain.learning_rate = cfg.pretrain_lr;
  pretrain.batch_size = cfg.pretrain_batch;
  pretrain.epochs = 1;  // unused; the masked-LM schedule runs by steps
  pretrain.seed = cfg.pretrain_seed;
  const PretrainReport report = mlm_pretrain(
      model, id_corpus, vocab, cfg.pretrain_steps, cfg.mask_prob, pretrain);
  save_checkpoint(model, cfg.pretrained_file());

  PretrainArtifacts artifacts;
  artifacts.vocab_path = cfg.vocab_file();
  artifacts.checkpoint_path = cfg.pretrained_file();
  artifacts.vocab_size = vocab.size();
  artifacts.steps = report.step_losses.size();
  if (!report.step_losses.empty()) {
    artifacts.first_loss = report.step_losses.front();
    artifacts.last_loss = report.step_losses.back();
  }
  log << "vocabulary of " << artifacts.vocab_size << " ids -> "
      << artifacts.vocab_path << "\n"
      << "pre-trained " << artifacts.steps << " steps (loss "
      << artifacts.first_loss << " -> " << artifacts.last_loss << ") -> "
      << artifacts.checkpoint_path << "\n";
  return artifacts;
}

SampleArtifacts cmd_sample(const ExperimentConfig& cfg, int K, int split,
                           std::ostream& log) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  require_file(cfg.corpus_file(), "generate");
  const Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  const Dataset all =
      parse_conll(read_text_file(cfg.corpus_file()), gaz.label_set(), "corpus");
  auto [train, test] = split_corpus(all, cfg.test_fraction);

  const SupportSet support =
      sample_kshot(train, static_cast<std::size_t>(K), cfg.split_seed(split));
  Dataset dataset;
  dataset.examples = support.samples;
  dataset.label_set = train.label_set;
  dataset.name = "support";
  write_text_file(cfg.support_file(K, split), serialize_conll(dataset));

  SampleArtifacts artifacts;
  artifacts.support_path = cfg.support_file(K, split);
  artifacts.counts = support.counts;
  log << "sampled " << support.samples.size() << " sentences at K=" << K
      << " -> " << artifacts.support_path << "\n"
      << "achieved mentions: " << census_line(artifacts.counts) << "\n";
  return artifacts;
}

SelectArtifacts cmd_select(const ExperimentConfig& cfg, const MethodSpec& method,
                           std::ostream& log) {
  const Workspace ws = load_workspace(cfg);
  const LabelWordMap map = select_for_method(ws, method, cfg);
  write_text_file(cfg.label_words_file(method),
                  serialize_label_word_map(map, ws.vocab));

  SelectArtifacts artifacts;
  artifacts.map_path = cfg.label_words_file(method);
  artifacts.words = map.words;
  log << "label words (" << method.to_string() << ") -> "
      << artifacts.map_path << "\n";
  for (const auto& cls : ws.labels.positive_classes) {
    log << "  " << cls << " ->";
    const auto it = map.words.find(cls);
    if (it != map.words.end())
      for (const auto& word : it->second) log << " " << word;
    log << "\n";
  }
  return artifacts;
}

FinetuneArtifacts cmd_finetune(const ExperimentConfig& cfg, const RunSpec& spec,
                               std::ostream& log) {
  if (spec.method.is_tagger())
    throw std::invalid_argument(
        "the tagger baseline keeps no checkpoint; compare it via `entlm "
        "run-all`");
  const Workspace ws = load_workspace(cfg);
  const TrainedCell cell = train_cell(cfg, ws, spec);

  Checkpoint ckpt;
  ckpt.config = cell.model.config();
  ckpt.params = cell.model.params();
  ckpt.label_word_map_json = serialize_label_word_map(cell.map, ws.vocab);
  const std::string path =
      cfg.model_file(spec.method, spec.K, spec.split, spec.repeat);
  save_checkpoint(ckpt, path);

  FinetuneArtifacts artifacts;
  artifacts.model_path = path;
  artifacts.support_counts = cell.support.counts;
  if (!cell.report.epoch_losses.empty()) {
    artifacts.initial_loss = cell.report.initial_loss();
    artifacts.final_loss = cell.report.final_loss();
  }
  log << "fine-tuned " << spec.method.to_string() << " at K=" << spec.K
      << " split=" << spec.split << " repeat=" << spec.repeat << " (loss "
      << artifacts.initial_loss << " -> " << artifacts.final_loss << ") -> "
      << path << "\n"
      << "support mentions: " << census_line(artifacts.support_counts) << "\n";
  return artifacts;
}

DecodeArtifacts cmd_decode(const ExperimentConfig& cfg, const RunSpec& spec,
                           std::ostream& log) {
  if (spec.method.is_tagger())
    throw std::invalid_argument(
        "the tagger baseline keeps no checkpoint; compare it via `entlm "
        "run-all`");
  const Workspace ws = load_workspace(cfg);
  const std::string model_path =
      cfg.model_file(spec.method, spec.K, spec.split, spec.repeat);
  require_file(model_path, "finetune");
  const Checkpoint ckpt =
      load_checkpoint(model_path, static_cast<int>(ws.vocab.size()));
  if (ckpt.label_word_map_json.empty())
    throw std::runtime_error("checkpoint " + model_path +
                             " has no label-word map");
  const TinyMLM model = model_from_checkpoint(ckpt);
  const LabelWordMap map =
      parse_label_word_map(ckpt.label_word_map_json, ws.labels, ws.vocab);

  const bool structured =
      spec.method.structured || cfg.decode_variant == "viterbi";
  const Dataset predicted =
      decode_with_map(model, ws.gold_test, map, ws.labels, ws.vocab,
                      structured ? &ws.transitions : nullptr);
  const std::string path =
      cfg.predictions_file(spec.method, spec.K, spec.split, spec.repeat);
  write_text_file(path, serialize_conll(predicted));

  DecodeArtifacts artifacts;
  artifacts.predictions_path = path;
  artifacts.n_sentences = predicted.size();
  log << "decoded " << artifacts.n_sentences << " sentences ("
      << (structured ? "viterbi" : "greedy") << ") -> " << path << "\n";
  return artifacts;
}

EvalArtifacts cmd_eval(const ExperimentConfig& cfg, const RunSpec& spec,
                       std::ostream& log) {
  require_file(cfg.gazetteer_path, "generate (after fixing the gazetteer path)");
  require_file(cfg.corpus_file(), "generate");
  const Gazetteer gaz = Gazetteer::parse_tsv(read_text_file(cfg.gazetteer_path));
  const Dataset all =
      parse_conll(read_text_file(cfg.corpus_file()), gaz.label_set(), "corpus");
  auto [train, test] = split_corpus(all, cfg.test_fraction);

  const std::string pred_path =
      cfg.predictions_file(spec.method, spec.K, spec.split, spec.repeat);
  require_file(pred_path, "decode");
  const Dataset predicted =
      parse_conll(read_text_file(pred_path), gaz.label_set(), "predictions");

  EvalArtifacts artifacts;
  artifacts.scores = span_f1(test, predicted);
  const auto& overall = artifacts.scores.overall;
  log << "P=" << percent(overall.precision) << " R=" << percent(overall.recall)
      << " F1=" << percent(overall.f1) << " (tp=" << overall.tp
      << " fp=" << overall.fp << " fn=" << overall.fn << ")\n";
  for (const auto& [cls, counts] : artifacts.scores.per_class)
    log << "  " << cls << ": P=" << percent(counts.precision)
        << " R=" << percent(counts.recall) << " F1=" << percent(counts.f1)
        << "\n";
  return artifacts;
}

BenchArtifacts cmd_bench(const ExperimentConfig& cfg, std::ostream& log) {
  const Workspace ws = load_workspace(cfg);
  MethodSpec method;  // defaults to data_lm
  for (const auto& text : cfg.methods) {
    const MethodSpec parsed = MethodSpec::parse(text);
    if (!parsed.is_tagger()) {
      method = parsed;
      break;
    }
  }
  const LabelWordMap map = select_for_method(ws, method, cfg);
  BenchArtifacts artifacts;
  artifacts.report = bench_decoding(ws.pretrained, ws.gold_test, map, ws.vocab,
                                    &ws.transitions);
  const auto& report = artifacts.report;
  const double ratio =
      report.onepass_forwards == 0
          ? 0.0
          : static_cast<double>(report.template_queries) /
                static_cast<double>(report.onepass_forwards);
  log << "sentences: " << report.sentences << "\n"
      << "one-pass forwards: " << report.onepass_forwards << " ("
      << report.onepass_millis << " ms)\n"
      << "viterbi forwards: " << report.viterbi_forwards << " ("
      << report.viterbi_millis << " ms)\n"
      << "template queries: " << report.template_queries << " ("
      << report.template_millis << " ms simulated), x"
      << report.template_queries_per_class << " over classes\n"
      << "template/one-pass query ratio: " << ratio << "\n";
  return artifacts;
}

RunAllArtifacts cmd_run_all(const ExperimentConfig& cfg, std::ostream& log) {
  if (!fs::exists(cfg.corpus_file())) cmd_generate(cfg, log);
  if (!fs::exists(cfg.distant_file())) cmd_annotate(cfg, log);
  if (!fs::exists(cfg.vocab_file()) || !fs::exists(cfg.pretrained_file()))
    cmd_pretrain(cfg, log);

  const Workspace ws = load_workspace(cfg);
  RunAllArtifacts artifacts;
  artifacts.results = run_matrix(cfg, ws, log);
  artifacts.table = results_to_tsv(cfg, artifacts.results);
  artifacts.tsv_path = cfg.results_tsv_file();
  artifacts.jsonl_path = cfg.results_jsonl_file();
  write_text_file(artifacts.tsv_path, artifacts.table);
  write_text_file(artifacts.jsonl_path,
                  results_to_jsonl(cfg, artifacts.results));
  log << "\n" << artifacts.table << "\nresults -> " << artifacts.tsv_path
      << ", " << artifacts.jsonl_path << "\n";
  return artifacts;
}

}  // namespace entlm
