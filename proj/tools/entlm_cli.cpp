// entlm: config-driven pipeline for template-free few-shot NER.
//
// Typical flow:
//   entlm run-all --config configs/synthetic.cfg
// or step by step:
//   entlm generate --config ... && entlm annotate --config ...
//   entlm pretrain --config ...
//   entlm sample --config ... --K 5
//   entlm select --config ... --method data_lm
//   entlm finetune --config ... --K 5
//   entlm decode --config ... --K 5 && entlm eval --config ... --K 5
//
// ENTLM_OUTPUT_ROOT (or --output) overrides the config's output_dir.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "entlm/experiment.hpp"

namespace {

struct Overrides {
  std::string output;
  int K = -1;
  long long seed = -1;
  std::string method;
  double th = -1.0;
  long long topk = -1;
  long long epochs = -1;
  double lr = -1.0;
  int split = 0;
  int repeat = 0;
};

entlm::ExperimentConfig load(const std::string& config_path,
                             const Overrides& over) {
  entlm::ExperimentConfig cfg = entlm::load_experiment_config(config_path);
  if (!over.output.empty()) cfg.output_dir = over.output;
  if (over.K >= 0) cfg.k_list = {over.K};
  if (over.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(over.seed);
  if (!over.method.empty()) cfg.methods = {over.method};
  if (over.th >= 0.0) cfg.threshold = over.th;
  if (over.topk >= 0) cfg.top_k = static_cast<std::size_t>(over.topk);
  if (over.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(over.epochs);
  if (over.lr >= 0.0) cfg.train.learning_rate = over.lr;
  cfg.validate();
  return cfg;
}

entlm::RunSpec spec_of(const entlm::ExperimentConfig& cfg,
                       const Overrides& over) {
  entlm::RunSpec spec;
  spec.method = entlm::MethodSpec::parse(cfg.methods.front());
  spec.K = cfg.k_list.front();
  spec.split = over.split;
  spec.repeat = over.repeat;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"template-free prompt tuning for few-shot NER"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global options after the subcommand too

  std::string config_path;
  Overrides over;
  app.add_option("--config", config_path, "experiment config file")
      ->required();
  app.add_option("--output", over.output,
                 "output directory (overrides the config)")
      ->envname("ENTLM_OUTPUT_ROOT");
  app.add_option("--K", over.K, "restrict to one K value");
  app.add_option("--seed", over.seed, "override the base seed");
  app.add_option("--method", over.method,
                 "method, e.g. data_lm, lm+virtual, data_lm+struct");
  app.add_option("--th", over.th, "conflict threshold override");
  app.add_option("--topk", over.topk, "label-word candidate count override");
  app.add_option("--epochs", over.epochs, "fine-tuning epochs override");
  app.add_option("--lr", over.lr, "fine-tuning learning rate override");
  app.add_option("--split", over.split, "support-set split index");
  app.add_option("--repeat", over.repeat, "fine-tuning repeat index");

  auto* generate = app.add_subcommand("generate", "write the synthetic corpus");
  auto* annotate =
      app.add_subcommand("annotate", "distantly annotate the corpus");
  auto* pretrain =
      app.add_subcommand("pretrain", "build the vocabulary and pre-train");
  auto* sample = app.add_subcommand("sample", "draw a K-shot support set");
  auto* select = app.add_subcommand("select", "pick label words per class");
  auto* finetune =
      app.add_subcommand("finetune", "fine-tune one matrix cell");
  auto* decode = app.add_subcommand("decode", "tag the test set");
  auto* eval = app.add_subcommand("eval", "score predictions with span F1");
  auto* bench =
      app.add_subcommand("bench", "count forwards and template queries");
  auto* run_all =
      app.add_subcommand("run-all", "run the whole experiment matrix");
  run_all->alias("run_all");

  CLI11_PARSE(app, argc, argv);

  try {
    const entlm::ExperimentConfig cfg = load(config_path, over);
    if (generate->parsed()) {
      entlm::cmd_generate(cfg, std::cout);
    } else if (annotate->parsed()) {
      entlm::cmd_annotate(cfg, std::cout);
    } else if (pretrain->parsed()) {
      entlm::cmd_pretrain(cfg, std::cout);
    } else if (sample->parsed()) {
      entlm::cmd_sample(cfg, cfg.k_list.front(), over.split, std::cout);
    } else if (select->parsed()) {
      entlm::cmd_select(cfg, entlm::MethodSpec::parse(cfg.methods.front()),
                        std::cout);
    } else if (finetune->parsed()) {
      entlm::cmd_finetune(cfg, spec_of(cfg, over), std::cout);
    } else if (decode->parsed()) {
      entlm::cmd_decode(cfg, spec_of(cfg, over), std::cout);
    } else if (eval->parsed()) {
      entlm::cmd_eval(cfg, spec_of(cfg, over), std::cout);
    } else if (bench->parsed()) {
      entlm::cmd_bench(cfg, std::cout);
    } else if (run_all->parsed()) {
      entlm::cmd_run_all(cfg, std::cout);
    }
  } catch (const std::exception& error) {
    std::cerr << "entlm: error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
