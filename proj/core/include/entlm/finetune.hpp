#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/label_words.hpp"
#include "entlm/model.hpp"
#include "entlm/rng.hpp"
#include "entlm/sampler.hpp"
#include "entlm/train.hpp"

namespace entlm {

// The training view of a tagged sentence: the id the model should
// predict at every position. Entity positions carry the class's label
// word, non-entity positions their own input token.
struct TargetSequence {
  std::vector<int> target_ids;
  std::vector<bool> entity_mask;

  std::size_t size() const { return target_ids.size(); }
};

// sentence must be encoded; every position of a multi-token entity gets
// the same label word. Errors on length mismatch, unencoded input, or a
// tagged class the map does not cover.
TargetSequence build_target_sequence(const Sentence& sentence,
                                     const TagSequence& tags,
                                     const LabelWordMap& map);

// Cross-entropy of the raw-sentence logits against the target ids, every
// position weighted equally (entity and non-entity alike).
double entity_lm_loss(const TinyMLM& model, const Sentence& sentence,
                      const TargetSequence& target);

struct FinetuneOptions {
  // Ablation switch: when false, the reserved label-word columns are
  // pinned to their prototypes and only the rest of the model trains.
  bool train_virtual_words = true;
};

struct FinetuneReport {
  std::vector<double> epoch_losses;  // mean batch loss, one entry per epoch

  double initial_loss() const { return epoch_losses.front(); }
  double final_loss() const { return epoch_losses.back(); }
};

// Fine-tunes the model in place on the support set: every epoch shuffles
// the sentences, batches them, and optimizes the entity-LM objective
// with AdamW on a linear-to-zero schedule of epochs * ceil(n / batch)
// steps. Virtual maps first write their prototypes into the LM head; no
// other parameters are created in either mode. epochs = 0 returns an
// empty report without touching the model. Sentences longer than the
// model context are truncated.
FinetuneReport finetune_entity_lm(TinyMLM& model, const SupportSet& support,
                                  const LabelWordMap& map, const Vocabulary& vocab,
                                  const TrainConfig& train,
                                  const FinetuneOptions& options = {});

// Linear classifier over final hidden states, the baseline's new
// parameters: logits = h W + b with one column per label (O first).
class TaggerHead {
 public:
  TaggerHead(int hidden_dim, std::size_t n_labels, Rng& rng);

  int hidden_dim() const { return hidden_dim_; }
  std::size_t n_labels() const { return n_labels_; }
  std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight();              // hidden_dim x n_labels
  Eigen::Map<const Eigen::MatrixXd> weight() const;
  Eigen::Map<Eigen::VectorXd> bias();
  Eigen::Map<const Eigen::VectorXd> bias() const;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& hidden) const;  // n x n_labels

 private:
  int hidden_dim_;
  std::size_t n_labels_;
  Eigen::VectorXd params_;  // weight column-major, then bias
};

struct TaggerResult {
  TaggerHead head;
  FinetuneReport report;
};

// Baseline: attaches a fresh label classifier over the encoder and
// trains head and encoder jointly with the same recipe and schedule as
// the entity-LM path, cross-entropy against label indices at every
// position. epochs = 0 still returns the freshly initialized head.
TaggerResult finetune_tagger(TinyMLM& model, const SupportSet& support,
                             const LabelSet& labels, const Vocabulary& vocab,
                             const TrainConfig& train);

}  // namespace entlm
