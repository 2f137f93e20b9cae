#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"

namespace entlm {

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd dlogits;  // rows of masked-out positions stay zero
};

// Mean over selected positions of -log softmax probability of the
// target id. position_mask[i] = true selects position i. Errors when no
// position is selected.
LossResult cross_entropy_loss(const Eigen::MatrixXd& logits,
                              const std::vector<int>& target_ids,
                              const std::vector<bool>& position_mask);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 20;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

// AdamW with decoupled weight decay and a linear decay of the learning
// rate to zero. The t-th step call (t counted from 0) uses multiplier
// max(0, 1 - t/total_steps); weight decay is scaled by the same
// schedule. Bias correction uses the 1-based step count.
class AdamW {
 public:
  AdamW(std::size_t n_params, double learning_rate, double weight_decay,
        std::size_t total_steps);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  double multiplier() const;  // schedule value the next step would use
  std::size_t steps_taken() const { return step_; }

  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  // Checkpoint restore; moments must match the parameter count.
  void restore(std::size_t steps_taken, Eigen::VectorXd m, Eigen::VectorXd v);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  double lr_;
  double wd_;
  std::size_t total_steps_;
  std::size_t step_ = 0;
  Eigen::VectorXd m_, v_;
};

struct TrainItem {
  std::vector<int> input_ids;
  std::vector<int> target_ids;
  std::vector<bool> position_mask;
};

// Forward/backward over the batch (mean of per-item losses), one AdamW
// step. Returns the batch loss. Errors on non-finite loss or gradient.
double backward_and_step(TinyMLM& model, const std::vector<TrainItem>& batch,
                         AdamW& opt);

struct PretrainReport {
  std::vector<double> step_losses;
};

// Masked-LM pre-training: per sentence, each position is selected with
// probability mask_prob (at least one, forced); selected positions are
// 80% MASK, 10% a random corpus token, 10% left unchanged, and only they
// carry loss. Sentences are drawn uniformly per batch slot; over-length
// sentences are truncated to the model context. The schedule runs to
// `steps`.
PretrainReport mlm_pretrain(TinyMLM& model,
                            const std::vector<std::vector<int>>& corpus,
                            const Vocabulary& vocab, std::size_t steps,
                            double mask_prob, const TrainConfig& train);

}  // namespace entlm
