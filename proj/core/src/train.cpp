#include "entlm/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "entlm/rng.hpp"

namespace entlm {

LossResult cross_entropy_loss(const Eigen::MatrixXd& logits,
                              const std::vector<int>& target_ids,
                              const std::vector<bool>& position_mask) {
  const auto n = logits.rows();
  if (static_cast<Eigen::Index>(target_ids.size()) != n ||
      static_cast<Eigen::Index>(position_mask.size()) != n)
    throw std::invalid_argument("cross_entropy_loss: length mismatch");

  Eigen::Index n_selected = 0;
  for (const bool on : position_mask)
    if (on) ++n_selected;
  if (n_selected == 0)
    throw std::invalid_argument("cross_entropy_loss: no selected positions");

  LossResult result;
  result.dlogits = Eigen::MatrixXd::Zero(n, logits.cols());
  const double inv = 1.0 / static_cast<double>(n_selected);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!position_mask[static_cast<std::size_t>(i)]) continue;
    const int target = target_ids[static_cast<std::size_t>(i)];
    if (target < 0 || target >= logits.cols())
      throw std::invalid_argument("cross_entropy_loss: target id " +
                                  std::to_string(target) + " out of range");
    const double m = logits.row(i).maxCoeff();
    const Eigen::ArrayXd shifted = logits.row(i).transpose().array() - m;
    const double lse = m + std::log(shifted.exp().sum());
    result.loss += (lse - logits(i, target)) * inv;
    result.dlogits.row(i) = ((logits.row(i).array() - lse).exp() * inv).matrix();
    result.dlogits(i, target) -= inv;
  }
  return result;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0))
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (batch_size == 0)
    throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (weight_decay < 0)
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
}

AdamW::AdamW(std::size_t n_params, double learning_rate, double weight_decay,
             std::size_t total_steps)
    : lr_(learning_rate),
      wd_(weight_decay),
      total_steps_(total_steps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {
  if (total_steps_ == 0)
    throw std::invalid_argument("AdamW: total_steps must be >= 1");
}

double AdamW::multiplier() const {
  const double frac = static_cast<double>(step_) / static_cast<double>(total_steps_);
  return frac >= 1.0 ? 0.0 : 1.0 - frac;
}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamW: size mismatch");
  const double lr_t = lr_ * multiplier();
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  ++step_;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  const Eigen::ArrayXd mhat = m_.array() / bias1;
  const Eigen::ArrayXd vhat = v_.array() / bias2;
  params.array() -=
      lr_t * (mhat / (vhat.sqrt() + kEps) + wd_ * params.array());
}

void AdamW::restore(std::size_t steps_taken, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("AdamW: restored state has wrong size");
  step_ = steps_taken;
  m_ = std::move(m);
  v_ = std::move(v);
}

double backward_and_step(TinyMLM& model, const std::vector<TrainItem>& batch,
                         AdamW& opt) {
  if (batch.empty()) throw std::invalid_argument("backward_and_step: empty batch");

  Eigen::VectorXd grad =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    const auto fwd = model.forward(item.input_ids);
    auto part = cross_entropy_loss(fwd.logits, item.target_ids, item.position_mask);
    loss += part.loss * inv;
    part.dlogits *= inv;
    model.backward(fwd, part.dlogits, grad);
  }

  if (!std::isfinite(loss))
    throw std::runtime_error("backward_and_step: non-finite loss " +
                             std::to_string(loss));
  if (!grad.allFinite())
    throw std::runtime_error("backward_and_step: non-finite gradient");
  opt.step(model.params(), grad);
  return loss;
}

PretrainReport mlm_pretrain(TinyMLM& model,
                            const std::vector<std::vector<int>>& corpus,
                            const Vocabulary& vocab, std::size_t steps,
                            double mask_prob, const TrainConfig& train) {
  if (corpus.empty()) throw std::invalid_argument("mlm_pretrain: empty corpus");
  if (!(mask_prob > 0.0) || mask_prob > 1.0)
    throw std::invalid_argument("mlm_pretrain: mask_prob must be in (0, 1]");
  train.validate();

  PretrainReport report;
  if (steps == 0) return report;

  Rng rng(train.seed);
  AdamW opt(model.n_params(), train.learning_rate, train.weight_decay, steps);
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  const auto n_words = vocab.n_corpus_tokens();

  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<TrainItem> batch;
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      const auto& sentence = corpus[rng.uniform_below(corpus.size())];
      TrainItem item;
      item.target_ids = sentence;
      if (item.target_ids.size() > max_len) item.target_ids.resize(max_len);
      item.input_ids = item.target_ids;
      const auto n = item.target_ids.size();
      item.position_mask.assign(n, false);

      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform01() < mask_prob) {
          item.position_mask[i] = true;
          any = true;
        }
      }
      if (!any) item.position_mask[rng.uniform_below(n)] = true;

      for (std::size_t i = 0; i < n; ++i) {
        if (!item.position_mask[i]) continue;
        const double u = rng.uniform01();
        if (u < 0.8) {
          item.input_ids[i] = Vocabulary::kMaskId;
        } else if (u < 0.9 && n_words > 0) {
          item.input_ids[i] =
              vocab.first_corpus_id() + static_cast<int>(rng.uniform_below(n_words));
        }  // else: keep the original token
      }
      batch.push_back(std::move(item));
    }
    report.step_losses.push_back(backward_and_step(model, batch, opt));
  }
  return report;
}

}  // namespace entlm
