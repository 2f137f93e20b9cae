#include "entlm/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace entlm {

TargetSequence build_target_sequence(const Sentence& sentence,
                                     const TagSequence& tags,
                                     const LabelWordMap& map) {
  if (sentence.token_ids.size() != sentence.tokens.size() ||
      sentence.token_ids.empty())
    throw std::invalid_argument("build_target_sequence: sentence not encoded");
  if (tags.size() != sentence.size())
    throw std::invalid_argument(
        "build_target_sequence: " + std::to_string(sentence.size()) +
        " tokens vs " + std::to_string(tags.size()) + " tags");

  TargetSequence target;
  target.target_ids.reserve(sentence.size());
  target.entity_mask.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto& tag = tags.tags[i];
    if (TagSequence::is_entity(tag)) {
      target.target_ids.push_back(map.label_token_id(TagSequence::class_of(tag)));
      target.entity_mask.push_back(true);
    } else {
      target.target_ids.push_back(sentence.token_ids[i]);
      target.entity_mask.push_back(false);
    }
  }
  return target;
}

double entity_lm_loss(const TinyMLM& model, const Sentence& sentence,
                      const TargetSequence& target) {
  if (target.size() != sentence.token_ids.size())
    throw std::invalid_argument("entity_lm_loss: target length mismatch");
  const auto fwd = model.forward(sentence.token_ids);
  const std::vector<bool> all(target.size(), true);
  return cross_entropy_loss(fwd.logits, target.target_ids, all).loss;
}

namespace {

// Encoded, truncated-to-context training items for the support set.
std::vector<TrainItem> entity_lm_items(const SupportSet& support,
                                       const LabelWordMap& map,
                                       const Vocabulary& vocab,
                                       std::size_t max_len) {
  std::vector<TrainItem> items;
  items.reserve(support.samples.size());
  for (const auto& sample : support.samples) {
    Sentence sentence = sample.sentence;
    TagSequence tags = sample.tags;
    if (sentence.size() > max_len) {
      sentence.tokens.resize(max_len);
      tags.tags.resize(max_len);
    }
    encode(sentence, vocab);
    const auto target = build_target_sequence(sentence, tags, map);
    items.push_back(TrainItem{sentence.token_ids, target.target_ids,
                              std::vector<bool>(target.size(), true)});
  }
  return items;
}

std::size_t steps_per_epoch(std::size_t n_items, std::size_t batch_size) {
  return (n_items + batch_size - 1) / batch_size;
}

}  // namespace

FinetuneReport finetune_entity_lm(TinyMLM& model, const SupportSet& support,
                                  const LabelWordMap& map, const Vocabulary& vocab,
                                  const TrainConfig& train,
                                  const FinetuneOptions& options) {
  train.validate();
  if (support.samples.empty())
    throw std::invalid_argument("finetune_entity_lm: empty support set");

  FinetuneReport report;
  if (train.epochs == 0) return report;

  install_virtual_words(model, map, vocab);

  const auto items = entity_lm_items(
      support, map, vocab, static_cast<std::size_t>(model.config().max_seq_len));
  const auto per_epoch = steps_per_epoch(items.size(), train.batch_size);
  AdamW opt(model.n_params(), train.learning_rate, train.weight_decay,
            train.epochs * per_epoch);
  const bool pin_virtual =
      map.mode == LabelWordMap::Mode::kVirtual && !options.train_virtual_words;

  Rng rng(train.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      std::vector<TrainItem> batch;
      for (std::size_t i = start; i < order.size() && i < start + train.batch_size;
           ++i)
        batch.push_back(items[order[i]]);
      epoch_loss += backward_and_step(model, batch, opt);
      if (pin_virtual) install_virtual_words(model, map, vocab);
      ++n_batches;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return report;
}

TaggerHead::TaggerHead(int hidden_dim, std::size_t n_labels, Rng& rng)
    : hidden_dim_(hidden_dim), n_labels_(n_labels) {
  if (hidden_dim < 1 || n_labels < 2)
    throw std::invalid_argument("TaggerHead: need hidden_dim >= 1, n_labels >= 2");
  const auto n_weight = static_cast<Eigen::Index>(hidden_dim) *
                        static_cast<Eigen::Index>(n_labels);
  params_ = Eigen::VectorXd::Zero(n_weight + static_cast<Eigen::Index>(n_labels));
  for (Eigen::Index i = 0; i < n_weight; ++i) params_(i) = rng.gaussian() * 0.02;
}

Eigen::Map<Eigen::MatrixXd> TaggerHead::weight() {
  return {params_.data(), hidden_dim_, static_cast<Eigen::Index>(n_labels_)};
}

Eigen::Map<const Eigen::MatrixXd> TaggerHead::weight() const {
  return {params_.data(), hidden_dim_, static_cast<Eigen::Index>(n_labels_)};
}

Eigen::Map<Eigen::VectorXd> TaggerHead::bias() {
  return {params_.data() + static_cast<Eigen::Index>(hidden_dim_) *
                               static_cast<Eigen::Index>(n_labels_),
          static_cast<Eigen::Index>(n_labels_)};
}

Eigen::Map<const Eigen::VectorXd> TaggerHead::bias() const {
  return {params_.data() + static_cast<Eigen::Index>(hidden_dim_) *
                               static_cast<Eigen::Index>(n_labels_),
          static_cast<Eigen::Index>(n_labels_)};
}

Eigen::MatrixXd TaggerHead::logits(const Eigen::MatrixXd& hidden) const {
  if (hidden.cols() != hidden_dim_)
    throw std::invalid_argument("TaggerHead: hidden width mismatch");
  return (hidden * weight()).rowwise() + bias().transpose();
}

namespace {

struct TaggerItem {
  std::vector<int> input_ids;
  std::vector<int> label_indices;
};

std::vector<TaggerItem> tagger_items(const SupportSet& support,
                                     const LabelSet& labels,
                                     const Vocabulary& vocab, std::size_t max_len) {
  std::vector<TaggerItem> items;
  items.reserve(support.samples.size());
  for (const auto& sample : support.samples) {
    Sentence sentence = sample.sentence;
    TagSequence tags = sample.tags;
    if (sentence.size() > max_len) {
      sentence.tokens.resize(max_len);
      tags.tags.resize(max_len);
    }
    encode(sentence, vocab);
    TaggerItem item;
    item.input_ids = sentence.token_ids;
    for (const auto& tag : tags.tags)
      item.label_indices.push_back(
          TagSequence::is_entity(tag)
              ? labels.index_of(TagSequence::class_of(tag))
              : 0);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace

TaggerResult finetune_tagger(TinyMLM& model, const SupportSet& support,
                             const LabelSet& labels, const Vocabulary& vocab,
                             const TrainConfig& train) {
  train.validate();
  if (support.samples.empty())
    throw std::invalid_argument("finetune_tagger: empty support set");

  Rng rng(train.seed);
  TaggerResult result{
      TaggerHead(model.config().hidden_dim, labels.n_labels(), rng), {}};
  if (train.epochs == 0) return result;
  TaggerHead& head = result.head;

  const auto items = tagger_items(
      support, labels, vocab, static_cast<std::size_t>(model.config().max_seq_len));
  const auto per_epoch = steps_per_epoch(items.size(), train.batch_size);
  const auto total_steps = train.epochs * per_epoch;
  AdamW opt_model(model.n_params(), train.learning_rate, train.weight_decay,
                  total_steps);
  AdamW opt_head(head.n_params(), train.learning_rate, train.weight_decay,
                 total_steps);

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd model_grad(model.params().size());
  Eigen::VectorXd head_grad(head.params().size());

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const auto end = std::min(order.size(), start + train.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      model_grad.setZero();
      head_grad.setZero();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& item = items[order[i]];
        const auto fwd = model.forward(item.input_ids);
        const auto n = static_cast<Eigen::Index>(item.input_ids.size());
        const Eigen::MatrixXd logits = head.logits(fwd.hidden);
        const std::vector<bool> all(item.input_ids.size(), true);
        const auto ce = cross_entropy_loss(logits, item.label_indices, all);
        batch_loss += ce.loss * inv_b;

        // Head gradients, then the encoder's share through d(hidden).
        const Eigen::MatrixXd dlogits = ce.dlogits * inv_b;
        Eigen::Map<Eigen::MatrixXd>(head_grad.data(), head.hidden_dim(),
                                    static_cast<Eigen::Index>(head.n_labels()))
            .noalias() += fwd.hidden.transpose() * dlogits;
        head_grad.tail(static_cast<Eigen::Index>(head.n_labels())) +=
            dlogits.colwise().sum().transpose();
        Eigen::MatrixXd dhidden(n, model.config().hidden_dim);
        dhidden.noalias() = dlogits * head.weight().transpose();
        model.backward_from_hidden(fwd, std::move(dhidden), model_grad);
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("finetune_tagger: non-finite loss");
      opt_model.step(model.params(), model_grad);
      opt_head.step(head.params(), head_grad);
      epoch_loss += batch_loss;
      ++n_batches;
    }
    result.report.epoch_losses.push_back(epoch_loss /
                                         static_cast<double>(n_batches));
  }
  return result;
}

}  // namespace entlm
