#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace entlm {

struct ModelConfig {
  int vocab_size = 0;
  int hidden_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 128;
  int max_seq_len = 64;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const ModelConfig&) const = default;
};

// Offsets into the flat parameter vector. The optimizer, the checkpoint
// writer, and the finite-difference checker all treat the model as this
// one vector; tensor structure exists only through these offsets.
//
// Weight matrices are stored column-major with shape (in, out), so a
// projection is X * W. Embedding tables are (hidden, count) so column c
// is the vector for id c.
struct ParamLayout {
  struct Layer {
    std::size_t Wq, bq, Wk, bk, Wv, bv, Wo, bo;
    std::size_t ln1_g, ln1_b;
    std::size_t W1, b1, W2, b2;
    std::size_t ln2_g, ln2_b;
  };

  std::size_t tok_emb = 0, pos_emb = 0, emb_ln_g = 0, emb_ln_b = 0;
  std::vector<Layer> layers;
  std::size_t w_lm = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& config);
};

struct LayerCache {
  Eigen::MatrixXd x_in;                // n x D block input
  Eigen::MatrixXd Q, K, V;             // n x D
  std::vector<Eigen::MatrixXd> attn;   // per head, n x n softmax rows
  Eigen::MatrixXd ctx;                 // n x D heads concatenated, before Wo
  Eigen::MatrixXd attn_res;            // x_in + attention output, before LN1
  Eigen::MatrixXd ln1_xhat;
  Eigen::VectorXd ln1_inv_std;
  Eigen::MatrixXd x_mid;               // LN1 output
  Eigen::MatrixXd z1, a1;              // n x F, before and after GELU
  Eigen::MatrixXd ffn_res;             // x_mid + FFN output, before LN2
  Eigen::MatrixXd ln2_xhat;
  Eigen::VectorXd ln2_inv_std;
  Eigen::MatrixXd x_out;               // LN2 output
};

struct ForwardResult {
  std::vector<int> token_ids;
  Eigen::MatrixXd emb_sum;             // n x D token + position, before LN
  Eigen::MatrixXd emb_xhat;
  Eigen::VectorXd emb_inv_std;
  Eigen::MatrixXd emb_out;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd hidden;              // n x D final states h_i
  Eigen::MatrixXd logits;              // n x V rows W_lm . h_i
};

// Post-LN transformer encoder with a tied-nothing LM head:
//   x = LN(tok_emb + pos_emb)
//   per block: x = LN(x + MHA(x)); x = LN(x + FFN(x))
//   logits = h . W_lm
// Double precision throughout; gradients are exact and hand-derived.
class TinyMLM {
 public:
  explicit TinyMLM(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }

  // One unmasked pass over the raw ids. Errors on empty, over-length, or
  // out-of-vocabulary input. Increments the forward counter.
  ForwardResult forward(const std::vector<int>& token_ids) const;

  // Accumulates d(loss)/d(params) into grad, given d(loss)/d(logits).
  // grad must already have n_params() entries.
  void backward(const ForwardResult& fwd, const Eigen::MatrixXd& dlogits,
                Eigen::VectorXd& grad) const;

  // Entry point for losses attached to the final hidden states instead
  // of the LM logits (the classifier-head baseline). dx is d(loss)/d(h),
  // shape n x hidden_dim.
  void backward_from_hidden(const ForwardResult& fwd, Eigen::MatrixXd dx,
                            Eigen::VectorXd& grad) const;

  // Output-embedding table, hidden_dim x vocab_size; column v scores
  // token v. Virtual label words are written straight into columns.
  Eigen::Map<Eigen::MatrixXd> w_lm();
  Eigen::Map<const Eigen::MatrixXd> w_lm() const;

  // Decoding-cost instrumentation. Counts every forward() call on this
  // instance; not synchronized, keep one instance per thread.
  std::uint64_t forward_count() const { return n_forwards_; }
  void reset_forward_count() const { n_forwards_ = 0; }

  static constexpr double kLayerNormEps = 1e-5;
  static constexpr double kInitStd = 0.02;

 private:
  ModelConfig config_;
  ParamLayout layout_;
  Eigen::VectorXd params_;
  mutable std::uint64_t n_forwards_ = 0;
};

}  // namespace entlm
