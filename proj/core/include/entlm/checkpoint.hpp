#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "entlm/model.hpp"

namespace entlm {

// Binary model snapshot. Layout, all little-endian:
//   magic "ENTLMCKP", version u32
//   config: vocab_size, hidden_dim, n_layers, n_heads, ffn_dim,
//           max_seq_len as i32, seed u64
//   n_params u64, then n_params raw IEEE-754 doubles in layout order
//   optimizer flag u8; when 1: steps u64, first and second moments
//   map flag u8; when 1: length u64 + that many bytes of label-word JSON
struct Checkpoint {
  ModelConfig config;
  Eigen::VectorXd params;

  bool has_optimizer = false;
  std::uint64_t optimizer_steps = 0;
  Eigen::VectorXd first_moment, second_moment;

  std::string label_word_map_json;  // empty means absent
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
void save_checkpoint(const TinyMLM& model, const std::string& path);

// Errors on unreadable file, bad magic or version, truncation, trailing
// bytes, or (when given) a vocabulary size other than expected.
Checkpoint load_checkpoint(const std::string& path,
                           std::optional<int> expected_vocab_size = std::nullopt);

// Parameters restored bit-for-bit; forward outputs reproduce exactly.
TinyMLM model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace entlm
