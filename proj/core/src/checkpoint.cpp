#include "entlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace entlm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'N', 'T', 'L', 'M', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t count) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(count));
}

template <typename T>
void write_pod(std::ofstream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

void read_bytes(std::ifstream& in, void* data, std::size_t count,
                const std::string& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw std::runtime_error("checkpoint " + path + ": truncated");
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value;
  read_bytes(in, &value, sizeof(T), path);
  return value;
}

void write_vector(std::ofstream& out, const Eigen::VectorXd& vec) {
  write_bytes(out, vec.data(), static_cast<std::size_t>(vec.size()) * sizeof(double));
}

Eigen::VectorXd read_vector(std::ifstream& in, std::uint64_t count,
                            const std::string& path) {
  Eigen::VectorXd vec(static_cast<Eigen::Index>(count));
  read_bytes(in, vec.data(), count * sizeof(double), path);
  return vec;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.config.validate();
  const ParamLayout layout(ckpt.config);
  if (static_cast<std::size_t>(ckpt.params.size()) != layout.total)
    throw std::invalid_argument("save_checkpoint: parameter count " +
                                std::to_string(ckpt.params.size()) +
                                " does not fit the config");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint " + path + ": cannot open for write");

  write_bytes(out, kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod<std::int32_t>(out, ckpt.config.vocab_size);
  write_pod<std::int32_t>(out, ckpt.config.hidden_dim);
  write_pod<std::int32_t>(out, ckpt.config.n_layers);
  write_pod<std::int32_t>(out, ckpt.config.n_heads);
  write_pod<std::int32_t>(out, ckpt.config.ffn_dim);
  write_pod<std::int32_t>(out, ckpt.config.max_seq_len);
  write_pod<std::uint64_t>(out, ckpt.config.seed);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.params.size()));
  write_vector(out, ckpt.params);

  write_pod<std::uint8_t>(out, ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    if (ckpt.first_moment.size() != ckpt.params.size() ||
        ckpt.second_moment.size() != ckpt.params.size())
      throw std::invalid_argument("save_checkpoint: optimizer moments mismatch");
    write_pod(out, ckpt.optimizer_steps);
    write_vector(out, ckpt.first_moment);
    write_vector(out, ckpt.second_moment);
  }

  write_pod<std::uint8_t>(out, ckpt.label_word_map_json.empty() ? 0 : 1);
  if (!ckpt.label_word_map_json.empty()) {
    write_pod<std::uint64_t>(out, ckpt.label_word_map_json.size());
    write_bytes(out, ckpt.label_word_map_json.data(), ckpt.label_word_map_json.size());
  }

  if (!out) throw std::runtime_error("checkpoint " + path + ": write failed");
}

void save_checkpoint(const TinyMLM& model, const std::string& path) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.params = model.params();
  save_checkpoint(ckpt, path);
}

Checkpoint load_checkpoint(const std::string& path,
                           std::optional<int> expected_vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint " + path + ": cannot open");

  char magic[8];
  read_bytes(in, magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(version));

  Checkpoint ckpt;
  ckpt.config.vocab_size = read_pod<std::int32_t>(in, path);
  ckpt.config.hidden_dim = read_pod<std::int32_t>(in, path);
  ckpt.config.n_layers = read_pod<std::int32_t>(in, path);
  ckpt.config.n_heads = read_pod<std::int32_t>(in, path);
  ckpt.config.ffn_dim = read_pod<std::int32_t>(in, path);
  ckpt.config.max_seq_len = read_pod<std::int32_t>(in, path);
  ckpt.config.seed = read_pod<std::uint64_t>(in, path);
  ckpt.config.validate();

  if (expected_vocab_size && ckpt.config.vocab_size != *expected_vocab_size)
    throw std::runtime_error("checkpoint " + path + ": vocabulary size " +
                             std::to_string(ckpt.config.vocab_size) +
                             " does not match expected " +
                             std::to_string(*expected_vocab_size));

  const auto n_params = read_pod<std::uint64_t>(in, path);
  const ParamLayout layout(ckpt.config);
  if (n_params != layout.total)
    throw std::runtime_error("checkpoint " + path + ": parameter count " +
                             std::to_string(n_params) +
                             " does not fit the stored config");
  ckpt.params = read_vector(in, n_params, path);

  ckpt.has_optimizer = read_pod<std::uint8_t>(in, path) != 0;
  if (ckpt.has_optimizer) {
    ckpt.optimizer_steps = read_pod<std::uint64_t>(in, path);
    ckpt.first_moment = read_vector(in, n_params, path);
    ckpt.second_moment = read_vector(in, n_params, path);
  }

  if (read_pod<std::uint8_t>(in, path) != 0) {
    const auto length = read_pod<std::uint64_t>(in, path);
    ckpt.label_word_map_json.resize(length);
    read_bytes(in, ckpt.label_word_map_json.data(), length, path);
  }

  if (in.peek() != std::ifstream::traits_type::eof())
    throw std::runtime_error("checkpoint " + path + ": trailing bytes");
  return ckpt;
}

TinyMLM model_from_checkpoint(const Checkpoint& ckpt) {
  TinyMLM model(ckpt.config);
  model.params() = ckpt.params;
  return model;
}

}  // namespace entlm
