#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>
#include <json.hpp>

#include "cxnlm/lm.hpp"
#include "cxnlm/tokenizer.hpp"

namespace cxnlm {

// Llama-style decoder: RMSNorm before attention and MLP, rotary positions,
// gated SiLU MLP, untied output head, no biases.
struct ModelConfig {
  int vocab_size = 110;
  int hidden_size = 256;
  int intermediate_size = 256;
  int num_layers = 8;
  int num_heads = 8;
  int context_length = 128;
  double norm_epsilon = 1e-6;
  double rope_base = 10000.0;

  int head_dim() const { return hidden_size / num_heads; }
  // Throws ModelError for non-positive sizes, hidden % heads != 0 or an odd head dimension.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Closed form: 2*V*H (embedding + head) + L*(4*H^2 + 3*H*I + 2*H) + H.
std::int64_t count_parameters(const ModelConfig& config);

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool is_norm() const { return rows == 1; }
};

// Named views into one flat parameter buffer, in a fixed order.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  std::size_t total() const { return total_; }
  const TensorSpec& at(const std::string& name) const;

 private:
  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

// Flat parameter or gradient storage, aligned for Eigen's widest packets so
// vectorized kernels take the same path whatever address malloc returns.
template <typename T>
using ParamBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

// One teacher-forced training sequence; targets[t] follows inputs[t].
struct Sequence {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
};

template <typename T>
class Transformer final : public CausalLm {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  // Parameters start at zero; call init() or assign params().
  explicit Transformer(ModelConfig config);

  // Normal(0, stddev) for every matrix, ones for norm weights, drawn in
  // layout order from a generator seeded with `seed`.
  void init(std::uint64_t seed, double stddev = 0.02);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  ParamBuffer<T>& params() { return params_; }
  const ParamBuffer<T>& params() const { return params_; }

  // Log-softmax over the vocabulary per position. Throws ModelError for an
  // empty, over-long or out-of-vocabulary input.
  Matrix log_probs(std::span<const TokenId> ids) const;

  // Adds scale * d(sum of per-position cross-entropy)/d(params) to `grad`
  // and returns the summed cross-entropy of this sequence.
  double accumulate_gradients(const Sequence& seq, T scale, std::span<T> grad) const;

  std::size_t vocab_size() const override { return static_cast<std::size_t>(config_.vocab_size); }
  std::size_t context_length() const override { return static_cast<std::size_t>(config_.context_length); }
  Eigen::MatrixXd next_token_log_probs(std::span<const TokenId> ids) const override;

  template <typename U>
  Transformer<U> cast() const;

 private:
  struct Cache;
  void forward(std::span<const TokenId> ids, Matrix& logp, Cache* cache) const;
  void check_input(std::span<const TokenId> ids) const;

  ModelConfig config_;
  ParamLayout layout_;
  ParamBuffer<T> params_;
  Matrix rope_cos_;  // context_length x head_dim/2
  Matrix rope_sin_;
};

// Mean next-token cross-entropy over every position of every sequence and
// its gradient (written to `grad`, resized to the parameter count).
// Sequences are split into `shards` contiguous groups whose gradients are
// computed independently (on up to `threads` threads) and summed in shard
// order, so the result depends on `shards` but not on `threads`.
template <typename T>
double loss_and_gradients(const Transformer<T>& model, const std::vector<Sequence>& batch, ParamBuffer<T>& grad,
                          int shards = 1, int threads = 1);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace cxnlm
