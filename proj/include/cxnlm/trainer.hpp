#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxnlm/checkpoint.hpp"
#include "cxnlm/model.hpp"
#include "cxnlm/tokenizer.hpp"

namespace cxnlm {

struct TrainConfig {
  double learning_rate = 3e-4;
  double warmup_fraction = 0.01;  // linear warmup, then constant
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  int batch_size = 64;
  int epochs = 1;
  std::uint64_t seed = 0;  // initialization and batch order
  double init_stddev = 0.02;
  int shards = 1;   // gradient partitions per batch (affects rounding)
  int threads = 1;  // workers for the shards (never affects results)

  void validate() const;
  nlohmann::json to_json() const;
  // With `strict`, every field must be present.
  static TrainConfig from_json(const nlohmann::json& j, bool strict = false);
};

// The 19 checkpoint fractions: 0.01 ... 0.10, then 0.2 ... 1.0.
std::vector<double> checkpoint_fractions();
// round(T * f) for each fraction. Throws ModelError when total_steps < 19.
std::vector<std::int64_t> checkpoint_steps(std::int64_t total_steps);

// Each line becomes [bos] tokens [eos]; the stream is cut into windows of
// context_length + 1 tokens overlapping by one, and every window yields one
// teacher-forced sequence. A final window shorter than two tokens is dropped.
std::vector<Sequence> pack_sequences(const Tokenizer& tokenizer, const std::vector<std::string>& lines,
                                     int context_length);

// exp(mean cross-entropy) over every position of every sequence.
double perplexity(const Transformer<float>& model, const std::vector<Sequence>& sequences);

struct LossRecord {
  std::int64_t step = 0;
  double fraction = 0.0;
  double train_loss = 0.0;
  std::optional<double> heldout_ppl;  // set at checkpoint steps
};

struct TrainLog {
  std::int64_t total_steps = 0;
  int threads = 1;
  int shards = 1;
  std::vector<LossRecord> records;
  std::vector<std::int64_t> checkpoint_steps;

  // CSV `step,frac,train_loss,heldout_ppl` preceded by a `# threads=.. shards=..` line.
  std::string csv() const;
};

using CheckpointSink = std::function<void(const Checkpoint&)>;

// One epoch of Adam over `train` in seeded random order. Hands every
// scheduled checkpoint to `sink` and throws ModelError if a parameter
// becomes non-finite.
TrainLog train(const ModelConfig& model_config, const TrainConfig& config, const std::vector<Sequence>& train,
               const std::vector<Sequence>& heldout, const std::string& tokenizer_hash, const CheckpointSink& sink);

// File name used for a checkpoint fraction, e.g. "ckpt_0.05.bin".
std::string checkpoint_filename(double fraction);

}  // namespace cxnlm
