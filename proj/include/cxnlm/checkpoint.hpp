#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cxnlm/model.hpp"

namespace cxnlm {

// Model weights at one optimizer step of a training run.
struct Checkpoint {
  ModelConfig config;
  std::vector<float> params;  // ParamLayout order
  std::string tokenizer_hash;
  std::int64_t step = 0;
  double fraction = 0.0;

  Transformer<float> model() const;
};

// File layout, all integers little-endian:
//   8 bytes   magic "CXNLMCKP"
//   uint32    format version
//   uint64    header length N
//   N bytes   JSON header {config, tokenizer_hash, step, fraction, tensors:[{name, rows, cols}]}
//   float32   tensor data in header order
inline constexpr char kCheckpointMagic[8] = {'C', 'X', 'N', 'L', 'M', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws CheckpointError on bad magic, unknown version, truncation, trailing
// bytes or a header that disagrees with the config's tensor layout.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cxnlm
