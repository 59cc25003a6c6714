#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Core>

#include "cxnlm/tokenizer.hpp"

namespace cxnlm {

// Anything that yields next-token distributions for a token prefix.
class CausalLm {
 public:
  virtual ~CausalLm() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t context_length() const = 0;

  // Row t holds log P(next | ids[0..t]); one row per input id.
  virtual Eigen::MatrixXd next_token_log_probs(std::span<const TokenId> ids) const = 0;
};

// Assigns 1/V to every token at every position.
class UniformLm final : public CausalLm {
 public:
  UniformLm(std::size_t vocab_size, std::size_t context_length)
      : vocab_size_(vocab_size), context_length_(context_length) {}

  std::size_t vocab_size() const override { return vocab_size_; }
  std::size_t context_length() const override { return context_length_; }
  Eigen::MatrixXd next_token_log_probs(std::span<const TokenId> ids) const override;

 private:
  std::size_t vocab_size_;
  std::size_t context_length_;
};

}  // namespace cxnlm
