#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace cxnlm {

using TokenId = int;

// Fixed 110-symbol character inventory:
//   0 <bos>  1 <eos> (also padding)  2 <unk>  3-5 <reserved0..2>
//   6 '\n'  7 '\t'  8-102 printable ASCII 0x20-0x7E
//   103-109 ä ö ü Ä Ö Ü ß
class CharVocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr std::size_t kSize = 110;

  CharVocab();

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  bool is_special(TokenId id) const { return id >= 0 && id < 6; }

  // Throws TokenizerError naming the character and its code-point offset.
  std::vector<TokenId> encode(std::string_view text) const;
  // Special ids decode to nothing; out-of-range ids throw.
  std::string decode(std::span<const TokenId> ids) const;

  // Non-special symbols as code points.
  std::vector<char32_t> characters() const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<char32_t, TokenId> index_;
};

// Splits text into pre-tokens: every piece is an optional single leading
// space followed by a maximal run of non-space characters (a lone space
// becomes its own piece when spaces repeat or trail).
std::vector<std::string> pretokenize(std::string_view text);

// Byte-pair encoding over code points with space-prefixed pre-tokens.
class BpeModel {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr std::size_t kNumSpecials = 2;

  // `vocab_size` counts regular tokens (alphabet + merges); specials are
  // added on top. The base alphabet is the character inventory of CharVocab
  // plus any other character in the corpus. Ties between equally frequent
  // pairs are broken by the lexicographically smallest (left, right).
  static BpeModel train(const std::vector<std::string>& corpus_lines, std::size_t vocab_size);

  std::size_t size() const { return vocab_.size(); }  // including specials
  std::size_t target_vocab_size() const { return target_vocab_size_; }
  // False when the corpus ran out of pairs before reaching the target size.
  bool complete() const { return size() == target_vocab_size_ + kNumSpecials; }

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<char32_t>& alphabet() const { return alphabet_; }
  const std::vector<std::string>& vocab() const { return vocab_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static BpeModel from_json(const nlohmann::json& j);

 private:
  void rebuild_index();
  std::vector<TokenId> encode_piece(std::string_view piece, std::size_t offset) const;

  std::vector<char32_t> alphabet_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> vocab_;
  std::size_t target_vocab_size_ = 0;
  std::unordered_map<std::string, TokenId> token_index_;
  std::unordered_map<char32_t, TokenId> char_index_;
  std::map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>> merge_rank_;  // -> (rank, result)
};

enum class TokenizerMode { character, bpe };

std::string_view to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(std::string_view name);

// Either tokenizer behind one interface; serialized as a JSON document
// {type, version, symbols|alphabet+merges, specials}.
class Tokenizer {
 public:
  static constexpr int kFormatVersion = 1;

  explicit Tokenizer(CharVocab vocab) : impl_(std::move(vocab)) {}
  explicit Tokenizer(BpeModel model) : impl_(std::move(model)) {}

  static Tokenizer train(TokenizerMode mode, const std::vector<std::string>& corpus_lines,
                         std::size_t bpe_vocab_size = 8000);

  TokenizerMode mode() const;
  std::size_t vocab_size() const;
  TokenId bos() const;
  TokenId eos() const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);
  // SHA-256 of the serialized document.
  std::string content_hash() const;

  const CharVocab* char_vocab() const { return std::get_if<CharVocab>(&impl_); }
  const BpeModel* bpe() const { return std::get_if<BpeModel>(&impl_); }

 private:
  std::variant<CharVocab, BpeModel> impl_;
};

}  // namespace cxnlm
