#include "cxnlm/tokenizer.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/utf8.hpp"

namespace cxnlm {

namespace {

std::string describe_char(char32_t c) {
  std::string s = "'" + utf8::encode(c) + "' (U+";
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string hex;
  for (int shift = 20; shift >= 0; shift -= 4) hex.push_back(kHex[(c >> shift) & 0xF]);
  hex.erase(0, std::min(hex.find_first_not_of('0'), hex.size() - 4));
  return s + hex + ")";
}

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

// ---- CharVocab ------------------------------------------------------------

CharVocab::CharVocab() {
  symbols_ = {"<bos>", "<eos>", "<unk>", "<reserved0>", "<reserved1>", "<reserved2>", "\n", "\t"};
  for (char c = 0x20; c <= 0x7E; ++c) symbols_.emplace_back(1, c);
  for (char32_t c : {U'ä', U'ö', U'ü', U'Ä', U'Ö', U'Ü', U'ß'}) symbols_.push_back(utf8::encode(c));
  for (std::size_t i = 6; i < symbols_.size(); ++i) {
    index_[utf8::decode(symbols_[i]).front()] = static_cast<TokenId>(i);
  }
}

std::vector<TokenId> CharVocab::encode(std::string_view text) const {
  const auto cps = utf8::decode(text);
  std::vector<TokenId> ids;
  ids.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto it = index_.find(cps[i]);
    if (it == index_.end()) {
      throw TokenizerError("character " + describe_char(cps[i]) + " at offset " + std::to_string(i) +
                           " is not in the character vocabulary");
    }
    ids.push_back(it->second);
  }
  return ids;
}

std::string CharVocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
      throw TokenizerError("unknown token id " + std::to_string(id));
    }
    if (!is_special(id)) out += symbols_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::vector<char32_t> CharVocab::characters() const {
  std::vector<char32_t> chars;
  for (std::size_t i = 6; i < symbols_.size(); ++i) chars.push_back(utf8::decode(symbols_[i]).front());
  return chars;
}

// ---- pre-tokenization -----------------------------------------------------

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    if (text[j] == ' ') ++j;
    while (j < text.size() && text[j] != ' ') ++j;
    pieces.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return pieces;
}

// ---- BPE ------------------------------------------------------------------

BpeModel BpeModel::train(const std::vector<std::string>& corpus_lines, std::size_t vocab_size) {
  bool any_text = false;
  std::map<std::string, long long> piece_counts;
  std::set<char32_t> chars;
  for (char32_t c : CharVocab().characters()) chars.insert(c);
  for (const auto& line : corpus_lines) {
    if (line.empty()) continue;
    any_text = true;
    for (auto& piece : pretokenize(line)) {
      for (char32_t c : utf8::decode(piece)) chars.insert(c);
      ++piece_counts[std::move(piece)];
    }
  }
  if (!any_text) throw TokenizerError("cannot train BPE on an empty corpus");

  BpeModel model;
  model.target_vocab_size_ = vocab_size;
  model.alphabet_.assign(chars.begin(), chars.end());
  if (model.alphabet_.size() > vocab_size) {
    throw TokenizerError("vocabulary size " + std::to_string(vocab_size) + " is smaller than the alphabet (" +
                         std::to_string(model.alphabet_.size()) + ")");
  }
  model.rebuild_index();

  std::vector<std::vector<TokenId>> words;
  std::vector<long long> freq;
  for (const auto& [piece, count] : piece_counts) {
    std::vector<TokenId> syms;
    for (char32_t c : utf8::decode(piece)) syms.push_back(model.char_index_.at(c));
    words.push_back(std::move(syms));
    freq.push_back(count);
  }

  std::unordered_map<std::uint64_t, long long> pair_counts;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> where;
  auto add_word = [&](std::size_t w, long long sign) {
    const auto& syms = words[w];
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
      const auto key = pair_key(syms[k], syms[k + 1]);
      auto& c = pair_counts[key];
      c += sign * freq[w];
      if (c == 0) pair_counts.erase(key);
      if (sign > 0) where[key].push_back(w);
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) add_word(w, +1);

  std::vector<std::size_t> stamp(words.size(), 0);
  std::size_t iteration = 0;
  while (model.vocab_.size() < vocab_size + kNumSpecials && !pair_counts.empty()) {
    ++iteration;
    std::uint64_t best_key = 0;
    long long best_count = -1;
    for (const auto& [key, count] : pair_counts) {
      if (count < best_count) continue;
      if (count > best_count) {
        best_key = key;
        best_count = count;
        continue;
      }
      const auto a = static_cast<std::size_t>(key >> 32), b = static_cast<std::size_t>(key & 0xFFFFFFFF);
      const auto ba = static_cast<std::size_t>(best_key >> 32), bb = static_cast<std::size_t>(best_key & 0xFFFFFFFF);
      const auto& va = model.vocab_;
      if (std::tie(va[a], va[b]) < std::tie(va[ba], va[bb])) best_key = key;
    }
    const auto left = static_cast<TokenId>(best_key >> 32);
    const auto right = static_cast<TokenId>(best_key & 0xFFFFFFFF);
    const std::string merged = model.vocab_[static_cast<std::size_t>(left)] + model.vocab_[static_cast<std::size_t>(right)];
    TokenId merged_id;
    if (const auto it = model.token_index_.find(merged); it != model.token_index_.end()) {
      merged_id = it->second;
    } else {
      merged_id = static_cast<TokenId>(model.vocab_.size());
      model.vocab_.push_back(merged);
      model.token_index_[merged] = merged_id;
    }
    model.merges_.emplace_back(model.vocab_[static_cast<std::size_t>(left)],
                               model.vocab_[static_cast<std::size_t>(right)]);
    model.merge_rank_[{left, right}] = {model.merges_.size() - 1, merged_id};

    auto affected = std::move(where[best_key]);
    where.erase(best_key);
    for (std::size_t w : affected) {
      if (stamp[w] == iteration) continue;
      stamp[w] = iteration;
      auto& syms = words[w];
      bool present = false;
      for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
        if (syms[k] == left && syms[k + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      add_word(w, -1);
      std::vector<TokenId> out;
      out.reserve(syms.size());
      for (std::size_t k = 0; k < syms.size(); ++k) {
        if (k + 1 < syms.size() && syms[k] == left && syms[k + 1] == right) {
          out.push_back(merged_id);
          ++k;
        } else {
          out.push_back(syms[k]);
        }
      }
      syms = std::move(out);
      add_word(w, +1);
    }
  }
  return model;
}

void BpeModel::rebuild_index() {
  vocab_ = {"<bos>", "<eos>"};
  token_index_.clear();
  char_index_.clear();
  merge_rank_.clear();
  for (char32_t c : alphabet_) {
    const auto id = static_cast<TokenId>(vocab_.size());
    vocab_.push_back(utf8::encode(c));
    token_index_[vocab_.back()] = id;
    char_index_[c] = id;
  }
}

std::vector<TokenId> BpeModel::encode_piece(std::string_view piece, std::size_t offset) const {
  const auto cps = utf8::decode(piece);
  std::vector<TokenId> syms;
  syms.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto it = char_index_.find(cps[i]);
    if (it == char_index_.end()) {
      throw TokenizerError("character " + describe_char(cps[i]) + " at offset " + std::to_string(offset + i) +
                           " is not in the BPE alphabet");
    }
    syms.push_back(it->second);
  }
  while (syms.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    TokenId best_left = -1, best_right = -1, result = -1;
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
      const auto it = merge_rank_.find({syms[k], syms[k + 1]});
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_left = syms[k];
        best_right = syms[k + 1];
        result = it->second.second;
      }
    }
    if (result < 0) break;
    std::vector<TokenId> out;
    out.reserve(syms.size());
    for (std::size_t k = 0; k < syms.size(); ++k) {
      if (k + 1 < syms.size() && syms[k] == best_left && syms[k + 1] == best_right) {
        out.push_back(result);
        ++k;
      } else {
        out.push_back(syms[k]);
      }
    }
    syms = std::move(out);
  }
  return syms;
}

std::vector<TokenId> BpeModel::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t offset = 0;
  for (const auto& piece : pretokenize(text)) {
    const auto piece_ids = encode_piece(piece, offset);
    ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
    offset += utf8::length(piece);
  }
  return ids;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw TokenizerError("unknown token id " + std::to_string(id));
    }
    if (static_cast<std::size_t>(id) >= kNumSpecials) out += vocab_[static_cast<std::size_t>(id)];
  }
  return out;
}

nlohmann::json BpeModel::to_json() const {
  std::vector<std::string> alphabet;
  for (char32_t c : alphabet_) alphabet.push_back(utf8::encode(c));
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return {{"alphabet", alphabet}, {"merges", merges}, {"vocab_size", target_vocab_size_}};
}

BpeModel BpeModel::from_json(const nlohmann::json& j) {
  BpeModel model;
  model.target_vocab_size_ = j.at("vocab_size").get<std::size_t>();
  for (const auto& s : j.at("alphabet")) {
    const auto cps = utf8::decode(s.get<std::string>());
    if (cps.size() != 1) throw TokenizerError("alphabet entries must be single characters");
    model.alphabet_.push_back(cps.front());
  }
  model.rebuild_index();
  for (const auto& m : j.at("merges")) {
    const auto a = m.at(0).get<std::string>();
    const auto b = m.at(1).get<std::string>();
    const auto ia = model.token_index_.find(a);
    const auto ib = model.token_index_.find(b);
    if (ia == model.token_index_.end() || ib == model.token_index_.end()) {
      throw TokenizerError("merge (" + a + ", " + b + ") references an unknown token");
    }
    const std::string merged = a + b;
    TokenId id;
    if (const auto it = model.token_index_.find(merged); it != model.token_index_.end()) {
      id = it->second;
    } else {
      id = static_cast<TokenId>(model.vocab_.size());
      model.vocab_.push_back(merged);
      model.token_index_[merged] = id;
    }
    model.merges_.emplace_back(a, b);
    model.merge_rank_[{ia->second, ib->second}] = {model.merges_.size() - 1, id};
  }
  return model;
}

// ---- Tokenizer ------------------------------------------------------------

std::string_view to_string(TokenizerMode mode) { return mode == TokenizerMode::character ? "char" : "bpe"; }

TokenizerMode tokenizer_mode_from_string(std::string_view name) {
  if (name == "char" || name == "character") return TokenizerMode::character;
  if (name == "bpe" || name == "subword") return TokenizerMode::bpe;
  throw DataError("unknown tokenizer mode '" + std::string(name) + "'");
}

Tokenizer Tokenizer::train(TokenizerMode mode, const std::vector<std::string>& corpus_lines,
                           std::size_t bpe_vocab_size) {
  if (mode == TokenizerMode::character) return Tokenizer(CharVocab());
  return Tokenizer(BpeModel::train(corpus_lines, bpe_vocab_size));
}

TokenizerMode Tokenizer::mode() const {
  return std::holds_alternative<CharVocab>(impl_) ? TokenizerMode::character : TokenizerMode::bpe;
}

std::size_t Tokenizer::vocab_size() const {
  return std::visit([](const auto& t) { return t.size(); }, impl_);
}

TokenId Tokenizer::bos() const { return mode() == TokenizerMode::character ? CharVocab::kBos : BpeModel::kBos; }
TokenId Tokenizer::eos() const { return mode() == TokenizerMode::character ? CharVocab::kEos : BpeModel::kEos; }

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  return std::visit([&](const auto& t) { return t.encode(text); }, impl_);
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  return std::visit([&](const auto& t) { return t.decode(ids); }, impl_);
}

nlohmann::json Tokenizer::to_json() const {
  nlohmann::json j;
  j["version"] = kFormatVersion;
  if (const auto* cv = char_vocab()) {
    j["type"] = "char";
    j["symbols"] = cv->symbols();
    j["specials"] = {{"bos", CharVocab::kBos}, {"eos", CharVocab::kEos}, {"unk", CharVocab::kUnk}};
  } else {
    j = bpe()->to_json();
    j["version"] = kFormatVersion;
    j["type"] = "bpe";
    j["specials"] = {{"bos", BpeModel::kBos}, {"eos", BpeModel::kEos}};
  }
  return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kFormatVersion) {
      throw TokenizerError("unsupported tokenizer version " + j.at("version").dump());
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "char") {
      CharVocab cv;
      if (j.at("symbols").get<std::vector<std::string>>() != cv.symbols()) {
        throw TokenizerError("character inventory does not match this build's vocabulary");
      }
      return Tokenizer(std::move(cv));
    }
    if (type == "bpe") return Tokenizer(BpeModel::from_json(j));
    throw TokenizerError("unknown tokenizer type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw TokenizerError(std::string("malformed tokenizer document: ") + e.what());
  }
}

void Tokenizer::save(const std::filesystem::path& path) const { io::write_file(path, to_json().dump(1) + "\n"); }

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw TokenizerError(path.string() + ": " + e.what());
  }
}

std::string Tokenizer::content_hash() const { return io::sha256_hex(to_json().dump(1) + "\n"); }

}  // namespace cxnlm
