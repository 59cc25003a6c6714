#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cxnlm/lm.hpp"
#include "cxnlm/tokenizer.hpp"

namespace cxnlm {

struct MinimalPair {
  std::string id;
  std::string phenomenon;
  std::string good;
  std::string bad;
};

struct WordPair {
  std::string real;
  std::string nonce;
  std::string plausible_context;
  std::string implausible_context;
};

struct EvalResult {
  std::string benchmark;
  std::string phenomenon;
  double fraction = 0.0;
  double accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t ties = 0;
  std::size_t truncated = 0;  // pairs whose context was cut to fit the window
};

// Benchmark names used in result tables.
inline constexpr std::string_view kClams = "clams";
inline constexpr std::string_view kXcomps = "xcomps";
inline constexpr std::string_view kLexicalDecision = "lexical_decision";
inline constexpr std::string_view kSurprisal = "surprisal";
inline constexpr std::string_view kAntisurprisal = "antisurprisal";
bool is_word_level(std::string_view benchmark);

struct Score {
  double logprob = 0.0;
  bool truncated = false;
};

// Log-probability of `target` following `context`.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual Score score(std::string_view context, std::string_view target) const = 0;
};

// Scores with a causal LM. The scored sequence is [bos] context target and
// only the target's tokens contribute. When the sequence does not fit the
// model window, the context is cut from the left (flagged as truncated).
// A target that alone exceeds the window is scored with overlapping windows
// of `overlap` tokens of carried-over history. Results are memoized.
class LmScorer final : public Scorer {
 public:
  LmScorer(const CausalLm& model, const Tokenizer& tokenizer, std::size_t overlap = 64);
  Score score(std::string_view context, std::string_view target) const override;

 private:
  Score compute(std::string_view context, std::string_view target) const;

  const CausalLm& model_;
  const Tokenizer& tokenizer_;
  std::size_t overlap_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::string, std::string>, Score> memo_;
};

// Gives every string the same score.
class ConstantScorer final : public Scorer {
 public:
  explicit ConstantScorer(double value = 0.0) : value_(value) {}
  Score score(std::string_view, std::string_view) const override { return {value_, false}; }

 private:
  double value_;
};

// Summed log-probability of the whole text. Throws EvalError on empty text.
double score_sequence(const Scorer& scorer, std::string_view text);

enum class PairScoring { full_sentence, target_only };

// Splits a pair at the last space inside the common prefix of `good` and
// `bad`: the part before is shared context, the rest (with its leading
// space) is the target of each member.
std::pair<std::string, std::pair<std::string, std::string>> split_pair(std::string_view good, std::string_view bad);

// One result per phenomenon, in order of first appearance. A win is
// score(good) > score(bad); ties count one half. Throws EvalError when
// `pairs` is empty.
std::vector<EvalResult> eval_minimal_pairs(const Scorer& scorer, const std::vector<MinimalPair>& pairs,
                                           std::string_view benchmark, double fraction,
                                           PairScoring scoring = PairScoring::full_sentence);

// Each word is scored on its own with one leading space.
EvalResult eval_lexical_decision(const Scorer& scorer, const std::vector<WordPair>& pairs, double fraction);

enum class ContextMode { plausible, implausible };
// The word (with one leading space) is scored after the selected context.
EvalResult eval_surprisal(const Scorer& scorer, const std::vector<WordPair>& pairs, ContextMode mode,
                          double fraction);

// `n` draws with replacement, seeded.
std::vector<MinimalPair> sample_with_replacement(const std::vector<MinimalPair>& pairs, std::size_t n,
                                                 std::uint64_t seed);

// ---- nonce words ----------------------------------------------------------

// Lower-cased word list with its attested character bigrams, including the
// word-boundary markers '^' and '$'.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& words);

  bool contains(std::string_view word) const;
  bool bigram_attested(char32_t a, char32_t b) const;
  std::size_t size() const { return words_.size(); }
  const std::set<std::string>& words() const { return words_; }

  static constexpr char32_t kBegin = U'^';
  static constexpr char32_t kEnd = U'$';

 private:
  std::set<std::string> words_;
  std::set<std::pair<char32_t, char32_t>> bigrams_;
};

char32_t to_lower(char32_t c);
char32_t to_upper(char32_t c);
bool is_letter(char32_t c);
bool is_vowel(char32_t c);
std::string lowercase(std::string_view word);

// Replaces one to three letters, vowels by vowels and consonants by
// consonants, keeping length and capitalization, so that every bigram of the
// lower-cased result is attested and the result is not a lexicon word.
// Deterministic in (real, seed). Throws EvalError when `real` is unknown or
// shorter than three letters, or when the bounded search finds nothing.
std::string generate_nonce(std::string_view real, const Lexicon& lexicon, std::uint64_t seed);

struct NonceCheck {
  bool ok = false;
  std::string reason;
};
NonceCheck check_nonce(std::string_view real, std::string_view nonce, const Lexicon& lexicon);

// Picks up to `n` distinct target words from `sentences` (a word is a
// space-delimited letter string of at least `min_length` letters, not the
// first word), pairs each with a nonce, its own sentence prefix as the
// plausible context and another pair's prefix as the implausible context.
// Words whose nonce generation fails are skipped and listed in `skipped`.
std::vector<WordPair> build_word_pairs(const std::vector<std::string>& sentences, const Lexicon& lexicon,
                                       std::size_t n, std::uint64_t seed, std::vector<std::string>* skipped = nullptr,
                                       std::size_t min_length = 4);

// ---- files ----------------------------------------------------------------

// `id<TAB>phenomenon<TAB>good<TAB>bad`; a first line starting with "id\t" is a header.
std::vector<MinimalPair> load_minimal_pairs(const std::filesystem::path& path);
std::string minimal_pairs_tsv(const std::vector<MinimalPair>& pairs);
// `real<TAB>nonce<TAB>plausible_context<TAB>implausible_context`; optional "real\t" header.
std::vector<WordPair> load_word_pairs(const std::filesystem::path& path);
std::string word_pairs_tsv(const std::vector<WordPair>& pairs);

// CSV `benchmark,phenomenon,frac,accuracy,pairs,ties`.
std::string results_csv(const std::vector<EvalResult>& results);
std::vector<EvalResult> parse_results_csv(std::string_view csv);

// ---- benchmark bundles ----------------------------------------------------

struct BenchmarkSet {
  std::vector<MinimalPair> agreement;
  std::vector<WordPair> words;
  std::vector<MinimalPair> xcomps;
};

struct ScoringOptions {
  PairScoring agreement_scoring = PairScoring::full_sentence;
  std::size_t xcomps_sample = 1000;  // 0 keeps the set as loaded
  std::uint64_t xcomps_seed = 0;
};

// Every benchmark present in `set`: clams per phenomenon, xcomps, and the
// three word-level tests.
std::vector<EvalResult> evaluate_benchmarks(const Scorer& scorer, const BenchmarkSet& set,
                                            const ScoringOptions& options, double fraction);

}  // namespace cxnlm
