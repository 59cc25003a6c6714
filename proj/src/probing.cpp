#include "cxnlm/probing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/random.hpp"
#include "cxnlm/utf8.hpp"

namespace cxnlm {

bool is_word_level(std::string_view benchmark) {
  return benchmark == kLexicalDecision || benchmark == kSurprisal || benchmark == kAntisurprisal;
}

// ---- scoring --------------------------------------------------------------

LmScorer::LmScorer(const CausalLm& model, const Tokenizer& tokenizer, std::size_t overlap)
    : model_(model), tokenizer_(tokenizer), overlap_(overlap) {
  if (model.vocab_size() < tokenizer.vocab_size()) {
    throw EvalError("model vocabulary (" + std::to_string(model.vocab_size()) + ") is smaller than the tokenizer's (" +
                    std::to_string(tokenizer.vocab_size()) + ")");
  }
  if (model.context_length() < 2) throw EvalError("model context is too short for scoring");
}

Score LmScorer::score(std::string_view context, std::string_view target) const {
  auto key = std::make_pair(std::string(context), std::string(target));
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const Score s = compute(context, target);
  std::lock_guard<std::mutex> lock(mutex_);
  memo_.emplace(std::move(key), s);
  return s;
}

Score LmScorer::compute(std::string_view context, std::string_view target) const {
  if (target.empty()) throw EvalError("cannot score an empty target");
  const auto ctx = tokenizer_.encode(context);
  const auto tgt = tokenizer_.encode(target);
  if (tgt.empty()) throw EvalError("target '" + std::string(target) + "' encodes to no tokens");
  const std::size_t window = model_.context_length();

  Score out;
  if (tgt.size() <= window) {
    const std::size_t keep = std::min(ctx.size(), window - tgt.size());
    out.truncated = keep < ctx.size();
    std::vector<TokenId> inputs;
    inputs.reserve(keep + tgt.size());
    inputs.push_back(tokenizer_.bos());
    inputs.insert(inputs.end(), ctx.end() - static_cast<long>(keep), ctx.end());
    inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
    const auto lp = model_.next_token_log_probs(inputs);
    for (std::size_t j = 0; j < tgt.size(); ++j) out.logprob += lp(static_cast<Eigen::Index>(keep + j), tgt[j]);
    return out;
  }

  out.truncated = !ctx.empty();
  std::vector<TokenId> seq;
  seq.reserve(tgt.size() + 1);
  seq.push_back(tokenizer_.bos());
  seq.insert(seq.end(), tgt.begin(), tgt.end());
  const std::size_t overlap = std::min(overlap_, window - 1);
  const std::size_t last_input = seq.size() - 1;  // inputs are seq[0 .. last_input)
  std::size_t start = 0;
  std::size_t scored_to = 0;  // inputs before this index already produced their prediction
  while (true) {
    const std::size_t end = std::min(start + window, last_input);
    const std::vector<TokenId> inputs(seq.begin() + static_cast<long>(start), seq.begin() + static_cast<long>(end));
    const auto lp = model_.next_token_log_probs(inputs);
    for (std::size_t i = std::max(start, scored_to); i < end; ++i) {
      out.logprob += lp(static_cast<Eigen::Index>(i - start), seq[i + 1]);
    }
    scored_to = end;
    if (end == last_input) break;
    start = end - overlap;
  }
  return out;
}

double score_sequence(const Scorer& scorer, std::string_view text) {
  if (text.empty()) throw EvalError("cannot score empty text");
  return scorer.score("", text).logprob;
}

std::pair<std::string, std::pair<std::string, std::string>> split_pair(std::string_view good, std::string_view bad) {
  std::size_t common = 0;
  while (common < good.size() && common < bad.size() && good[common] == bad[common]) ++common;
  std::size_t cut = 0;
  for (std::size_t i = common; i > 0; --i) {
    if (good[i - 1] == ' ') {
      cut = i - 1;
      break;
    }
  }
  return {std::string(good.substr(0, cut)), {std::string(good.substr(cut)), std::string(bad.substr(cut))}};
}

namespace {

struct Tally {
  std::size_t pairs = 0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t truncated = 0;

  void add(const Score& good, const Score& bad) {
    ++pairs;
    if (good.logprob > bad.logprob) {
      ++wins;
    } else if (good.logprob == bad.logprob) {
      ++ties;
    }
    if (good.truncated || bad.truncated) ++truncated;
  }

  EvalResult result(std::string_view benchmark, std::string_view phenomenon, double fraction) const {
    EvalResult r;
    r.benchmark = std::string(benchmark);
    r.phenomenon = std::string(phenomenon);
    r.fraction = fraction;
    r.pairs = pairs;
    r.ties = ties;
    r.truncated = truncated;
    r.accuracy = (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(pairs);
    return r;
  }
};

std::string with_space(std::string_view word) { return " " + std::string(word); }

}  // namespace

std::vector<EvalResult> eval_minimal_pairs(const Scorer& scorer, const std::vector<MinimalPair>& pairs,
                                           std::string_view benchmark, double fraction, PairScoring scoring) {
  if (pairs.empty()) throw EvalError("no minimal pairs to evaluate for " + std::string(benchmark));
  std::vector<std::string> order;
  std::map<std::string, Tally> tallies;
  for (const auto& p : pairs) {
    if (!tallies.count(p.phenomenon)) order.push_back(p.phenomenon);
    Score good, bad;
    if (scoring == PairScoring::full_sentence) {
      good = scorer.score("", p.good);
      bad = scorer.score("", p.bad);
    } else {
      const auto [context, targets] = split_pair(p.good, p.bad);
      good = scorer.score(context, targets.first);
      bad = scorer.score(context, targets.second);
    }
    tallies[p.phenomenon].add(good, bad);
  }
  std::vector<EvalResult> out;
  for (const auto& ph : order) out.push_back(tallies[ph].result(benchmark, ph, fraction));
  return out;
}

EvalResult eval_lexical_decision(const Scorer& scorer, const std::vector<WordPair>& pairs, double fraction) {
  if (pairs.empty()) throw EvalError("no word pairs for lexical decision");
  Tally t;
  for (const auto& p : pairs) t.add(scorer.score("", with_space(p.real)), scorer.score("", with_space(p.nonce)));
  return t.result(kLexicalDecision, "all", fraction);
}

EvalResult eval_surprisal(const Scorer& scorer, const std::vector<WordPair>& pairs, ContextMode mode,
                          double fraction) {
  const auto benchmark = mode == ContextMode::plausible ? kSurprisal : kAntisurprisal;
  if (pairs.empty()) throw EvalError("no word pairs for " + std::string(benchmark));
  Tally t;
  for (const auto& p : pairs) {
    const std::string& raw = mode == ContextMode::plausible ? p.plausible_context : p.implausible_context;
    if (raw.empty() && mode == ContextMode::implausible) {
      throw EvalError("word pair '" + p.real + "' has no implausible context");
    }
    const std::string context = io::trim(raw);
    t.add(scorer.score(context, with_space(p.real)), scorer.score(context, with_space(p.nonce)));
  }
  return t.result(benchmark, "all", fraction);
}

std::vector<MinimalPair> sample_with_replacement(const std::vector<MinimalPair>& pairs, std::size_t n,
                                                 std::uint64_t seed) {
  if (pairs.empty()) throw EvalError("cannot sample from an empty pair set");
  Rng rng(seed);
  std::vector<MinimalPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pairs[rng.index(pairs.size())]);
  return out;
}

// ---- nonce words ----------------------------------------------------------

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c - U'A' + U'a';
  switch (c) {
    case U'Ä': return U'ä';
    case U'Ö': return U'ö';
    case U'Ü': return U'ü';
    default: return c;
  }
}

char32_t to_upper(char32_t c) {
  if (c >= U'a' && c <= U'z') return c - U'a' + U'A';
  switch (c) {
    case U'ä': return U'Ä';
    case U'ö': return U'Ö';
    case U'ü': return U'Ü';
    default: return c;
  }
}

bool is_letter(char32_t c) {
  const char32_t l = to_lower(c);
  return (l >= U'a' && l <= U'z') || l == U'ä' || l == U'ö' || l == U'ü' || l == U'ß';
}

bool is_vowel(char32_t c) {
  switch (to_lower(c)) {
    case U'a': case U'e': case U'i': case U'o': case U'u': case U'y':
    case U'ä': case U'ö': case U'ü':
      return true;
    default:
      return false;
  }
}

std::string lowercase(std::string_view word) {
  std::string out;
  for (char32_t c : utf8::decode(word)) utf8::append(out, to_lower(c));
  return out;
}

Lexicon::Lexicon(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (w.empty()) continue;
    const auto cps = utf8::decode(lowercase(w));
    words_.insert(utf8::encode(cps));
    char32_t prev = kBegin;
    for (char32_t c : cps) {
      bigrams_.emplace(prev, c);
      prev = c;
    }
    bigrams_.emplace(prev, kEnd);
  }
}

bool Lexicon::contains(std::string_view word) const { return words_.count(lowercase(word)) > 0; }

bool Lexicon::bigram_attested(char32_t a, char32_t b) const { return bigrams_.count({a, b}) > 0; }

NonceCheck check_nonce(std::string_view real, std::string_view nonce, const Lexicon& lexicon) {
  const auto r = utf8::decode(real);
  const auto n = utf8::decode(nonce);
  if (r.size() != n.size()) return {false, "length differs"};
  std::size_t diff = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const bool ru = to_lower(r[i]) != r[i];
    const bool nu = to_lower(n[i]) != n[i];
    if (ru != nu) return {false, "capitalization differs at " + std::to_string(i)};
    if (to_lower(r[i]) != to_lower(n[i])) ++diff;
  }
  if (diff < 1 || diff > 3) return {false, std::to_string(diff) + " substituted positions"};
  if (lexicon.contains(nonce)) return {false, "nonce is a lexicon word"};
  char32_t prev = Lexicon::kBegin;
  for (char32_t c : n) {
    if (!lexicon.bigram_attested(prev, to_lower(c))) return {false, "unattested bigram"};
    prev = to_lower(c);
  }
  if (!lexicon.bigram_attested(prev, Lexicon::kEnd)) return {false, "unattested final bigram"};
  return {true, ""};
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const std::vector<char32_t>& vowels() {
  static const std::vector<char32_t> v{U'a', U'e', U'i', U'o', U'u', U'y', U'ä', U'ö', U'ü'};
  return v;
}

const std::vector<char32_t>& consonants() {
  static const std::vector<char32_t> v = [] {
    std::vector<char32_t> out;
    for (char32_t c = U'a'; c <= U'z'; ++c) {
      if (!is_vowel(c)) out.push_back(c);
    }
    out.push_back(U'ß');
    return out;
  }();
  return v;
}

bool acceptable(const std::vector<char32_t>& lower, const std::string& lower_real, const Lexicon& lexicon) {
  char32_t prev = Lexicon::kBegin;
  for (char32_t c : lower) {
    if (!lexicon.bigram_attested(prev, c)) return false;
    prev = c;
  }
  if (!lexicon.bigram_attested(prev, Lexicon::kEnd)) return false;
  const std::string word = utf8::encode(lower);
  return word != lower_real && !lexicon.words().count(word);
}

std::string restore_case(const std::vector<char32_t>& original, const std::vector<char32_t>& lower) {
  std::string out;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    utf8::append(out, to_lower(original[i]) != original[i] ? to_upper(lower[i]) : lower[i]);
  }
  return out;
}

}  // namespace

std::string generate_nonce(std::string_view real, const Lexicon& lexicon, std::uint64_t seed) {
  const std::string word(real);
  if (!lexicon.contains(word)) throw EvalError("'" + word + "' is not in the lexicon");
  const auto original = utf8::decode(word);
  std::vector<char32_t> lower;
  std::vector<std::size_t> letters;
  for (std::size_t i = 0; i < original.size(); ++i) {
    lower.push_back(to_lower(original[i]));
    if (is_letter(original[i])) letters.push_back(i);
  }
  if (letters.size() < 3) throw EvalError("'" + word + "' has fewer than three letters");
  const std::string lower_real = utf8::encode(lower);

  // Uppercase positions cannot take ß, which has no capital form here.
  auto options = [&](std::size_t pos) {
    std::vector<char32_t> out;
    for (char32_t c : is_vowel(lower[pos]) ? vowels() : consonants()) {
      if (c == lower[pos]) continue;
      if (c == U'ß' && to_lower(original[pos]) != original[pos]) continue;
      out.push_back(c);
    }
    return out;
  };

  Rng rng(derive_seed(seed, fnv1a(lower_real)));
  constexpr int kAttempts = 20000;
  const std::size_t max_k = std::min<std::size_t>(3, letters.size());
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto candidate = lower;
    auto positions = letters;
    rng.shuffle(positions);
    const std::size_t k = 1 + rng.index(max_k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto choices = options(positions[j]);
      candidate[positions[j]] = choices[rng.index(choices.size())];
    }
    if (acceptable(candidate, lower_real, lexicon)) return restore_case(original, candidate);
  }
  // Exhaustive single substitutions before giving up.
  for (std::size_t pos : letters) {
    for (char32_t c : options(pos)) {
      auto candidate = lower;
      candidate[pos] = c;
      if (acceptable(candidate, lower_real, lexicon)) return restore_case(original, candidate);
    }
  }
  throw EvalError("no nonce word found for '" + word + "'");
}

std::vector<WordPair> build_word_pairs(const std::vector<std::string>& sentences, const Lexicon& lexicon,
                                       std::size_t n, std::uint64_t seed, std::vector<std::string>* skipped,
                                       std::size_t min_length) {
  struct Candidate {
    std::string word;
    std::string context;
  };
  // Walking sentences in seeded random order and keeping first occurrences
  // makes frequent words likelier to be picked.
  std::vector<std::size_t> sentence_order(sentences.size());
  for (std::size_t i = 0; i < sentence_order.size(); ++i) sentence_order[i] = i;
  Rng rng(seed);
  rng.shuffle(sentence_order);
  std::vector<Candidate> candidates;
  std::set<std::string> seen;
  for (std::size_t si : sentence_order) {
    const auto& sentence = sentences[si];
    std::size_t pos = sentence.find(' ');
    while (pos != std::string::npos) {
      const std::size_t begin = pos + 1;
      const std::size_t end = std::min(sentence.find(' ', begin), sentence.size());
      const std::string word = sentence.substr(begin, end - begin);
      bool letters_only = !word.empty();
      const auto cps = utf8::decode(word);
      for (char32_t c : cps) letters_only = letters_only && is_letter(c);
      if (letters_only && cps.size() >= min_length && lexicon.contains(word) && seen.insert(lowercase(word)).second) {
        candidates.push_back({word, sentence.substr(0, pos)});
      }
      pos = end < sentence.size() ? end : std::string::npos;
    }
  }
  std::vector<WordPair> out;
  for (const auto& c : candidates) {
    if (out.size() == n) break;
    try {
      out.push_back({c.word, generate_nonce(c.word, lexicon, derive_seed(seed, 1)), c.context, ""});
    } catch (const EvalError&) {
      if (skipped) skipped->push_back(c.word);
    }
  }
  if (out.size() > 1) {
    std::vector<std::size_t> order(out.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng ctx_rng(derive_seed(seed, 2));
    ctx_rng.shuffle(order);
    for (std::size_t k = 0; k < order.size(); ++k) {
      out[order[k]].implausible_context = out[order[(k + 1) % order.size()]].plausible_context;
    }
  }
  return out;
}

// ---- files ----------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path, std::size_t columns,
                                               std::string_view header_start) {
  std::vector<std::vector<std::string>> rows;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty()) continue;
    if (i == 0 && line.rfind(header_start, 0) == 0) continue;
    auto fields = io::split(line, '\t');
    if (fields.size() != columns) {
      throw ParseError(path.string() + ":" + std::to_string(i + 1) + ": expected " + std::to_string(columns) +
                       " tab-separated fields, found " + std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<MinimalPair> load_minimal_pairs(const std::filesystem::path& path) {
  std::vector<MinimalPair> out;
  for (auto& f : read_tsv(path, 4, "id\t")) {
    if (f[2].empty() || f[3].empty() || f[2] == f[3]) {
      throw ParseError(path.string() + ": pair '" + f[0] + "' must have two different non-empty members");
    }
    out.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2]), std::move(f[3])});
  }
  return out;
}

std::string minimal_pairs_tsv(const std::vector<MinimalPair>& pairs) {
  std::string out = "id\tphenomenon\tgood\tbad\n";
  for (const auto& p : pairs) out += p.id + '\t' + p.phenomenon + '\t' + p.good + '\t' + p.bad + '\n';
  return out;
}

std::vector<WordPair> load_word_pairs(const std::filesystem::path& path) {
  std::vector<WordPair> out;
  for (auto& f : read_tsv(path, 4, "real\t")) {
    if (f[0].empty() || f[1].empty()) throw ParseError(path.string() + ": word pair with an empty member");
    out.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2]), std::move(f[3])});
  }
  return out;
}

std::string word_pairs_tsv(const std::vector<WordPair>& pairs) {
  std::string out = "real\tnonce\tplausible_context\timplausible_context\n";
  for (const auto& p : pairs) {
    out += p.real + '\t' + p.nonce + '\t' + p.plausible_context + '\t' + p.implausible_context + '\n';
  }
  return out;
}

std::string results_csv(const std::vector<EvalResult>& results) {
  std::ostringstream out;
  out << "benchmark,phenomenon,frac,accuracy,pairs,ties\n";
  for (const auto& r : results) {
    out << io::csv_field(r.benchmark) << ',' << io::csv_field(r.phenomenon) << ',' << io::format_double(r.fraction)
        << ',' << io::format_double(r.accuracy) << ',' << r.pairs << ',' << r.ties << '\n';
  }
  return out.str();
}

std::vector<EvalResult> parse_results_csv(std::string_view csv) {
  std::vector<EvalResult> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("benchmark,", 0) == 0) continue;
    const auto f = io::parse_csv_line(line);
    if (f.size() != 6) throw ParseError("results line " + std::to_string(lineno) + ": expected 6 fields");
    EvalResult r;
    r.benchmark = f[0];
    r.phenomenon = f[1];
    try {
      r.fraction = std::stod(f[2]);
      r.accuracy = std::stod(f[3]);
      r.pairs = std::stoul(f[4]);
      r.ties = std::stoul(f[5]);
    } catch (const std::exception&) {
      throw ParseError("results line " + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EvalResult> evaluate_benchmarks(const Scorer& scorer, const BenchmarkSet& set,
                                            const ScoringOptions& options, double fraction) {
  std::vector<EvalResult> out;
  if (!set.agreement.empty()) {
    for (auto& r : eval_minimal_pairs(scorer, set.agreement, kClams, fraction, options.agreement_scoring)) {
      out.push_back(std::move(r));
    }
  }
  if (!set.xcomps.empty()) {
    const auto pairs = options.xcomps_sample > 0
                           ? sample_with_replacement(set.xcomps, options.xcomps_sample, options.xcomps_seed)
                           : set.xcomps;
    for (auto& r : eval_minimal_pairs(scorer, pairs, kXcomps, fraction)) out.push_back(std::move(r));
  }
  if (!set.words.empty()) {
    out.push_back(eval_lexical_decision(scorer, set.words, fraction));
    out.push_back(eval_surprisal(scorer, set.words, ContextMode::plausible, fraction));
    out.push_back(eval_surprisal(scorer, set.words, ContextMode::implausible, fraction));
  }
  return out;
}

}  // namespace cxnlm
