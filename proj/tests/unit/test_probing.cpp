#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "cxnlm/error.hpp"
#include "cxnlm/lm.hpp"
#include "cxnlm/probing.hpp"
#include "cxnlm/random.hpp"
#include "cxnlm/synth.hpp"
#include "cxnlm/tokenizer.hpp"
#include "cxnlm/utf8.hpp"

using namespace cxnlm;
namespace fs = std::filesystem;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Next-token distribution chosen by a callback on the whole prefix.
class FunctionLm final : public CausalLm {
 public:
  using Dist = std::function<Eigen::VectorXd(std::span<const TokenId>)>;
  FunctionLm(std::size_t vocab, std::size_t ctx, Dist dist) : vocab_(vocab), ctx_(ctx), dist_(std::move(dist)) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t context_length() const override { return ctx_; }
  Eigen::MatrixXd next_token_log_probs(std::span<const TokenId> ids) const override {
    REQUIRE(!ids.empty());
    REQUIRE(ids.size() <= ctx_);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(vocab_));
    for (std::size_t t = 0; t < ids.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = dist_(ids.first(t + 1));
    return out;
  }

 private:
  std::size_t vocab_;
  std::size_t ctx_;
  Dist dist_;
};

const Tokenizer& chars() {
  static const Tokenizer tok(CharVocab{});
  return tok;
}

TokenId id_of(char c) { return chars().encode(std::string(1, c))[0]; }

// Only 'a' and 'b' have mass; P(a) depends on how many a's the prefix holds.
double p_a_given(std::size_t a_count, std::size_t length) {
  return 0.2 + 0.6 * static_cast<double>(a_count + 1) / static_cast<double>(length + 2);
}

Eigen::VectorXd two_symbol(std::span<const TokenId> prefix) {
  Eigen::VectorXd row = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(chars().vocab_size()), kNegInf);
  const auto a = std::count(prefix.begin(), prefix.end(), id_of('a'));
  const double pa = p_a_given(static_cast<std::size_t>(a), prefix.size());
  row(id_of('a')) = std::log(pa);
  row(id_of('b')) = std::log(1.0 - pa);
  return row;
}

// Bigram model: the next character is the successor of the last one with
// probability 0.9, spread evenly otherwise.
Eigen::VectorXd bigram(std::span<const TokenId> prefix) {
  const auto v = static_cast<Eigen::Index>(chars().vocab_size());
  Eigen::VectorXd row = Eigen::VectorXd::Constant(v, std::log(0.1 / static_cast<double>(v - 1)));
  row((prefix.back() + 1) % v) = std::log(0.9);
  return row;
}

// Probability tree for a/b strings, written out level by level.
double brute_force_prob(const std::string& s) {
  double p = 1.0;
  std::size_t a = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double pa = p_a_given(a, i + 1);  // prefix is [bos] + s[0..i)
    p *= s[i] == 'a' ? pa : 1.0 - pa;
    if (s[i] == 'a') ++a;
  }
  return p;
}

std::vector<MinimalPair> pairs_of(std::initializer_list<std::pair<const char*, const char*>> gb,
                                  const char* phenomenon = "Simple Agreement") {
  std::vector<MinimalPair> out;
  int i = 0;
  for (const auto& [g, b] : gb) out.push_back({"p" + std::to_string(++i), phenomenon, g, b});
  return out;
}

// ---- independent nonce validator ------------------------------------------

std::u32string lower32(const std::string& s) {
  std::u32string out;
  for (char32_t c : utf8::decode(s)) {
    if (c >= U'A' && c <= U'Z') c += 32;
    if (c == U'Ä') c = U'ä';
    if (c == U'Ö') c = U'ö';
    if (c == U'Ü') c = U'ü';
    out.push_back(c);
  }
  return out;
}

bool upper_at(const std::string& s, std::size_t i) {
  const char32_t c = utf8::decode(s)[i];
  return (c >= U'A' && c <= U'Z') || c == U'Ä' || c == U'Ö' || c == U'Ü';
}

std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct Validator {
  std::set<std::u32string> words;
  std::set<std::u32string> bigrams;  // two-character strings, '^' and '$' as edges

  explicit Validator(const std::vector<std::string>& lexicon) {
    for (const auto& w : lexicon) {
      const auto l = lower32(w);
      words.insert(l);
      const std::u32string padded = U"^" + l + U"$";
      for (std::size_t i = 0; i + 1 < padded.size(); ++i) bigrams.insert(padded.substr(i, 2));
    }
  }

  std::string problem(const std::string& real, const std::string& nonce) const {
    const auto r = lower32(real), n = lower32(nonce);
    if (r.size() != n.size()) return "length";
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (upper_at(real, i) != upper_at(nonce, i)) return "capitalization";
    }
    if (words.count(n)) return "is a word";
    const std::size_t d = levenshtein(r, n);
    if (d < 1 || d > 3) return "edit distance " + std::to_string(d);
    const std::u32string padded = U"^" + n + U"$";
    for (std::size_t i = 0; i + 1 < padded.size(); ++i) {
      if (!bigrams.count(padded.substr(i, 2))) return "unattested bigram";
    }
    return "";
  }
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cxnlm-unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("uniform model scores n characters as -n ln V") {
  const UniformLm lm(chars().vocab_size(), 128);
  const LmScorer scorer(lm, chars());
  const double ln_v = std::log(static_cast<double>(chars().vocab_size()));
  for (const std::string text : std::vector<std::string>{"a", "Hallo", "Die Enten tanzen.", std::string(300, 'x')}) {
    CHECK(score_sequence(scorer, text) == doctest::Approx(-static_cast<double>(text.size()) * ln_v).epsilon(1e-12));
  }
  CHECK_THROWS_AS(score_sequence(scorer, ""), EvalError);
}

TEST_CASE("single token text scores its first-step probability") {
  const FunctionLm lm(chars().vocab_size(), 16, two_symbol);
  const LmScorer scorer(lm, chars());
  CHECK(score_sequence(scorer, "a") == doctest::Approx(std::log(p_a_given(0, 1))).epsilon(1e-14));
  CHECK(score_sequence(scorer, "b") == doctest::Approx(std::log(1.0 - p_a_given(0, 1))).epsilon(1e-14));
  CHECK(score_sequence(scorer, "c") == kNegInf);
}

TEST_CASE("scores follow the probability tree of a two-symbol model") {
  const FunctionLm lm(chars().vocab_size(), 16, two_symbol);
  const LmScorer scorer(lm, chars());
  for (std::size_t n = 1; n <= 8; ++n) {
    double mass = 0.0;
    for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
      std::string s;
      for (std::size_t i = 0; i < n; ++i) s.push_back(bits >> i & 1 ? 'a' : 'b');
      const double expected = brute_force_prob(s);
      CHECK(std::abs(score_sequence(scorer, s) - std::log(expected)) < 1e-10);
      mass += std::exp(score_sequence(scorer, s));
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("context conditions the target without being scored") {
  const FunctionLm lm(chars().vocab_size(), 16, two_symbol);
  const LmScorer scorer(lm, chars());
  // P(target | context) = P(context + target) / P(context)
  for (const auto& [ctx, tgt] : std::vector<std::pair<std::string, std::string>>{{"ab", "ba"}, {"aaa", "b"}, {"b", "abab"}}) {
    const double joint = score_sequence(scorer, ctx + tgt);
    const double prefix = score_sequence(scorer, ctx);
    const Score s = scorer.score(ctx, tgt);
    CHECK(s.logprob == doctest::Approx(joint - prefix).epsilon(1e-12));
    CHECK_FALSE(s.truncated);
  }
}

TEST_CASE("long contexts are cut from the left and flagged") {
  const FunctionLm lm(chars().vocab_size(), 8, bigram);
  const LmScorer scorer(lm, chars());
  const Score s = scorer.score("abcdefghijkl", "mn");
  CHECK(s.truncated);
  CHECK(s.logprob == doctest::Approx(2 * std::log(0.9)).epsilon(1e-12));
  CHECK_FALSE(scorer.score("abcde", "fg").truncated);
}

TEST_CASE("targets longer than the window are scored in overlapping windows") {
  const FunctionLm lm(chars().vocab_size(), 8, bigram);
  const double miss = std::log(0.1 / static_cast<double>(chars().vocab_size() - 1));
  for (std::size_t overlap : {1, 3, 7, 64}) {
    const LmScorer scorer(lm, chars(), overlap);
    const std::string text = "abcdefghijklmnopqrstuvwxyzabcdefghij";
    // first char follows bos, every other step follows its predecessor except z->a
    const double expected = (id_of('a') == chars().bos() + 1 ? std::log(0.9) : miss) +
                            34 * std::log(0.9) + miss;
    CHECK(score_sequence(scorer, text) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("constant scores make every benchmark exactly one half") {
  const ConstantScorer scorer(-3.0);
  const auto pairs = pairs_of({{"Der Hund bellt.", "Der Hund bellen."}, {"Die Hunde bellen.", "Die Hunde bellt."}});
  const auto r = eval_minimal_pairs(scorer, pairs, kClams, 0.5);
  REQUIRE(r.size() == 1);
  CHECK(r[0].accuracy == 0.5);
  CHECK(r[0].ties == 2);

  const std::vector<WordPair> words{{"bremsen", "promsen", "Wir", "Der Ball"}, {"Hund", "Hond", "Der", "Ein"}};
  CHECK(eval_lexical_decision(scorer, words, 1.0).accuracy == 0.5);
  CHECK(eval_surprisal(scorer, words, ContextMode::plausible, 1.0).accuracy == 0.5);
  CHECK(eval_surprisal(scorer, words, ContextMode::implausible, 1.0).accuracy == 0.5);
}

TEST_CASE("uniform model gives one half on length-matched pairs everywhere") {
  const UniformLm lm(chars().vocab_size(), 128);
  const LmScorer scorer(lm, chars());
  const auto pairs = pairs_of({{"Das Kind lacht.", "Das Kind lachn."}, {"Die Kinder laufen.", "Die Kinder laufet."}});
  for (auto mode : {PairScoring::full_sentence, PairScoring::target_only}) {
    CHECK(eval_minimal_pairs(scorer, pairs, kClams, 0.1, mode)[0].accuracy == 0.5);
  }
  BenchmarkSet set;
  set.agreement = pairs;
  set.xcomps = pairs_of({{"Der Hund bellt.", "Der Baum bellt."}}, "XCOMPS");
  set.words = {{"bremsen", "promsen", "Wir wollen", "Der Ball"}};
  for (const auto& res : evaluate_benchmarks(scorer, set, ScoringOptions{}, 0.2)) {
    CHECK(res.accuracy == 0.5);
    CHECK(res.fraction == 0.2);
  }
}

TEST_CASE("an unseen character in the bad sentence gives accuracy one") {
  auto no_q = [](std::span<const TokenId>) {
    const auto v = static_cast<Eigen::Index>(chars().vocab_size());
    Eigen::VectorXd row = Eigen::VectorXd::Constant(v, -std::log(static_cast<double>(v - 1)));
    row(id_of('q')) = kNegInf;
    return row;
  };
  const FunctionLm lm(chars().vocab_size(), 64, no_q);
  const LmScorer scorer(lm, chars());
  const auto pairs = pairs_of({{"Der Hund bellt.", "Der Hund bellq."}, {"Die Katze", "Die Katqe"}});
  CHECK(eval_minimal_pairs(scorer, pairs, kClams, 1.0)[0].accuracy == 1.0);
}

TEST_CASE("results are grouped by phenomenon and ties count one half") {
  // higher score for longer strings
  class Length final : public Scorer {
   public:
    Score score(std::string_view, std::string_view t) const override { return {static_cast<double>(t.size()), false}; }
  } scorer;
  std::vector<MinimalPair> pairs = pairs_of({{"aaa", "aa"}, {"aa", "bb"}, {"a", "aa"}}, "A");
  const auto more = pairs_of({{"xx", "x"}}, "B");
  pairs.insert(pairs.begin() + 1, more.begin(), more.end());
  const auto r = eval_minimal_pairs(scorer, pairs, kClams, 0.3);
  REQUIRE(r.size() == 2);
  CHECK(r[0].phenomenon == "A");
  CHECK(r[0].pairs == 3);
  CHECK(r[0].ties == 1);
  CHECK(r[0].accuracy == doctest::Approx(1.5 / 3.0));
  CHECK(r[1].phenomenon == "B");
  CHECK(r[1].accuracy == 1.0);

  CHECK_THROWS_AS(eval_minimal_pairs(scorer, {}, kClams, 0.3), EvalError);
  CHECK_THROWS_AS(eval_lexical_decision(scorer, {}, 0.3), EvalError);
  CHECK_THROWS_AS(eval_surprisal(scorer, {}, ContextMode::plausible, 0.3), EvalError);
}

TEST_CASE("accuracy identity holds for random scorers") {
  class Noise final : public Scorer {
   public:
    Score score(std::string_view c, std::string_view t) const override {
      const auto h = std::hash<std::string>{}(std::string(c) + "|" + std::string(t));
      return {static_cast<double>(h % 7), false};
    }
  } scorer;
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MinimalPair> pairs;
    const std::size_t n = 1 + rng.index(40);
    std::size_t wins = 0, ties = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const MinimalPair p{"i", "X", "g" + std::to_string(rng.index(1000)), "b" + std::to_string(rng.index(1000))};
      const double g = scorer.score("", p.good).logprob, b = scorer.score("", p.bad).logprob;
      wins += g > b;
      ties += g == b;
      pairs.push_back(p);
    }
    const auto r = eval_minimal_pairs(scorer, pairs, kClams, 1.0)[0];
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.ties == ties);
    CHECK(r.accuracy * static_cast<double>(n) == doctest::Approx(static_cast<double>(wins) + 0.5 * ties));
  }
}

TEST_CASE("empty contexts reduce surprisal to lexical decision") {
  const FunctionLm lm(chars().vocab_size(), 64, bigram);
  const LmScorer scorer(lm, chars());
  const std::vector<WordPair> words{{"bremsen", "promsen", "", "x"}, {"abcd", "abce", "", "y"}, {"Hund", "Hond", "", "z"}};
  const auto lex = eval_lexical_decision(scorer, words, 1.0);
  const auto sur = eval_surprisal(scorer, words, ContextMode::plausible, 1.0);
  CHECK(sur.accuracy == lex.accuracy);
  CHECK(lex.accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("split_pair cuts at the last shared space") {
  auto [ctx, t] = split_pair("Die Enten tanzen.", "Die Enten tanzt.");
  CHECK(ctx == "Die Enten");
  CHECK(t.first == " tanzen.");
  CHECK(t.second == " tanzt.");
  std::tie(ctx, t) = split_pair("Hund", "Katze");
  CHECK(ctx.empty());
  CHECK(t.first == "Hund");
  std::tie(ctx, t) = split_pair("Der Mann, der dort steht, lacht.", "Der Mann, der dort steht, lachen.");
  CHECK(ctx == "Der Mann, der dort steht,");
}

TEST_CASE("nonce generation keeps the promsen shape for bremsen") {
  const Lexicon lex({"bremsen", "prüfen", "Sonne", "kommen", "Rose", "schreiben", "Brot"});
  const Validator v({"bremsen", "prüfen", "Sonne", "kommen", "Rose", "schreiben", "Brot"});
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto nonce = generate_nonce("bremsen", lex, seed);
    CHECK(utf8::decode(nonce).size() == 7);
    CHECK(nonce != "bremsen");
    CHECK_MESSAGE(v.problem("bremsen", nonce).empty(), nonce << ": " << v.problem("bremsen", nonce));
    CHECK(generate_nonce("bremsen", lex, seed) == nonce);
    seen.insert(nonce);
  }
  CHECK(seen.size() > 1);
  CHECK_THROWS_AS(generate_nonce("Fahrrad", lex, 1), EvalError);
  CHECK_THROWS_AS(generate_nonce("ab", Lexicon({"ab"}), 1), EvalError);
}

TEST_CASE("a hundred nonces from the grammar lexicon pass the independent validator") {
  const auto forms = synth::Grammar(1).word_forms();
  const Lexicon lex(forms);
  const Validator v(forms);
  std::vector<std::string> candidates;
  for (const auto& w : forms) {
    if (utf8::decode(w).size() >= 4) candidates.push_back(w);
  }
  Rng rng(23);
  rng.shuffle(candidates);
  std::size_t checked = 0;
  for (const auto& w : candidates) {
    if (checked == 100) break;
    std::string nonce;
    try {
      nonce = generate_nonce(w, lex, checked);
    } catch (const EvalError&) {
      continue;
    }
    ++checked;
    CHECK_MESSAGE(v.problem(w, nonce).empty(), w << " -> " << nonce << ": " << v.problem(w, nonce));
    CHECK(check_nonce(w, nonce, lex).ok);
  }
  CHECK(checked == 100);
}

TEST_CASE("word pairs are drawn from the sentences") {
  const std::vector<std::string> sentences{"Der Hund bellt laut.", "Die Katze schläft heute.",
                                           "Wir spielen draußen im Garten.", "Mama kocht Suppe."};
  const std::vector<std::string> forms{"Der",   "Hund",    "bellt",   "laut", "Die",    "Katze", "schläft", "heute",
                                       "Wir",   "spielen", "draußen", "im",   "Garten", "Mama",  "kocht",   "Suppe"};
  const Lexicon lex(forms);
  const Validator v(forms);
  std::vector<std::string> skipped;
  const auto pairs = build_word_pairs(sentences, lex, 50, 4, &skipped);
  CHECK(pairs.size() + skipped.size() >= 1);
  std::set<std::string> reals;
  for (const auto& p : pairs) {
    CHECK(v.problem(p.real, p.nonce).empty());
    CHECK(reals.insert(p.real).second);
    const bool attested = std::any_of(sentences.begin(), sentences.end(), [&](const std::string& s) {
      return s.rfind(p.plausible_context + " " + p.real, 0) == 0;
    });
    CHECK_MESSAGE(attested, p.real << " after '" << p.plausible_context << "'");
    CHECK(p.implausible_context != p.plausible_context);
  }
  CHECK(build_word_pairs(sentences, lex, 50, 4).size() == pairs.size());
  const auto again = build_word_pairs(sentences, lex, 50, 4);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again[i].nonce == pairs[i].nonce);
}

TEST_CASE("pair files and result tables round trip") {
  const auto dir = scratch("probing-io");
  const auto pairs = pairs_of({{"Der Hund bellt.", "Der Hund bellen."}, {"Die Hunde bellen.", "Die Hunde bellt."}});
  {
    std::ofstream(dir / "pairs.tsv") << minimal_pairs_tsv(pairs);
  }
  const auto back = load_minimal_pairs(dir / "pairs.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].good == "Die Hunde bellen.");
  CHECK(back[1].phenomenon == "Simple Agreement");

  const std::vector<WordPair> words{{"bremsen", "promsen", "Wir wollen", "Der Ball"}};
  {
    std::ofstream(dir / "words.tsv") << word_pairs_tsv(words);
  }
  const auto wb = load_word_pairs(dir / "words.tsv");
  REQUIRE(wb.size() == 1);
  CHECK(wb[0].implausible_context == "Der Ball");

  {
    std::ofstream(dir / "bad.tsv") << "id\tphenomenon\tgood\tbad\nx\tA\tonly three\n";
  }
  CHECK_THROWS_AS(load_minimal_pairs(dir / "bad.tsv"), DataError);
  {
    std::ofstream(dir / "same.tsv") << "x\tA\tsame\tsame\n";
  }
  CHECK_THROWS_AS(load_minimal_pairs(dir / "same.tsv"), DataError);

  std::vector<EvalResult> results{{"clams", "Simple Agreement", 0.01, 0.525, 40, 1, 0},
                                  {"xcomps", "XCOMPS", 1.0, 0.8125, 1000, 0, 0}};
  const std::string csv = results_csv(results);
  CHECK(csv.rfind("benchmark,phenomenon,frac,accuracy,pairs,ties\n", 0) == 0);
  const auto parsed = parse_results_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].phenomenon == "Simple Agreement");
  CHECK(parsed[0].accuracy == 0.525);
  CHECK(parsed[1].pairs == 1000);
  CHECK(results_csv(parsed) == csv);
}

TEST_CASE("sampling with replacement is seeded") {
  const auto pairs = pairs_of({{"a", "b"}, {"c", "d"}, {"e", "f"}});
  const auto s = sample_with_replacement(pairs, 1000, 9);
  CHECK(s.size() == 1000);
  std::set<std::string> ids;
  for (const auto& p : s) ids.insert(p.id);
  CHECK(ids.size() == 3);
  const auto t = sample_with_replacement(pairs, 1000, 9);
  CHECK(std::equal(s.begin(), s.end(), t.begin(), [](const auto& x, const auto& y) { return x.id == y.id; }));
  CHECK_THROWS_AS(sample_with_replacement({}, 3, 1), EvalError);
}

TEST_CASE("word-level benchmark names") {
  CHECK(is_word_level(kLexicalDecision));
  CHECK(is_word_level(kSurprisal));
  CHECK(is_word_level(kAntisurprisal));
  CHECK_FALSE(is_word_level(kClams));
  CHECK_FALSE(is_word_level(kXcomps));
}
