#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cxnlm/classifier.hpp"
#include "cxnlm/corpus.hpp"
#include "cxnlm/probing.hpp"

// A small generative grammar of German child-directed-style utterances with
// full UD-style annotation (UPOS, features, heads, relations). Everything is
// deterministic in the seed; it supplies test corpora, classifier pools and
// benchmark fixtures in place of licensed corpora.
namespace cxnlm::synth {

class Grammar {
 public:
  explicit Grammar(std::uint64_t seed);
  ~Grammar();
  Grammar(Grammar&&) noexcept;
  Grammar& operator=(Grammar&&) noexcept;

  // One utterance of the requested construction; `id` becomes its sent_id.
  AnnotatedUtterance utterance(ConstructionLabel label, const std::string& id = "");

  // Every surface word form the grammar can emit (case-sensitive, no punctuation).
  std::vector<std::string> word_forms() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// `n` utterances of one construction, ids "<prefix>-<label>-<k>".
std::vector<AnnotatedUtterance> generate(ConstructionLabel label, std::size_t n, std::uint64_t seed,
                                         const SubcorpusId& subcorpus);

// Utterances mixed by `weights` (indexed like kAllLabels) until `target_words`
// words are reached.
std::vector<AnnotatedUtterance> generate_mixed(const std::array<double, kNumLabels>& weights,
                                               std::size_t target_words, std::uint64_t seed,
                                               const SubcorpusId& subcorpus);

// Subject-verb agreement pairs for the seven phenomena, `per_phenomenon`
// each, half with singular and half with plural subjects.
std::vector<MinimalPair> agreement_pairs(std::size_t per_phenomenon, std::uint64_t seed);
inline const std::vector<std::string>& agreement_phenomena() {
  static const std::vector<std::string> names{"Simple Agreement",
                                              "Across a Prepositional Phrase",
                                              "Across a Subject Relative Clause",
                                              "Short Verb Phrase Coordination",
                                              "Long Verb Phrase Coordination",
                                              "Across Object Relative Clause",
                                              "Within Object Relative Clause"};
  return names;
}

// Conceptual-property pairs ("Ein Hund kann bellen." / "Ein Stein kann bellen.").
std::vector<MinimalPair> concept_pairs(std::size_t n, std::uint64_t seed);

// Writes speech.conllu, books.conllu and registry.json into `dir`. Each label
// contributes `per_label` utterances, split evenly between the two files.
CorpusRegistry write_corpus(const std::filesystem::path& dir, std::size_t per_label, std::uint64_t seed);

struct BenchmarkSizes {
  std::size_t agreement = 200;  // per phenomenon
  std::size_t words = 200;
  std::size_t xcomps = 60;
};

// Writes agreement.tsv, word_pairs.tsv and xcomps.tsv into `dir`. Returns
// the words for which no nonce was found.
std::vector<std::string> write_benchmarks(const std::filesystem::path& dir, std::uint64_t seed,
                                          const BenchmarkSizes& sizes = {});

}  // namespace cxnlm::synth
