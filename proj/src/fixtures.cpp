#include <filesystem>
#include <string>
#include <vector>

#include "cxnlm/io.hpp"
#include "cxnlm/random.hpp"
#include "cxnlm/synth.hpp"

namespace fs = std::filesystem;

namespace cxnlm::synth {

CorpusRegistry write_corpus(const fs::path& dir, std::size_t per_label, std::uint64_t seed) {
  fs::create_directories(dir);
  CorpusRegistry registry;
  std::vector<AnnotatedUtterance> speech, books;
  for (auto label : kAllLabels) {
    for (auto& u : generate(label, (per_label + 1) / 2, derive_seed(seed, 0), "speech")) speech.push_back(std::move(u));
    for (auto& u : generate(label, per_label / 2, derive_seed(seed, 1), "books")) books.push_back(std::move(u));
  }
  io::write_file(dir / "speech.conllu", serialize_conllu(speech));
  io::write_file(dir / "books.conllu", serialize_conllu(books));
  registry.add({"speech", "synthetic caregiver speech", SourceKind::talkbank, 0, "speech.conllu"}, std::move(speech));
  registry.add({"books", "synthetic children's books", SourceKind::gutenberg, 0, "books.conllu"}, std::move(books));
  io::write_file(dir / "registry.json", registry.manifest().dump(2) + "\n");
  return registry;
}

std::vector<std::string> write_benchmarks(const fs::path& dir, std::uint64_t seed, const BenchmarkSizes& sizes) {
  fs::create_directories(dir);
  io::write_file(dir / "agreement.tsv", minimal_pairs_tsv(agreement_pairs(sizes.agreement, seed)));
  io::write_file(dir / "xcomps.tsv", minimal_pairs_tsv(concept_pairs(sizes.xcomps, derive_seed(seed, 1))));

  // word pairs come from sentences of the constructions that carry content words
  Grammar grammar(derive_seed(seed, 2));
  const Lexicon lexicon(grammar.word_forms());
  std::vector<std::string> sentences;
  std::size_t k = 0;
  for (int round = 0; round < 60; ++round) {
    for (auto label : {ConstructionLabel::SPI, ConstructionLabel::SPT, ConstructionLabel::COP, ConstructionLabel::COM,
                       ConstructionLabel::QYN}) {
      sentences.push_back(grammar.utterance(label, "w" + std::to_string(k++)).text);
    }
  }
  std::vector<std::string> skipped;
  const auto pairs = build_word_pairs(sentences, lexicon, sizes.words, derive_seed(seed, 3), &skipped);
  io::write_file(dir / "word_pairs.tsv", word_pairs_tsv(pairs));
  return skipped;
}

}  // namespace cxnlm::synth
