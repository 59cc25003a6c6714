// cxnlm-synth: writes the synthetic German corpus and benchmark fixtures.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cxnlm/corpus.hpp"
#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/probing.hpp"
#include "cxnlm/synth.hpp"

namespace fs = std::filesystem;
using namespace cxnlm;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic German corpus and benchmark generator"};
  app.require_subcommand(1);

  fs::path corpus_out;
  std::size_t per_label = 8000;
  std::uint64_t corpus_seed = 1;
  auto* corpus = app.add_subcommand("corpus", "Annotated CoNLL-U subcorpora plus registry.json");
  corpus->add_option("--out", corpus_out, "Output directory")->required();
  corpus->add_option("--per-label", per_label, "Utterances per construction label");
  corpus->add_option("--seed", corpus_seed, "Generator seed");

  fs::path bench_out;
  std::uint64_t bench_seed = 7;
  synth::BenchmarkSizes sizes;
  auto* bench = app.add_subcommand("benchmarks", "agreement.tsv, word_pairs.tsv and xcomps.tsv");
  bench->add_option("--out", bench_out, "Output directory")->required();
  bench->add_option("--seed", bench_seed, "Generator seed");
  bench->add_option("--agreement", sizes.agreement, "Pairs per agreement phenomenon");
  bench->add_option("--words", sizes.words, "Real/nonce word pairs");
  bench->add_option("--xcomps", sizes.xcomps, "Concept-property pairs");

  fs::path lexicon_out;
  auto* lexicon = app.add_subcommand("lexicon", "Every word form the grammar emits, one per line");
  lexicon->add_option("--out", lexicon_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*corpus) std::cout << summary_csv(synth::write_corpus(corpus_out, per_label, corpus_seed).summary());
    if (*bench) {
      const auto skipped = synth::write_benchmarks(bench_out, bench_seed, sizes);
      std::cout << "agreement pairs: " << sizes.agreement * synth::agreement_phenomena().size() << "\n"
                << "word pairs: " << load_word_pairs(bench_out / "word_pairs.tsv").size() << " (" << skipped.size()
                << " words without a nonce)\n"
                << "xcomps pairs: " << sizes.xcomps << "\n";
    }
    if (*lexicon) {
      std::string text;
      for (const auto& w : synth::Grammar(0).word_forms()) text += w + "\n";
      io::write_file(lexicon_out, text);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
