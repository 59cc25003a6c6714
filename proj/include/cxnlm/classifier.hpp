#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cxnlm/corpus.hpp"

namespace cxnlm {

// Utterance-level construction categories.
enum class ConstructionLabel { FRA, QWH, QYN, COP, IMP, SPI, SPT, COM };

inline constexpr std::size_t kNumLabels = 8;
inline constexpr std::array<ConstructionLabel, kNumLabels> kAllLabels = {
    ConstructionLabel::FRA, ConstructionLabel::QWH, ConstructionLabel::QYN, ConstructionLabel::COP,
    ConstructionLabel::IMP, ConstructionLabel::SPI, ConstructionLabel::SPT, ConstructionLabel::COM};

std::string_view to_string(ConstructionLabel label);
std::optional<ConstructionLabel> label_from_string(std::string_view name);
inline std::size_t index_of(ConstructionLabel label) { return static_cast<std::size_t>(label); }

// Deterministic rule cascade over UPOS/morphology/dependency annotations:
//   FRA  no VERB or AUX token
//   QWH  question cue and a fronted interrogative (PronType=Int)
//   QYN  question cue and a finite, non-imperative verb in first position
//   IMP  first verb has Mood=Imp and only particles/adverbs precede it
//   COM  two or more lexical verbs (upos VERB)
//   COP  no lexical verb, an AUX with lemma sein/werden
//   SPT  the single lexical verb governs an accusative object
//   SPI  everything else
// The question cue is a terminal "?", or the absence of any terminal
// punctuation (unpunctuated transcripts). Throws ClassificationError on an
// empty utterance.
ConstructionLabel classify_utterance(const AnnotatedUtterance& u);

struct DistributionProfile {
  std::array<std::size_t, kNumLabels> counts{};
  std::array<double, kNumLabels> proportions{};
  std::size_t total = 0;
  // False for an empty input; proportions are then all zero and meaningless.
  bool defined = false;

  static DistributionProfile from_counts(const std::array<std::size_t, kNumLabels>& counts);
  double proportion(ConstructionLabel l) const { return proportions[index_of(l)]; }
  std::size_t count(ConstructionLabel l) const { return counts[index_of(l)]; }
};

DistributionProfile profile_corpus(const std::vector<AnnotatedUtterance>& utterances);
DistributionProfile profile_labels(const std::vector<ConstructionLabel>& labels);

// label,count,proportion rows (plus a total row).
std::string profile_csv(const DistributionProfile& profile);
std::string profile_pretty(const DistributionProfile& profile);

struct GoldExample {
  AnnotatedUtterance utterance;
  ConstructionLabel gold = ConstructionLabel::FRA;
};

struct GoldEvaluation {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  // confusion[gold][predicted]
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};
  std::vector<std::size_t> misclassified;  // indices into the gold set

  std::size_t trace() const;
};

GoldEvaluation evaluate_against_gold(const std::vector<GoldExample>& gold);

// Reads `gold_label<TAB>sent_id` lines and resolves the ids against the
// utterances of a CoNLL-U file.
std::vector<GoldExample> load_gold(const std::filesystem::path& tsv_path, const std::filesystem::path& conllu_path);

std::string confusion_csv(const GoldEvaluation& eval);

}  // namespace cxnlm
