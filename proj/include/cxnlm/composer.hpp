#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cxnlm/classifier.hpp"
#include "cxnlm/corpus.hpp"

namespace cxnlm {

struct DistributionSpec {
  std::string name;
  std::array<double, kNumLabels> target{};

  double fraction(ConstructionLabel l) const { return target[index_of(l)]; }
  // Throws DataError unless all fractions are >= 0 and sum to 1 within 1e-9.
  void validate() const;
};

// The three training-set compositions: "table3-cds", "table3-mix", "table3-pjg".
DistributionSpec builtin_target(std::string_view name);
bool is_builtin_target(std::string_view name);
// CSV with `label,fraction` rows; fractions may be given in percent (sum 100).
DistributionSpec load_target_csv(const std::filesystem::path& path);
// Builtin name or CSV path.
DistributionSpec resolve_target(const std::string& name_or_path, const std::filesystem::path& base = {});

using LabelPools = std::map<ConstructionLabel, std::vector<AnnotatedUtterance>>;

// Classifies every utterance and groups them by label.
LabelPools build_pools(const std::vector<AnnotatedUtterance>& utterances);

struct CompositionManifest {
  std::string target_name;
  std::array<double, kNumLabels> target{};
  std::array<double, kNumLabels> achieved{};
  std::array<std::size_t, kNumLabels> label_counts{};
  std::map<SubcorpusId, std::size_t> subcorpus_counts;
  std::size_t total_words = 0;
  std::size_t budget_words = 0;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::string provenance;  // "compose", or the split parameters and ":train"/":heldout"

  nlohmann::json to_json() const;
  static CompositionManifest from_json(const nlohmann::json& j);
};

struct ComposedDataset {
  std::vector<AnnotatedUtterance> utterances;
  std::vector<ConstructionLabel> labels;  // parallel to utterances
  CompositionManifest manifest;

  // One utterance per line, surface text.
  std::string training_text() const;
};

// Draws utterances without replacement until the word budget is reached.
// At every draw the label with the largest deficit against its target share
// is chosen; within a label the subcorpus with the largest deficit against
// its share of that label's pool supplies the next (seeded-shuffled) item.
// The utterance that would overshoot the budget ends the composition and is
// not included. Output order is a seeded shuffle.
// Errors (CompositionError): non-positive budget, missing pool for a label
// with positive target, budget below every candidate utterance, a pool too
// small for its estimated quota or exhausted mid-draw, achieved proportions
// outside `tolerance`.
ComposedDataset compose(const LabelPools& pools, const DistributionSpec& target, std::size_t budget_words,
                        std::uint64_t seed, double tolerance = 0.005);

struct HoldoutSplit {
  ComposedDataset train;
  ComposedDataset heldout;
};

// Label-stratified split; per-label holdout sizes are apportioned by largest
// remainder so the held-out total is round(n * holdout_fraction).
HoldoutSplit split_holdout(const ComposedDataset& ds, double holdout_fraction, std::uint64_t seed);

}  // namespace cxnlm
