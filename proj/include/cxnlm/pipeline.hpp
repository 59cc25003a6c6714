#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxnlm/model.hpp"
#include "cxnlm/probing.hpp"
#include "cxnlm/tokenizer.hpp"
#include "cxnlm/trainer.hpp"
#include "cxnlm/trajectory.hpp"

namespace cxnlm {

// Everything one experiment needs. Relative paths resolve against the
// directory holding the manifest file.
struct ExperimentManifest {
  std::string name;  // dataset tag in reports, e.g. "cds"
  std::filesystem::path registry;
  std::string target;  // builtin name or CSV path
  std::size_t budget_words = 0;
  std::uint64_t composition_seed = 0;
  double tolerance = 0.005;
  double holdout_fraction = 0.05;
  TokenizerMode tokenizer = TokenizerMode::character;
  std::size_t bpe_vocab_size = 8000;
  ModelConfig model;  // vocab_size is taken from the trained tokenizer
  TrainConfig train;
  std::filesystem::path agreement;
  std::filesystem::path words;
  std::filesystem::path xcomps;
  ScoringOptions scoring;
  std::filesystem::path output_dir;

  // Every field is required except model.vocab_size and train.threads.
  static ExperimentManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentManifest load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Throws DataError when a referenced input file is missing or a value is
  // out of range.
  void validate() const;
};

// Benchmark files in a directory: agreement.tsv, word_pairs.tsv, xcomps.tsv.
BenchmarkSet load_benchmark_dir(const std::filesystem::path& dir);
BenchmarkSet load_benchmarks(const ExperimentManifest& manifest);

struct PipelineOptions {
  bool force = false;          // ignore the stage cache
  std::ostream* log = nullptr;  // progress lines
};

struct RunSummary {
  std::filesystem::path output_dir;
  std::string dataset_hash;
  std::map<std::string, std::string> artifacts;  // path relative to output_dir -> sha256
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_skipped;
};

// Stages: compose, tokenizer, train, eval, report. Each stage is skipped when
// its input hash matches stages.json and its outputs are intact. Writes
// summary.json with the content hash of every artifact. Any failure is
// rethrown as StageError carrying the stage name.
RunSummary run_pipeline(const ExperimentManifest& manifest, const PipelineOptions& options = {});

// Trajectory points recorded by a finished run.
std::vector<TrajectoryPoint> load_run_points(const ExperimentManifest& manifest);

enum class ReplicateMode { init_seed, resample };
ReplicateMode replicate_mode_from_string(std::string_view name);
std::string_view to_string(ReplicateMode mode);

// Manifest for variant `index`: index 0 is the manifest itself, others shift
// the init seed or the composition seed by `index` and write under
// `root/run-<index>`.
ExperimentManifest replicate_variant(const ExperimentManifest& base, std::size_t index, ReplicateMode mode,
                                     const std::filesystem::path& root);

struct ReplicateReport {
  std::vector<RunSummary> runs;
  std::vector<std::vector<Divergence>> divergences;  // run k against run 0, k >= 1
  std::vector<double> word_level;                    // same order
};

// Runs `n` variants under `root` and compares each against the first;
// writes divergence.csv (runs 0 and 1), divergence_0_<k>.csv for later runs
// and replicate.json. Throws DataError when n < 2.
ReplicateReport replicate(const ExperimentManifest& base, std::size_t n, ReplicateMode mode,
                          const std::filesystem::path& root, const PipelineOptions& options = {});

}  // namespace cxnlm
