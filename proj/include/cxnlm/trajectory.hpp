#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cxnlm/probing.hpp"
#include "cxnlm/tokenizer.hpp"

namespace cxnlm {

struct TrajectoryPoint {
  std::string dataset;    // e.g. "cds"
  std::string tokenizer;  // "char" or "bpe"
  std::string benchmark;
  std::string phenomenon;
  double fraction = 0.0;
  double accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t ties = 0;
};

struct CheckpointRef {
  double fraction = 0.0;
  std::filesystem::path path;
};

// The 19 scheduled checkpoints of a run directory, ordered by fraction.
// Throws EvalError naming the fraction of the first missing file.
std::vector<CheckpointRef> list_checkpoints(const std::filesystem::path& dir);

std::vector<TrajectoryPoint> to_points(const std::vector<EvalResult>& results, const std::string& dataset,
                                       const std::string& tokenizer);

// Scores every checkpoint on every benchmark. Checkpoints must be ordered by
// fraction; a missing file raises EvalError naming its fraction.
std::vector<EvalResult> evaluate_checkpoints(const std::vector<CheckpointRef>& checkpoints, const Tokenizer& tokenizer,
                                             const BenchmarkSet& benchmarks, const ScoringOptions& options);

std::vector<TrajectoryPoint> evaluate_run(const std::vector<CheckpointRef>& checkpoints, const Tokenizer& tokenizer,
                                          const BenchmarkSet& benchmarks, const ScoringOptions& options,
                                          const std::string& dataset);

// CSV `dataset,tokenizer,benchmark,phenomenon,frac,accuracy,pairs,ties`.
std::string trajectories_csv(const std::vector<TrajectoryPoint>& points);
std::vector<TrajectoryPoint> parse_trajectories_csv(std::string_view csv);

// One panel per benchmark/phenomenon, one series per dataset (and tokenizer),
// fraction on a log-scaled x axis, accuracy on y over [0.4, 1] widened to
// fit lower values.
std::string trajectories_svg(const std::vector<TrajectoryPoint>& points);

// Horizontal pixel position of `fraction` inside a panel of the figure.
double log_x(double fraction, double lo, double hi, double left, double width);

// Writes trajectories.csv and trajectories.svg into `out_dir` from the same
// points. Throws EvalError when `points` is empty.
void render_trajectories(const std::vector<TrajectoryPoint>& points, const std::filesystem::path& out_dir);

struct Divergence {
  std::string benchmark;
  std::string phenomenon;
  double max_abs_diff = 0.0;
  double mean_abs_diff = 0.0;
  std::size_t points = 0;
};

// Per benchmark/phenomenon max and mean absolute accuracy difference across
// fractions. Throws EvalError unless both runs cover the same grid.
std::vector<Divergence> compare_runs(const std::vector<TrajectoryPoint>& a, const std::vector<TrajectoryPoint>& b);
// Mean absolute difference over all word-level points.
double word_level_divergence(const std::vector<Divergence>& divergences);
std::string divergence_csv(const std::vector<Divergence>& divergences);

}  // namespace cxnlm
