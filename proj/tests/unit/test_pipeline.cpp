#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/pipeline.hpp"
#include "cxnlm/synth.hpp"
#include "cxnlm/trajectory.hpp"

using namespace cxnlm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cxnlm-unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Corpus and benchmarks shared by every pipeline test, written once.
const fs::path& inputs() {
  static const fs::path dir = [] {
    const fs::path d = scratch("pipeline-inputs");
    synth::write_corpus(d / "corpus", 300, 1);
    synth::write_benchmarks(d / "bench", 7, {5, 20, 10});
    return d;
  }();
  return dir;
}

json tiny_manifest_json(const std::string& out) {
  return {
      {"name", "cds"},
      {"corpus", {{"registry", "corpus/registry.json"}}},
      {"composition",
       {{"target", "table3-cds"}, {"budget_words", 3000}, {"seed", 1}, {"tolerance", 0.005}, {"holdout_fraction", 0.05}}},
      {"tokenizer", {{"mode", "char"}, {"bpe_vocab_size", 500}}},
      {"model",
       {{"hidden_size", 16},
        {"intermediate_size", 16},
        {"num_layers", 1},
        {"num_heads", 2},
        {"context_length", 32},
        {"norm_epsilon", 1e-6},
        {"rope_base", 10000.0}}},
      {"train",
       {{"learning_rate", 0.003},
        {"warmup_fraction", 0.01},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"adam_epsilon", 1e-8},
        {"weight_decay", 0.0},
        {"grad_clip", 1.0},
        {"batch_size", 4},
        {"epochs", 1},
        {"seed", 1},
        {"init_stddev", 0.02},
        {"shards", 1},
        {"threads", 1}}},
      {"benchmarks",
       {{"agreement", "bench/agreement.tsv"},
        {"words", "bench/word_pairs.tsv"},
        {"xcomps", "bench/xcomps.tsv"},
        {"agreement_scoring", "full_sentence"},
        {"xcomps_sample", 50},
        {"xcomps_seed", 3}}},
      {"output_dir", out},
  };
}

ExperimentManifest tiny_manifest(const std::string& out) {
  return ExperimentManifest::from_json(tiny_manifest_json(out), inputs());
}

std::map<std::string, std::string> file_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = io::sha256_file(e.path());
  }
  return out;
}

const std::vector<std::string> kStages{"compose", "tokenizer", "train", "eval", "report"};

}  // namespace

TEST_CASE("sha256 of known strings") {
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest parsing") {
  const auto m = tiny_manifest("runs/a");
  CHECK(m.registry == inputs() / "corpus/registry.json");
  CHECK(m.output_dir == inputs() / "runs/a");
  CHECK(m.budget_words == 3000);
  CHECK(m.train.batch_size == 4);
  CHECK(m.scoring.xcomps_sample == 50);
  CHECK_NOTHROW(m.validate());

  const auto again = ExperimentManifest::from_json(m.to_json());
  CHECK(again.to_json() == m.to_json());

  for (const char* key : {"name", "composition", "output_dir"}) {
    auto j = tiny_manifest_json("x");
    j.erase(key);
    CHECK_THROWS_AS(ExperimentManifest::from_json(j, inputs()), DataError);
  }
  auto j = tiny_manifest_json("x");
  j["train"].erase("learning_rate");
  CHECK_THROWS_AS(ExperimentManifest::from_json(j, inputs()), DataError);
  j = tiny_manifest_json("x");
  j["tokenizer"]["mode"] = "words";
  CHECK_THROWS_AS(ExperimentManifest::from_json(j, inputs()), DataError);

  auto missing = m;
  missing.agreement = inputs() / "bench/none.tsv";
  CHECK_THROWS_AS(missing.validate(), DataError);
  auto zero = m;
  zero.budget_words = 0;
  CHECK_THROWS_AS(zero.validate(), DataError);
}

TEST_CASE("end-to-end run, cache and determinism") {
  const auto m = tiny_manifest((scratch("pipeline-run") / "out").string());
  std::ostringstream log;
  const auto first = run_pipeline(m, {false, &log});
  CHECK(first.stages_run == kStages);
  CHECK(first.stages_skipped.empty());
  CHECK(log.str().find("[cds] train") != std::string::npos);

  for (const char* rel : {"dataset/train.txt", "dataset/heldout.txt", "dataset/manifest.json", "dataset/profile.csv",
                          "tokenizer/tokenizer.json", "checkpoints/ckpt_0.01.bin", "checkpoints/ckpt_1.00.bin",
                          "train/loss_log.csv", "eval/results.csv", "report/trajectories.csv",
                          "report/trajectories.svg", "summary.json", "stages.json", "experiment.json"}) {
    CHECK_MESSAGE(fs::exists(m.output_dir / rel), rel);
  }

  const json summary = json::parse(io::read_file(m.output_dir / "summary.json"));
  CHECK(summary["dataset_hash"] == first.dataset_hash);
  CHECK(summary["artifacts"].size() == first.artifacts.size());
  for (const auto& [rel, sha] : first.artifacts) CHECK(io::sha256_file(m.output_dir / rel) == sha);
  CHECK(first.artifacts.count("checkpoints/ckpt_0.50.bin") == 1);

  // 7 agreement phenomena, xcomps and the three word-level tests at 19 checkpoints
  const auto points = load_run_points(m);
  CHECK(points.size() == 11 * 19);
  std::set<std::string> panels;
  for (const auto& p : points) panels.insert(p.benchmark + "/" + p.phenomenon);
  CHECK(panels.size() == 11);

  const auto before = file_hashes(m.output_dir);
  const auto cached = run_pipeline(m);
  CHECK(cached.stages_run.empty());
  CHECK(cached.stages_skipped == kStages);
  CHECK(cached.artifacts == first.artifacts);
  CHECK(file_hashes(m.output_dir) == before);

  const auto forced = run_pipeline(m, {true, nullptr});
  CHECK(forced.stages_run == kStages);
  CHECK(forced.artifacts == first.artifacts);

  // a damaged output reruns its stage; identical checkpoints leave later stages cached
  fs::remove(m.output_dir / "checkpoints/ckpt_0.30.bin");
  const auto repaired = run_pipeline(m);
  CHECK(repaired.stages_run == std::vector<std::string>{"train"});
  CHECK(repaired.artifacts == first.artifacts);

  // a new init seed keeps the dataset
  auto reseeded = m;
  reseeded.train.seed = 2;
  reseeded.output_dir = m.output_dir.parent_path() / "seed2";
  const auto other = run_pipeline(reseeded);
  CHECK(other.dataset_hash == first.dataset_hash);
  CHECK(other.artifacts.at("dataset/train.txt") == first.artifacts.at("dataset/train.txt"));
  CHECK(other.artifacts.at("checkpoints/ckpt_1.00.bin") != first.artifacts.at("checkpoints/ckpt_1.00.bin"));
}

TEST_CASE("failures name their stage") {
  const auto dir = scratch("pipeline-fail");
  auto m = tiny_manifest((dir / "out").string());

  m.agreement = dir / "broken.tsv";
  io::write_file(m.agreement, "id\tphenomenon\tgood\tbad\nx\tSimple Agreement\tonly three\n");
  try {
    run_pipeline(m);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "eval");
  }

  m = tiny_manifest((dir / "out2").string());
  m.budget_words = 10'000'000;
  try {
    run_pipeline(m);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "compose");
  }

  m = tiny_manifest((dir / "out3").string());
  m.train.batch_size = 100000;
  try {
    run_pipeline(m);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "train");
  }

  m = tiny_manifest((dir / "out4").string());
  m.registry = dir / "nowhere.json";
  try {
    run_pipeline(m);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "manifest");
  }
}

TEST_CASE("replicate variants") {
  const auto base = tiny_manifest("base");
  const auto root = scratch("pipeline-replicate");
  const auto v0 = replicate_variant(base, 0, ReplicateMode::init_seed, root);
  const auto v2 = replicate_variant(base, 2, ReplicateMode::init_seed, root);
  CHECK(v0.train.seed == base.train.seed);
  CHECK(v2.train.seed == base.train.seed + 2);
  CHECK(v2.composition_seed == base.composition_seed);
  CHECK(v2.output_dir == root / "run-2");
  const auto r1 = replicate_variant(base, 1, ReplicateMode::resample, root);
  CHECK(r1.composition_seed == base.composition_seed + 1);
  CHECK(r1.train.seed == base.train.seed);
  CHECK(replicate_mode_from_string("init") == ReplicateMode::init_seed);
  CHECK(to_string(ReplicateMode::resample) == "resample");
  CHECK_THROWS_AS(replicate_mode_from_string("other"), DataError);
  CHECK_THROWS_AS(replicate(base, 1, ReplicateMode::init_seed, root), DataError);

  const auto report = replicate(base, 2, ReplicateMode::init_seed, root);
  REQUIRE(report.runs.size() == 2);
  CHECK(report.runs[0].dataset_hash == report.runs[1].dataset_hash);
  REQUIRE(report.word_level.size() == 1);
  CHECK(report.word_level[0] >= 0.0);
  CHECK(report.word_level[0] <= 1.0);
  CHECK(fs::exists(root / "divergence.csv"));
  CHECK(fs::exists(root / "replicate.json"));

  const auto resampled = replicate(base, 2, ReplicateMode::resample, scratch("pipeline-resample"));
  CHECK(resampled.runs[0].dataset_hash != resampled.runs[1].dataset_hash);
}
