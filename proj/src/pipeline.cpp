#include "cxnlm/pipeline.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "cxnlm/checkpoint.hpp"
#include "cxnlm/classifier.hpp"
#include "cxnlm/composer.hpp"
#include "cxnlm/corpus.hpp"
#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/random.hpp"

namespace cxnlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError("manifest: missing '" + where + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw DataError("manifest: bad value for '" + where + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

PairScoring pair_scoring_from_string(const std::string& s) {
  if (s == "full_sentence") return PairScoring::full_sentence;
  if (s == "target_only") return PairScoring::target_only;
  throw DataError("manifest: unknown agreement scoring '" + s + "'");
}

std::string_view to_string(PairScoring s) { return s == PairScoring::full_sentence ? "full_sentence" : "target_only"; }

}  // namespace

ExperimentManifest ExperimentManifest::from_json(const json& j, const fs::path& base_dir) {
  ExperimentManifest m;
  m.name = get<std::string>(j, "name", "");
  m.registry = resolve(base_dir, get<std::string>(require(j, "corpus", ""), "registry", "corpus."));

  const auto& comp = require(j, "composition", "");
  const std::string target = get<std::string>(comp, "target", "composition.");
  m.target = is_builtin_target(target) ? target : resolve(base_dir, target).string();
  m.budget_words = get<std::size_t>(comp, "budget_words", "composition.");
  m.composition_seed = get<std::uint64_t>(comp, "seed", "composition.");
  m.tolerance = get<double>(comp, "tolerance", "composition.");
  m.holdout_fraction = get<double>(comp, "holdout_fraction", "composition.");

  const auto& tok = require(j, "tokenizer", "");
  try {
    m.tokenizer = tokenizer_mode_from_string(get<std::string>(tok, "mode", "tokenizer."));
  } catch (const TokenizerError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  m.bpe_vocab_size = get<std::size_t>(tok, "bpe_vocab_size", "tokenizer.");

  const auto& model = require(j, "model", "");
  for (const char* key : {"hidden_size", "intermediate_size", "num_layers", "num_heads", "context_length",
                          "norm_epsilon", "rope_base"}) {
    require(model, key, "model.");
  }
  m.model = ModelConfig::from_json(model);
  try {
    m.train = TrainConfig::from_json(require(j, "train", ""), true);
  } catch (const ModelError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: bad train value: ") + e.what());
  }

  const auto& b = require(j, "benchmarks", "");
  m.agreement = resolve(base_dir, get<std::string>(b, "agreement", "benchmarks."));
  m.words = resolve(base_dir, get<std::string>(b, "words", "benchmarks."));
  m.xcomps = resolve(base_dir, get<std::string>(b, "xcomps", "benchmarks."));
  m.scoring.agreement_scoring = pair_scoring_from_string(get<std::string>(b, "agreement_scoring", "benchmarks."));
  m.scoring.xcomps_sample = get<std::size_t>(b, "xcomps_sample", "benchmarks.");
  m.scoring.xcomps_seed = get<std::uint64_t>(b, "xcomps_seed", "benchmarks.");

  m.output_dir = resolve(base_dir, get<std::string>(j, "output_dir", ""));
  return m;
}

ExperimentManifest ExperimentManifest::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentManifest::to_json() const {
  json model_j = model.to_json();
  model_j.erase("vocab_size");
  return {{"name", name},
          {"corpus", {{"registry", registry.string()}}},
          {"composition",
           {{"target", target},
            {"budget_words", budget_words},
            {"seed", composition_seed},
            {"tolerance", tolerance},
            {"holdout_fraction", holdout_fraction}}},
          {"tokenizer", {{"mode", std::string(cxnlm::to_string(tokenizer))}, {"bpe_vocab_size", bpe_vocab_size}}},
          {"model", model_j},
          {"train", train.to_json()},
          {"benchmarks",
           {{"agreement", agreement.string()},
            {"words", words.string()},
            {"xcomps", xcomps.string()},
            {"agreement_scoring", std::string(to_string(scoring.agreement_scoring))},
            {"xcomps_sample", scoring.xcomps_sample},
            {"xcomps_seed", scoring.xcomps_seed}}},
          {"output_dir", output_dir.string()}};
}

void ExperimentManifest::validate() const {
  if (name.empty()) throw DataError("manifest: name is empty");
  for (const auto& [what, path] : {std::pair<const char*, const fs::path*>{"corpus registry", &registry},
                                   {"agreement benchmark", &agreement},
                                   {"word-pair benchmark", &words},
                                   {"xcomps benchmark", &xcomps}}) {
    if (!fs::exists(*path)) throw DataError(std::string("manifest: ") + what + " not found: " + path->string());
  }
  if (!is_builtin_target(target) && !fs::exists(target)) {
    throw DataError("manifest: target is neither a builtin nor an existing file: " + target);
  }
  if (budget_words == 0) throw DataError("manifest: budget_words must be positive");
  if (!(tolerance > 0.0)) throw DataError("manifest: tolerance must be positive");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw DataError("manifest: holdout_fraction must lie in (0, 1)");
  }
  if (output_dir.empty()) throw DataError("manifest: output_dir is empty");
  try {
    train.validate();
    ModelConfig probe = model;
    probe.vocab_size = 2;
    probe.validate();
  } catch (const ModelError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

BenchmarkSet load_benchmark_dir(const fs::path& dir) {
  return {load_minimal_pairs(dir / "agreement.tsv"), load_word_pairs(dir / "word_pairs.tsv"),
          load_minimal_pairs(dir / "xcomps.tsv")};
}

BenchmarkSet load_benchmarks(const ExperimentManifest& m) {
  return {load_minimal_pairs(m.agreement), load_word_pairs(m.words), load_minimal_pairs(m.xcomps)};
}

namespace {

class Runner {
 public:
  Runner(const ExperimentManifest& m, const PipelineOptions& options)
      : m_(m), options_(options), out_(m.output_dir), cache_path_(m.output_dir / "stages.json") {
    summary_.output_dir = out_;
    if (fs::exists(cache_path_) && !options.force) {
      try {
        cache_ = json::parse(io::read_file(cache_path_));
      } catch (const json::exception&) {
        cache_ = json::object();
      }
    }
    if (!cache_.is_object()) cache_ = json::object();
  }

  std::string sha(const std::string& rel) const { return io::sha256_file(out_ / rel); }

  // Runs `body` unless the cached input hash matches and every recorded
  // output still has its recorded hash.
  template <class Body>
  void stage(const std::string& name, const json& inputs, Body&& body) {
    const std::string input_hash = io::sha256_hex(json{{"stage", name}, {"inputs", inputs}}.dump());
    if (fresh(name, input_hash)) {
      log(name + ": up to date");
      summary_.stages_skipped.push_back(name);
      for (const auto& [rel, h] : cache_[name]["outputs"].items()) summary_.artifacts[rel] = h.template get<std::string>();
      return;
    }
    log(name + ": running");
    cache_.erase(name);
    std::vector<std::string> outputs;
    try {
      outputs = body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    json rec = {{"input_hash", input_hash}, {"outputs", json::object()}};
    for (const auto& rel : outputs) {
      const std::string h = sha(rel);
      rec["outputs"][rel] = h;
      summary_.artifacts[rel] = h;
    }
    cache_[name] = rec;
    io::write_file(cache_path_, cache_.dump(2) + "\n");
    summary_.stages_run.push_back(name);
  }

  void log(const std::string& line) const {
    if (options_.log) *options_.log << "[" << m_.name << "] " << line << std::endl;
  }

  RunSummary& summary() { return summary_; }

 private:
  bool fresh(const std::string& name, const std::string& input_hash) const {
    if (!cache_.contains(name)) return false;
    const auto& rec = cache_.at(name);
    if (rec.value("input_hash", std::string{}) != input_hash) return false;
    for (const auto& [rel, h] : rec.at("outputs").items()) {
      if (!fs::exists(out_ / rel) || sha(rel) != h.get<std::string>()) return false;
    }
    return true;
  }

  const ExperimentManifest& m_;
  PipelineOptions options_;
  fs::path out_;
  fs::path cache_path_;
  json cache_;
  RunSummary summary_;
};

json registry_inputs(const fs::path& registry) {
  json j = {{"registry", io::sha256_file(registry)}, {"files", json::object()}};
  json reg;
  try {
    reg = json::parse(io::read_file(registry));
  } catch (const json::exception& e) {
    throw ParseError(registry.string() + ": " + e.what());
  }
  if (!reg.contains("subcorpora")) throw ParseError(registry.string() + ": no 'subcorpora' list");
  for (const auto& s : reg.at("subcorpora")) {
    const std::string p = s.at("path").get<std::string>();
    const fs::path file = registry.parent_path() / p;
    if (!fs::exists(file)) throw IngestError("subcorpus file not found: " + file.string());
    j["files"][p] = io::sha256_file(file);
  }
  return j;
}

const std::string kTrainText = "dataset/train.txt";
const std::string kHeldoutText = "dataset/heldout.txt";
const std::string kTokenizer = "tokenizer/tokenizer.json";
const std::string kResults = "eval/results.csv";
const std::string kTrajectories = "report/trajectories.csv";

}  // namespace

RunSummary run_pipeline(const ExperimentManifest& m, const PipelineOptions& options) {
  try {
    m.validate();
  } catch (const DataError& e) {
    throw StageError("manifest", e.what());
  }
  fs::create_directories(m.output_dir);
  io::write_file(m.output_dir / "experiment.json", m.to_json().dump(2) + "\n");
  Runner run(m, options);
  const fs::path out = m.output_dir;

  // compose: classify the registry, draw the target mixture, split off held-out data
  {
    json inputs = registry_inputs(m.registry);
    inputs["target"] = is_builtin_target(m.target) ? json(m.target) : json(io::sha256_file(m.target));
    inputs["budget_words"] = m.budget_words;
    inputs["seed"] = m.composition_seed;
    inputs["tolerance"] = m.tolerance;
    inputs["holdout_fraction"] = m.holdout_fraction;
    run.stage("compose", inputs, [&] {
      const auto registry = CorpusRegistry::load(m.registry);
      const auto pools = build_pools(registry.all_utterances());
      const auto target = resolve_target(m.target);
      const auto ds = compose(pools, target, m.budget_words, m.composition_seed, m.tolerance);
      const auto split = split_holdout(ds, m.holdout_fraction, derive_seed(m.composition_seed, 0x686f6c64));
      io::write_file(out / kTrainText, split.train.training_text());
      io::write_file(out / kHeldoutText, split.heldout.training_text());
      const json manifest = {{"composition", ds.manifest.to_json()},
                             {"train", split.train.manifest.to_json()},
                             {"heldout", split.heldout.manifest.to_json()},
                             {"registry", registry.manifest()}};
      io::write_file(out / "dataset/manifest.json", manifest.dump(2) + "\n");
      io::write_file(out / "dataset/profile.csv", profile_csv(profile_corpus(ds.utterances)));
      io::write_file(out / "dataset/subcorpora.csv", summary_csv(registry.summary()));
      return std::vector<std::string>{kTrainText, kHeldoutText, "dataset/manifest.json", "dataset/profile.csv",
                                      "dataset/subcorpora.csv"};
    });
  }
  run.summary().dataset_hash =
      io::sha256_hex(run.summary().artifacts.at(kTrainText) + run.summary().artifacts.at(kHeldoutText));

  run.stage("tokenizer",
            {{"train", run.summary().artifacts.at(kTrainText)},
             {"mode", std::string(to_string(m.tokenizer))},
             {"bpe_vocab_size", m.bpe_vocab_size}},
            [&] {
              const auto tok = Tokenizer::train(m.tokenizer, io::read_lines(out / kTrainText), m.bpe_vocab_size);
              fs::create_directories(out / "tokenizer");
              tok.save(out / kTokenizer);
              return std::vector<std::string>{kTokenizer};
            });

  json train_cfg = m.train.to_json();
  train_cfg.erase("threads");
  json model_cfg = m.model.to_json();
  model_cfg.erase("vocab_size");
  run.stage("train",
            {{"tokenizer", run.summary().artifacts.at(kTokenizer)},
             {"train", run.summary().artifacts.at(kTrainText)},
             {"heldout", run.summary().artifacts.at(kHeldoutText)},
             {"model", model_cfg},
             {"config", train_cfg}},
            [&] {
              const auto tok = Tokenizer::load(out / kTokenizer);
              ModelConfig mc = m.model;
              mc.vocab_size = static_cast<int>(tok.vocab_size());
              const auto train_seqs = pack_sequences(tok, io::read_lines(out / kTrainText), mc.context_length);
              const auto heldout_seqs = pack_sequences(tok, io::read_lines(out / kHeldoutText), mc.context_length);
              fs::remove_all(out / "checkpoints");
              fs::create_directories(out / "checkpoints");
              std::vector<std::string> outputs;
              run.log("train: " + std::to_string(train_seqs.size()) + " sequences, " +
                      std::to_string(count_parameters(mc)) + " parameters");
              const auto log = train(mc, m.train, train_seqs, heldout_seqs, tok.content_hash(), [&](const Checkpoint& ck) {
                const std::string rel = "checkpoints/" + checkpoint_filename(ck.fraction);
                save_checkpoint(out / rel, ck);
                outputs.push_back(rel);
                run.log("train: checkpoint " + io::format_double(ck.fraction) + " at step " + std::to_string(ck.step));
              });
              io::write_file(out / "train/loss_log.csv", log.csv());
              const json info = {{"model", mc.to_json()},
                                 {"parameters", count_parameters(mc)},
                                 {"config", train_cfg},
                                 {"train_sequences", train_seqs.size()},
                                 {"heldout_sequences", heldout_seqs.size()},
                                 {"total_steps", log.total_steps},
                                 {"checkpoint_steps", log.checkpoint_steps},
                                 {"tokenizer_hash", tok.content_hash()}};
              io::write_file(out / "train/train.json", info.dump(2) + "\n");
              outputs.push_back("train/loss_log.csv");
              outputs.push_back("train/train.json");
              return outputs;
            });

  json eval_inputs = {{"tokenizer", run.summary().artifacts.at(kTokenizer)},
                      {"agreement", io::sha256_file(m.agreement)},
                      {"words", io::sha256_file(m.words)},
                      {"xcomps", io::sha256_file(m.xcomps)},
                      {"agreement_scoring", std::string(to_string(m.scoring.agreement_scoring))},
                      {"xcomps_sample", m.scoring.xcomps_sample},
                      {"xcomps_seed", m.scoring.xcomps_seed},
                      {"checkpoints", json::object()}};
  for (double f : checkpoint_fractions()) {
    const std::string rel = "checkpoints/" + checkpoint_filename(f);
    const auto it = run.summary().artifacts.find(rel);
    eval_inputs["checkpoints"][rel] = it == run.summary().artifacts.end() ? std::string("missing") : it->second;
  }
  run.stage("eval", eval_inputs, [&] {
    const auto tok = Tokenizer::load(out / kTokenizer);
    const auto results =
        evaluate_checkpoints(list_checkpoints(out / "checkpoints"), tok, load_benchmarks(m), m.scoring);
    io::write_file(out / kResults, results_csv(results));
    return std::vector<std::string>{kResults};
  });

  run.stage("report",
            {{"results", run.summary().artifacts.at(kResults)},
             {"dataset", m.name},
             {"tokenizer", std::string(to_string(m.tokenizer))}},
            [&] {
              const auto points =
                  to_points(parse_results_csv(io::read_file(out / kResults)), m.name, std::string(to_string(m.tokenizer)));
              fs::create_directories(out / "report");
              render_trajectories(points, out / "report");
              return std::vector<std::string>{kTrajectories, "report/trajectories.svg"};
            });

  const json summary = {{"name", m.name},
                        {"manifest", m.to_json()},
                        {"dataset_hash", run.summary().dataset_hash},
                        {"artifacts", run.summary().artifacts}};
  io::write_file(out / "summary.json", summary.dump(2) + "\n");
  run.log("done");
  return run.summary();
}

std::vector<TrajectoryPoint> load_run_points(const ExperimentManifest& m) {
  const fs::path path = m.output_dir / kTrajectories;
  if (!fs::exists(path)) throw EvalError("run '" + m.name + "' has no trajectories at " + path.string());
  return parse_trajectories_csv(io::read_file(path));
}

ReplicateMode replicate_mode_from_string(std::string_view name) {
  if (name == "init" || name == "init-seed") return ReplicateMode::init_seed;
  if (name == "resample") return ReplicateMode::resample;
  throw DataError("unknown replicate mode '" + std::string(name) + "' (expected init or resample)");
}

std::string_view to_string(ReplicateMode mode) { return mode == ReplicateMode::init_seed ? "init" : "resample"; }

ExperimentManifest replicate_variant(const ExperimentManifest& base, std::size_t index, ReplicateMode mode,
                                     const fs::path& root) {
  ExperimentManifest v = base;
  if (mode == ReplicateMode::init_seed) {
    v.train.seed = base.train.seed + index;
  } else {
    v.composition_seed = base.composition_seed + index;
  }
  v.output_dir = root / ("run-" + std::to_string(index));
  return v;
}

ReplicateReport replicate(const ExperimentManifest& base, std::size_t n, ReplicateMode mode, const fs::path& root,
                          const PipelineOptions& options) {
  if (n < 2) throw DataError("replicate needs at least 2 runs");
  ReplicateReport report;
  std::vector<std::vector<TrajectoryPoint>> points;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = replicate_variant(base, i, mode, root);
    report.runs.push_back(run_pipeline(v, options));
    points.push_back(load_run_points(v));
  }
  json runs = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = replicate_variant(base, i, mode, root);
    runs.push_back({{"output_dir", v.output_dir.string()},
                    {"train_seed", v.train.seed},
                    {"composition_seed", v.composition_seed},
                    {"dataset_hash", report.runs[i].dataset_hash}});
  }
  json divergence = json::array();
  for (std::size_t k = 1; k < n; ++k) {
    report.divergences.push_back(compare_runs(points[0], points[k]));
    report.word_level.push_back(word_level_divergence(report.divergences.back()));
    const std::string file = k == 1 ? "divergence.csv" : "divergence_0_" + std::to_string(k) + ".csv";
    io::write_file(root / file, divergence_csv(report.divergences.back()));
    divergence.push_back({{"runs", {0, k}}, {"file", file}, {"word_level_mean_abs_diff", report.word_level.back()}});
  }
  const json summary = {{"mode", std::string(to_string(mode))}, {"runs", runs}, {"comparisons", divergence}};
  io::write_file(root / "replicate.json", summary.dump(2) + "\n");
  return report;
}

}  // namespace cxnlm
