// cxnlm: command-line front end for every stage of the experiment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "cxnlm/checkpoint.hpp"
#include "cxnlm/classifier.hpp"
#include "cxnlm/composer.hpp"
#include "cxnlm/corpus.hpp"
#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/pipeline.hpp"
#include "cxnlm/probing.hpp"
#include "cxnlm/random.hpp"
#include "cxnlm/tokenizer.hpp"
#include "cxnlm/trainer.hpp"
#include "cxnlm/trajectory.hpp"

namespace fs = std::filesystem;
using namespace cxnlm;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kStageError = 3;

void emit(const std::string& text, const std::optional<fs::path>& out) {
  if (out) {
    io::write_file(*out, text);
  } else {
    std::cout << text;
  }
}

std::vector<AnnotatedUtterance> load_input(const std::optional<fs::path>& registry,
                                           const std::optional<fs::path>& conllu, const std::string& subcorpus) {
  if (registry) return CorpusRegistry::load(*registry).all_utterances();
  if (conllu) return load_conllu(*conllu, subcorpus);
  throw DataError("either --registry or --conllu is required");
}

PairScoring parse_scoring(const std::string& s) {
  if (s == "full_sentence") return PairScoring::full_sentence;
  if (s == "target_only") return PairScoring::target_only;
  throw DataError("unknown scoring '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Construction-controlled training and probing of small German language models"};
  app.require_subcommand(1);

  // ingest
  std::optional<fs::path> in_conllu, in_text, in_registry, in_out, in_jsonl;
  std::string in_id, in_kind = "other", in_description;
  auto* ingest = app.add_subcommand("ingest", "Register a CoNLL-U subcorpus or normalize raw text");
  ingest->add_option("--conllu", in_conllu, "Annotated subcorpus to register")->check(CLI::ExistingFile);
  ingest->add_option("--registry", in_registry, "Registry manifest to create or extend");
  ingest->add_option("--id", in_id, "Subcorpus id");
  ingest->add_option("--description", in_description, "Subcorpus description");
  ingest->add_option("--jsonl", in_jsonl, "Also write the utterances as JSON lines");
  ingest->add_option("--text", in_text, "Raw text file to normalize")->check(CLI::ExistingFile);
  ingest->add_option("--kind", in_kind, "Source kind (talkbank, subtitles, gutenberg, magazine, wiki, news, dreams)");
  ingest->add_option("--out", in_out, "Normalized text output (default stdout)");

  // classify / profile
  std::optional<fs::path> cl_registry, cl_conllu, cl_out;
  std::string cl_sub = "input";
  bool by_subcorpus = false, pretty = false;
  auto* classify = app.add_subcommand("classify", "Label every utterance with its construction (JSON lines)");
  auto* profile = app.add_subcommand("profile", "Construction distribution of a corpus");
  for (auto* sub : {classify, profile}) {
    sub->add_option("--registry", cl_registry, "Registry manifest")->check(CLI::ExistingFile);
    sub->add_option("--conllu", cl_conllu, "Single CoNLL-U file")->check(CLI::ExistingFile);
    sub->add_option("--subcorpus", cl_sub, "Subcorpus id for --conllu input");
    sub->add_option("--out", cl_out, "Output file (default stdout)");
  }
  profile->add_flag("--by-subcorpus", by_subcorpus, "One profile per registered subcorpus");
  profile->add_flag("--pretty", pretty, "Aligned table instead of CSV");

  // gold-eval
  fs::path gold_tsv, gold_conllu;
  std::optional<fs::path> gold_confusion;
  auto* gold = app.add_subcommand("gold-eval", "Classifier accuracy against hand labels");
  gold->add_option("--gold", gold_tsv, "gold_label<TAB>sent_id file")->required()->check(CLI::ExistingFile);
  gold->add_option("--conllu", gold_conllu, "Annotated sentences")->required()->check(CLI::ExistingFile);
  gold->add_option("--confusion", gold_confusion, "Write the confusion matrix CSV here");

  // compose
  fs::path co_registry, co_out;
  std::string co_target;
  std::size_t co_budget = 0;
  std::uint64_t co_seed = 0;
  double co_tolerance = 0.005, co_holdout = 0.0;
  auto* composecmd = app.add_subcommand("compose", "Draw a dataset matching a construction distribution");
  composecmd->add_option("--registry", co_registry, "Registry manifest")->required()->check(CLI::ExistingFile);
  composecmd->add_option("--target", co_target, "table3-cds, table3-mix, table3-pjg or a label,fraction CSV")
      ->required();
  composecmd->add_option("--budget", co_budget, "Word budget")->required();
  composecmd->add_option("--seed", co_seed, "Sampling seed")->required();
  composecmd->add_option("--tolerance", co_tolerance, "Allowed absolute deviation per label");
  composecmd->add_option("--holdout", co_holdout, "Held-out fraction (0 keeps everything in train.txt)");
  composecmd->add_option("--out", co_out, "Output directory")->required();

  // train-tokenizer
  std::string tk_mode;
  fs::path tk_input, tk_out;
  std::size_t tk_vocab = 8000;
  auto* tokcmd = app.add_subcommand("train-tokenizer", "Build a character or BPE tokenizer");
  tokcmd->add_option("--mode", tk_mode, "char or bpe")->required();
  tokcmd->add_option("--input", tk_input, "Training text, one utterance per line")->required()->check(
      CLI::ExistingFile);
  tokcmd->add_option("--vocab-size", tk_vocab, "BPE vocabulary size without specials");
  tokcmd->add_option("--out", tk_out, "tokenizer.json")->required();

  // train
  fs::path tr_tokenizer, tr_train, tr_heldout, tr_config, tr_out;
  std::optional<int> tr_threads;
  auto* traincmd = app.add_subcommand("train", "Train a model and write the 19 checkpoints");
  traincmd->add_option("--tokenizer", tr_tokenizer, "tokenizer.json")->required()->check(CLI::ExistingFile);
  traincmd->add_option("--train", tr_train, "Training text")->required()->check(CLI::ExistingFile);
  traincmd->add_option("--heldout", tr_heldout, "Held-out text")->required()->check(CLI::ExistingFile);
  traincmd->add_option("--config", tr_config, "JSON with 'model' and 'train' objects")->required()->check(
      CLI::ExistingFile);
  traincmd->add_option("--threads", tr_threads, "Worker threads");
  traincmd->add_option("--out", tr_out, "Output directory")->required();

  // eval
  fs::path ev_checkpoints, ev_tokenizer;
  std::optional<fs::path> ev_bench_dir, ev_out;
  std::string ev_scoring = "full_sentence";
  std::size_t ev_xsample = 1000;
  std::uint64_t ev_xseed = 0;
  auto* evalcmd = app.add_subcommand("eval", "Score every checkpoint on the benchmarks");
  evalcmd->add_option("--checkpoints", ev_checkpoints, "Checkpoint directory")->required()->check(
      CLI::ExistingDirectory);
  evalcmd->add_option("--tokenizer", ev_tokenizer, "tokenizer.json")->required()->check(CLI::ExistingFile);
  evalcmd->add_option("--benchmarks", ev_bench_dir, "Directory with agreement.tsv, word_pairs.tsv, xcomps.tsv")
      ->required()
      ->check(CLI::ExistingDirectory);
  evalcmd->add_option("--scoring", ev_scoring, "Agreement scoring: full_sentence or target_only");
  evalcmd->add_option("--xcomps-sample", ev_xsample, "XCOMPS pairs drawn with replacement (0 = all)");
  evalcmd->add_option("--xcomps-seed", ev_xseed, "Seed for the XCOMPS sample");
  evalcmd->add_option("--out", ev_out, "results.csv (default stdout)");

  // report
  std::vector<fs::path> rp_runs;
  std::optional<fs::path> rp_bench;
  fs::path rp_out;
  auto* report = app.add_subcommand("report", "Trajectory table and figure for one or more runs");
  report->add_option("--run", rp_runs, "Experiment manifest (repeatable)")->required()->check(CLI::ExistingFile);
  report->add_option("--benchmarks", rp_bench, "Re-evaluate the checkpoints on this benchmark directory")
      ->check(CLI::ExistingDirectory);
  report->add_option("--out", rp_out, "Output directory")->required();

  // run / replicate
  fs::path run_manifest;
  bool run_force = false;
  std::optional<int> run_threads;
  auto* runcmd = app.add_subcommand("run", "Execute the full pipeline of a manifest");
  auto* repcmd = app.add_subcommand("replicate", "Run seeded variants and compare their trajectories");
  std::size_t rep_n = 2;
  std::string rep_mode = "init";
  std::optional<fs::path> rep_out;
  for (auto* sub : {runcmd, repcmd}) {
    sub->add_option("--manifest", run_manifest, "Experiment manifest")->required()->check(CLI::ExistingFile);
    sub->add_flag("--force", run_force, "Ignore cached stages");
    sub->add_option("--threads", run_threads, "Override train.threads");
  }
  repcmd->add_option("--n", rep_n, "Number of runs (>= 2)");
  repcmd->add_option("--mode", rep_mode, "init (initialization seed) or resample (composition seed)");
  repcmd->add_option("--out", rep_out, "Root directory (default <output_dir>/replicate-<mode>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*ingest) {
      if (in_text) {
        const auto lines = normalize_lines(io::read_file(*in_text), source_kind_from_string(in_kind));
        emit(io::join(lines, "\n") + (lines.empty() ? "" : "\n"), in_out);
      } else if (in_conllu) {
        if (in_id.empty()) in_id = in_conllu->stem().string();
        auto utts = load_conllu(*in_conllu, in_id);
        std::cerr << utts.size() << " utterances read from " << in_conllu->string() << "\n";
        if (in_jsonl) io::write_file(*in_jsonl, to_jsonl(utts));
        if (in_registry) {
          CorpusRegistry reg = fs::exists(*in_registry) ? CorpusRegistry::load(*in_registry) : CorpusRegistry{};
          const auto base = fs::absolute(*in_registry).parent_path();
          const std::string rel = fs::relative(fs::absolute(*in_conllu), base).generic_string();
          reg.add({in_id, in_description, source_kind_from_string(in_kind), 0, rel}, std::move(utts));
          io::write_file(*in_registry, reg.manifest().dump(2) + "\n");
          std::cout << summary_csv(reg.summary());
        }
      } else {
        throw CLI::RequiredError("--conllu or --text");
      }
    } else if (*classify) {
      std::string out;
      for (const auto& u : load_input(cl_registry, cl_conllu, cl_sub)) {
        json j = to_json(u);
        j["label"] = std::string(to_string(classify_utterance(u)));
        out += j.dump() + "\n";
      }
      emit(out, cl_out);
    } else if (*profile) {
      auto render = [&](const DistributionProfile& p) { return pretty ? profile_pretty(p) : profile_csv(p); };
      if (by_subcorpus && cl_registry) {
        const auto reg = CorpusRegistry::load(*cl_registry);
        std::string out;
        for (const auto& id : reg.ids()) out += "# " + id + "\n" + render(profile_corpus(reg.utterances(id)));
        emit(out, cl_out);
      } else {
        emit(render(profile_corpus(load_input(cl_registry, cl_conllu, cl_sub))), cl_out);
      }
    } else if (*gold) {
      const auto examples = load_gold(gold_tsv, gold_conllu);
      const auto ev = evaluate_against_gold(examples);
      std::cout << "accuracy " << io::format_double(ev.accuracy) << " (" << ev.correct << "/" << ev.total << ")\n";
      for (std::size_t i : ev.misclassified) {
        const auto& ex = examples[i];
        std::cout << "  " << ex.utterance.id << "\tgold " << to_string(ex.gold) << "\tpredicted "
                  << to_string(classify_utterance(ex.utterance)) << "\t" << ex.utterance.text << "\n";
      }
      if (gold_confusion) io::write_file(*gold_confusion, confusion_csv(ev));
    } else if (*composecmd) {
      const auto reg = CorpusRegistry::load(co_registry);
      const auto ds = compose(build_pools(reg.all_utterances()), resolve_target(co_target), co_budget, co_seed,
                              co_tolerance);
      fs::create_directories(co_out);
      json manifest = {{"composition", ds.manifest.to_json()}};
      if (co_holdout > 0) {
        const auto split = split_holdout(ds, co_holdout, derive_seed(co_seed, 0x686f6c64));
        io::write_file(co_out / "train.txt", split.train.training_text());
        io::write_file(co_out / "heldout.txt", split.heldout.training_text());
        manifest["train"] = split.train.manifest.to_json();
        manifest["heldout"] = split.heldout.manifest.to_json();
      } else {
        io::write_file(co_out / "train.txt", ds.training_text());
      }
      io::write_file(co_out / "manifest.json", manifest.dump(2) + "\n");
      const auto prof = profile_corpus(ds.utterances);
      io::write_file(co_out / "profile.csv", profile_csv(prof));
      std::cout << profile_pretty(prof);
    } else if (*tokcmd) {
      const auto tok = Tokenizer::train(tokenizer_mode_from_string(tk_mode), io::read_lines(tk_input), tk_vocab);
      tok.save(tk_out);
      std::cout << to_string(tok.mode()) << " tokenizer with " << tok.vocab_size() << " symbols\n";
    } else if (*traincmd) {
      const json cfg = json::parse(io::read_file(tr_config));
      const auto tok = Tokenizer::load(tr_tokenizer);
      ModelConfig mc = ModelConfig::from_json(cfg.at("model"));
      mc.vocab_size = static_cast<int>(tok.vocab_size());
      TrainConfig tc = TrainConfig::from_json(cfg.at("train"), true);
      if (tr_threads) tc.threads = *tr_threads;
      const auto train_seqs = pack_sequences(tok, io::read_lines(tr_train), mc.context_length);
      const auto heldout_seqs = pack_sequences(tok, io::read_lines(tr_heldout), mc.context_length);
      fs::create_directories(tr_out);
      const auto log = train(mc, tc, train_seqs, heldout_seqs, tok.content_hash(), [&](const Checkpoint& ck) {
        save_checkpoint(tr_out / checkpoint_filename(ck.fraction), ck);
        std::cerr << "checkpoint " << io::format_double(ck.fraction) << " (step " << ck.step << ")\n";
      });
      io::write_file(tr_out / "loss_log.csv", log.csv());
    } else if (*evalcmd) {
      const auto tok = Tokenizer::load(ev_tokenizer);
      ScoringOptions opts{parse_scoring(ev_scoring), ev_xsample, ev_xseed};
      const auto results =
          evaluate_checkpoints(list_checkpoints(ev_checkpoints), tok, load_benchmark_dir(*ev_bench_dir), opts);
      emit(results_csv(results), ev_out);
    } else if (*report) {
      std::vector<std::vector<TrajectoryPoint>> runs;
      std::vector<TrajectoryPoint> all;
      for (const auto& path : rp_runs) {
        const auto m = ExperimentManifest::load(path);
        std::vector<TrajectoryPoint> points;
        if (rp_bench) {
          const auto tok = Tokenizer::load(m.output_dir / "tokenizer/tokenizer.json");
          points = evaluate_run(list_checkpoints(m.output_dir / "checkpoints"), tok, load_benchmark_dir(*rp_bench),
                                m.scoring, m.name);
        } else {
          points = load_run_points(m);
        }
        all.insert(all.end(), points.begin(), points.end());
        runs.push_back(std::move(points));
      }
      fs::create_directories(rp_out);
      render_trajectories(all, rp_out);
      if (runs.size() >= 2) {
        const auto div = compare_runs(runs[0], runs[1]);
        io::write_file(rp_out / "divergence.csv", divergence_csv(div));
        std::cout << "word-level mean absolute divergence " << io::format_double(word_level_divergence(div)) << "\n";
      }
    } else if (*runcmd || *repcmd) {
      auto m = ExperimentManifest::load(run_manifest);
      if (run_threads) m.train.threads = *run_threads;
      PipelineOptions opts{run_force, &std::cerr};
      if (*runcmd) {
        const auto summary = run_pipeline(m, opts);
        std::cout << "outputs in " << summary.output_dir.string() << " (dataset " << summary.dataset_hash.substr(0, 12)
                  << ", " << summary.stages_run.size() << " stages run, " << summary.stages_skipped.size()
                  << " cached)\n";
      } else {
        const auto mode = replicate_mode_from_string(rep_mode);
        const fs::path root = rep_out ? *rep_out : m.output_dir / ("replicate-" + std::string(to_string(mode)));
        const auto rep = replicate(m, rep_n, mode, root, opts);
        for (std::size_t k = 0; k < rep.word_level.size(); ++k) {
          std::cout << "run 0 vs run " << k + 1 << ": word-level mean absolute divergence "
                    << io::format_double(rep.word_level[k]) << "\n";
        }
      }
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageError;
  }
  return 0;
}
