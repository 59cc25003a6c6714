#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cxnlm/checkpoint.hpp"
#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/probing.hpp"
#include "cxnlm/trainer.hpp"
#include "cxnlm/trajectory.hpp"

using namespace cxnlm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cxnlm-unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

const Tokenizer& chars() {
  static const Tokenizer tok(CharVocab{});
  return tok;
}

// A tiny trained run: 19 checkpoints written under `dir`.
void write_run(const fs::path& dir) {
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(chars().vocab_size());
  mc.hidden_size = 8;
  mc.intermediate_size = 8;
  mc.num_layers = 1;
  mc.num_heads = 1;
  mc.context_length = 16;
  TrainConfig tc;
  tc.batch_size = 1;
  tc.learning_rate = 1e-2;
  std::vector<std::string> lines;
  for (int i = 0; i < 40; ++i) lines.push_back(i % 2 ? "Der Hund bellt." : "Die Hunde bellen.");
  const auto seqs = pack_sequences(chars(), lines, mc.context_length);
  fs::create_directories(dir);
  train(mc, tc, seqs, seqs, chars().content_hash(),
        [&](const Checkpoint& c) { save_checkpoint(dir / checkpoint_filename(c.fraction), c); });
}

BenchmarkSet two_benchmarks() {
  BenchmarkSet set;
  set.agreement = {{"a1", "Simple Agreement", "Der Hund bellt.", "Der Hund bellen."},
                   {"a2", "Simple Agreement", "Die Hunde bellen.", "Die Hunde bellt."}};
  set.xcomps = {{"x1", "XCOMPS", "Der Hund bellt.", "Der Ball bellt."}};
  return set;
}

TrajectoryPoint point(std::string dataset, std::string benchmark, double f, double acc) {
  return {std::move(dataset), "char", std::move(benchmark), "all", f, acc, 10, 0};
}

std::vector<TrajectoryPoint> grid(const std::string& dataset, double shift) {
  std::vector<TrajectoryPoint> pts;
  for (const char* b : {"lexical_decision", "surprisal", "clams"}) {
    for (double f : checkpoint_fractions()) pts.push_back(point(dataset, b, f, std::min(1.0, 0.5 + f / 2 + shift)));
  }
  return pts;
}

}  // namespace

TEST_CASE("two benchmarks over nineteen checkpoints give thirty-eight points") {
  const auto dir = scratch("traj-run");
  write_run(dir);
  const auto cks = list_checkpoints(dir);
  REQUIRE(cks.size() == 19);
  for (std::size_t i = 0; i < cks.size(); ++i) CHECK(cks[i].fraction == checkpoint_fractions()[i]);

  ScoringOptions opt;
  opt.xcomps_sample = 0;
  const auto points = evaluate_run(cks, chars(), two_benchmarks(), opt, "cds");
  CHECK(points.size() == 38);
  for (const auto& p : points) {
    CHECK(p.fraction > 0.0);
    CHECK(p.fraction <= 1.0);
    CHECK(p.accuracy >= 0.0);
    CHECK(p.accuracy <= 1.0);
    CHECK(p.dataset == "cds");
    CHECK(p.tokenizer == "char");
  }
  const std::string csv = trajectories_csv(points);
  CHECK(trajectories_csv(evaluate_run(cks, chars(), two_benchmarks(), opt, "cds")) == csv);
  CHECK(count(csv, "\n") == 39);

  const auto back = parse_trajectories_csv(csv);
  REQUIRE(back.size() == points.size());
  CHECK(trajectories_csv(back) == csv);
}

TEST_CASE("a missing checkpoint is reported by fraction") {
  const auto dir = scratch("traj-missing");
  write_run(dir);
  fs::remove(dir / checkpoint_filename(0.07));
  try {
    list_checkpoints(dir);
    FAIL("expected an error");
  } catch (const EvalError& e) {
    CHECK(std::string(e.what()).find("0.07") != std::string::npos);
  }

  const auto full = scratch("traj-missing-eval");
  write_run(full);
  auto cks = list_checkpoints(full);
  fs::remove(cks[3].path);
  try {
    evaluate_checkpoints(cks, chars(), two_benchmarks(), ScoringOptions{});
    FAIL("expected an error");
  } catch (const EvalError& e) {
    CHECK(std::string(e.what()).find("0.04") != std::string::npos);
  }
  const std::vector<CheckpointRef> reversed{cks[1], cks[0]};
  CHECK_THROWS_AS(evaluate_checkpoints(reversed, chars(), two_benchmarks(), ScoringOptions{}), EvalError);
}

TEST_CASE("a single point renders one mark") {
  const std::string svg = trajectories_svg({point("cds", "clams", 0.5, 0.75)});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "class=\"mark\"") == 1);
}

TEST_CASE("three datasets give three series in every panel") {
  std::vector<TrajectoryPoint> pts;
  for (const char* d : {"cds", "mix", "pjg"}) {
    const auto g = grid(d, 0.0);
    pts.insert(pts.end(), g.begin(), g.end());
  }
  const std::string svg = trajectories_svg(pts);
  CHECK(count(svg, "<polyline") == 3 * 3);
  CHECK(count(svg, "class=\"mark\"") == pts.size());
  for (const char* d : {"cds (char)", "mix (char)", "pjg (char)"}) CHECK(svg.find(d) != std::string::npos);
}

TEST_CASE("csv and svg are written from the same points") {
  const auto dir = scratch("traj-render");
  const auto pts = grid("cds", 0.0);
  render_trajectories(pts, dir);
  CHECK(io::read_file(dir / "trajectories.csv") == trajectories_csv(pts));
  CHECK(io::read_file(dir / "trajectories.svg") == trajectories_svg(pts));
  CHECK(parse_trajectories_csv(io::read_file(dir / "trajectories.csv")).size() == pts.size());
  CHECK_THROWS_AS(render_trajectories({}, dir), EvalError);
}

TEST_CASE("log scale is strictly monotone") {
  const auto f = checkpoint_fractions();
  double prev = -1e9;
  for (double x : f) {
    const double px = log_x(x, 0.01, 1.0, 40.0, 200.0);
    CHECK(px > prev);
    prev = px;
  }
  CHECK(log_x(0.01, 0.01, 1.0, 40.0, 200.0) == doctest::Approx(40.0));
  CHECK(log_x(1.0, 0.01, 1.0, 40.0, 200.0) == doctest::Approx(240.0));
  CHECK(log_x(0.1, 0.01, 1.0, 40.0, 200.0) == doctest::Approx(140.0));
}

TEST_CASE("identical runs do not diverge") {
  const auto a = grid("cds", 0.0);
  const auto d = compare_runs(a, a);
  REQUIRE(d.size() == 3);
  for (const auto& x : d) {
    CHECK(x.max_abs_diff == 0.0);
    CHECK(x.mean_abs_diff == 0.0);
    CHECK(x.points == 19);
  }
  CHECK(word_level_divergence(d) == 0.0);
}

TEST_CASE("divergence against a hand count") {
  auto a = grid("cds", 0.0);
  auto b = a;
  // lexical_decision: one point off by 0.1; surprisal: every point off by 0.02
  b[0].accuracy += 0.1;
  for (std::size_t i = 19; i < 38; ++i) b[i].accuracy -= 0.02;
  b[40].accuracy += 0.3;  // clams is sentence-level
  const auto d = compare_runs(a, b);
  REQUIRE(d.size() == 3);
  auto row = [&](const std::string& name) {
    for (const auto& x : d) {
      if (x.benchmark == name) return x;
    }
    FAIL("no row for " << name);
    return Divergence{};
  };
  CHECK(row("lexical_decision").max_abs_diff == doctest::Approx(0.1));
  CHECK(row("lexical_decision").mean_abs_diff == doctest::Approx(0.1 / 19));
  CHECK(row("surprisal").max_abs_diff == doctest::Approx(0.02));
  CHECK(row("surprisal").mean_abs_diff == doctest::Approx(0.02));
  CHECK(row("clams").max_abs_diff == doctest::Approx(0.3));
  CHECK(word_level_divergence(d) == doctest::Approx((0.1 + 19 * 0.02) / 38));

  const std::string csv = divergence_csv(d);
  CHECK(csv.rfind("benchmark,phenomenon,max_abs_diff,mean_abs_diff,points\n", 0) == 0);
  CHECK(count(csv, "\n") == 4);
}

TEST_CASE("mismatched grids are rejected") {
  const auto a = grid("cds", 0.0);
  auto shorter = a;
  shorter.pop_back();
  CHECK_THROWS_AS(compare_runs(a, shorter), EvalError);
  auto moved = a;
  moved[5].fraction = 0.55;
  CHECK_THROWS_AS(compare_runs(a, moved), EvalError);
  auto doubled = a;
  doubled.push_back(a.front());
  auto other = a;
  other.push_back(a.back());
  CHECK_THROWS_AS(compare_runs(doubled, other), EvalError);
}
