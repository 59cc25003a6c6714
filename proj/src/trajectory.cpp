#include "cxnlm/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "cxnlm/checkpoint.hpp"
#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/trainer.hpp"

namespace cxnlm {

std::vector<CheckpointRef> list_checkpoints(const std::filesystem::path& dir) {
  std::vector<CheckpointRef> out;
  for (double f : checkpoint_fractions()) {
    const auto path = dir / checkpoint_filename(f);
    if (!std::filesystem::exists(path)) {
      throw EvalError("checkpoint for fraction " + io::format_double(f) + " is missing (" + path.string() + ")");
    }
    out.push_back({f, path});
  }
  return out;
}

std::vector<TrajectoryPoint> to_points(const std::vector<EvalResult>& results, const std::string& dataset,
                                       const std::string& tokenizer) {
  std::vector<TrajectoryPoint> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    out.push_back({dataset, tokenizer, r.benchmark, r.phenomenon, r.fraction, r.accuracy, r.pairs, r.ties});
  }
  return out;
}

std::vector<EvalResult> evaluate_checkpoints(const std::vector<CheckpointRef>& checkpoints, const Tokenizer& tokenizer,
                                             const BenchmarkSet& benchmarks, const ScoringOptions& options) {
  if (checkpoints.empty()) throw EvalError("no checkpoints to evaluate");
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (!(checkpoints[i - 1].fraction < checkpoints[i].fraction)) {
      throw EvalError("checkpoints must be ordered by increasing fraction");
    }
  }
  std::vector<EvalResult> out;
  for (const auto& ref : checkpoints) {
    if (!std::filesystem::exists(ref.path)) {
      throw EvalError("checkpoint for fraction " + io::format_double(ref.fraction) + " is missing (" +
                      ref.path.string() + ")");
    }
    const Checkpoint ck = load_checkpoint(ref.path);
    if (!ck.tokenizer_hash.empty() && ck.tokenizer_hash != tokenizer.content_hash()) {
      throw EvalError("checkpoint " + ref.path.string() + " was trained with a different tokenizer");
    }
    const auto model = ck.model();
    const LmScorer scorer(model, tokenizer);
    for (auto& r : evaluate_benchmarks(scorer, benchmarks, options, ref.fraction)) out.push_back(std::move(r));
  }
  return out;
}

std::vector<TrajectoryPoint> evaluate_run(const std::vector<CheckpointRef>& checkpoints, const Tokenizer& tokenizer,
                                          const BenchmarkSet& benchmarks, const ScoringOptions& options,
                                          const std::string& dataset) {
  return to_points(evaluate_checkpoints(checkpoints, tokenizer, benchmarks, options), dataset,
                   std::string(to_string(tokenizer.mode())));
}

std::string trajectories_csv(const std::vector<TrajectoryPoint>& points) {
  std::ostringstream out;
  out << "dataset,tokenizer,benchmark,phenomenon,frac,accuracy,pairs,ties\n";
  for (const auto& p : points) {
    out << io::csv_field(p.dataset) << ',' << io::csv_field(p.tokenizer) << ',' << io::csv_field(p.benchmark) << ','
        << io::csv_field(p.phenomenon) << ',' << io::format_double(p.fraction) << ','
        << io::format_double(p.accuracy) << ',' << p.pairs << ',' << p.ties << '\n';
  }
  return out.str();
}

std::vector<TrajectoryPoint> parse_trajectories_csv(std::string_view csv) {
  std::vector<TrajectoryPoint> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("dataset,", 0) == 0) continue;
    const auto f = io::parse_csv_line(line);
    if (f.size() != 8) throw ParseError("trajectory line " + std::to_string(lineno) + ": expected 8 fields");
    TrajectoryPoint p{f[0], f[1], f[2], f[3]};
    try {
      p.fraction = std::stod(f[4]);
      p.accuracy = std::stod(f[5]);
      p.pairs = std::stoul(f[6]);
      p.ties = std::stoul(f[7]);
    } catch (const std::exception&) {
      throw ParseError("trajectory line " + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(p));
  }
  return out;
}

double log_x(double fraction, double lo, double hi, double left, double width) {
  return left + (std::log10(fraction) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) * width;
}

namespace {

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

}  // namespace

std::string trajectories_svg(const std::vector<TrajectoryPoint>& points) {
  using Panel = std::pair<std::string, std::string>;
  std::vector<Panel> panels;
  std::vector<std::string> series;
  double x_lo = 0.01, y_lo = 0.4;
  for (const auto& p : points) {
    const Panel key{p.benchmark, p.phenomenon};
    if (std::find(panels.begin(), panels.end(), key) == panels.end()) panels.push_back(key);
    const std::string s = p.dataset + " (" + p.tokenizer + ")";
    if (std::find(series.begin(), series.end(), s) == series.end()) series.push_back(s);
    if (p.fraction > 0) x_lo = std::min(x_lo, p.fraction);
    y_lo = std::min(y_lo, std::floor(p.accuracy * 10.0) / 10.0);
  }
  const double x_hi = 1.0, y_hi = 1.0;
  static const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"};

  const int cols = std::max<int>(1, std::min<int>(4, static_cast<int>(panels.size())));
  const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(cols) - 1) / static_cast<std::size_t>(cols));
  const double pw = 260, ph = 200, margin_l = 48, margin_t = 34, margin_b = 36, gap = 18;
  const double width = cols * (pw + margin_l + gap) + gap;
  const double legend_h = 22.0 * static_cast<double>(series.size()) + 16;
  const double height = rows * (ph + margin_t + margin_b) + legend_h;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const double ox = gap + static_cast<double>(i % static_cast<std::size_t>(cols)) * (pw + margin_l + gap) + margin_l;
    const double oy = static_cast<double>(i / static_cast<std::size_t>(cols)) * (ph + margin_t + margin_b) + margin_t;
    auto y_of = [&](double acc) { return oy + ph - (acc - y_lo) / (y_hi - y_lo) * ph; };
    const auto& [bench, phen] = panels[i];
    const std::string title = phen.empty() || phen == "all" ? bench : bench + ": " + phen;
    svg << "<g class=\"panel\">\n";
    svg << "<text x=\"" << num(ox + pw / 2) << "\" y=\"" << num(oy - 10) << "\" text-anchor=\"middle\">"
        << escape_xml(title) << "</text>\n";
    svg << "<rect x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double t = y_lo; t <= y_hi + 1e-9; t += 0.1) {
      svg << "<line x1=\"" << num(ox - 4) << "\" y1=\"" << num(y_of(t)) << "\" x2=\"" << num(ox) << "\" y2=\""
          << num(y_of(t)) << "\" stroke=\"#444\"/><text x=\"" << num(ox - 6) << "\" y=\"" << num(y_of(t) + 4)
          << "\" text-anchor=\"end\">" << num(t).substr(0, 3) << "</text>\n";
    }
    if (y_lo < 0.5 && 0.5 < y_hi) {
      svg << "<line x1=\"" << num(ox) << "\" y1=\"" << num(y_of(0.5)) << "\" x2=\"" << num(ox + pw) << "\" y2=\""
          << num(y_of(0.5)) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (double decade = std::pow(10.0, std::floor(std::log10(x_lo))); decade <= x_hi * 1.0001; decade *= 10) {
      if (decade < x_lo * 0.9999) continue;
      const double x = log_x(decade, x_lo, x_hi, ox, pw);
      svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(oy + ph) << "\" x2=\"" << num(x) << "\" y2=\""
          << num(oy + ph + 4) << "\" stroke=\"#444\"/><text x=\"" << num(x) << "\" y=\"" << num(oy + ph + 16)
          << "\" text-anchor=\"middle\">" << io::format_double(decade) << "</text>\n";
    }
    svg << "<text x=\"" << num(ox + pw / 2) << "\" y=\"" << num(oy + ph + 30)
        << "\" text-anchor=\"middle\">fraction of training (log)</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      std::vector<std::pair<double, double>> xy;
      for (const auto& p : points) {
        if (p.benchmark != bench || p.phenomenon != phen || p.dataset + " (" + p.tokenizer + ")" != series[s]) continue;
        xy.emplace_back(log_x(p.fraction, x_lo, x_hi, ox, pw), y_of(p.accuracy));
      }
      std::sort(xy.begin(), xy.end());
      const char* color = colors[s % std::size(colors)];
      if (xy.size() > 1) {
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : xy) svg << num(x) << ',' << num(y) << ' ';
        svg << "\"/>\n";
      }
      for (const auto& [x, y] : xy) {
        svg << "<circle class=\"mark\" cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"2.5\" fill=\"" << color
            << "\"/>\n";
      }
    }
    svg << "</g>\n";
  }
  const double ly = rows * (ph + margin_t + margin_b) + 8;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = ly + 22.0 * static_cast<double>(s);
    svg << "<rect x=\"" << num(gap + margin_l) << "\" y=\"" << num(y) << "\" width=\"14\" height=\"10\" fill=\""
        << colors[s % std::size(colors)] << "\"/><text x=\"" << num(gap + margin_l + 20) << "\" y=\"" << num(y + 9)
        << "\">" << escape_xml(series[s]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_trajectories(const std::vector<TrajectoryPoint>& points, const std::filesystem::path& out_dir) {
  if (points.empty()) throw EvalError("no trajectory points to render");
  io::write_file(out_dir / "trajectories.csv", trajectories_csv(points));
  io::write_file(out_dir / "trajectories.svg", trajectories_svg(points));
}

std::vector<Divergence> compare_runs(const std::vector<TrajectoryPoint>& a, const std::vector<TrajectoryPoint>& b) {
  using Key = std::tuple<std::string, std::string, double>;
  auto index = [](const std::vector<TrajectoryPoint>& pts) {
    std::map<Key, double> m;
    for (const auto& p : pts) {
      if (!m.emplace(Key{p.benchmark, p.phenomenon, p.fraction}, p.accuracy).second) {
        throw EvalError("duplicate trajectory point for " + p.benchmark + "/" + p.phenomenon + " at " +
                        io::format_double(p.fraction));
      }
    }
    return m;
  };
  const auto ma = index(a), mb = index(b);
  if (ma.size() != mb.size()) {
    throw EvalError("runs have different grids (" + std::to_string(ma.size()) + " vs " + std::to_string(mb.size()) +
                    " points)");
  }
  std::vector<Divergence> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& [key, acc] : ma) {
    const auto it = mb.find(key);
    if (it == mb.end()) {
      throw EvalError("run B has no point for " + std::get<0>(key) + "/" + std::get<1>(key) + " at " +
                      io::format_double(std::get<2>(key)));
    }
    const auto group = std::make_pair(std::get<0>(key), std::get<1>(key));
    auto [pos, fresh] = slot.emplace(group, out.size());
    if (fresh) out.push_back({group.first, group.second});
    auto& d = out[pos->second];
    const double diff = std::abs(acc - it->second);
    d.max_abs_diff = std::max(d.max_abs_diff, diff);
    d.mean_abs_diff += diff;
    ++d.points;
  }
  for (auto& d : out) d.mean_abs_diff /= static_cast<double>(d.points);
  return out;
}

double word_level_divergence(const std::vector<Divergence>& divergences) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& d : divergences) {
    if (!is_word_level(d.benchmark)) continue;
    sum += d.mean_abs_diff * static_cast<double>(d.points);
    n += d.points;
  }
  if (n == 0) throw EvalError("no word-level benchmarks to compare");
  return sum / static_cast<double>(n);
}

std::string divergence_csv(const std::vector<Divergence>& divergences) {
  std::ostringstream out;
  out << "benchmark,phenomenon,max_abs_diff,mean_abs_diff,points\n";
  for (const auto& d : divergences) {
    out << io::csv_field(d.benchmark) << ',' << io::csv_field(d.phenomenon) << ',' << io::format_double(d.max_abs_diff)
        << ',' << io::format_double(d.mean_abs_diff) << ',' << d.points << '\n';
  }
  return out.str();
}

}  // namespace cxnlm
