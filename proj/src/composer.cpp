#include "cxnlm/composer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/random.hpp"

namespace cxnlm {

namespace {

// Columns of the training-set composition table, in percent, label order
// FRA QWH QYN COP IMP SPI SPT COM.
struct BuiltinTarget {
  std::string_view name;
  std::array<double, kNumLabels> percent;
};

constexpr BuiltinTarget kBuiltinTargets[] = {
    {"table3-cds", {25.0, 9.0, 21.0, 8.0, 5.0, 10.0, 12.0, 10.0}},
    {"table3-mix", {16.5, 5.5, 12.5, 6.5, 3.5, 9.0, 11.0, 35.5}},
    {"table3-pjg", {8.0, 2.0, 4.0, 5.0, 2.0, 8.0, 10.0, 61.0}},
};

std::string shortfall_message(ConstructionLabel label, std::size_t needed, std::size_t available) {
  return "pool for " + std::string(to_string(label)) + " too small: need ~" + std::to_string(needed) +
         " utterances, have " + std::to_string(available) + " (shortfall " + std::to_string(needed - available) +
         ")";
}

CompositionManifest recount(const std::vector<AnnotatedUtterance>& utterances,
                            const std::vector<ConstructionLabel>& labels, CompositionManifest base) {
  base.label_counts = {};
  base.subcorpus_counts.clear();
  base.total_words = 0;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    ++base.label_counts[index_of(labels[i])];
    ++base.subcorpus_counts[utterances[i].subcorpus];
    base.total_words += utterances[i].word_count;
  }
  const auto profile = DistributionProfile::from_counts(base.label_counts);
  base.achieved = profile.proportions;
  return base;
}

}  // namespace

void DistributionSpec::validate() const {
  double sum = 0.0;
  for (double f : target) {
    if (!(f >= 0.0)) throw DataError("target '" + name + "' has a negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("target '" + name + "' fractions sum to " + io::format_double(sum) + ", expected 1");
  }
}

bool is_builtin_target(std::string_view name) {
  return std::any_of(std::begin(kBuiltinTargets), std::end(kBuiltinTargets),
                     [&](const BuiltinTarget& t) { return t.name == name; });
}

DistributionSpec builtin_target(std::string_view name) {
  for (const auto& t : kBuiltinTargets) {
    if (t.name != name) continue;
    DistributionSpec spec;
    spec.name = std::string(name);
    for (std::size_t i = 0; i < kNumLabels; ++i) spec.target[i] = t.percent[i] / 100.0;
    return spec;
  }
  throw DataError("unknown builtin target '" + std::string(name) + "'");
}

DistributionSpec load_target_csv(const std::filesystem::path& path) {
  DistributionSpec spec;
  spec.name = path.filename().string();
  std::array<bool, kNumLabels> seen{};
  double sum = 0.0;
  for (const std::string& raw : io::read_lines(path)) {
    const std::string line = io::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = io::parse_csv_line(line);
    if (fields.size() != 2) throw ParseError(path.string() + ": expected label,fraction");
    const auto label = label_from_string(io::trim(fields[0]));
    if (!label) {
      if (io::trim(fields[0]) == "label") continue;  // header
      throw ParseError(path.string() + ": unknown label '" + fields[0] + "'");
    }
    double value = 0.0;
    try {
      value = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": bad fraction '" + fields[1] + "'");
    }
    spec.target[index_of(*label)] = value;
    seen[index_of(*label)] = true;
    sum += value;
  }
  if (std::abs(sum - 100.0) < 1e-6) {
    for (double& f : spec.target) f /= 100.0;
  }
  spec.validate();
  return spec;
}

DistributionSpec resolve_target(const std::string& name_or_path, const std::filesystem::path& base) {
  if (is_builtin_target(name_or_path)) return builtin_target(name_or_path);
  std::filesystem::path p(name_or_path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return load_target_csv(p);
}

LabelPools build_pools(const std::vector<AnnotatedUtterance>& utterances) {
  LabelPools pools;
  for (const auto& u : utterances) pools[classify_utterance(u)].push_back(u);
  return pools;
}

nlohmann::json CompositionManifest::to_json() const {
  nlohmann::json target_j, achieved_j, counts_j;
  for (auto l : kAllLabels) {
    const std::string key(to_string(l));
    target_j[key] = target[index_of(l)];
    achieved_j[key] = achieved[index_of(l)];
    counts_j[key] = label_counts[index_of(l)];
  }
  return {{"target_name", target_name},
          {"target", target_j},
          {"achieved", achieved_j},
          {"label_counts", counts_j},
          {"subcorpus_counts", subcorpus_counts},
          {"total_words", total_words},
          {"budget_words", budget_words},
          {"seed", seed},
          {"tolerance", tolerance},
          {"provenance", provenance}};
}

CompositionManifest CompositionManifest::from_json(const nlohmann::json& j) {
  CompositionManifest m;
  m.target_name = j.at("target_name").get<std::string>();
  for (auto l : kAllLabels) {
    const std::string key(to_string(l));
    m.target[index_of(l)] = j.at("target").at(key).get<double>();
    m.achieved[index_of(l)] = j.at("achieved").at(key).get<double>();
    m.label_counts[index_of(l)] = j.at("label_counts").at(key).get<std::size_t>();
  }
  m.subcorpus_counts = j.at("subcorpus_counts").get<std::map<SubcorpusId, std::size_t>>();
  m.total_words = j.at("total_words").get<std::size_t>();
  m.budget_words = j.at("budget_words").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.tolerance = j.at("tolerance").get<double>();
  m.provenance = j.value("provenance", std::string{});
  return m;
}

std::string ComposedDataset::training_text() const {
  std::string out;
  for (const auto& u : utterances) {
    out += u.text;
    out += '\n';
  }
  return out;
}

ComposedDataset compose(const LabelPools& pools, const DistributionSpec& target, std::size_t budget_words,
                        std::uint64_t seed, double tolerance) {
  target.validate();
  if (budget_words == 0) throw CompositionError("word budget must be positive");

  struct SubQueue {
    SubcorpusId id;
    std::vector<const AnnotatedUtterance*> items;
    std::size_t next = 0;
    std::size_t taken = 0;
  };
  struct LabelState {
    std::vector<SubQueue> subs;
    std::size_t pool_size = 0;
    std::size_t taken = 0;
    double mean_words = 0.0;
  };

  Rng rng(seed);
  std::array<LabelState, kNumLabels> state;
  std::size_t shortest = SIZE_MAX;
  for (auto l : kAllLabels) {
    const double p = target.fraction(l);
    if (p <= 0.0) continue;
    const auto it = pools.find(l);
    if (it == pools.end() || it->second.empty()) {
      throw CompositionError("no pool for label " + std::string(to_string(l)) + " (target " +
                             io::format_double(100.0 * p) + "%)");
    }
    std::map<SubcorpusId, std::vector<const AnnotatedUtterance*>> by_sub;
    std::size_t words = 0;
    for (const auto& u : it->second) {
      by_sub[u.subcorpus].push_back(&u);
      words += u.word_count;
      shortest = std::min(shortest, u.word_count);
    }
    auto& st = state[index_of(l)];
    st.pool_size = it->second.size();
    st.mean_words = static_cast<double>(words) / static_cast<double>(st.pool_size);
    for (auto& [id, items] : by_sub) {
      rng.shuffle(items);
      st.subs.push_back({id, std::move(items), 0, 0});
    }
  }
  if (shortest > budget_words) {
    throw CompositionError("word budget " + std::to_string(budget_words) +
                           " is smaller than every pooled utterance (shortest has " + std::to_string(shortest) +
                           " words)");
  }

  double mean_words = 0.0;
  for (auto l : kAllLabels) mean_words += target.fraction(l) * state[index_of(l)].mean_words;
  const double estimated_total = mean_words > 0.0 ? static_cast<double>(budget_words) / mean_words : 0.0;
  for (auto l : kAllLabels) {
    const auto& st = state[index_of(l)];
    const double quota = target.fraction(l) * estimated_total;
    if (quota > static_cast<double>(st.pool_size) + 0.5) {
      throw CompositionError(shortfall_message(l, static_cast<std::size_t>(std::ceil(quota)), st.pool_size));
    }
  }

  std::vector<AnnotatedUtterance> chosen;
  std::vector<ConstructionLabel> chosen_labels;
  std::size_t words = 0;
  while (words < budget_words) {
    const double n_next = static_cast<double>(chosen.size() + 1);
    ConstructionLabel label = ConstructionLabel::FRA;
    double best = -1e300;
    for (auto l : kAllLabels) {
      const double p = target.fraction(l);
      if (p <= 0.0) continue;
      const double deficit = p * n_next - static_cast<double>(state[index_of(l)].taken);
      if (deficit > best) {
        best = deficit;
        label = l;
      }
    }
    auto& st = state[index_of(label)];

    SubQueue* source = nullptr;
    double best_sub = -1e300;
    const double k_next = static_cast<double>(st.taken + 1);
    for (auto& sq : st.subs) {
      if (sq.next >= sq.items.size()) continue;
      const double share = static_cast<double>(sq.items.size()) / static_cast<double>(st.pool_size);
      const double deficit = share * k_next - static_cast<double>(sq.taken);
      if (deficit > best_sub) {
        best_sub = deficit;
        source = &sq;
      }
    }
    if (source == nullptr) {
      const double remaining = static_cast<double>(budget_words - words) / std::max(mean_words, 1e-9);
      const auto shortfall = static_cast<std::size_t>(std::ceil(remaining * target.fraction(label)));
      throw CompositionError(shortfall_message(label, st.pool_size + std::max<std::size_t>(shortfall, 1),
                                               st.pool_size));
    }
    const AnnotatedUtterance* u = source->items[source->next];
    if (words + u->word_count > budget_words) break;
    ++source->next;
    ++source->taken;
    ++st.taken;
    words += u->word_count;
    chosen.push_back(*u);
    chosen_labels.push_back(label);
  }

  std::vector<std::size_t> order(chosen.size());
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(derive_seed(seed, 1));
  order_rng.shuffle(order);

  ComposedDataset ds;
  ds.utterances.reserve(order.size());
  ds.labels.reserve(order.size());
  for (std::size_t i : order) {
    ds.utterances.push_back(std::move(chosen[i]));
    ds.labels.push_back(chosen_labels[i]);
  }

  CompositionManifest m;
  m.target_name = target.name;
  m.target = target.target;
  m.budget_words = budget_words;
  m.seed = seed;
  m.tolerance = tolerance;
  m.provenance = "compose";
  ds.manifest = recount(ds.utterances, ds.labels, m);

  for (auto l : kAllLabels) {
    const double diff = std::abs(ds.manifest.achieved[index_of(l)] - target.fraction(l));
    if (diff > tolerance) {
      throw CompositionError("achieved proportion for " + std::string(to_string(l)) + " deviates by " +
                             io::format_double(100.0 * diff) + " points (tolerance " +
                             io::format_double(100.0 * tolerance) + "); budget too small for this target");
    }
  }
  return ds;
}

HoldoutSplit split_holdout(const ComposedDataset& ds, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw DataError("holdout fraction must be in (0, 1), got " + io::format_double(holdout_fraction));
  }
  const std::size_t n = ds.utterances.size();
  std::array<std::vector<std::size_t>, kNumLabels> members;
  for (std::size_t i = 0; i < n; ++i) members[index_of(ds.labels[i])].push_back(i);

  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * holdout_fraction));
  std::array<std::size_t, kNumLabels> take{};
  std::array<double, kNumLabels> remainder{};
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const double ideal = static_cast<double>(members[l].size()) * holdout_fraction;
    take[l] = static_cast<std::size_t>(std::floor(ideal));
    remainder[l] = ideal - std::floor(ideal);
    assigned += take[l];
  }
  std::vector<std::size_t> by_remainder(kNumLabels);
  std::iota(by_remainder.begin(), by_remainder.end(), 0);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total && k < kNumLabels; ++k) {
    const std::size_t l = by_remainder[k];
    if (take[l] < members[l].size()) {
      ++take[l];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<bool> held(n, false);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    auto shuffled = members[l];
    rng.shuffle(shuffled);
    for (std::size_t k = 0; k < take[l]; ++k) held[shuffled[k]] = true;
  }

  HoldoutSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& part = held[i] ? split.heldout : split.train;
    part.utterances.push_back(ds.utterances[i]);
    part.labels.push_back(ds.labels[i]);
  }
  const std::string how = "split_holdout(fraction=" + io::format_double(holdout_fraction) +
                          ", seed=" + std::to_string(seed) + ") of " + ds.manifest.provenance;
  auto base = ds.manifest;
  base.provenance = how + ":train";
  split.train.manifest = recount(split.train.utterances, split.train.labels, base);
  base.provenance = how + ":heldout";
  split.heldout.manifest = recount(split.heldout.utterances, split.heldout.labels, base);
  return split;
}

}  // namespace cxnlm
