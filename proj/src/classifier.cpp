#include "cxnlm/classifier.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"

namespace cxnlm {

namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames = {"FRA", "QWH", "QYN", "COP",
                                                                  "IMP", "SPI", "SPT", "COM"};

// Interrogatives used when the annotator emitted no PronType feature at all.
constexpr std::string_view kWhWords[] = {"was",   "wer",     "wen",     "wem",    "wessen", "wo",      "wohin",
                                         "woher", "wann",    "warum",   "wieso",  "weshalb", "weswegen", "wie",
                                         "womit", "wofür",   "worüber", "wozu",   "wodurch", "woran",   "worauf",
                                         "woraus", "worin",  "welcher", "welche", "welches", "welchen", "welchem"};

bool is_verbal(const AnnotatedToken& t) { return t.upos == "VERB" || t.upos == "AUX"; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_interrogative(const AnnotatedToken& t) {
  const auto pron_type = t.feature("PronType");
  if (!pron_type.empty()) return pron_type == "Int";
  if (t.upos != "PRON" && t.upos != "ADV" && t.upos != "DET") return false;
  const std::string form = lower_ascii(t.form);
  return std::find(std::begin(kWhWords), std::end(kWhWords), form) != std::end(kWhWords);
}

bool is_wrapping_punct(const AnnotatedToken& t) {
  return t.upos == "PUNCT" && t.form.find_first_of(".!?") == std::string::npos &&
         t.form.find("…") == std::string::npos;
}

struct QuestionCue {
  bool terminal_punct = false;
  bool ends_with_question_mark = false;
  bool cue() const { return ends_with_question_mark || !terminal_punct; }
};

QuestionCue question_cue(const std::vector<AnnotatedToken>& tokens) {
  QuestionCue q;
  std::size_t i = tokens.size();
  while (i > 0 && is_wrapping_punct(tokens[i - 1]) && tokens[i - 1].form != ",") --i;
  if (i == 0) return q;
  const auto& last = tokens[i - 1];
  if (last.upos == "PUNCT" &&
      (last.form.find_first_of(".!?") != std::string::npos || last.form.find("…") != std::string::npos)) {
    q.terminal_punct = true;
    q.ends_with_question_mark = last.form.find('?') != std::string::npos;
  }
  return q;
}

// Index of the first token whose upos is not in `skip`, or tokens.size().
std::size_t first_not_in(const std::vector<AnnotatedToken>& tokens, std::size_t from,
                         std::initializer_list<std::string_view> skip) {
  std::size_t i = from;
  while (i < tokens.size() && std::find(skip.begin(), skip.end(), tokens[i].upos) != skip.end()) ++i;
  return i;
}

std::string_view base_relation(std::string_view deprel) {
  const auto colon = deprel.find(':');
  return colon == std::string_view::npos ? deprel : deprel.substr(0, colon);
}

}  // namespace

std::string_view to_string(ConstructionLabel label) { return kLabelNames[index_of(label)]; }

std::optional<ConstructionLabel> label_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (kLabelNames[i] == name) return kAllLabels[i];
  }
  return std::nullopt;
}

ConstructionLabel classify_utterance(const AnnotatedUtterance& u) {
  const auto& tokens = u.tokens;
  if (tokens.empty()) throw ClassificationError("cannot classify empty utterance '" + u.id + "'");

  if (std::none_of(tokens.begin(), tokens.end(), is_verbal)) return ConstructionLabel::FRA;

  const QuestionCue q = question_cue(tokens);
  const std::size_t lead = first_not_in(tokens, 0, {"PUNCT", "CCONJ", "INTJ"});

  if (q.cue()) {
    const std::size_t wh = first_not_in(tokens, lead, {"ADP", "PUNCT"});
    if (wh < tokens.size() && is_interrogative(tokens[wh])) return ConstructionLabel::QWH;
    if (lead < tokens.size()) {
      const auto& t = tokens[lead];
      const auto verb_form = t.feature("VerbForm");
      if (is_verbal(t) && !t.has_feature("Mood", "Imp") && (verb_form.empty() || verb_form == "Fin")) {
        return ConstructionLabel::QYN;
      }
    }
  }

  const auto first_verb = std::find_if(tokens.begin(), tokens.end(), is_verbal);
  if (first_verb->has_feature("Mood", "Imp")) {
    const bool introduced = std::all_of(tokens.begin(), first_verb, [](const AnnotatedToken& t) {
      return t.upos == "PUNCT" || t.upos == "INTJ" || t.upos == "CCONJ" || t.upos == "ADV" || t.upos == "PART";
    });
    if (introduced) return ConstructionLabel::IMP;
  }

  std::vector<std::size_t> lexical;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].upos == "VERB") lexical.push_back(i);
  }
  if (lexical.size() >= 2) return ConstructionLabel::COM;

  if (lexical.empty()) {
    const bool copula = std::any_of(tokens.begin(), tokens.end(), [](const AnnotatedToken& t) {
      if (t.upos != "AUX") return false;
      const std::string lemma = lower_ascii(t.lemma);
      return lemma == "sein" || lemma == "werden";
    });
    return copula ? ConstructionLabel::COP : ConstructionLabel::SPI;
  }

  const int verb = static_cast<int>(lexical.front());
  const bool transitive = std::any_of(tokens.begin(), tokens.end(), [verb](const AnnotatedToken& t) {
    if (t.head != verb) return false;
    const auto rel = base_relation(t.deprel);
    if (rel != "obj" && rel != "oa") return false;
    const auto case_value = t.feature("Case");
    return case_value.empty() || case_value == "Acc";
  });
  return transitive ? ConstructionLabel::SPT : ConstructionLabel::SPI;
}

DistributionProfile DistributionProfile::from_counts(const std::array<std::size_t, kNumLabels>& counts) {
  DistributionProfile p;
  p.counts = counts;
  for (std::size_t c : counts) p.total += c;
  p.defined = p.total > 0;
  if (p.defined) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      p.proportions[i] = static_cast<double>(counts[i]) / static_cast<double>(p.total);
    }
  }
  return p;
}

DistributionProfile profile_labels(const std::vector<ConstructionLabel>& labels) {
  std::array<std::size_t, kNumLabels> counts{};
  for (auto l : labels) ++counts[index_of(l)];
  return DistributionProfile::from_counts(counts);
}

DistributionProfile profile_corpus(const std::vector<AnnotatedUtterance>& utterances) {
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto& u : utterances) ++counts[index_of(classify_utterance(u))];
  return DistributionProfile::from_counts(counts);
}

std::string profile_csv(const DistributionProfile& profile) {
  std::string out = "label,count,proportion\n";
  for (auto l : kAllLabels) {
    out += std::string(to_string(l)) + "," + std::to_string(profile.count(l)) + "," +
           (profile.defined ? io::format_double(profile.proportion(l)) : std::string("nan")) + "\n";
  }
  out += "total," + std::to_string(profile.total) + "," + (profile.defined ? "1" : "nan") + "\n";
  return out;
}

std::string profile_pretty(const DistributionProfile& profile) {
  std::ostringstream out;
  char buf[96];
  for (auto l : kAllLabels) {
    std::snprintf(buf, sizeof(buf), "%s  %8zu  %6.2f%%\n", std::string(to_string(l)).c_str(), profile.count(l),
                  profile.defined ? 100.0 * profile.proportion(l) : 0.0);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "all  %8zu%s\n", profile.total, profile.defined ? "" : "  (empty: undefined)");
  out << buf;
  return out.str();
}

std::size_t GoldEvaluation::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < kNumLabels; ++i) t += confusion[i][i];
  return t;
}

GoldEvaluation evaluate_against_gold(const std::vector<GoldExample>& gold) {
  if (gold.empty()) throw DataError("gold set is empty");
  GoldEvaluation eval;
  eval.total = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto predicted = classify_utterance(gold[i].utterance);
    ++eval.confusion[index_of(gold[i].gold)][index_of(predicted)];
    if (predicted == gold[i].gold) {
      ++eval.correct;
    } else {
      eval.misclassified.push_back(i);
    }
  }
  eval.accuracy = static_cast<double>(eval.correct) / static_cast<double>(eval.total);
  return eval;
}

std::vector<GoldExample> load_gold(const std::filesystem::path& tsv_path, const std::filesystem::path& conllu_path) {
  const auto utterances = load_conllu(conllu_path, "gold");
  std::map<std::string, const AnnotatedUtterance*> by_id;
  for (const auto& u : utterances) by_id[u.id] = &u;

  std::vector<GoldExample> gold;
  std::size_t line_no = 0;
  for (const std::string& line : io::read_lines(tsv_path)) {
    ++line_no;
    if (io::trim(line).empty() || line[0] == '#') continue;
    const auto fields = io::split(line, '\t');
    const auto where = tsv_path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw ParseError(where + ": expected gold_label<TAB>sent_id");
    const auto label = label_from_string(io::trim(fields[0]));
    if (!label) throw ParseError(where + ": unknown label '" + fields[0] + "'");
    const auto it = by_id.find(io::trim(fields[1]));
    if (it == by_id.end()) throw ParseError(where + ": unknown sentence id '" + fields[1] + "'");
    gold.push_back({*it->second, *label});
  }
  return gold;
}

std::string confusion_csv(const GoldEvaluation& eval) {
  std::string out = "gold\\predicted";
  for (auto l : kAllLabels) out += "," + std::string(to_string(l));
  out += "\n";
  for (auto g : kAllLabels) {
    out += std::string(to_string(g));
    for (auto p : kAllLabels) out += "," + std::to_string(eval.confusion[index_of(g)][index_of(p)]);
    out += "\n";
  }
  return out;
}

}  // namespace cxnlm
