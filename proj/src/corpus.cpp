#include "cxnlm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/utf8.hpp"

namespace cxnlm {

namespace {

constexpr std::pair<SourceKind, std::string_view> kKindNames[] = {
    {SourceKind::talkbank, "talkbank"}, {SourceKind::subtitles, "subtitles"},
    {SourceKind::gutenberg, "gutenberg"}, {SourceKind::magazine, "magazine"},
    {SourceKind::wiki, "wiki"},           {SourceKind::news, "news"},
    {SourceKind::dreams, "dreams"},       {SourceKind::other, "other"},
};

bool is_double_quote_variant(char32_t c) {
  switch (c) {
    case U'“': case U'”': case U'„': case U'‟':
    case U'«': case U'»': case U'″': case U'〝':
    case U'〞': case U'＂':
      return true;
    default:
      return false;
  }
}

bool is_single_quote_variant(char32_t c) {
  switch (c) {
    case U'‘': case U'’': case U'‚': case U'‛':
    case U'‹': case U'›': case U'′': case U'´':
    case U'`':
      return true;
    default:
      return false;
  }
}

bool is_space(char32_t c) {
  switch (c) {
    case 0x20: case 0x09: case 0x0A: case 0x0D: case 0x0B: case 0x0C:
    case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

// Quote folding; every other whitespace variant becomes a plain space except
// newlines, which the line-oriented rules still need.
std::string fold_characters(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : utf8::decode(s)) {
    if (is_double_quote_variant(c)) {
      out.push_back('"');
    } else if (is_single_quote_variant(c)) {
      out.push_back('\'');
    } else if (c == U'\n') {
      out.push_back('\n');
    } else if (is_space(c)) {
      out.push_back(' ');
    } else {
      utf8::append(out, c);
    }
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\n') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string remove_delimited(std::string_view s, char open, char close) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == open) {
      const std::size_t end = s.find(close, i + 1);
      if (end != std::string_view::npos) {
        i = end + 1;
        continue;
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

bool has_alnum(std::string_view s) {
  for (char32_t c : utf8::decode(s)) {
    if (c >= 0x80) return true;  // non-ASCII letters (umlauts etc.)
    if (std::isalnum(static_cast<int>(c))) return true;
  }
  return false;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Removes spaces in front of sentence punctuation ("Ball ." -> "Ball.").
std::string attach_punctuation(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ' ' && i + 1 < s.size() && std::string_view(".?!,;:").find(s[i + 1]) != std::string_view::npos) {
      const bool next_is_end = i + 2 >= s.size() || s[i + 2] == ' ' || s[i + 1] == '.';
      if (next_is_end) continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

// CHAT transcript line -> plain utterance, or empty if the utterance is dropped.
std::string clean_talkbank_line(std::string_view line) {
  std::string s = io::trim(line);
  if (s.empty() || s[0] == '@' || s[0] == '%') return {};
  if (s[0] == '*') {
    const auto colon = s.find(':');
    if (colon != std::string::npos) s = s.substr(colon + 1);
  }
  if (s.find("xxx") != std::string::npos || s.find("yyy") != std::string::npos) return {};
  s = remove_delimited(s, '\x15', '\x15');
  s = remove_delimited(s, '[', ']');
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '<' || c == '>'; }), s.end());

  std::vector<std::string> kept;
  for (std::string tok : split_ws(s)) {
    if (tok[0] == '&') continue;  // fillers, fragments, paralinguistic codes
    if (tok.size() > 1 && tok[0] == '0' && !std::isdigit(static_cast<unsigned char>(tok[1]))) continue;
    if (tok[0] == '+') {
      const char last = tok.back();
      if (tok.size() >= 4 && tok.ends_with("...")) {
        kept.emplace_back("...");
      } else if (last == '?' || last == '!' || last == '.') {
        kept.emplace_back(1, last);
      }
      continue;
    }
    // pauses "(.)", implicit completions "(be)cause" -> "because"
    std::string cleaned;
    std::size_t i = 0;
    while (i < tok.size()) {
      if (tok[i] == '(') {
        const auto end = tok.find(')', i + 1);
        if (end != std::string::npos) {
          const std::string inner = tok.substr(i + 1, end - i - 1);
          if (inner.find_first_not_of('.') != std::string::npos) cleaned += inner;
          i = end + 1;
          continue;
        }
      }
      if (tok[i] == '@') {  // special form markers: word@c
        while (i < tok.size() && tok[i] != ' ') ++i;
        continue;
      }
      cleaned.push_back(tok[i]);
      ++i;
    }
    if (!cleaned.empty()) kept.push_back(std::move(cleaned));
  }
  std::string out = attach_punctuation(io::join(kept, " "));
  if (!has_alnum(out)) return {};
  return out;
}

bool has_long_space_run(std::string_view line) {
  int run = 0;
  for (char c : line) {
    run = (c == ' ' || c == '\t') ? run + 1 : 0;
    if (run > 6) return true;
  }
  return false;
}

std::string clean_subtitle_line(std::string_view line) {
  const std::string s = remove_delimited(line, '(', ')');
  // dashes opening the line or a new sentence within it ("- Ja. - Nein.")
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '-' && (i + 1 >= s.size() || s[i + 1] != '-')) {
      std::size_t k = out.size();
      while (k > 0 && out[k - 1] == ' ') --k;
      if (k == 0 || std::string_view(".?!").find(out[k - 1]) != std::string_view::npos) continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string normalize_once(std::string_view raw, SourceKind kind) {
  const std::string folded = fold_characters(raw);
  std::vector<std::string> lines;
  for (std::string& line : io::split(folded, '\n')) {
    switch (kind) {
      case SourceKind::talkbank:
        line = clean_talkbank_line(line);
        break;
      case SourceKind::gutenberg:
        if (has_long_space_run(line)) line.clear();
        break;
      case SourceKind::subtitles:
        line = clean_subtitle_line(line);
        break;
      default:
        break;
    }
    if (!line.empty()) lines.push_back(std::move(line));
  }
  std::string joined = io::join(lines, "\n");
  if (kind == SourceKind::gutenberg) joined = remove_delimited(joined, '[', ']');
  return collapse_whitespace(joined);
}

}  // namespace

std::string_view to_string(SourceKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "other";
}

SourceKind source_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return SourceKind::other;
}

std::string_view AnnotatedToken::feature(std::string_view name) const {
  const auto it = morph.find(std::string(name));
  return it == morph.end() ? std::string_view{} : std::string_view(it->second);
}

std::size_t count_words(const std::vector<AnnotatedToken>& tokens) {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const AnnotatedToken& t) { return t.upos != "PUNCT"; }));
}

std::string detokenize(const std::vector<AnnotatedToken>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& form = tokens[i].form;
    const bool closing = form.size() == 1 && std::string_view(".,!?;:)").find(form[0]) != std::string_view::npos;
    if (i > 0 && tokens[i - 1].space_after && !closing && !(out.size() && out.back() == '(')) out.push_back(' ');
    out += form;
  }
  return out;
}

std::string normalize_text(std::string_view raw, SourceKind kind) {
  if (const auto bad = utf8::find_invalid(raw)) {
    throw IngestError("invalid UTF-8 at byte offset " + std::to_string(*bad));
  }
  std::string current = normalize_once(raw, kind);
  for (int iter = 0; iter < 16; ++iter) {
    std::string next = normalize_once(current, kind);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::vector<std::string> normalize_lines(std::string_view raw, SourceKind kind) {
  if (const auto bad = utf8::find_invalid(raw)) {
    throw IngestError("invalid UTF-8 at byte offset " + std::to_string(*bad));
  }
  std::vector<std::string> out;
  for (const std::string& line : io::split(raw, '\n')) {
    std::string cleaned = normalize_text(line, kind);
    if (!cleaned.empty()) out.push_back(std::move(cleaned));
  }
  return out;
}

// ---- CoNLL-U --------------------------------------------------------------

namespace {

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string field_or_empty(const std::string& s) { return s == "_" ? std::string{} : s; }

std::string sentence_name(const AnnotatedUtterance& u, std::size_t ordinal) {
  return u.id.empty() ? "#" + std::to_string(ordinal) : "'" + u.id + "'";
}

}  // namespace

std::vector<AnnotatedUtterance> parse_conllu(std::string_view content, const SubcorpusId& subcorpus,
                                             std::string_view source_name) {
  if (const auto bad = utf8::find_invalid(content)) {
    throw IngestError(std::string(source_name) + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
  }
  std::vector<AnnotatedUtterance> out;
  AnnotatedUtterance cur;
  bool has_text_comment = false;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& why) {
    throw ParseError(std::string(source_name) + ":" + std::to_string(line_no) + ": " + why);
  };

  auto finish = [&]() {
    if (!cur.tokens.empty()) {
      const std::size_t ordinal = out.size() + 1;
      const int n = static_cast<int>(cur.tokens.size());
      for (const auto& tok : cur.tokens) {
        if (!tok.is_root() && (tok.head < 0 || tok.head >= n)) {
          throw ParseError(std::string(source_name) + ": sentence " + sentence_name(cur, ordinal) +
                           " has dangling head index " + std::to_string(tok.head + 1));
        }
      }
      if (!has_text_comment) cur.text = detokenize(cur.tokens);
      cur.subcorpus = subcorpus;
      cur.word_count = count_words(cur.tokens);
      out.push_back(std::move(cur));
    }
    cur = AnnotatedUtterance{};
    has_text_comment = false;
  };

  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      finish();
      if (end == content.size()) break;
      continue;
    }
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string_view::npos) {
        const std::string key = io::trim(line.substr(1, eq - 1));
        const std::string value = io::trim(line.substr(eq + 1));
        if (key == "sent_id") {
          cur.id = value;
        } else if (key == "text") {
          cur.text = value;
          has_text_comment = true;
        }
      }
      if (end == content.size()) break;
      continue;
    }

    const auto fields = io::split(line, '\t');
    if (fields.size() != 10) fail("expected 10 tab-separated fields, got " + std::to_string(fields.size()));
    const std::string& id = fields[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) {
      if (end == content.size()) break;
      continue;  // multiword token ranges and empty nodes
    }
    const auto index = parse_int(id);
    if (!index || *index != static_cast<int>(cur.tokens.size()) + 1) fail("unexpected token id '" + id + "'");
    if (fields[1].empty()) fail("empty FORM");

    AnnotatedToken tok;
    tok.form = fields[1];
    tok.lemma = field_or_empty(fields[2]);
    tok.upos = field_or_empty(fields[3]);
    if (fields[5] != "_" && !fields[5].empty()) {
      for (const std::string& feat : io::split(fields[5], '|')) {
        const auto eq = feat.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == feat.size()) fail("malformed feature '" + feat + "'");
        tok.morph[feat.substr(0, eq)] = feat.substr(eq + 1);
      }
    }
    if (fields[6] == "_") {
      tok.head = AnnotatedToken::kRoot;
    } else {
      const auto head = parse_int(fields[6]);
      if (!head || *head < 0) fail("malformed HEAD '" + fields[6] + "'");
      tok.head = *head == 0 ? AnnotatedToken::kRoot : *head - 1;
    }
    tok.deprel = field_or_empty(fields[7]);
    if (fields[9].find("SpaceAfter=No") != std::string::npos) tok.space_after = false;
    cur.tokens.push_back(std::move(tok));
    if (end == content.size()) break;
  }
  finish();
  return out;
}

std::vector<AnnotatedUtterance> load_conllu(const std::filesystem::path& path, const SubcorpusId& subcorpus) {
  return parse_conllu(io::read_file(path), subcorpus, path.string());
}

std::string serialize_conllu(const std::vector<AnnotatedUtterance>& utterances) {
  std::ostringstream out;
  for (const auto& u : utterances) {
    if (!u.id.empty()) out << "# sent_id = " << u.id << '\n';
    out << "# text = " << u.text << '\n';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      const auto& t = u.tokens[i];
      std::string feats;
      for (const auto& [k, v] : t.morph) {
        if (!feats.empty()) feats += '|';
        feats += k + "=" + v;
      }
      out << (i + 1) << '\t' << t.form << '\t' << (t.lemma.empty() ? "_" : t.lemma) << '\t'
          << (t.upos.empty() ? "_" : t.upos) << "\t_\t" << (feats.empty() ? "_" : feats) << '\t'
          << (t.is_root() ? 0 : t.head + 1) << '\t' << (t.deprel.empty() ? "_" : t.deprel) << "\t_\t"
          << (t.space_after ? "_" : "SpaceAfter=No") << '\n';
    }
    out << '\n';
  }
  return out.str();
}

// ---- JSON-lines -----------------------------------------------------------

nlohmann::json to_json(const AnnotatedUtterance& u) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : u.tokens) {
    nlohmann::json jt;
    jt["form"] = t.form;
    jt["lemma"] = t.lemma;
    jt["upos"] = t.upos;
    jt["morph"] = t.morph;
    jt["head"] = t.is_root() ? nlohmann::json(nullptr) : nlohmann::json(t.head);
    jt["deprel"] = t.deprel;
    if (!t.space_after) jt["space_after"] = false;
    tokens.push_back(std::move(jt));
  }
  nlohmann::json j;
  if (!u.id.empty()) j["id"] = u.id;
  j["text"] = u.text;
  j["subcorpus"] = u.subcorpus;
  j["word_count"] = u.word_count;
  j["tokens"] = std::move(tokens);
  return j;
}

AnnotatedUtterance utterance_from_json(const nlohmann::json& j) {
  AnnotatedUtterance u;
  u.id = j.value("id", std::string{});
  u.text = j.at("text").get<std::string>();
  u.subcorpus = j.at("subcorpus").get<std::string>();
  for (const auto& jt : j.at("tokens")) {
    AnnotatedToken t;
    t.form = jt.at("form").get<std::string>();
    t.lemma = jt.value("lemma", std::string{});
    t.upos = jt.value("upos", std::string{});
    if (jt.contains("morph")) t.morph = jt["morph"].get<std::map<std::string, std::string>>();
    t.head = jt.contains("head") && !jt["head"].is_null() ? jt["head"].get<int>() : AnnotatedToken::kRoot;
    t.deprel = jt.value("deprel", std::string{});
    t.space_after = jt.value("space_after", true);
    u.tokens.push_back(std::move(t));
  }
  u.word_count = count_words(u.tokens);
  return u;
}

std::string to_jsonl(const std::vector<AnnotatedUtterance>& utterances) {
  std::string out;
  for (const auto& u : utterances) {
    out += to_json(u).dump();
    out += '\n';
  }
  return out;
}

std::vector<AnnotatedUtterance> from_jsonl(std::string_view content) {
  std::vector<AnnotatedUtterance> out;
  std::size_t line_no = 0;
  for (const std::string& line : io::split(content, '\n')) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    try {
      out.push_back(utterance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---- registry -------------------------------------------------------------

void CorpusRegistry::add(const SubcorpusMeta& meta, std::vector<AnnotatedUtterance> utterances) {
  auto it = entries_.find(meta.id);
  if (it == entries_.end()) {
    order_.push_back(meta.id);
    Entry e;
    e.meta = meta;
    e.meta.word_count = 0;
    it = entries_.emplace(meta.id, std::move(e)).first;
  }
  for (auto& u : utterances) {
    u.subcorpus = meta.id;
    it->second.meta.word_count += u.word_count;
    it->second.utterances.push_back(std::move(u));
  }
}

const SubcorpusMeta& CorpusRegistry::meta(const SubcorpusId& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw DataError("unknown subcorpus '" + id + "'");
  return it->second.meta;
}

const std::vector<AnnotatedUtterance>& CorpusRegistry::utterances(const SubcorpusId& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw DataError("unknown subcorpus '" + id + "'");
  return it->second.utterances;
}

std::vector<AnnotatedUtterance> CorpusRegistry::all_utterances() const {
  std::vector<AnnotatedUtterance> all;
  for (const auto& id : order_) {
    const auto& us = entries_.at(id).utterances;
    all.insert(all.end(), us.begin(), us.end());
  }
  return all;
}

SummaryTable CorpusRegistry::summary() const {
  SummaryTable table;
  for (const auto& id : order_) {
    table.rows.push_back(entries_.at(id).meta);
    table.total_words += entries_.at(id).meta.word_count;
  }
  return table;
}

nlohmann::json CorpusRegistry::manifest() const {
  nlohmann::json subs = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& id : order_) {
    const auto& m = entries_.at(id).meta;
    subs.push_back({{"id", m.id},
                    {"description", m.description},
                    {"source_kind", to_string(m.source_kind)},
                    {"word_count", m.word_count},
                    {"path", m.path}});
    total += m.word_count;
  }
  return {{"subcorpora", subs}, {"total_words", total}};
}

CorpusRegistry CorpusRegistry::load(const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();
  CorpusRegistry reg;
  for (const auto& s : j.at("subcorpora")) {
    SubcorpusMeta meta;
    meta.id = s.at("id").get<std::string>();
    meta.description = s.value("description", std::string{});
    meta.source_kind = source_kind_from_string(s.value("source_kind", std::string("other")));
    meta.path = s.at("path").get<std::string>();
    reg.add(meta, load_conllu(base / meta.path, meta.id));
  }
  return reg;
}

std::string summary_csv(const SummaryTable& table) {
  std::string out = "subcorpus,description,source_kind,words\n";
  for (const auto& r : table.rows) {
    out += io::csv_field(r.id) + "," + io::csv_field(r.description) + "," + std::string(to_string(r.source_kind)) +
           "," + std::to_string(r.word_count) + "\n";
  }
  out += "total,,," + std::to_string(table.total_words) + "\n";
  return out;
}

}  // namespace cxnlm
