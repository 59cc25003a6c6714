#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cxnlm {

using SubcorpusId = std::string;

enum class SourceKind { talkbank, subtitles, gutenberg, magazine, wiki, news, dreams, other };

std::string_view to_string(SourceKind kind);
// Unknown names map to SourceKind::other.
SourceKind source_kind_from_string(std::string_view name);

struct AnnotatedToken {
  static constexpr int kRoot = -1;

  std::string form;
  std::string lemma;
  std::string upos;
  std::map<std::string, std::string> morph;
  int head = kRoot;  // 0-based index into the owning utterance, or kRoot
  std::string deprel;
  bool space_after = true;

  bool is_root() const { return head == kRoot; }
  // Empty string when the feature is absent.
  std::string_view feature(std::string_view name) const;
  bool has_feature(std::string_view name, std::string_view value) const { return feature(name) == value; }
};

struct AnnotatedUtterance {
  std::string id;  // sent_id when available
  std::vector<AnnotatedToken> tokens;
  std::string text;
  SubcorpusId subcorpus;
  std::size_t word_count = 0;
};

// Tokens that count as words: everything except upos PUNCT.
std::size_t count_words(const std::vector<AnnotatedToken>& tokens);
// Joins forms, honouring SpaceAfter=No and not spacing before closing punctuation.
std::string detokenize(const std::vector<AnnotatedToken>& tokens);

// ---- cleaning -------------------------------------------------------------

// Applies the universal rules (quote folding, whitespace collapsing) plus the
// source-specific ones. Line-oriented rules (dropping talkbank utterances,
// dropping gutenberg layout lines) run per input line before whitespace is
// collapsed, so a multi-line input yields a single line. Idempotent.
// Throws IngestError on invalid UTF-8.
std::string normalize_text(std::string_view raw, SourceKind kind);

// Line-preserving variant used for ingesting raw text files: every input line
// is normalized on its own and empty results are dropped.
std::vector<std::string> normalize_lines(std::string_view raw, SourceKind kind);

// ---- CoNLL-U --------------------------------------------------------------

std::vector<AnnotatedUtterance> parse_conllu(std::string_view content, const SubcorpusId& subcorpus,
                                             std::string_view source_name = "<memory>");
std::vector<AnnotatedUtterance> load_conllu(const std::filesystem::path& path, const SubcorpusId& subcorpus);
std::string serialize_conllu(const std::vector<AnnotatedUtterance>& utterances);

// ---- JSON-lines store -----------------------------------------------------

nlohmann::json to_json(const AnnotatedUtterance& u);
AnnotatedUtterance utterance_from_json(const nlohmann::json& j);
std::string to_jsonl(const std::vector<AnnotatedUtterance>& utterances);
std::vector<AnnotatedUtterance> from_jsonl(std::string_view content);

// ---- registry -------------------------------------------------------------

struct SubcorpusMeta {
  SubcorpusId id;
  std::string description;
  SourceKind source_kind = SourceKind::other;
  std::size_t word_count = 0;
  std::string path;  // CoNLL-U file, relative to the registry manifest
};

struct SummaryTable {
  std::vector<SubcorpusMeta> rows;
  std::size_t total_words = 0;
};

class CorpusRegistry {
 public:
  // Adds utterances to a subcorpus, creating it on first use. Word counts are
  // kept equal to the sum of member utterance counts.
  void add(const SubcorpusMeta& meta, std::vector<AnnotatedUtterance> utterances);

  bool empty() const { return order_.empty(); }
  const std::vector<SubcorpusId>& ids() const { return order_; }
  const SubcorpusMeta& meta(const SubcorpusId& id) const;
  const std::vector<AnnotatedUtterance>& utterances(const SubcorpusId& id) const;
  std::vector<AnnotatedUtterance> all_utterances() const;

  SummaryTable summary() const;

  // Manifest lists subcorpora with their metadata; utterances are not stored.
  nlohmann::json manifest() const;

  // Reads a manifest and loads every listed CoNLL-U file (paths relative to
  // the manifest's directory).
  static CorpusRegistry load(const std::filesystem::path& manifest_path);

 private:
  struct Entry {
    SubcorpusMeta meta;
    std::vector<AnnotatedUtterance> utterances;
  };
  std::vector<SubcorpusId> order_;
  std::map<SubcorpusId, Entry> entries_;
};

std::string summary_csv(const SummaryTable& table);

}  // namespace cxnlm
