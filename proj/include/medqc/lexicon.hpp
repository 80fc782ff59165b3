#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace medqc {

enum class TermSource { kKnowledgeBase, kPatientFriendly };

std::string_view to_string(TermSource source);
TermSource parse_term_source(std::string_view text);  // throws InputError

struct ConceptEntry {
  std::string surface_form;  // lowercase, single-space separated
  std::string concept_id;
  std::string semantic_class;
  TermSource source = TermSource::kKnowledgeBase;
};

// Sorted multiset of character n-grams.
using NgramBag = std::vector<std::string>;

inline constexpr char kNgramSentinel = '#';
inline constexpr int kDefaultNgramSize = 3;
inline constexpr double kDefaultThreshold = 0.7;

// All contiguous n-grams of the text padded with one sentinel per side.
// A padded text shorter than n yields the padded text itself as a single
// gram; empty text yields an empty bag. Requires n >= 2.
NgramBag char_ngrams(std::string_view text, int n);

// Multiset Jaccard |a ∩ b| / |a ∪ b|; 1.0 when both bags are empty.
double jaccard(const NgramBag& a, const NgramBag& b);

// Inverted index from n-gram to the entries containing it, with the
// per-entry multiplicity so that multiset intersections can be accumulated
// without touching the entries themselves.
class NgramIndex {
 public:
  struct Posting {
    std::uint32_t entry;
    std::uint32_t count;
  };

  NgramIndex() = default;
  NgramIndex(const std::vector<ConceptEntry>& entries, int ngram_size);

  int ngram_size() const { return ngram_size_; }
  std::size_t entry_count() const { return entry_sizes_.size(); }
  std::uint32_t entry_size(std::size_t entry) const { return entry_sizes_[entry]; }
  const std::vector<Posting>* postings(const std::string& gram) const;
  const std::unordered_map<std::string, std::vector<Posting>>& table() const { return table_; }

  // Removes one posting. Only used to probe index completeness.
  bool erase(const std::string& gram, std::uint32_t entry);

 private:
  int ngram_size_ = kDefaultNgramSize;
  std::vector<std::uint32_t> entry_sizes_;
  std::unordered_map<std::string, std::vector<Posting>> table_;
};

struct LexiconMatch {
  std::size_t entry_index;
  double score;
};

// Immutable after construction; safe for concurrent queries.
class ConceptLexicon {
 public:
  ConceptLexicon() = default;
  ConceptLexicon(std::vector<ConceptEntry> entries, int ngram_size = kDefaultNgramSize,
                 double threshold_default = kDefaultThreshold);

  const std::vector<ConceptEntry>& entries() const { return entries_; }
  const ConceptEntry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int ngram_size() const { return index_.ngram_size(); }
  double threshold_default() const { return threshold_default_; }
  const NgramIndex& index() const { return index_; }

 private:
  std::vector<ConceptEntry> entries_;
  NgramIndex index_;
  double threshold_default_ = kDefaultThreshold;
};

// Entries whose Jaccard similarity to the candidate is >= threshold, sorted
// by descending score then ascending entry index. threshold must be in (0,1].
std::vector<LexiconMatch> query(const ConceptLexicon& lexicon, std::string_view candidate,
                                double threshold);

// Same retrieval against an explicit index; query() delegates here.
std::vector<LexiconMatch> query_index(const NgramIndex& index, std::string_view candidate,
                                      double threshold);

// nullopt admits every semantic class.
using ClassFilter = std::optional<std::set<std::string>>;

// Reads `surface<TAB>concept_id<TAB>semantic_class<TAB>source` records.
// Knowledge-base entries are kept only when their class passes the filter;
// patient-friendly entries always pass. Throws ParseError on a malformed
// record and EmptyResultError when nothing survives.
ConceptLexicon load_lexicon(const std::string& path, const ClassFilter& allowed_classes,
                            int ngram_size = kDefaultNgramSize,
                            double threshold_default = kDefaultThreshold);

// Parses lexicon records from an in-memory buffer; `origin` names the source
// in diagnostics.
std::vector<ConceptEntry> parse_lexicon_records(std::string_view text, const std::string& origin);

void write_lexicon(const std::string& path, const std::vector<ConceptEntry>& entries);

// One class tag per line; '#' comments and blank lines ignored.
std::set<std::string> load_class_set(const std::string& path);

}  // namespace medqc
