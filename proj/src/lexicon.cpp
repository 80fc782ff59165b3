#include "medqc/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/utf8.hpp"

namespace medqc {

std::string_view to_string(TermSource source) {
  return source == TermSource::kPatientFriendly ? "patient-friendly" : "knowledge-base";
}

TermSource parse_term_source(std::string_view text) {
  if (text == "knowledge-base") return TermSource::kKnowledgeBase;
  if (text == "patient-friendly") return TermSource::kPatientFriendly;
  throw InputError("unknown term source '" + std::string(text) + "'");
}

NgramBag char_ngrams(std::string_view text, int n) {
  if (n < 2) throw InputError("n-gram size must be >= 2");
  NgramBag bag;
  if (text.empty()) return bag;

  std::string padded;
  padded.reserve(text.size() + 2);
  padded.push_back(kNgramSentinel);
  padded.append(text);
  padded.push_back(kNgramSentinel);

  const auto chars = utf8::split_chars(padded);
  const std::size_t width = static_cast<std::size_t>(n);
  if (chars.size() < width) {
    bag.push_back(padded);
    return bag;
  }
  bag.reserve(chars.size() - width + 1);
  for (std::size_t i = 0; i + width <= chars.size(); ++i) {
    const char* begin = chars[i].data();
    const char* end = chars[i + width - 1].data() + chars[i + width - 1].size();
    bag.emplace_back(begin, end);
  }
  std::sort(bag.begin(), bag.end());
  return bag;
}

double jaccard(const NgramBag& a, const NgramBag& b) {
  if (a.empty() && b.empty()) return 1.0;
  // Both bags are sorted, so a merge walk counts min multiplicities.
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

NgramIndex::NgramIndex(const std::vector<ConceptEntry>& entries, int ngram_size)
    : ngram_size_(ngram_size) {
  if (ngram_size < 2) throw InputError("n-gram size must be >= 2");
  entry_sizes_.reserve(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const NgramBag bag = char_ngrams(entries[e].surface_form, ngram_size);
    entry_sizes_.push_back(static_cast<std::uint32_t>(bag.size()));
    for (std::size_t i = 0; i < bag.size();) {
      std::size_t j = i;
      while (j < bag.size() && bag[j] == bag[i]) ++j;
      table_[bag[i]].push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(j - i)});
      i = j;
    }
  }
}

const std::vector<NgramIndex::Posting>* NgramIndex::postings(const std::string& gram) const {
  auto it = table_.find(gram);
  return it == table_.end() ? nullptr : &it->second;
}

bool NgramIndex::erase(const std::string& gram, std::uint32_t entry) {
  auto it = table_.find(gram);
  if (it == table_.end()) return false;
  auto& list = it->second;
  auto pos = std::find_if(list.begin(), list.end(),
                          [entry](const Posting& p) { return p.entry == entry; });
  if (pos == list.end()) return false;
  list.erase(pos);
  if (list.empty()) table_.erase(it);
  return true;
}

ConceptLexicon::ConceptLexicon(std::vector<ConceptEntry> entries, int ngram_size,
                               double threshold_default)
    : entries_(std::move(entries)), threshold_default_(threshold_default) {
  if (!(threshold_default > 0.0 && threshold_default <= 1.0)) {
    throw InputError("lexicon threshold must be in (0,1]");
  }
  for (const auto& e : entries_) {
    if (e.surface_form.empty() || e.surface_form != utf8::normalize_surface(e.surface_form)) {
      throw InputError("lexicon surface form is not normalized: '" + e.surface_form + "'");
    }
  }
  index_ = NgramIndex(entries_, ngram_size);
}

std::vector<LexiconMatch> query_index(const NgramIndex& index, std::string_view candidate,
                                      double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InputError("threshold must be in (0,1]");
  std::vector<LexiconMatch> out;
  const NgramBag bag = char_ngrams(candidate, index.ngram_size());
  if (bag.empty() || index.entry_count() == 0) return out;

  std::vector<std::uint32_t> overlap(index.entry_count(), 0);
  std::vector<std::uint32_t> touched;
  std::string gram;
  for (std::size_t i = 0; i < bag.size();) {
    std::size_t j = i;
    while (j < bag.size() && bag[j] == bag[i]) ++j;
    const auto count = static_cast<std::uint32_t>(j - i);
    if (const auto* list = index.postings(bag[i])) {
      for (const auto& p : *list) {
        if (overlap[p.entry] == 0) touched.push_back(p.entry);
        overlap[p.entry] += std::min(count, p.count);
      }
    }
    i = j;
  }

  // An entry sharing no gram scores 0 < threshold, so only touched entries
  // can qualify.
  const auto cand_size = static_cast<std::uint32_t>(bag.size());
  for (std::uint32_t e : touched) {
    const std::uint32_t inter = overlap[e];
    const std::uint32_t uni = cand_size + index.entry_size(e) - inter;
    const double score = static_cast<double>(inter) / static_cast<double>(uni);
    if (score >= threshold) out.push_back({e, score});
  }
  std::sort(out.begin(), out.end(), [](const LexiconMatch& a, const LexiconMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry_index < b.entry_index;
  });
  return out;
}

std::vector<LexiconMatch> query(const ConceptLexicon& lexicon, std::string_view candidate,
                                double threshold) {
  return query_index(lexicon.index(), candidate, threshold);
}

std::vector<ConceptEntry> parse_lexicon_records(std::string_view text, const std::string& origin) {
  std::vector<ConceptEntry> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = utf8::split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError(origin, line_no,
                       "expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    }
    ConceptEntry entry;
    entry.surface_form = utf8::normalize_surface(fields[0]);
    entry.concept_id = fields[1];
    entry.semantic_class = fields[2];
    if (entry.surface_form.empty()) throw ParseError(origin, line_no, "empty surface form");
    if (entry.concept_id.empty()) throw ParseError(origin, line_no, "empty concept id");
    if (entry.semantic_class.empty()) throw ParseError(origin, line_no, "empty semantic class");
    try {
      entry.source = parse_term_source(fields[3]);
    } catch (const InputError& e) {
      throw ParseError(origin, line_no, e.what());
    }
    entries.push_back(std::move(entry));
    if (end == text.size()) break;
  }
  return entries;
}

ConceptLexicon load_lexicon(const std::string& path, const ClassFilter& allowed_classes,
                            int ngram_size, double threshold_default) {
  std::vector<ConceptEntry> kept;
  for (auto& entry : parse_lexicon_records(io::read_file(path), path)) {
    const bool passes = entry.source == TermSource::kPatientFriendly || !allowed_classes ||
                        allowed_classes->count(entry.semantic_class) > 0;
    if (passes) kept.push_back(std::move(entry));
  }
  if (kept.empty()) throw EmptyResultError("empty lexicon: no entries in '" + path + "' pass the class filter");
  return ConceptLexicon(std::move(kept), ngram_size, threshold_default);
}

void write_lexicon(const std::string& path, const std::vector<ConceptEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "# surface\tconcept_id\tsemantic_class\tsource\n";
  for (const auto& e : entries) {
    out << e.surface_form << '\t' << e.concept_id << '\t' << e.semantic_class << '\t'
        << to_string(e.source) << '\n';
  }
}

std::set<std::string> load_class_set(const std::string& path) {
  std::set<std::string> classes;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    classes.insert(line.substr(b, e - b + 1));
  }
  return classes;
}

}  // namespace medqc
