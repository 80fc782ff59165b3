#include "medqc/aspects.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>

#include "medqc/error.hpp"

namespace medqc {

namespace {

// Closed-class English words; a window touching one of these at either end
// is never a concept mention on its own.
constexpr std::string_view kStopwords[] = {
    "a",     "about", "after",  "all",   "also",  "am",    "an",    "and",   "any",   "are",
    "as",    "at",    "be",     "been",  "before", "being", "but",   "by",    "can",   "could",
    "did",   "do",    "does",   "doing", "for",   "from",  "had",   "has",   "have",  "having",
    "he",    "her",   "here",   "hers",  "him",   "his",   "how",   "i",     "if",    "in",
    "into",  "is",    "it",     "its",   "just",  "me",    "more",  "most",  "my",    "no",
    "nor",   "not",   "now",    "of",    "off",   "on",    "once",  "only",  "or",    "other",
    "our",   "out",   "over",   "own",   "same",  "she",   "should", "so",   "some",  "such",
    "than",  "that",  "the",    "their", "them",  "then",  "there", "these", "they",  "this",
    "those", "to",    "too",    "under", "until", "up",    "very",  "was",   "we",    "were",
    "what",  "when",  "which",  "while", "with",  "you"};

bool is_punctuation(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  });
}

struct Candidate {
  std::size_t start;
  std::size_t end;
  LexiconMatch match;
};

}  // namespace

bool is_boundary_stopword(std::string_view token) {
  if (is_punctuation(token)) return true;
  return std::find(std::begin(kStopwords), std::end(kStopwords), token) != std::end(kStopwords);
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t start, std::size_t end) {
  std::string out;
  for (std::size_t i = start; i < end; ++i) {
    if (i > start) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<AspectSpan> extract_aspects(const std::vector<std::string>& tokens,
                                        const ConceptLexicon& lexicon,
                                        const ExtractionOptions& options) {
  if (options.max_window < 1) throw InputError("max_window must be >= 1");
  std::vector<AspectSpan> spans;
  if (tokens.empty() || lexicon.empty()) return spans;

  std::vector<Candidate> candidates;
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    if (options.trim_function_words && is_boundary_stopword(tokens[start])) continue;
    const std::size_t last = std::min(tokens.size(), start + options.max_window);
    for (std::size_t end = start + 1; end <= last; ++end) {
      if (options.trim_function_words && is_boundary_stopword(tokens[end - 1])) continue;
      const auto matches = query(lexicon, join_tokens(tokens, start, end), options.threshold);
      if (!matches.empty()) candidates.push_back({start, end, matches.front()});
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    const std::size_t la = a.end - a.start;
    const std::size_t lb = b.end - b.start;
    if (la != lb) return la > lb;
    if (a.match.score != b.match.score) return a.match.score > b.match.score;
    return a.start < b.start;
  });

  std::vector<bool> taken(tokens.size(), false);
  for (const auto& c : candidates) {
    if (std::any_of(taken.begin() + static_cast<std::ptrdiff_t>(c.start),
                    taken.begin() + static_cast<std::ptrdiff_t>(c.end), [](bool t) { return t; })) {
      continue;
    }
    std::fill(taken.begin() + static_cast<std::ptrdiff_t>(c.start),
              taken.begin() + static_cast<std::ptrdiff_t>(c.end), true);
    const auto& entry = lexicon.entry(c.match.entry_index);
    spans.push_back({c.start, c.end, join_tokens(tokens, c.start, c.end), entry.concept_id,
                     c.match.entry_index, c.match.score});
  }
  std::sort(spans.begin(), spans.end(),
            [](const AspectSpan& a, const AspectSpan& b) { return a.start < b.start; });
  return spans;
}

std::vector<std::string> aspect_texts(const std::vector<AspectSpan>& spans,
                                      const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > tokens.size()) throw InputError("aspect span out of range");
    out.push_back(join_tokens(tokens, s.start, s.end));
  }
  return out;
}

}  // namespace medqc
