#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "medqc/lexicon.hpp"

namespace medqc {

// A matched concept occurrence covering tokens [start, end).
struct AspectSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;  // window text as it appears in the document
  std::string concept_id;
  std::size_t entry_index = 0;
  double score = 0.0;

  std::size_t length() const { return end - start; }
};

struct ExtractionOptions {
  std::size_t max_window = 5;
  double threshold = kDefaultThreshold;
  // Windows may not begin or end on a stopword or punctuation token.
  bool trim_function_words = true;
};

// True for tokens that cannot open or close a candidate window.
bool is_boundary_stopword(std::string_view token);

// Scans every window of 1..max_window tokens, keeps the best lexicon match
// per window, then resolves overlaps greedily: longer spans first, then
// higher score, then leftmost start. Result is sorted by start and
// pairwise non-overlapping.
std::vector<AspectSpan> extract_aspects(const std::vector<std::string>& tokens,
                                        const ConceptLexicon& lexicon,
                                        const ExtractionOptions& options = {});

// Surface text of each span in document order.
std::vector<std::string> aspect_texts(const std::vector<AspectSpan>& spans,
                                      const std::vector<std::string>& tokens);

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t start, std::size_t end);

}  // namespace medqc
