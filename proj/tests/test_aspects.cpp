#include <doctest.h>

#include <random>

#include "medqc/aspects.hpp"
#include "medqc/textprep.hpp"
#include "test_util.hpp"

using namespace medqc;

namespace {

ConceptLexicon make_lexicon(const std::vector<std::string>& surfaces) {
  std::vector<ConceptEntry> entries;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    entries.push_back({surfaces[i], "C" + std::to_string(i), "T", TermSource::kKnowledgeBase});
  }
  return ConceptLexicon(entries);
}

const std::vector<std::string> kSentence{"i", "had", "surgery", "for", "retinal", "detachment", "in", "december", "."};

struct Candidate {
  std::size_t start, end;
  double score;
};

// Every window that may open and close on its tokens, with its best score.
std::vector<Candidate> candidates(const std::vector<std::string>& tokens, const ConceptLexicon& lex,
                                  const ExtractionOptions& opt) {
  std::vector<Candidate> out;
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    for (std::size_t e = s + 1; e <= std::min(tokens.size(), s + opt.max_window); ++e) {
      if (opt.trim_function_words && (is_boundary_stopword(tokens[s]) || is_boundary_stopword(tokens[e - 1]))) continue;
      const auto cand = testutil::naive_ngrams(join_tokens(tokens, s, e), lex.ngram_size());
      double best = -1.0;
      for (const auto& entry : lex.entries()) {
        best = std::max(best, testutil::naive_jaccard(testutil::naive_ngrams(entry.surface_form, lex.ngram_size()), cand));
      }
      if (best >= opt.threshold) out.push_back({s, e, best});
    }
  }
  return out;
}

// Among all pairwise non-overlapping subsets of the candidates, the one whose
// membership vector, read in priority order, is lexicographically largest.
std::vector<std::pair<std::size_t, std::size_t>> best_selection(std::vector<Candidate> c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    if (a.end - a.start != b.end - b.start) return a.end - a.start > b.end - b.start;
    if (a.score != b.score) return a.score > b.score;
    return a.start < b.start;
  });
  const std::size_t n = c.size();
  REQUIRE(n <= 20);
  std::uint32_t best = 0;
  bool found = false;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      for (std::size_t j = i + 1; j < n && ok; ++j) {
        if ((mask >> j & 1u) && c[i].start < c[j].end && c[j].start < c[i].end) ok = false;
      }
    }
    if (!ok) continue;
    // Bit i (priority i) dominates all later bits.
    auto key = [&](std::uint32_t m) {
      std::uint32_t k = 0;
      for (std::size_t i = 0; i < n; ++i) k |= ((m >> i) & 1u) << (n - 1 - i);
      return k;
    };
    if (!found || key(mask) > key(best)) best = mask, found = true;
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (best >> i & 1u) out.emplace_back(c[i].start, c[i].end);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("surgery and retinal detachment are extracted from the example sentence") {
  const auto lex = make_lexicon({"surgery", "retinal detachment"});
  const auto spans = extract_aspects(kSentence, lex);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].start == 2);
  CHECK(spans[0].end == 3);
  CHECK(spans[0].surface == "surgery");
  CHECK(spans[0].concept_id == "C0");
  CHECK(spans[0].score == 1.0);
  CHECK(spans[1].start == 4);
  CHECK(spans[1].end == 6);
  CHECK(spans[1].surface == "retinal detachment");
  CHECK(aspect_texts(spans, kSentence) == std::vector<std::string>{"surgery", "retinal detachment"});
}

TEST_CASE("windows may not end on a function word") {
  const auto lex = make_lexicon({"surgery", "retinal detachment"});
  ExtractionOptions loose;
  loose.trim_function_words = false;
  const auto spans = extract_aspects(kSentence, lex, loose);
  // "retinal detachment in" scores 17/22 and outranks the exact match by length.
  REQUIRE(spans.size() == 2);
  CHECK(spans[1].end == 7);
  CHECK(spans[1].score == doctest::Approx(17.0 / 22.0));
}

TEST_CASE("no hits gives no spans") {
  const auto lex = make_lexicon({"surgery"});
  CHECK(extract_aspects({"the", "weather", "was", "lovely"}, lex).empty());
  CHECK(extract_aspects({}, lex).empty());
  CHECK(aspect_texts({}, kSentence).empty());
}

TEST_CASE("the longer overlapping match wins") {
  const auto lex = make_lexicon({"retinal", "retinal detachment"});
  const std::vector<std::string> tokens{"retinal", "detachment"};
  const auto spans = extract_aspects(tokens, lex);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 2);
  ExtractionOptions opt;
  const auto expected = best_selection(candidates(tokens, lex, opt));
  REQUIRE(expected.size() == 1);
  CHECK(expected[0] == std::make_pair<std::size_t, std::size_t>(0, 2));
}

TEST_CASE("a repeated concept is listed twice") {
  const auto lex = make_lexicon({"surgery"});
  const std::vector<std::string> tokens{"surgery", "then", "more", "surgery"};
  const auto spans = extract_aspects(tokens, lex);
  REQUIRE(spans.size() == 2);
  CHECK(aspect_texts(spans, tokens) == std::vector<std::string>{"surgery", "surgery"});
}

TEST_CASE("overlap resolution matches exhaustive selection") {
  std::mt19937_64 rng(23);
  const std::vector<std::string> words{"ab", "abc", "bc", "cab", "ca", "a", "b", "bca"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> surfaces;
    for (int i = 0; i < 4; ++i) {
      std::string s = words[rng() % words.size()];
      if (rng() % 2) s += " " + words[rng() % words.size()];
      surfaces.push_back(s);
    }
    const auto lex = make_lexicon(surfaces);
    std::vector<std::string> tokens;
    for (int i = 0; i < 6; ++i) tokens.push_back(words[rng() % words.size()]);
    ExtractionOptions opt;
    opt.max_window = 3;
    opt.threshold = 0.5;
    const auto spans = extract_aspects(tokens, lex, opt);
    std::vector<std::pair<std::size_t, std::size_t>> got;
    for (const auto& s : spans) got.emplace_back(s.start, s.end);
    CHECK(got == best_selection(candidates(tokens, lex, opt)));
  }
}

TEST_CASE("span invariants on random documents") {
  std::mt19937_64 rng(31);
  std::vector<std::string> surfaces;
  for (int i = 0; i < 60; ++i) surfaces.push_back(testutil::random_phrase(rng, "aeilnrst"));
  const auto lex = make_lexicon(surfaces);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tokens;
    const std::size_t len = rng() % 15;
    for (std::size_t i = 0; i < len; ++i) {
      if (rng() % 5 == 0) {
        tokens.push_back(rng() % 2 ? "the" : ",");
      } else {
        const auto& s = surfaces[rng() % surfaces.size()];
        tokens.push_back(s.substr(0, s.find(' ')));
      }
    }
    for (double thr : {0.5, 0.7}) {
      ExtractionOptions opt;
      opt.threshold = thr;
      const auto spans = extract_aspects(tokens, lex, opt);
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto& s = spans[i];
        CHECK(s.start < s.end);
        CHECK(s.end <= tokens.size());
        CHECK(s.length() <= opt.max_window);
        CHECK(s.score >= thr);
        CHECK(s.surface == join_tokens(tokens, s.start, s.end));
        CHECK_FALSE(is_boundary_stopword(tokens[s.start]));
        CHECK_FALSE(is_boundary_stopword(tokens[s.end - 1]));
        const auto requery = query(lex, s.surface, thr);
        REQUIRE_FALSE(requery.empty());
        CHECK(requery.front().score == s.score);
        if (i + 1 < spans.size()) CHECK(s.end <= spans[i + 1].start);
      }
    }
  }
}

TEST_CASE("adding a lexicon entry only displaces spans it outranks") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> surfaces;
    for (int i = 0; i < 8; ++i) surfaces.push_back(testutil::random_phrase(rng, "aeinrst"));
    std::vector<std::string> tokens;
    for (int i = 0; i < 10; ++i) {
      const auto& s = surfaces[rng() % surfaces.size()];
      tokens.push_back(s.substr(0, s.find(' ')));
    }
    const auto before = extract_aspects(tokens, make_lexicon(surfaces));
    auto more = surfaces;
    more.push_back(join_tokens(tokens, 2, 2 + 1 + rng() % 3));
    const auto after = extract_aspects(tokens, make_lexicon(more));
    for (const auto& old : before) {
      bool kept = false;
      bool displaced = false;
      for (const auto& s : after) {
        if (s.start == old.start && s.end == old.end) kept = true;
        const bool overlaps = s.start < old.end && old.start < s.end;
        if (overlaps && (s.length() > old.length() || (s.length() == old.length() && s.score >= old.score))) {
          displaced = true;
        }
      }
      CHECK((kept || displaced));
    }
  }
}

TEST_CASE("stopword list covers punctuation and function words") {
  CHECK(is_boundary_stopword("in"));
  CHECK(is_boundary_stopword("the"));
  CHECK(is_boundary_stopword("."));
  CHECK(is_boundary_stopword(","));
  CHECK_FALSE(is_boundary_stopword("surgery"));
  CHECK_FALSE(is_boundary_stopword("december"));
}
