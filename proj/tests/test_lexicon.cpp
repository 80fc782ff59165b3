#include <doctest.h>

#include <random>

#include "medqc/error.hpp"
#include "medqc/lexicon.hpp"
#include "test_util.hpp"

using namespace medqc;

namespace {

ConceptEntry kb(const std::string& surface, const std::string& cls, const std::string& id = "C0") {
  return {surface, id, cls, TermSource::kKnowledgeBase};
}

// Brute-force scan: every entry scored with naive n-gram counting.
std::vector<LexiconMatch> scan(const std::vector<ConceptEntry>& entries, const std::string& candidate, double threshold,
                               int n = 3) {
  const auto c = testutil::naive_ngrams(candidate, n);
  std::vector<LexiconMatch> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double s = testutil::naive_jaccard(testutil::naive_ngrams(entries[i].surface_form, n), c);
    if (s >= threshold) out.push_back({i, s});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

bool same(const std::vector<LexiconMatch>& a, const std::vector<LexiconMatch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].entry_index != b[i].entry_index || a[i].score != b[i].score) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("char_ngrams pads one sentinel per side") {
  CHECK(char_ngrams("ab", 3) == NgramBag{"#ab", "ab#"});
  CHECK(char_ngrams("", 3).empty());
  CHECK(char_ngrams("a", 3) == NgramBag{"#a#"});
  CHECK(char_ngrams("ab", 5) == NgramBag{"#ab#"});
  CHECK(char_ngrams("ab", 2) == NgramBag{"#a", "ab", "b#"});
}

TEST_CASE("char_ngrams of retinal") {
  // #re ret eti tin ina nal al#
  const NgramBag expected{"#re", "al#", "eti", "ina", "nal", "ret", "tin"};
  CHECK(char_ngrams("retinal", 3) == expected);
}

TEST_CASE("char_ngrams keeps repeated grams") {
  const auto bag = char_ngrams("aaaa", 3);
  CHECK(std::count(bag.begin(), bag.end(), "aaa") == 2);
  CHECK(bag.size() == 4);
}

TEST_CASE("char_ngrams matches naive enumeration") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const std::string s = testutil::random_phrase(rng);
    for (int n : {2, 3, 4}) {
      NgramBag expected;
      for (const auto& [g, c] : testutil::naive_ngrams(s, n)) expected.insert(expected.end(), c, g);
      CHECK(char_ngrams(s, n) == expected);
    }
  }
}

TEST_CASE("char_ngrams rejects n below 2") { CHECK_THROWS_AS(char_ngrams("abc", 1), InputError); }

TEST_CASE("jaccard examples") {
  CHECK(jaccard({"x", "y", "z"}, {"w", "y", "z"}) == doctest::Approx(0.5));
  CHECK(jaccard({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(jaccard({"a"}, {"b"}) == 0.0);
  CHECK(jaccard({}, {}) == 1.0);
  CHECK(jaccard({"a", "a"}, {"a"}) == doctest::Approx(0.5));
}

TEST_CASE("jaccard is symmetric and bounded") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto a = char_ngrams(testutil::random_phrase(rng), 3);
    const auto b = char_ngrams(testutil::random_phrase(rng), 3);
    const double ab = jaccard(a, b);
    CHECK(ab == jaccard(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(jaccard(a, a) == 1.0);
  }
}

TEST_CASE("query finds exact and approximate matches") {
  const std::vector<ConceptEntry> entries{kb("surgery", "Procedure"), kb("retinal detachment", "Disease"),
                                          kb("mortgage", "Finance")};
  const ConceptLexicon lex(entries);
  const auto exact = query(lex, "surgery", 1.0);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].entry_index == 0);
  CHECK(exact[0].score == 1.0);

  const auto fuzzy = query(lex, "retinal detachmant", 0.7);
  const auto expected = scan(entries, "retinal detachmant", 0.7);
  REQUIRE(expected.size() == 1);
  CHECK(same(fuzzy, expected));
  CHECK(fuzzy[0].score == doctest::Approx(15.0 / 21.0));

  CHECK(query(ConceptLexicon(std::vector<ConceptEntry>{}), "surgery", 0.5).empty());
}

TEST_CASE("query rejects thresholds outside (0,1]") {
  const ConceptLexicon lex({kb("surgery", "Procedure")});
  CHECK_THROWS_AS(query(lex, "surgery", 0.0), InputError);
  CHECK_THROWS_AS(query(lex, "surgery", 1.5), InputError);
}

TEST_CASE("indexed query equals brute-force scan") {
  std::mt19937_64 rng(17);
  std::vector<ConceptEntry> entries;
  for (int i = 0; i < 400; ++i) entries.push_back(kb(testutil::random_phrase(rng), "T"));
  const ConceptLexicon lex(entries);
  for (int q = 0; q < 1000; ++q) {
    std::string cand = q % 3 == 0 ? entries[rng() % entries.size()].surface_form : testutil::random_phrase(rng);
    if (q % 3 == 0 && cand.size() > 3) cand[rng() % cand.size()] = 'z';
    for (double thr : {0.3, 0.7}) {
      CHECK(same(query(lex, cand, thr), scan(entries, cand, thr)));
    }
  }
}

TEST_CASE("index has no dangling references and every posting matters") {
  const std::vector<ConceptEntry> entries{kb("surgery", "P"), kb("retinal detachment", "D"), kb("ache", "D"),
                                          kb("aa", "D"), kb("surgical", "P")};
  const ConceptLexicon lex(entries);
  const NgramIndex& index = lex.index();
  std::size_t postings = 0;
  for (const auto& [gram, list] : index.table()) {
    for (const auto& p : list) {
      REQUIRE(p.entry < entries.size());
      const auto counts = testutil::naive_ngrams(entries[p.entry].surface_form, 3);
      REQUIRE(counts.count(gram) == 1);
      CHECK(counts.at(gram) == static_cast<int>(p.count));
      ++postings;
    }
  }
  std::size_t distinct = 0;
  for (const auto& e : entries) distinct += testutil::naive_ngrams(e.surface_form, 3).size();
  CHECK(postings == distinct);

  for (const auto& [gram, list] : index.table()) {
    for (const auto& p : list) {
      NgramIndex damaged = index;
      REQUIRE(damaged.erase(gram, p.entry));
      const std::string probe = entries[p.entry].surface_form;
      CHECK_FALSE(same(query_index(damaged, probe, 1.0), scan(entries, probe, 1.0)));
    }
  }
}

TEST_CASE("load_lexicon filters by semantic class") {
  testutil::TempDir dir;
  const std::string path = dir.file("lex.tsv");
  testutil::write_text(path,
                       "# surface\tid\tclass\tsource\n"
                       "surgery\tC1\tProcedure\tknowledge-base\n"
                       "retinal detachment\tC2\tDisease\tknowledge-base\n"
                       "mortgage\tC3\tFinance\tknowledge-base\n");
  const auto lex = load_lexicon(path, std::set<std::string>{"Procedure", "Disease"});
  REQUIRE(lex.size() == 2);
  CHECK(lex.entry(0).surface_form == "surgery");
  CHECK(lex.entry(1).surface_form == "retinal detachment");
  CHECK(load_lexicon(path, std::nullopt).size() == 3);
}

TEST_CASE("patient-friendly terms always pass the filter") {
  testutil::TempDir dir;
  const std::string path = dir.file("pft.tsv");
  std::string text = "mortgage\tC0\tFinance\tknowledge-base\n";
  for (int i = 0; i < 1400; ++i) text += "term number " + std::to_string(i) + "\tM" + std::to_string(i) + "\tLLT\tpatient-friendly\n";
  testutil::write_text(path, text);
  const auto lex = load_lexicon(path, std::set<std::string>{});
  CHECK(lex.size() == 1400);
  for (const auto& e : lex.entries()) CHECK(e.source == TermSource::kPatientFriendly);
}

TEST_CASE("load_lexicon errors") {
  testutil::TempDir dir;
  const std::string empty = dir.file("empty.tsv");
  testutil::write_text(empty, "");
  CHECK_THROWS_AS(load_lexicon(empty, std::nullopt), EmptyResultError);

  const std::string filtered = dir.file("filtered.tsv");
  testutil::write_text(filtered, "mortgage\tC3\tFinance\tknowledge-base\n");
  CHECK_THROWS_AS(load_lexicon(filtered, std::set<std::string>{}), EmptyResultError);

  const std::string bad = dir.file("bad.tsv");
  testutil::write_text(bad, "surgery\tC1\tProcedure\tknowledge-base\n# note\nbroken line\n");
  try {
    load_lexicon(bad, std::nullopt);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  const std::string blank = dir.file("blank.tsv");
  testutil::write_text(blank, "  \tC1\tProcedure\tknowledge-base\n");
  CHECK_THROWS_AS(load_lexicon(blank, std::nullopt), ParseError);

  const std::string source = dir.file("source.tsv");
  testutil::write_text(source, "surgery\tC1\tProcedure\tforum\n");
  CHECK_THROWS_AS(load_lexicon(source, std::nullopt), ParseError);

  CHECK_THROWS_AS(load_lexicon(dir.file("missing.tsv"), std::nullopt), InputError);
}

TEST_CASE("lexicon file round trip") {
  testutil::TempDir dir;
  const std::vector<ConceptEntry> entries{kb("surgery", "Procedure", "C1"),
                                          {"tummy ache", "M7", "LLT", TermSource::kPatientFriendly}};
  write_lexicon(dir.file("out.tsv"), entries);
  const auto lex = load_lexicon(dir.file("out.tsv"), std::nullopt);
  REQUIRE(lex.size() == 2);
  CHECK(lex.entry(1).surface_form == "tummy ache");
  CHECK(lex.entry(1).concept_id == "M7");
  CHECK(lex.entry(1).source == TermSource::kPatientFriendly);
}

TEST_CASE("surface forms are normalized on load") {
  testutil::TempDir dir;
  testutil::write_text(dir.file("lex.tsv"), "  Retinal   Detachment \tC1\tDisease\tknowledge-base\nCrohn's disease\tC2\tDisease\tknowledge-base\n");
  const auto lex = load_lexicon(dir.file("lex.tsv"), std::nullopt);
  CHECK(lex.entry(0).surface_form == "retinal detachment");
  CHECK(lex.entry(1).surface_form == "crohn ' s disease");
}

TEST_CASE("class set file") {
  testutil::TempDir dir;
  testutil::write_text(dir.file("classes.txt"), "# allow\nDisease\n\n  Procedure  \n");
  CHECK(load_class_set(dir.file("classes.txt")) == std::set<std::string>{"Disease", "Procedure"});
}
