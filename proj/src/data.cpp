#include "medqc/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/utf8.hpp"

namespace medqc {

namespace {

constexpr std::string_view kLabelHeader = "#labels:";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string Document::text() const { return title.empty() ? body : title + " " + body; }

std::size_t Dataset::label_index(const std::string& label) const {
  auto it = std::find(label_space.begin(), label_space.end(), label);
  if (it == label_space.end()) throw InputError("label '" + label + "' is not in the label space");
  return static_cast<std::size_t>(it - label_space.begin());
}

std::vector<std::size_t> Dataset::label_indices(const Document& doc) const {
  std::vector<std::size_t> out;
  out.reserve(doc.labels.size());
  for (const auto& l : doc.labels) out.push_back(label_index(l));
  return out;
}

std::vector<double> Dataset::target(const Document& doc) const {
  std::vector<double> t(label_space.size(), 0.0);
  for (std::size_t k : label_indices(doc)) t[k] = 1.0;
  return t;
}

std::vector<std::size_t> Dataset::label_counts() const {
  std::vector<std::size_t> counts(label_space.size(), 0);
  for (const auto& d : documents) {
    for (std::size_t k : label_indices(d)) ++counts[k];
  }
  return counts;
}

void Dataset::validate() const {
  if (label_space.empty()) throw InputError("dataset has an empty label space");
  std::set<std::string> ids;
  for (const auto& d : documents) {
    if (!ids.insert(d.id).second) throw InputError("duplicate document id '" + d.id + "'");
    if (d.labels.empty()) throw InputError("document '" + d.id + "' has no labels");
    if (task_mode == TaskMode::kSingleLabel && d.labels.size() != 1) {
      throw InputError("document '" + d.id + "' must carry exactly one label");
    }
    label_indices(d);
  }
}

Dataset parse_dataset(const std::string& text, const std::string& origin, TaskMode task_mode, Split split) {
  Dataset ds;
  ds.task_mode = task_mode;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (!line.starts_with(kLabelHeader)) throw ParseError(origin, line_no, "missing '#labels:' header");
      for (const auto& l : utf8::split(line.substr(kLabelHeader.size()), ',')) {
        const std::string label = trim(l);
        if (label.empty()) throw ParseError(origin, line_no, "empty label name in header");
        if (std::find(ds.label_space.begin(), ds.label_space.end(), label) != ds.label_space.end()) {
          throw ParseError(origin, line_no, "duplicate label '" + label + "' in header");
        }
        ds.label_space.push_back(label);
      }
      have_header = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto fields = utf8::split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError(origin, line_no, "expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    }
    Document doc;
    doc.id = fields[0];
    doc.title = utf8::unescape_field(fields[1]);
    doc.body = utf8::unescape_field(fields[2]);
    doc.split = split;
    if (doc.id.empty()) throw ParseError(origin, line_no, "empty document id");
    if (!ids.insert(doc.id).second) throw ParseError(origin, line_no, "duplicate document id '" + doc.id + "'");
    for (const auto& l : utf8::split(fields[3], ',')) {
      const std::string label = trim(l);
      if (std::find(ds.label_space.begin(), ds.label_space.end(), label) == ds.label_space.end()) {
        throw ParseError(origin, line_no, "unknown label '" + label + "'");
      }
      if (std::find(doc.labels.begin(), doc.labels.end(), label) != doc.labels.end()) {
        throw ParseError(origin, line_no, "label '" + label + "' repeated");
      }
      doc.labels.push_back(label);
    }
    if (task_mode == TaskMode::kSingleLabel && doc.labels.size() != 1) {
      throw ParseError(origin, line_no, "single-label dataset record carries " +
                                            std::to_string(doc.labels.size()) + " labels");
    }
    ds.documents.push_back(std::move(doc));
  }
  if (!have_header) throw ParseError(origin, 1, "missing '#labels:' header");
  return ds;
}

Dataset load_dataset(const std::string& path, TaskMode task_mode, Split split) {
  return parse_dataset(io::read_file(path), path, task_mode, split);
}

std::string format_dataset(const Dataset& ds) {
  std::ostringstream out;
  out << kLabelHeader << ' ';
  for (std::size_t i = 0; i < ds.label_space.size(); ++i) out << (i ? "," : "") << ds.label_space[i];
  out << '\n';
  for (const auto& d : ds.documents) {
    out << d.id << '\t' << utf8::escape_field(d.title) << '\t' << utf8::escape_field(d.body) << '\t';
    for (std::size_t i = 0; i < d.labels.size(); ++i) out << (i ? "," : "") << d.labels[i];
    out << '\n';
  }
  return out.str();
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  io::write_file(path, format_dataset(dataset));
}

Dataset select_split(const Dataset& dataset, Split split) {
  Dataset out;
  out.label_space = dataset.label_space;
  out.task_mode = dataset.task_mode;
  for (const auto& d : dataset.documents) {
    if (d.split == split) out.documents.push_back(d);
  }
  return out;
}

Dataset stratified_subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("fraction must be in (0,1]");
  std::vector<std::vector<std::size_t>> groups(dataset.label_space.size());
  for (std::size_t i = 0; i < dataset.documents.size(); ++i) {
    const auto idx = dataset.label_indices(dataset.documents[i]);
    if (idx.empty()) throw InputError("document without labels");
    groups[*std::min_element(idx.begin(), idx.end())].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::vector<bool> keep(dataset.documents.size(), false);
  for (auto& group : groups) {
    if (group.empty()) continue;
    // The small epsilon keeps e.g. 0.3 * 100 from rounding up to 31.
    const auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(group.size()) - 1e-9));
    std::shuffle(group.begin(), group.end(), rng);
    for (std::size_t j = 0; j < std::min(want, group.size()); ++j) keep[group[j]] = true;
  }

  Dataset out;
  out.label_space = dataset.label_space;
  out.task_mode = dataset.task_mode;
  for (std::size_t i = 0; i < dataset.documents.size(); ++i) {
    if (keep[i]) out.documents.push_back(dataset.documents[i]);
  }
  const auto counts = out.label_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw EmptyResultError("subsample at fraction " + io::format_double(fraction) + " leaves label '" +
                             out.label_space[k] + "' empty");
    }
  }
  return out;
}

std::vector<std::size_t> oversample_indices(const std::vector<std::vector<std::size_t>>& label_sets,
                                            std::size_t num_labels, std::uint64_t seed) {
  if (label_sets.empty()) throw InputError("cannot oversample an empty dataset");
  std::vector<std::size_t> counts(num_labels, 0);
  std::vector<std::vector<std::size_t>> carriers(num_labels);
  for (std::size_t i = 0; i < label_sets.size(); ++i) {
    for (std::size_t k : label_sets[i]) {
      if (k >= num_labels) throw InputError("label index out of range");
      ++counts[k];
      carriers[k].push_back(i);
    }
  }
  for (std::size_t k = 0; k < num_labels; ++k) {
    if (counts[k] == 0) throw InputError("label " + std::to_string(k) + " has no examples to oversample");
  }
  const std::size_t target = *std::max_element(counts.begin(), counts.end());

  std::vector<std::size_t> order(num_labels);
  for (std::size_t k = 0; k < num_labels; ++k) order[k] = k;
  const auto initial = counts;
  std::stable_sort(order.begin(), order.end(),
                   [&initial](std::size_t a, std::size_t b) { return initial[a] < initial[b]; });

  std::vector<std::size_t> out(label_sets.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t k : order) {
    std::uniform_int_distribution<std::size_t> pick(0, carriers[k].size() - 1);
    while (counts[k] < target) {
      const std::size_t i = carriers[k][pick(rng)];
      out.push_back(i);
      for (std::size_t j : label_sets[i]) ++counts[j];
    }
  }
  return out;
}

Dataset oversample(const Dataset& dataset, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> sets;
  sets.reserve(dataset.documents.size());
  for (const auto& d : dataset.documents) sets.push_back(dataset.label_indices(d));
  const auto picks = oversample_indices(sets, dataset.label_space.size(), seed);

  Dataset out;
  out.label_space = dataset.label_space;
  out.task_mode = dataset.task_mode;
  std::vector<std::size_t> copies(dataset.documents.size(), 0);
  for (std::size_t n = 0; n < picks.size(); ++n) {
    Document d = dataset.documents[picks[n]];
    if (n >= dataset.documents.size()) d.id += "#dup" + std::to_string(++copies[picks[n]]);
    out.documents.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                        "br", "dr", "gl", "pl", "tr", "st"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u"};
constexpr std::string_view kSuffixes[] = {"itis", "osis", "emia", "algia", "oma", "ectomy", "pathy", "ase"};
constexpr std::string_view kFunctionWords[] = {"i", "had", "the", "for", "and", "my", "with", "was", "is", "it"};

class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : rng_(seed) {}
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  template <typename T, std::size_t N>
  std::string_view pick(const T (&arr)[N]) { return arr[below(N)]; }

 private:
  std::mt19937_64 rng_;
};

std::string pseudo_word(SynthRng& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += rng.pick(kOnsets);
    w += rng.pick(kVowels);
  }
  return w;
}

bool too_similar(const std::string& candidate, const std::vector<std::string>& existing, double limit) {
  const auto bag = char_ngrams(candidate, kDefaultNgramSize);
  for (const auto& e : existing) {
    if (jaccard(bag, char_ngrams(e, kDefaultNgramSize)) >= limit) return true;
  }
  return false;
}

}  // namespace

SynthCorpus synth_generate(const SynthOptions& opt) {
  if (opt.label_space.empty()) throw InputError("synthetic corpus needs at least one label");
  if (opt.terms_per_label < 1) throw InputError("need at least one planted term per label");
  if (opt.num_test > opt.num_docs) throw InputError("num_test exceeds num_docs");
  if (opt.min_words > opt.max_words) throw InputError("min_words exceeds max_words");
  SynthRng rng(opt.seed);
  const std::size_t labels = opt.label_space.size();

  SynthCorpus corpus;
  corpus.label_terms.resize(labels);
  std::vector<std::string> all_words;
  std::size_t concept_no = 0;
  for (std::size_t k = 0; k < labels; ++k) {
    while (corpus.label_terms[k].size() < opt.terms_per_label) {
      const std::size_t words = rng.chance(0.3) ? 2 : 1;
      std::vector<std::string> parts;
      for (std::size_t w = 0; w < words; ++w) {
        parts.push_back(pseudo_word(rng, 2) + std::string(rng.pick(kSuffixes)));
      }
      bool clash = false;
      for (const auto& p : parts) clash = clash || too_similar(p, all_words, 0.34);
      if (clash || (parts.size() == 2 && parts[0] == parts[1])) continue;
      std::string term = parts[0];
      for (std::size_t w = 1; w < parts.size(); ++w) term += " " + parts[w];
      all_words.insert(all_words.end(), parts.begin(), parts.end());
      corpus.label_terms[k].push_back(term);
      ConceptEntry e;
      e.surface_form = term;
      e.concept_id = "C" + std::to_string(100000 + ++concept_no);
      e.semantic_class = "T-" + opt.label_space[k];
      e.source = TermSource::kKnowledgeBase;
      corpus.lexicon_entries.push_back(std::move(e));
    }
  }

  std::vector<std::string> distractors(std::begin(kFunctionWords), std::end(kFunctionWords));
  while (distractors.size() < opt.distractor_vocab + std::size(kFunctionWords)) {
    // Long distractors keep a neighbouring word from stretching an
    // approximate match past a planted term.
    std::string w = pseudo_word(rng, 4);
    if (w.size() < 8 || too_similar(w, all_words, 0.25)) continue;
    if (std::find(distractors.begin(), distractors.end(), w) != distractors.end()) continue;
    distractors.push_back(std::move(w));
  }

  Dataset& ds = corpus.dataset;
  ds.label_space = opt.label_space;
  ds.task_mode = opt.task_mode;
  const std::size_t id_width = std::to_string(opt.num_docs).size();
  for (std::size_t n = 0; n < opt.num_docs; ++n) {
    Document doc;
    std::string num = std::to_string(n + 1);
    doc.id = "synth-" + std::string(id_width - std::min(id_width, num.size()), '0') + num;
    doc.split = n + opt.num_test >= opt.num_docs ? Split::kTest : Split::kTrain;

    const std::size_t gold = rng.below(labels);
    std::vector<std::size_t> gold_labels{gold};
    if (opt.task_mode == TaskMode::kMultiLabel && labels > 1 && rng.chance(opt.multi_label_rate)) {
      std::size_t second = rng.below(labels - 1);
      if (second >= gold) ++second;
      gold_labels.push_back(second);
    }

    std::vector<std::string> words;
    const std::size_t length = rng.between(opt.min_words, opt.max_words);
    for (std::size_t i = 0; i < length; ++i) words.push_back(distractors[rng.below(distractors.size())]);
    auto plant = [&](std::size_t label) {
      const auto& terms = corpus.label_terms[label];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)),
                   terms[rng.below(terms.size())]);
    };
    for (std::size_t j = 0; j < gold_labels.size(); ++j) {
      const std::size_t planted = j == 0 ? rng.between(1, 3) : rng.between(1, 2);
      for (std::size_t t = 0; t < planted; ++t) plant(gold_labels[j]);
    }
    if (labels > 1 && rng.chance(opt.noise_rate)) {
      std::size_t other = rng.below(labels);
      while (std::find(gold_labels.begin(), gold_labels.end(), other) != gold_labels.end()) {
        other = rng.below(labels);
      }
      plant(other);
    }

    const std::size_t title_len = rng.between(2, 4);
    for (std::size_t i = 0; i < title_len; ++i) {
      if (i) doc.title += ' ';
      doc.title += distractors[rng.below(distractors.size())];
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) doc.body += ' ';
      doc.body += words[i];
    }
    doc.body += '.';
    std::sort(gold_labels.begin(), gold_labels.end());
    for (std::size_t k : gold_labels) doc.labels.push_back(opt.label_space[k]);
    ds.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace medqc
