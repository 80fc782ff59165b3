#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medqc/lexicon.hpp"
#include "medqc/model.hpp"

namespace medqc {

enum class Split { kTrain, kTest };

struct Document {
  std::string id;
  std::string title;  // may be empty
  std::string body;
  std::vector<std::string> labels;  // non-empty, file order
  Split split = Split::kTrain;

  // Title and body joined with one space (body alone when untitled).
  std::string text() const;
};

struct Dataset {
  std::vector<Document> documents;
  std::vector<std::string> label_space;  // order defines label indices
  TaskMode task_mode = TaskMode::kSingleLabel;

  std::size_t label_index(const std::string& label) const;  // throws InputError
  std::vector<std::size_t> label_indices(const Document& doc) const;
  // One-hot (single-label) or multi-hot target vector.
  std::vector<double> target(const Document& doc) const;
  // Number of documents carrying each label.
  std::vector<std::size_t> label_counts() const;
  void validate() const;
};

// File format: header `#labels: L1,L2,...`, then
// `doc_id<TAB>title<TAB>body<TAB>label[,label...]` with \t and \n escaped.
Dataset load_dataset(const std::string& path, TaskMode task_mode, Split split = Split::kTrain);
Dataset parse_dataset(const std::string& text, const std::string& origin, TaskMode task_mode,
                      Split split = Split::kTrain);
std::string format_dataset(const Dataset& dataset);
void save_dataset(const std::string& path, const Dataset& dataset);

// Documents of one split, in order.
Dataset select_split(const Dataset& dataset, Split split);

// Seeded per-class sample of ceil(fraction * count) documents; the class of
// a multi-label document is its first label in label_space order. Output
// keeps the original document order.
Dataset stratified_subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

// Indices into label_sets after oversampling: every original index once,
// followed by duplicates. Labels are processed one by one in ascending order
// of initial count; each is topped up (sampling with replacement from the
// original examples carrying it) until its running count reaches the
// initial majority count. A duplicate counts toward every label it carries.
std::vector<std::size_t> oversample_indices(const std::vector<std::vector<std::size_t>>& label_sets,
                                            std::size_t num_labels, std::uint64_t seed);

// Dataset-level wrapper; duplicates get ids of the form `<id>#dup<k>`.
Dataset oversample(const Dataset& dataset, std::uint64_t seed);

struct SynthOptions {
  std::size_t num_docs = 1000;
  std::size_t num_test = 0;  // trailing documents marked as test
  std::vector<std::string> label_space{"UPD", "MAS", "DM", "IS"};
  std::size_t terms_per_label = 6;
  std::size_t distractor_vocab = 300;
  double noise_rate = 0.0;
  double multi_label_rate = 0.0;  // multi-label task only
  TaskMode task_mode = TaskMode::kSingleLabel;
  std::size_t min_words = 8;
  std::size_t max_words = 20;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  Dataset dataset;  // train documents first, then test
  std::vector<ConceptEntry> lexicon_entries;
  // Planted surface forms per label, parallel to label_space.
  std::vector<std::vector<std::string>> label_terms;
};

// Documents of distractor words with 1-3 planted terms of their gold label;
// with probability noise_rate one term of another label is added too.
SynthCorpus synth_generate(const SynthOptions& options);

}  // namespace medqc
