#pragma once

#include <optional>
#include <string>
#include <vector>

#include "medqc/aspects.hpp"
#include "medqc/data.hpp"
#include "medqc/eval.hpp"
#include "medqc/lexicon.hpp"
#include "medqc/model.hpp"
#include "medqc/textprep.hpp"
#include "medqc/train.hpp"

namespace medqc {

// Everything needed to go from raw documents to a trained classifier.
struct PipelineSettings {
  ExtractionOptions extraction;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t vocab_min_freq = 1;
  std::size_t vocab_max_size = 30000;
  // Architecture; vocab_size, num_labels and task_mode are filled in from
  // the data.
  EncoderConfig encoder;
  TrainConfig train;
};

struct DocumentFeatures {
  std::vector<std::string> words;
  std::vector<AspectSpan> spans;
  EncodedPair pair;
};

DocumentFeatures encode_document(const Document& doc, const Dataset& dataset, const ConceptLexicon& lexicon,
                                 const Vocabulary& vocab, const ExtractionOptions& extraction,
                                 std::size_t max_len);

// A trained model with the vocabulary, lexicon and settings it was trained
// with; this is what a checkpoint file holds.
struct ModelBundle {
  ModelParameters params;
  Vocabulary vocab;
  ConceptLexicon lexicon;
  ExtractionOptions extraction;
  std::size_t max_len = kDefaultMaxLen;
  std::vector<std::string> label_space;

  std::vector<EncodedPair> encode(const Dataset& dataset) const;
};

// run_manifest, when given, must be a JSON document; it is stored alongside
// the model description and ignored on load.
std::string bundle_metadata(const ModelBundle& bundle, const std::string& run_manifest = {});
void save_bundle(const std::string& path, const ModelBundle& bundle, const std::string& run_manifest = {});
ModelBundle load_bundle(const std::string& path);

struct TrainOutcome {
  ModelBundle bundle;
  TrainHistory history;
  std::size_t train_documents = 0;  // after subsampling, before oversampling
};

// Subsamples (train_fraction < 1), builds the vocabulary from the training
// documents, encodes, initializes from train.seed and trains.
TrainOutcome train_model(const Dataset& train_set, const ConceptLexicon& lexicon, const PipelineSettings& settings,
                         const Dataset* validation = nullptr);

struct EvalOutcome {
  TaskMode task_mode = TaskMode::kSingleLabel;
  std::optional<SingleLabelReport> single;
  std::optional<MultiLabelReport> multi;
  std::vector<PredictionRecord> predictions;
  std::vector<PredictionRecord> gold;

  double accuracy() const;  // ALL accuracy for multi-label
  double macro_f1() const;  // ALL F1 for multi-label
};

// Throws InputError when the dataset's label space differs from the model's.
EvalOutcome evaluate(const ModelBundle& bundle, const Dataset& dataset);

struct SweepRow {
  double fraction = 1.0;
  std::size_t train_documents = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

// One full train + evaluate per fraction; fractions must be distinct and in
// (0,1].
std::vector<SweepRow> fraction_sweep(const Dataset& train_set, const Dataset& eval_set, const ConceptLexicon& lexicon,
                                     const PipelineSettings& settings, const std::vector<double>& fractions);

std::string format_sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace medqc
