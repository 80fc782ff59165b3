#include "medqc/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "medqc/checkpoint.hpp"
#include "medqc/error.hpp"
#include "medqc/io.hpp"

namespace medqc {

using nlohmann::json;

DocumentFeatures encode_document(const Document& doc, const Dataset& dataset, const ConceptLexicon& lexicon,
                                 const Vocabulary& vocab, const ExtractionOptions& extraction,
                                 std::size_t max_len) {
  DocumentFeatures f;
  f.words = normalize(doc.text());
  f.spans = extract_aspects(f.words, lexicon, extraction);
  const auto local = encode_local(f.words, vocab, max_len);
  const auto global = encode_global(f.words, aspect_texts(f.spans, f.words), vocab, max_len);
  f.pair.local_ids = local.ids;
  f.pair.aspect_mask = build_mask(f.words, f.spans, local.alignment);
  f.pair.global_ids = global.ids;
  f.pair.segment_ids = global.segments;
  f.pair.local_len = local.ids.size();
  f.pair.global_len = global.ids.size();
  f.pair.labels = dataset.target(doc);
  return f;
}

std::vector<EncodedPair> ModelBundle::encode(const Dataset& dataset) const {
  std::vector<EncodedPair> out;
  out.reserve(dataset.documents.size());
  for (const auto& doc : dataset.documents) {
    out.push_back(encode_document(doc, dataset, lexicon, vocab, extraction, max_len).pair);
  }
  return out;
}

namespace {

json config_to_json(const EncoderConfig& c) {
  return json{{"num_layers", c.num_layers},   {"num_heads", c.num_heads},
              {"hidden_dim", c.hidden_dim},   {"ffn_dim", c.ffn_dim},
              {"max_positions", c.max_positions}, {"dropout_rate", c.dropout_rate},
              {"vocab_size", c.vocab_size},   {"num_labels", c.num_labels},
              {"task_mode", std::string(to_string(c.task_mode))},
              {"variant", std::string(to_string(c.variant))}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.num_labels = j.at("num_labels").get<std::size_t>();
  c.task_mode = parse_task_mode(j.at("task_mode").get<std::string>());
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

}  // namespace

std::string bundle_metadata(const ModelBundle& b, const std::string& run_manifest) {
  json lex = json::array();
  for (const auto& e : b.lexicon.entries()) {
    lex.push_back({e.surface_form, e.concept_id, e.semantic_class, std::string(to_string(e.source))});
  }
  json j{{"format", "medqc-checkpoint"},
         {"encoder", config_to_json(b.params.config())},
         {"label_space", b.label_space},
         {"max_len", b.max_len},
         {"extraction",
          {{"max_window", b.extraction.max_window},
           {"threshold", b.extraction.threshold},
           {"trim_function_words", b.extraction.trim_function_words}}},
         {"lexicon",
          {{"ngram_size", b.lexicon.ngram_size()},
           {"threshold_default", b.lexicon.threshold_default()},
           {"entries", lex}}},
         {"vocabulary", b.vocab.tokens()}};
  if (!run_manifest.empty()) j["manifest"] = json::parse(run_manifest);
  return j.dump();
}

void save_bundle(const std::string& path, const ModelBundle& bundle, const std::string& run_manifest) {
  save_checkpoint(path, bundle_metadata(bundle, run_manifest), bundle.params.store());
}

ModelBundle load_bundle(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  try {
    const json j = json::parse(ck.metadata);
    if (j.at("format") != "medqc-checkpoint") throw InputError("unexpected checkpoint metadata format");
    ModelBundle b;
    const EncoderConfig cfg = config_from_json(j.at("encoder"));
    b.params = ModelParameters(cfg, std::move(ck.tensors));
    b.vocab = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    std::vector<ConceptEntry> entries;
    for (const auto& e : j.at("lexicon").at("entries")) {
      entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>(), e.at(2).get<std::string>(),
                         parse_term_source(e.at(3).get<std::string>())});
    }
    b.lexicon = ConceptLexicon(std::move(entries), j.at("lexicon").at("ngram_size").get<int>(),
                               j.at("lexicon").at("threshold_default").get<double>());
    const auto& ex = j.at("extraction");
    b.extraction.max_window = ex.at("max_window").get<std::size_t>();
    b.extraction.threshold = ex.at("threshold").get<double>();
    b.extraction.trim_function_words = ex.at("trim_function_words").get<bool>();
    b.max_len = j.at("max_len").get<std::size_t>();
    b.label_space = j.at("label_space").get<std::vector<std::string>>();
    if (b.vocab.size() != cfg.vocab_size) throw InputError("checkpoint vocabulary size disagrees with its config");
    if (b.label_space.size() != cfg.num_labels) throw InputError("checkpoint label space disagrees with its config");
    return b;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad checkpoint metadata: ") + e.what());
  }
}

TrainOutcome train_model(const Dataset& train_set, const ConceptLexicon& lexicon, const PipelineSettings& settings,
                         const Dataset* validation) {
  settings.train.validate();
  train_set.validate();
  if (train_set.documents.empty()) throw InputError("training set is empty");
  const Dataset subset = settings.train.train_fraction < 1.0
                             ? stratified_subsample(train_set, settings.train.train_fraction, settings.train.seed)
                             : train_set;

  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(subset.documents.size());
  for (const auto& d : subset.documents) corpus.push_back(normalize(d.text()));

  TrainOutcome out;
  out.train_documents = subset.documents.size();
  ModelBundle& b = out.bundle;
  b.vocab = build_vocab(corpus, settings.vocab_min_freq, settings.vocab_max_size);
  b.lexicon = lexicon;
  b.extraction = settings.extraction;
  b.max_len = settings.max_len;
  b.label_space = subset.label_space;

  EncoderConfig cfg = settings.encoder;
  cfg.vocab_size = b.vocab.size();
  cfg.num_labels = subset.label_space.size();
  cfg.task_mode = subset.task_mode;
  cfg.max_positions = std::max(cfg.max_positions, settings.max_len);
  b.params = ModelParameters(cfg, settings.train.seed);

  const auto examples = b.encode(subset);
  std::vector<EncodedPair> val;
  if (validation) {
    if (validation->label_space != subset.label_space) throw InputError("validation label space differs");
    val = b.encode(*validation);
  }
  out.history = train(b.params, examples, settings.train, validation ? &val : nullptr);
  return out;
}

double EvalOutcome::accuracy() const { return single ? single->accuracy : multi->all_accuracy; }
double EvalOutcome::macro_f1() const { return single ? single->macro_f1 : multi->all_f1; }

EvalOutcome evaluate(const ModelBundle& bundle, const Dataset& dataset) {
  if (dataset.label_space != bundle.label_space) {
    throw InputError("dataset label space does not match the checkpoint's label space");
  }
  const TaskMode mode = bundle.params.config().task_mode;
  if (dataset.task_mode != mode) throw InputError("dataset task mode does not match the checkpoint");
  const auto examples = bundle.encode(dataset);
  EvalOutcome out;
  out.task_mode = mode;
  std::vector<std::size_t> preds, gold;
  std::vector<std::vector<double>> pred_rows, gold_rows;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Vector p = forward(bundle.params, examples[i], false).output.probabilities;
    const auto& doc = dataset.documents[i];
    std::vector<std::string> labels;
    if (mode == TaskMode::kSingleLabel) {
      Eigen::Index k = 0;
      p.maxCoeff(&k);
      preds.push_back(static_cast<std::size_t>(k));
      gold.push_back(dataset.label_indices(doc).at(0));
      labels.push_back(bundle.label_space[static_cast<std::size_t>(k)]);
    } else {
      pred_rows.emplace_back(p.data(), p.data() + p.size());
      gold_rows.push_back(examples[i].labels);
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) >= 0.5) labels.push_back(bundle.label_space[static_cast<std::size_t>(k)]);
      }
    }
    out.predictions.emplace_back(doc.id, std::move(labels));
    out.gold.emplace_back(doc.id, doc.labels);
  }
  if (examples.empty()) throw InputError("evaluation set is empty");
  if (mode == TaskMode::kSingleLabel) {
    out.single = single_label_report(preds, gold, bundle.label_space.size());
  } else {
    out.multi = multi_label_report(pred_rows, gold_rows);
  }
  return out;
}

std::vector<SweepRow> fraction_sweep(const Dataset& train_set, const Dataset& eval_set, const ConceptLexicon& lexicon,
                                     const PipelineSettings& settings, const std::vector<double>& fractions) {
  if (fractions.empty()) throw InputError("no fractions given");
  std::set<double> seen;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InputError("fraction " + io::format_double(f) + " is outside (0,1]");
    if (!seen.insert(f).second) throw InputError("duplicate fraction " + io::format_double(f));
  }
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    PipelineSettings s = settings;
    s.train.train_fraction = f;
    const auto trained = train_model(train_set, lexicon, s);
    const auto ev = evaluate(trained.bundle, eval_set);
    rows.push_back({f, trained.train_documents, ev.accuracy(), ev.macro_f1()});
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "fraction,train_documents,accuracy,macro_f1\n";
  for (const auto& r : rows) {
    out << io::format_double(r.fraction) << ',' << r.train_documents << ',' << io::format_double(r.accuracy) << ','
        << io::format_double(r.macro_f1) << '\n';
  }
  return out.str();
}

}  // namespace medqc
