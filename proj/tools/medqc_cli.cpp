#include "medqc_cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/pipeline.hpp"
#include "medqc/utf8.hpp"

namespace medqc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_file(const std::string& path) {
  const std::string bytes = io::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed for " + path);
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

namespace {

// Options whose resolved values make up a run manifest. Everything that
// affects outputs goes through here; output locations do not.
class FlagTable {
 public:
  explicit FlagTable(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }, false});
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  CLI::Option* input(const std::string& name, std::string& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }, true});
    return app_->add_option("--" + name, var, help)->check(CLI::ExistingFile);
  }

  CLI::Option* inputs(const std::string& name, std::vector<std::string>& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }, true});
    return app_->add_option("--" + name, var, help)->check(CLI::ExistingFile);
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }, false});
    return app_->add_flag("--" + name, var, help);
  }

  json resolved() const {
    json flags = json::object();
    for (const auto& e : entries_) flags[e.name] = e.value();
    return flags;
  }

  json input_digests() const {
    json inputs = json::object();
    for (const auto& e : entries_) {
      if (!e.is_input) continue;
      const json v = e.value();
      json files = json::array();
      auto add = [&](const std::string& path) {
        if (!path.empty()) files.push_back({{"path", path}, {"sha256", sha256_file(path)}});
      };
      if (v.is_array()) {
        for (const auto& p : v) add(p.get<std::string>());
      } else {
        add(v.get<std::string>());
      }
      if (!files.empty()) inputs[e.name] = files;
    }
    return inputs;
  }

  // Recorded through its digest; its values reach the manifest as flags.
  CLI::Option* config(const std::string& name, const std::string& help) {
    config_option_ = name;
    return app_->add_option("--" + name, config_path_, help)->check(CLI::ExistingFile);
  }
  const std::string& config_option() const { return config_option_; }

 private:
  struct Entry {
    std::string name;
    std::function<json()> value;
    bool is_input;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
  std::string config_option_;
  std::string config_path_;
};

struct Manifest {
  json core;  // deterministic part, embedded in artifacts
  json results = json::object();

  std::string core_text() const { return core.dump(); }
};

Manifest make_manifest(const std::string& command, const FlagTable& table, const CLI::App& app,
                       std::optional<std::uint64_t> seed) {
  Manifest m;
  m.core = {{"tool", kToolName}, {"tool_version", kToolVersion}, {"command", command},
            {"flags", table.resolved()}, {"inputs", table.input_digests()}};
  if (seed) m.core["seed"] = *seed;
  if (!table.config_option().empty()) {
    const CLI::Option* cfg = app.get_option("--" + table.config_option());
    if (cfg->count() > 0) {
      const std::string path = cfg->as<std::string>();
      m.core["config_file"] = {{"path", path}, {"sha256", sha256_file(path)}};
    }
  }
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_manifest(const std::string& path, const Manifest& m, const std::string& output_flag,
                    const std::string& output) {
  json j = m.core;
  j["results"] = m.results;
  j["output"] = {{"flag", output_flag}, {"path", output}};
  j["created_at"] = utc_timestamp();
  io::write_file(path, j.dump(2) + "\n");
}

std::string manifest_comment(const Manifest& m) { return "# manifest\t" + m.core_text() + "\n"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// Options shared by every command that builds and trains a model.
struct ModelArgs {
  std::string lexicon;
  std::string classes;
  double threshold = kDefaultThreshold;
  std::size_t max_window = 5;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t vocab_min_freq = 1;
  std::size_t vocab_max_size = 30000;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 64;
  std::size_t ffn = 256;
  double dropout = 0.1;
  std::size_t batch_size = 16;
  double lr = 5e-5;
  std::size_t epochs = 2;
  std::uint64_t seed = 13;
  bool oversample = false;
  std::string variant = "full";
  std::string task = "single";

  void add_to(FlagTable& t) {
    t.input("lexicon", lexicon, "Lexicon file")->required();
    t.input("classes", classes, "Semantic-class allow-set file (default: allow all)");
    t.option("threshold", threshold, "Jaccard threshold for aspect matching")->check(CLI::Range(0.0, 1.0));
    t.option("max-window", max_window, "Longest candidate window in tokens")->check(CLI::PositiveNumber);
    t.option("max-len", max_len, "Maximum sequence length")->check(CLI::Range(std::size_t{4}, std::size_t{100000}));
    t.option("vocab-min-freq", vocab_min_freq, "Minimum piece frequency");
    t.option("vocab-max-size", vocab_max_size, "Vocabulary size cap");
    t.option("layers", layers, "Encoder layers");
    t.option("heads", heads, "Attention heads")->check(CLI::PositiveNumber);
    t.option("hidden", hidden, "Hidden width")->check(CLI::PositiveNumber);
    t.option("ffn", ffn, "Feed-forward width")->check(CLI::PositiveNumber);
    t.option("dropout", dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999));
    t.option("batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    t.option("lr", lr, "Initial learning rate")->check(CLI::PositiveNumber);
    t.option("epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    t.option("seed", seed, "Random seed");
    t.flag("oversample", oversample, "Oversample minority labels");
    t.option("variant", variant, "full, global or local")->check(CLI::IsMember({"full", "global", "local"}));
    t.option("task", task, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  }

  ClassFilter class_filter() const {
    if (classes.empty()) return std::nullopt;
    return load_class_set(classes);
  }

  ConceptLexicon load_lex() const { return load_lexicon(lexicon, class_filter(), kDefaultNgramSize, threshold); }

  PipelineSettings settings(double fraction) const {
    PipelineSettings s;
    s.extraction.max_window = max_window;
    s.extraction.threshold = threshold;
    s.max_len = max_len;
    s.vocab_min_freq = vocab_min_freq;
    s.vocab_max_size = vocab_max_size;
    s.encoder.num_layers = layers;
    s.encoder.num_heads = heads;
    s.encoder.hidden_dim = hidden;
    s.encoder.ffn_dim = ffn;
    s.encoder.max_positions = max_len;
    s.encoder.dropout_rate = dropout;
    s.encoder.variant = parse_variant(variant);
    s.train.batch_size = batch_size;
    s.train.base_lr = lr;
    s.train.epochs = epochs;
    s.train.seed = seed;
    s.train.oversample = oversample;
    s.train.train_fraction = fraction;
    return s;
  }
};

std::string format_report_text(const EvalOutcome& ev, const std::vector<std::string>& labels) {
  if (ev.single) return render_report_text(*ev.single, labels);
  return render_report_text(*ev.multi, labels);
}

// ---------------------------------------------------------------------------

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<FlagTable> table;
  std::function<int()> run;
};

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err), app_("Medical-knowledge-aware text classifier", kToolName) {
    app_.require_subcommand(1);
    app_.set_version_flag("--version", kToolVersion);
    add_lexicon_build();
    add_extract();
    add_train();
    add_eval();
    add_sweep();
    add_mcnemar();
    add_synth();
    add_rerun();
  }

  int run(const std::vector<std::string>& args) {
    try {
      const std::vector<std::string> expanded = expand_config(args);
      std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
      app_.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out_ << help_text();
      return 0;
    } catch (const CLI::CallForVersion&) {
      out_ << kToolVersion << "\n";
      return 0;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n" << help_text();
      return 2;
    }
    for (auto& [name, cmd] : commands_) {
      if (cmd.app->parsed()) return guarded(cmd.run);
    }
    return 2;
  }

 private:
  std::string help_text() const {
    for (const auto& [name, cmd] : commands_) {
      if (cmd.app->parsed()) return cmd.app->help();
    }
    return app_.help();
  }

  // Turns `--config FILE` of a subcommand into explicit flags placed after
  // the subcommand name. Flags on the command line take precedence; keys in
  // a section named after another subcommand are skipped.
  std::vector<std::string> expand_config(const std::vector<std::string>& args) const {
    if (args.empty()) return args;
    const auto cmd = commands_.find(args[0]);
    if (cmd == commands_.end() || cmd->second.table->config_option().empty()) return args;
    const std::string flag = "--" + cmd->second.table->config_option();
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == flag && i + 1 < args.size()) path = args[i + 1];
      if (args[i].rfind(flag + "=", 0) == 0) path = args[i].substr(flag.size() + 1);
    }
    if (path.empty() || !fs::is_regular_file(path)) return args;

    auto given = [&](const std::string& name) {
      for (const auto& a : args) {
        if (a == "--" + name || a.rfind("--" + name + "=", 0) == 0) return true;
      }
      return false;
    };
    std::vector<std::string> out{args[0]};
    for (const auto& item : CLI::ConfigINI().from_file(path)) {
      if (item.name == "++" || item.name == "--" || item.name.empty()) continue;
      if (!item.parents.empty() && item.parents != std::vector<std::string>{args[0]}) continue;
      if (given(item.name)) continue;
      const CLI::Option* opt = cmd->second.app->get_option_no_throw("--" + item.name);
      if (opt != nullptr && opt->get_type_size() == 0) {
        if (item.inputs.size() == 1 && item.inputs[0] == "true") out.push_back("--" + item.name);
        continue;
      }
      out.push_back("--" + item.name);
      out.insert(out.end(), item.inputs.begin(), item.inputs.end());
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
  }

  int guarded(const std::function<int()>& fn) {
    try {
      return fn();
    } catch (const EmptyResultError& e) {
      err_ << "error: " << e.what() << "\n";
      return 3;
    } catch (const NumericError& e) {
      err_ << "error: " << e.what() << "\n";
      return 4;
    } catch (const InputError& e) {
      err_ << "error: " << e.what() << "\n";
      return 2;
    } catch (const json::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err_ << "internal error: " << e.what() << "\n";
      return 1;
    }
  }

  Command& add(const std::string& name, const std::string& description) {
    Command& c = commands_[name];
    c.app = app_.add_subcommand(name, description);
    c.table = std::make_unique<FlagTable>(c.app);
    return c;
  }

  void add_lexicon_build() {
    auto& c = add("lexicon-build", "Validate a lexicon and report entry counts per semantic class");
    auto a = std::make_shared<ModelArgs>();
    auto out_path = std::make_shared<std::string>();
    auto manifest_out = std::make_shared<std::string>();
    c.table->input("lexicon", a->lexicon, "Lexicon file")->required();
    c.table->input("classes", a->classes, "Semantic-class allow-set file");
    c.app->add_option("--out", *out_path, "Write the filtered lexicon here");
    c.app->add_option("--manifest-out", *manifest_out, "Write a run manifest here");
    Command* cp = &c;
    c.run = [this, cp, a, out_path, manifest_out] {
      const ConceptLexicon lex = load_lexicon(a->lexicon, a->class_filter());
      std::map<std::string, std::size_t> per_class;
      std::map<std::string, std::size_t> per_source;
      for (const auto& e : lex.entries()) {
        ++per_class[e.semantic_class];
        ++per_source[std::string(to_string(e.source))];
      }
      out_ << "class\tentries\n";
      for (const auto& [k, n] : per_class) out_ << k << '\t' << n << '\n';
      for (const auto& [k, n] : per_source) out_ << "source:" << k << '\t' << n << '\n';
      out_ << "total\t" << lex.size() << '\n';
      if (!out_path->empty()) write_lexicon(*out_path, lex.entries());
      if (!manifest_out->empty()) {
        Manifest m = make_manifest("lexicon-build", *cp->table, *cp->app, std::nullopt);
        m.results["entries"] = lex.size();
        write_manifest(*manifest_out, m, "out", *out_path);
      }
      return 0;
    };
  }

  void add_extract() {
    auto& c = add("extract", "Extract medical aspects from every document");
    auto a = std::make_shared<ModelArgs>();
    auto data = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto manifest_out = std::make_shared<std::string>();
    c.table->input("data", *data, "Dataset file")->required();
    c.table->input("lexicon", a->lexicon, "Lexicon file")->required();
    c.table->input("classes", a->classes, "Semantic-class allow-set file");
    c.table->option("threshold", a->threshold, "Jaccard threshold")->check(CLI::Range(0.0, 1.0));
    c.table->option("max-window", a->max_window, "Longest window in tokens")->check(CLI::PositiveNumber);
    c.table->option("task", a->task, "single or multi")->check(CLI::IsMember({"single", "multi"}));
    c.app->add_option("--out", *out_path, "Write span records here instead of standard output");
    c.app->add_option("--manifest-out", *manifest_out, "Write a run manifest here");
    Command* cp = &c;
    c.run = [this, cp, a, data, out_path, manifest_out] {
      const Dataset ds = load_dataset(*data, parse_task_mode(a->task));
      const ConceptLexicon lex = a->load_lex();
      ExtractionOptions opts;
      opts.threshold = a->threshold;
      opts.max_window = a->max_window;
      std::ostringstream records;
      std::size_t count = 0;
      for (const auto& doc : ds.documents) {
        const auto words = normalize(doc.text());
        for (const auto& s : extract_aspects(words, lex, opts)) {
          records << utf8::escape_field(doc.id) << '\t' << s.start << '\t' << s.end << '\t' << s.surface << '\t'
                  << s.concept_id << '\t' << io::format_double(s.score) << '\n';
          ++count;
        }
      }
      if (out_path->empty()) {
        out_ << records.str();
      } else {
        io::write_file(*out_path, records.str());
      }
      err_ << count << " spans from " << ds.documents.size() << " documents\n";
      if (!manifest_out->empty()) {
        Manifest m = make_manifest("extract", *cp->table, *cp->app, std::nullopt);
        m.results["spans"] = count;
        write_manifest(*manifest_out, m, "out", *out_path);
      }
      return 0;
    };
  }

  void add_train() {
    auto& c = add("train", "Train a classifier and write checkpoint, history and manifest");
    auto a = std::make_shared<ModelArgs>();
    auto data = std::make_shared<std::string>();
    auto eval_data = std::make_shared<std::string>();
    auto fraction = std::make_shared<double>(1.0);
    auto out_dir = std::make_shared<std::string>();
    c.table->config("config", "INI/TOML file of option defaults");
    c.table->input("data", *data, "Training dataset")->required();
    c.table->input("eval-data", *eval_data, "Held-out dataset for per-epoch metrics");
    a->add_to(*c.table);
    c.table->option("fraction", *fraction, "Stratified training fraction")->check(CLI::Range(0.0, 1.0));
    c.app->add_option("--out", *out_dir, "Output directory")->required();
    Command* cp = &c;
    c.run = [this, cp, a, data, eval_data, fraction, out_dir] {
      if (!(*fraction > 0.0)) throw InputError("--fraction must be in (0,1]");
      const TaskMode mode = parse_task_mode(a->task);
      Manifest m = make_manifest("train", *cp->table, *cp->app, a->seed);
      const Dataset train_set = load_dataset(*data, mode);
      std::optional<Dataset> validation;
      if (!eval_data->empty()) validation = load_dataset(*eval_data, mode, Split::kTest);
      const ConceptLexicon lex = a->load_lex();
      const auto trained = train_model(train_set, lex, a->settings(*fraction), validation ? &*validation : nullptr);
      const double final_loss = trained.history.epochs.back().train_loss;

      ensure_dir(*out_dir);
      save_bundle(join_path(*out_dir, "checkpoint.bin"), trained.bundle, m.core_text());
      trained.bundle.vocab.save(join_path(*out_dir, "vocab.tsv"));
      std::map<std::string, std::string> footer{
          {"train_documents", std::to_string(trained.train_documents)},
          {"examples_seen", std::to_string(trained.history.examples_seen)},
          {"final_train_loss", io::format_double(final_loss)},
          {"vocab_size", std::to_string(trained.bundle.vocab.size())},
          {"parameters", std::to_string(trained.bundle.params.parameter_count())}};
      io::write_file(join_path(*out_dir, "history.tsv"), manifest_comment(m) + format_history(trained.history, footer));
      m.results = {{"train_documents", trained.train_documents},
                   {"final_train_loss", final_loss},
                   {"parameters", trained.bundle.params.parameter_count()}};
      write_manifest(join_path(*out_dir, "manifest.json"), m, "out", *out_dir);
      out_ << "train_documents\t" << trained.train_documents << "\nfinal_train_loss\t" << io::format_double(final_loss)
           << "\n";
      return 0;
    };
  }

  void add_eval() {
    auto& c = add("eval", "Evaluate one or more checkpoints on a dataset");
    auto checkpoints = std::make_shared<std::vector<std::string>>();
    auto data = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    c.table->inputs("checkpoint", *checkpoints, "Checkpoint file; repeat to compare models")->required();
    c.table->input("data", *data, "Evaluation dataset")->required();
    c.app->add_option("--report-out", *out_dir, "Report directory")->required();
    Command* cp = &c;
    c.run = [this, cp, checkpoints, data, out_dir] {
      Manifest m = make_manifest("eval", *cp->table, *cp->app, std::nullopt);
      ensure_dir(*out_dir);
      std::ostringstream table;
      table << "model,variant,accuracy,macro_f1\n";
      json rows = json::array();
      for (std::size_t i = 0; i < checkpoints->size(); ++i) {
        const ModelBundle bundle = load_bundle((*checkpoints)[i]);
        const Dataset ds = load_dataset(*data, bundle.params.config().task_mode, Split::kTest);
        const EvalOutcome ev = evaluate(bundle, ds);
        const std::string dir =
            checkpoints->size() == 1 ? *out_dir : join_path(*out_dir, "model-" + std::to_string(i + 1));
        ensure_dir(dir);
        io::write_file(join_path(dir, "report.txt"), manifest_comment(m) + format_report_text(ev, bundle.label_space));
        io::write_file(join_path(dir, "report.csv"), ev.single ? render_report_csv(*ev.single, bundle.label_space)
                                                               : render_report_csv(*ev.multi, bundle.label_space));
        if (ev.single) io::write_file(join_path(dir, "confusion.csv"), render_confusion_csv(*ev.single, bundle.label_space));
        io::write_file(join_path(dir, "predictions.tsv"), format_predictions(ev.predictions));
        io::write_file(join_path(dir, "gold.tsv"), format_predictions(ev.gold));
        const std::string variant(to_string(bundle.params.config().variant));
        table << i + 1 << ',' << variant << ',' << io::format_double(ev.accuracy()) << ','
              << io::format_double(ev.macro_f1()) << '\n';
        rows.push_back({{"model", i + 1}, {"variant", variant}, {"accuracy", ev.accuracy()}, {"macro_f1", ev.macro_f1()}});
      }
      io::write_file(join_path(*out_dir, "comparison.csv"), table.str());
      out_ << table.str();
      m.results["models"] = rows;
      write_manifest(join_path(*out_dir, "manifest.json"), m, "report-out", *out_dir);
      return 0;
    };
  }

  void add_sweep() {
    auto& c = add("sweep", "Train and evaluate at several training-data fractions");
    auto a = std::make_shared<ModelArgs>();
    auto data = std::make_shared<std::string>();
    auto eval_data = std::make_shared<std::string>();
    auto fractions = std::make_shared<std::vector<double>>(std::vector<double>{0.3, 0.5, 0.7, 1.0});
    auto out_dir = std::make_shared<std::string>();
    c.table->config("config", "INI/TOML file of option defaults");
    c.table->input("data", *data, "Training dataset")->required();
    c.table->input("eval-data", *eval_data, "Evaluation dataset")->required();
    a->add_to(*c.table);
    c.table->option("fractions", *fractions, "Comma-separated fractions in (0,1]")->delimiter(',');
    c.app->add_option("--out", *out_dir, "Output directory")->required();
    Command* cp = &c;
    c.run = [this, cp, a, data, eval_data, fractions, out_dir] {
      const TaskMode mode = parse_task_mode(a->task);
      Manifest m = make_manifest("sweep", *cp->table, *cp->app, a->seed);
      const Dataset train_set = load_dataset(*data, mode);
      const Dataset eval_set = load_dataset(*eval_data, mode, Split::kTest);
      const ConceptLexicon lex = a->load_lex();
      const auto rows = fraction_sweep(train_set, eval_set, lex, a->settings(1.0), *fractions);
      const std::string csv = format_sweep_csv(rows);
      ensure_dir(*out_dir);
      io::write_file(join_path(*out_dir, "sweep.csv"), csv);
      out_ << csv;
      json jr = json::array();
      for (const auto& r : rows) jr.push_back({{"fraction", r.fraction}, {"train_documents", r.train_documents}});
      m.results["rows"] = jr;
      write_manifest(join_path(*out_dir, "manifest.json"), m, "out", *out_dir);
      return 0;
    };
  }

  void add_mcnemar() {
    auto& c = add("mcnemar", "McNemar's test between two prediction files");
    auto a = std::make_shared<std::string>();
    auto b = std::make_shared<std::string>();
    auto gold = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto manifest_out = std::make_shared<std::string>();
    c.table->input("preds-a", *a, "Predictions of model A")->required();
    c.table->input("preds-b", *b, "Predictions of model B")->required();
    c.table->input("gold", *gold, "Gold labels")->required();
    c.app->add_option("--out", *out_path, "Also write the result as CSV");
    c.app->add_option("--manifest-out", *manifest_out, "Write a run manifest here");
    Command* cp = &c;
    c.run = [this, cp, a, b, gold, out_path, manifest_out] {
      const auto pa = read_predictions(*a);
      const auto pb = read_predictions(*b);
      const auto pg = read_predictions(*gold);
      if (pa.size() != pg.size() || pb.size() != pg.size()) {
        throw InputError("prediction files differ in length (" + std::to_string(pa.size()) + ", " +
                         std::to_string(pb.size()) + ", gold " + std::to_string(pg.size()) + ")");
      }
      using LabelSet = std::set<std::string>;
      std::vector<LabelSet> la, lb, lg;
      for (std::size_t i = 0; i < pg.size(); ++i) {
        if (pa[i].first != pg[i].first || pb[i].first != pg[i].first) {
          throw InputError("document ids disagree at record " + std::to_string(i + 1));
        }
        la.emplace_back(pa[i].second.begin(), pa[i].second.end());
        lb.emplace_back(pb[i].second.begin(), pb[i].second.end());
        lg.emplace_back(pg[i].second.begin(), pg[i].second.end());
      }
      const McNemarResult r = mcnemar(la, lb, lg);
      const std::string exact = r.exact_p ? io::format_double(*r.exact_p) : "";
      out_ << "b\t" << r.b << "\nc\t" << r.c << "\nstatistic\t" << io::format_double(r.statistic) << "\nchi2_p\t"
           << io::format_double(r.chi2_p) << "\nexact_p\t" << (exact.empty() ? "-" : exact) << "\np_value\t"
           << io::format_double(r.p_value) << "\n";
      if (!out_path->empty()) {
        io::write_file(*out_path, "b,c,statistic,chi2_p,exact_p,p_value\n" + std::to_string(r.b) + "," +
                                      std::to_string(r.c) + "," + io::format_double(r.statistic) + "," +
                                      io::format_double(r.chi2_p) + "," + exact + "," +
                                      io::format_double(r.p_value) + "\n");
      }
      if (!manifest_out->empty()) {
        Manifest m = make_manifest("mcnemar", *cp->table, *cp->app, std::nullopt);
        m.results = {{"b", r.b}, {"c", r.c}, {"p_value", r.p_value}};
        write_manifest(*manifest_out, m, "out", *out_path);
      }
      return 0;
    };
  }

  void add_synth() {
    auto& c = add("synth", "Generate a synthetic keyword-driven corpus and its lexicon");
    auto o = std::make_shared<SynthOptions>();
    auto docs = std::make_shared<std::size_t>(1000);
    auto labels = std::make_shared<std::vector<std::string>>(o->label_space);
    auto task = std::make_shared<std::string>("single");
    auto seed = std::make_shared<std::uint64_t>(1);
    auto out_dir = std::make_shared<std::string>();
    c.table->option("docs", *docs, "Training documents")->check(CLI::PositiveNumber);
    c.table->option("test-docs", o->num_test, "Additional test documents");
    c.table->option("labels", *labels, "Comma-separated label names")->delimiter(',');
    c.table->option("terms-per-label", o->terms_per_label, "Planted terms per label")->check(CLI::PositiveNumber);
    c.table->option("distractors", o->distractor_vocab, "Distractor vocabulary size")->check(CLI::PositiveNumber);
    c.table->option("noise", o->noise_rate, "Probability of a misleading term")->check(CLI::Range(0.0, 1.0));
    c.table->option("multi-rate", o->multi_label_rate, "Probability of a second gold label (multi task)")
        ->check(CLI::Range(0.0, 1.0));
    c.table->option("task", *task, "single or multi")->check(CLI::IsMember({"single", "multi"}));
    c.table->option("seed", *seed, "Random seed");
    c.app->add_option("--out", *out_dir, "Output directory")->required();
    Command* cp = &c;
    c.run = [this, cp, o, docs, labels, task, seed, out_dir] {
      Manifest m = make_manifest("synth", *cp->table, *cp->app, *seed);
      SynthOptions opts = *o;
      opts.num_docs = *docs + o->num_test;
      opts.label_space = *labels;
      opts.task_mode = parse_task_mode(*task);
      opts.seed = *seed;
      const SynthCorpus corpus = synth_generate(opts);
      ensure_dir(*out_dir);
      save_dataset(join_path(*out_dir, "train.tsv"), select_split(corpus.dataset, Split::kTrain));
      if (opts.num_test > 0) save_dataset(join_path(*out_dir, "test.tsv"), select_split(corpus.dataset, Split::kTest));
      write_lexicon(join_path(*out_dir, "lexicon.tsv"), corpus.lexicon_entries);
      const auto counts = corpus.dataset.label_counts();
      for (std::size_t k = 0; k < counts.size(); ++k) out_ << opts.label_space[k] << '\t' << counts[k] << '\n';
      out_ << "documents\t" << corpus.dataset.documents.size() << "\nlexicon_entries\t" << corpus.lexicon_entries.size()
           << '\n';
      m.results = {{"documents", corpus.dataset.documents.size()}, {"label_counts", counts}};
      write_manifest(join_path(*out_dir, "manifest.json"), m, "out", *out_dir);
      return 0;
    };
  }

  void add_rerun() {
    auto& c = add("rerun", "Repeat a run from its manifest after checking input digests");
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    c.app->add_option("--manifest", *manifest, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
    c.app->add_option("--out", *out, "Output location (default: the recorded one)");
    c.run = [this, manifest, out] {
      json m;
      try {
        m = json::parse(io::read_file(*manifest));
      } catch (const json::parse_error& e) {
        throw InputError("manifest " + *manifest + " is not valid JSON: " + e.what());
      }
      if (m.at("tool") != kToolName) throw InputError("manifest was not written by " + std::string(kToolName));
      if (m.at("tool_version") != kToolVersion) {
        err_ << "warning: manifest tool version " << m.at("tool_version").get<std::string>() << " differs from "
             << kToolVersion << "\n";
      }
      for (const auto& [name, files] : m.at("inputs").items()) {
        for (const auto& f : files) {
          const std::string path = f.at("path").get<std::string>();
          if (sha256_file(path) != f.at("sha256").get<std::string>()) {
            throw InputError("input --" + name + " " + path + " changed since the recorded run");
          }
        }
      }
      const std::string command = m.at("command").get<std::string>();
      if (command == "rerun" || !commands_.count(command)) throw InputError("cannot rerun command " + command);
      std::vector<std::string> args{command};
      for (const auto& [name, value] : m.at("flags").items()) {
        if (value.is_boolean()) {
          if (value.get<bool>()) args.push_back("--" + name);
        } else if (value.is_array()) {
          if (value.empty()) continue;
          args.push_back("--" + name);
          for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else if (value.is_string()) {
          if (value.get<std::string>().empty()) continue;
          args.push_back("--" + name);
          args.push_back(value.get<std::string>());
        } else {
          args.push_back("--" + name);
          args.push_back(value.dump());
        }
      }
      const auto& output = m.at("output");
      const std::string target = out->empty() ? output.at("path").get<std::string>() : *out;
      if (!target.empty()) {
        args.push_back("--" + output.at("flag").get<std::string>());
        args.push_back(target);
      }
      Cli inner(out_, err_);
      return inner.run(args);
    };
  }

  std::ostream& out_;
  std::ostream& err_;
  CLI::App app_;
  std::map<std::string, Command> commands_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli(out, err);
  return cli.run(args);
}

}  // namespace medqc::cli
