#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "medqc/data.hpp"
#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/pipeline.hpp"
#include "medqc/train.hpp"
#include "model_fixtures.hpp"

using namespace medqc;
using testutil::random_pair;
using testutil::small_config;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<const EncodedPair*> pointers(const std::vector<EncodedPair>& v) {
  std::vector<const EncodedPair*> out;
  for (const auto& p : v) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("cross entropy") {
  CHECK(cross_entropy(vec({0.0, 1.0, 0.0}), 1) == 0.0);
  CHECK(cross_entropy(Vector::Constant(7, 1.0 / 7.0), 3) == doctest::Approx(std::log(7.0)));
  CHECK(cross_entropy(vec({1.0, 0.0}), 1) == doctest::Approx(-std::log(1e-12)));
  CHECK(std::isfinite(cross_entropy(vec({1.0, 0.0}), 1)));
  CHECK_THROWS_AS(cross_entropy(vec({0.5, 0.5}), 2), InputError);
}

TEST_CASE("binary cross entropy") {
  CHECK(binary_cross_entropy(vec({1.0, 0.0}), {1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(binary_cross_entropy(vec({0.5, 0.5, 0.5}), {1.0, 0.0, 1.0}) == doctest::Approx(std::log(2.0)));
  CHECK(binary_cross_entropy(vec({0.25}), {1.0}) == doctest::Approx(-std::log(0.25)));
  CHECK_THROWS_AS(binary_cross_entropy(vec({0.5, 0.5}), {1.0, 0.5}), InputError);
  CHECK_THROWS_AS(binary_cross_entropy(vec({0.5, 0.5}), {1.0}), InputError);
}

TEST_CASE("analytic gradients match central differences") {
  for (auto mode : {TaskMode::kSingleLabel, TaskMode::kMultiLabel}) {
    auto c = small_config(1, 8, 3, mode);
    ModelParameters p(c, 7);
    std::mt19937_64 rng(11);
    std::vector<EncodedPair> batch{pad_pair(random_pair(rng, c, 5), 9, 11), random_pair(rng, c, 3, true)};
    for (bool train : {false, true}) {
      const auto r = testutil::gradient_check(p, batch, train, 99);
      INFO(r.worst_tensor, "[", r.worst_entry, "] analytic ", r.analytic, " numeric ", r.numeric);
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("parameters the loss ignores get exactly zero gradient") {
  auto c = small_config(1, 8, 3, TaskMode::kSingleLabel);
  ModelParameters p(c, 7);
  std::mt19937_64 rng(3);
  std::vector<EncodedPair> batch{random_pair(rng, c, 4)};
  Gradients g = p.store().zeros_like();
  compute_gradients(p, pointers(batch), false, 0, g);
  const auto tok = g.tensor(g.index_of("embeddings.token"));
  std::vector<bool> used(c.vocab_size, false);
  for (auto id : batch[0].local_ids) used[static_cast<std::size_t>(id)] = true;
  for (auto id : batch[0].global_ids) used[static_cast<std::size_t>(id)] = true;
  for (std::size_t v = 0; v < c.vocab_size; ++v) {
    if (!used[v]) CHECK(tok.row(static_cast<Eigen::Index>(v)).cwiseAbs().maxCoeff() == 0.0);
  }
  const auto pos = g.tensor(g.index_of("embeddings.position"));
  const std::size_t longest = std::max(batch[0].local_len, batch[0].global_len);
  CHECK(pos.bottomRows(static_cast<Eigen::Index>(c.max_positions - longest)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("duplicating an example leaves the mean gradient unchanged") {
  auto c = small_config(1, 8, 3, TaskMode::kSingleLabel);
  ModelParameters p(c, 7);
  std::mt19937_64 rng(4);
  const auto a = random_pair(rng, c, 4);
  std::vector<EncodedPair> one{a}, two{a, a};
  Gradients g1 = p.store().zeros_like(), g2 = p.store().zeros_like();
  compute_gradients(p, pointers(one), false, 0, g1);
  compute_gradients(p, pointers(two), false, 0, g2);
  for (std::size_t i = 0; i < g1.values().size(); ++i) {
    CHECK(g2.values()[i] == doctest::Approx(g1.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("adam step") {
  const double lr = 1e-3;
  std::vector<double> params{1.0, -2.0, 0.5};
  AdamState zero(3);
  zero.step(params, {0.0, 0.0, 0.0}, 1, lr);
  CHECK(params == std::vector<double>{1.0, -2.0, 0.5});

  AdamState first(3);
  std::vector<double> q{0.0, 0.0, 0.0};
  first.step(q, {0.3, -4.0, 1e-3}, 1, lr);
  CHECK(q[0] == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(lr).epsilon(1e-6));
  CHECK(q[2] == doctest::Approx(-lr).epsilon(1e-4));

  AdamState steady(1);
  std::vector<double> w{0.0};
  double last = 0.0;
  for (std::size_t t = 1; t <= 2000; ++t) {
    const double before = w[0];
    steady.step(w, {0.7}, t, lr);
    last = before - w[0];
  }
  CHECK(last == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("linear learning-rate schedule") {
  CHECK(lr_schedule(5e-5, 0, 100) == 5e-5);
  CHECK(lr_schedule(5e-5, 100, 100) == 0.0);
  CHECK(lr_schedule(5e-5, 50, 100) == doctest::Approx(2.5e-5));
  CHECK(lr_schedule(5e-5, 150, 100) == 0.0);
  for (std::size_t t1 = 0; t1 <= 10; ++t1) {
    for (std::size_t t2 = t1; t2 <= 10; ++t2) {
      CHECK(lr_schedule(1.0, t2, 10) - lr_schedule(1.0, t1, 10) == doctest::Approx(-(double(t2) - double(t1)) / 10.0));
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.train_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("loss on a fixed batch falls over the first ten steps") {
  int monotone = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto c = small_config(2, 16, 3, TaskMode::kSingleLabel);
    ModelParameters p(c, 100 + trial);
    std::mt19937_64 rng(trial);
    std::vector<EncodedPair> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_pair(rng, c, 6));
    const auto ptrs = pointers(batch);
    AdamState adam(p.parameter_count());
    Gradients g = p.store().zeros_like();
    double prev = batch_loss(p, ptrs);
    bool ok = true;
    for (std::size_t t = 1; t <= 10; ++t) {
      compute_gradients(p, ptrs, false, 0, g);
      adam.step(p.store().values(), g.values(), t, 1e-3);
      const double now = batch_loss(p, ptrs);
      ok &= now <= prev;
      prev = now;
    }
    monotone += ok;
  }
  CHECK(monotone >= 9);
}

TEST_CASE("a single example is memorized") {
  auto c = small_config(1, 16, 3, TaskMode::kSingleLabel);
  c.dropout_rate = 0.0;
  ModelParameters p(c, 1);
  std::mt19937_64 rng(2);
  const std::vector<EncodedPair> data{random_pair(rng, c, 5)};
  TrainConfig tc;
  tc.base_lr = 1e-2;
  tc.epochs = 300;
  tc.batch_size = 1;
  const auto h = train(p, data, tc);
  CHECK(h.step_loss.back() < 1e-3);
  CHECK(batch_loss(p, pointers(data)) < 1e-3);
}

TEST_CASE("training is deterministic per seed and records a linear lr trace") {
  auto c = small_config(1, 8, 3, TaskMode::kMultiLabel);
  std::mt19937_64 rng(5);
  std::vector<EncodedPair> data;
  for (int i = 0; i < 21; ++i) data.push_back(random_pair(rng, c, 4 + i % 3));
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 3;
  tc.base_lr = 1e-3;
  ModelParameters a(c, 9), b(c, 9);
  const auto ha = train(a, data, tc);
  const auto hb = train(b, data, tc);
  CHECK(a.store().values() == b.store().values());
  CHECK(ha.step_loss == hb.step_loss);
  REQUIRE(ha.lr_trace.size() == 18);
  const double T = 18.0;
  for (std::size_t t = 0; t < ha.lr_trace.size(); ++t) {
    CHECK(ha.lr_trace[t] == doctest::Approx(1e-3 * (1.0 - double(t) / T)));
    if (t) CHECK(ha.lr_trace[t] <= ha.lr_trace[t - 1]);
  }
  for (double l : ha.step_loss) CHECK(std::isfinite(l));
  CHECK(ha.epochs.size() == 3);

  tc.seed = 14;
  ModelParameters d(c, 9);
  train(d, data, tc);
  CHECK(d.store().values() != a.store().values());
}

TEST_CASE("oversampling inside training tops up minority labels") {
  auto c = small_config(1, 8, 3, TaskMode::kSingleLabel);
  std::mt19937_64 rng(6);
  std::vector<EncodedPair> data;
  const int counts[3] = {10, 4, 2};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < counts[k]; ++i) {
      auto p = random_pair(rng, c, 4);
      p.labels = {0.0, 0.0, 0.0};
      p.labels[static_cast<std::size_t>(k)] = 1.0;
      data.push_back(p);
    }
  }
  TrainConfig tc;
  tc.oversample = true;
  tc.epochs = 1;
  ModelParameters p(c, 1);
  CHECK(train(p, data, tc).examples_seen == 30);
}

TEST_CASE("separable synthetic data is fit within five epochs") {
  SynthOptions so;
  so.num_docs = 400;
  so.seed = 5;
  const auto corpus = synth_generate(so);
  PipelineSettings s;
  s.train.base_lr = 2e-4;
  s.train.epochs = 5;
  const auto out = train_model(corpus.dataset, ConceptLexicon(corpus.lexicon_entries), s);
  CHECK(evaluate(out.bundle, corpus.dataset).accuracy() >= 0.99);
}

TEST_CASE("fraction sweep") {
  SynthOptions so;
  so.num_docs = 120;
  so.num_test = 40;
  so.seed = 8;
  const auto corpus = synth_generate(so);
  const auto tr = select_split(corpus.dataset, Split::kTrain);
  const auto te = select_split(corpus.dataset, Split::kTest);
  const ConceptLexicon lex(corpus.lexicon_entries);
  PipelineSettings s;
  s.encoder.num_layers = 1;
  s.encoder.hidden_dim = 16;
  s.encoder.ffn_dim = 32;
  s.train.epochs = 2;
  s.train.base_lr = 1e-3;

  const auto single = fraction_sweep(tr, te, lex, s, {1.0});
  REQUIRE(single.size() == 1);
  const auto plain = evaluate(train_model(tr, lex, s).bundle, te);
  CHECK(single[0].accuracy == plain.accuracy());
  CHECK(single[0].macro_f1 == plain.macro_f1());
  CHECK(single[0].train_documents == tr.documents.size());

  const auto rows = fraction_sweep(tr, te, lex, s, {0.3, 0.5, 1.0});
  REQUIRE(rows.size() == 3);
  const auto counts = tr.label_counts();
  for (const auto& r : rows) {
    std::size_t expected = 0;
    for (auto n : counts) expected += static_cast<std::size_t>(std::ceil(r.fraction * static_cast<double>(n) - 1e-9));
    CHECK(r.train_documents == expected);
  }
  const auto again = fraction_sweep(tr, te, lex, s, {0.3, 0.5, 1.0});
  CHECK(format_sweep_csv(again) == format_sweep_csv(rows));
  CHECK(format_sweep_csv(rows).rfind("fraction,train_documents,accuracy,macro_f1\n", 0) == 0);

  CHECK_THROWS_AS(fraction_sweep(tr, te, lex, s, {0.5, 0.5}), InputError);
  CHECK_THROWS_AS(fraction_sweep(tr, te, lex, s, {0.0}), InputError);
  CHECK_THROWS_AS(fraction_sweep(tr, te, lex, s, {1.5}), InputError);
  CHECK_THROWS_AS(fraction_sweep(tr, te, lex, s, {}), InputError);
}

TEST_CASE("history file layout") {
  TrainHistory h;
  h.step_loss = {1.5, 1.25};
  h.lr_trace = {1e-3, 5e-4};
  EpochMetrics m;
  m.epoch = 1;
  m.train_loss = 1.375;
  m.train_accuracy = 0.5;
  h.epochs.push_back(m);
  const std::string text = format_history(h, {{"final_train_loss", "1.375"}});
  CHECK(text.rfind("# step\tlr\tloss\n1\t" + io::format_double(1e-3) + "\t1.5\n2\t", 0) == 0);
  CHECK(text.find("# epoch\t1\ttrain_loss\t1.375\ttrain_accuracy\t0.5\n") != std::string::npos);
  CHECK(text.find("# final\nfinal_train_loss\t1.375\n") != std::string::npos);
}
