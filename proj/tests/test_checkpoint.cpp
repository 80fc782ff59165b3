#include <doctest.h>

#include <cstring>

#include "medqc/checkpoint.hpp"
#include "medqc/error.hpp"
#include "medqc/pipeline.hpp"
#include "model_fixtures.hpp"
#include "test_util.hpp"

using namespace medqc;

TEST_CASE("checkpoint round trip is bit exact") {
  auto c = testutil::small_config(2, 8, 3, TaskMode::kSingleLabel);
  ModelParameters p(c, 21);
  p.store().values()[0] = -0.0;
  p.store().values()[1] = 1e-310;
  const std::string bytes = serialize_checkpoint("{\"k\":1}", p.store());
  CHECK(bytes.compare(0, 8, "MEDQCKPT") == 0);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.metadata == "{\"k\":1}");
  REQUIRE(back.tensors.values().size() == p.store().values().size());
  CHECK(std::memcmp(back.tensors.values().data(), p.store().values().data(), p.store().values().size() * sizeof(double)) == 0);
  for (std::size_t i = 0; i < p.store().tensor_count(); ++i) {
    CHECK(back.tensors.spec(i).name == p.store().spec(i).name);
    CHECK(back.tensors.spec(i).rows == p.store().spec(i).rows);
    CHECK(back.tensors.spec(i).cols == p.store().spec(i).cols);
  }
  CHECK(serialize_checkpoint("{\"k\":1}", back.tensors) == bytes);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto c = testutil::small_config(1, 8, 3, TaskMode::kSingleLabel);
  ModelParameters p(c, 21);
  const std::string bytes = serialize_checkpoint("{}", p.store());
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), InputError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), InputError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), InputError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(bad_version), InputError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), InputError);
}

TEST_CASE("model parameters reject a mismatched store") {
  auto c = testutil::small_config(1, 8, 3, TaskMode::kSingleLabel);
  ModelParameters p(c, 21);
  auto bigger = c;
  bigger.num_labels = 4;
  CHECK_THROWS_AS(ModelParameters(bigger, p.store()), InputError);
  CHECK_NOTHROW(ModelParameters(c, p.store()));
}

TEST_CASE("bundle save and load reproduce predictions") {
  testutil::TempDir dir;
  SynthOptions so;
  so.num_docs = 60;
  const auto corpus = synth_generate(so);
  PipelineSettings s;
  s.encoder.num_layers = 1;
  s.encoder.hidden_dim = 16;
  s.encoder.ffn_dim = 32;
  s.train.epochs = 1;
  const auto trained = train_model(corpus.dataset, ConceptLexicon(corpus.lexicon_entries), s);
  save_bundle(dir.file("m.bin"), trained.bundle, "{\"note\":\"x\"}");
  const ModelBundle back = load_bundle(dir.file("m.bin"));
  CHECK(back.vocab.tokens() == trained.bundle.vocab.tokens());
  CHECK(back.label_space == trained.bundle.label_space);
  CHECK(back.lexicon.size() == trained.bundle.lexicon.size());
  CHECK(back.params.store().values() == trained.bundle.params.store().values());
  const auto a = evaluate(trained.bundle, corpus.dataset);
  const auto b = evaluate(back, corpus.dataset);
  CHECK(a.predictions == b.predictions);
  save_bundle(dir.file("m2.bin"), back, "{\"note\":\"x\"}");
  CHECK(testutil::read_text(dir.file("m.bin")) == testutil::read_text(dir.file("m2.bin")));
}
