#include "muser/model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "support/testkit.hpp"

using namespace muser;

namespace {

SampleInput sample_for(const ModelConfig& cfg, const std::vector<Chord>& chords,
                       const std::string& track_id = "s", double key_scalar = 0.0) {
  SampleInput in;
  in.tokens = tokenize(chords, static_cast<size_t>(cfg.t_max));
  StubEmbeddingProvider provider(cfg.d_mert, 2);
  in.mert = eval_feature(compute_track_features(provider, track_id, 40.0));
  in.key_scalar = key_scalar;
  return in;
}

std::vector<Chord> some_chords(int n) {
  std::vector<Chord> chords;
  for (int i = 0; i < n; ++i)
    chords.push_back(Chord::make(i * 5 % 12, static_cast<ChordQuality>(i % kNumQualities), i, i + 1));
  return chords;
}

}  // namespace

TEST_CASE("config dimensions follow the defaults") {
  ModelConfig cfg;
  CHECK(cfg.d_c() == 128);
  CHECK(cfg.fused_dim() == 128 + 1536 + 8);
  CHECK(cfg.n_tags == 56);
  CHECK(cfg.t_max == 512);
  CHECK_NOTHROW(cfg.validate());

  ModelConfig odd = cfg;
  odd.d_root = 63;  // d_c = 127, not divisible by 8 heads
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  ModelConfig neg = cfg;
  neg.projection = 0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  ModelConfig drop = cfg;
  drop.dropout = 1.0;
  CHECK_THROWS_AS(drop.validate(), ConfigError);

  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("default-size model produces a 512-d latent and both heads") {
  ModelConfig cfg;  // full paper dimensions
  Model model(cfg, BranchSet{}, 3);
  SampleInput in = sample_for(cfg, some_chords(5));
  NodePtr z = model.latent(in);
  CHECK(z->value.rows == 1);
  CHECK(z->value.cols == 512);
  CHECK(model.classification_logits(z)->value.cols == 56);
  CHECK(model.regression_output(z)->value.cols == 2);

  ForwardOutput out = model.forward_eval(in);
  CHECK(out.has_tags);
  CHECK(out.has_va);
  REQUIRE(out.tag_probs.size() == 56);
  for (double p : out.tag_probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  for (double v : out.va) CHECK(std::isfinite(v));
}

TEST_CASE("batched forward keeps the shape contract") {
  ModelConfig cfg = testkit::toy_model_config();
  Model model(cfg, BranchSet{}, 5);
  std::vector<SampleInput> batch;
  for (int i = 0; i < 8; ++i)
    batch.push_back(sample_for(cfg, some_chords(1 + i % 4), "t" + std::to_string(i)));
  NodePtr z = model.batch_latent(batch);
  CHECK(z->value.rows == 8);
  CHECK(z->value.cols == static_cast<size_t>(cfg.projection));
  CHECK(model.classification_logits(z)->value.rows == 8);
  CHECK(model.classification_logits(z)->value.cols == static_cast<size_t>(cfg.n_tags));
  CHECK(model.regression_output(z)->value.rows == 8);
  CHECK(model.regression_output(z)->value.cols == 2);
}

TEST_CASE("forward is deterministic and sensitive to token order") {
  ModelConfig cfg = testkit::toy_model_config();
  Model a(cfg, BranchSet{}, 11);
  Model b(cfg, BranchSet{}, 11);
  for (size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    const auto& eb = b.params().entries()[i];
    CHECK(ea.name == eb.name);
    CHECK(testkit::tensor_hash(ea.node->value) == testkit::tensor_hash(eb.node->value));
  }
  Model c(cfg, BranchSet{}, 12);
  CHECK(testkit::tensor_hash(a.params().get("projection.weight")->value) !=
        testkit::tensor_hash(c.params().get("projection.weight")->value));

  std::vector<Chord> fwd = {parse_chord("C:maj", 0, 1), parse_chord("G:dom7", 1, 2)};
  std::vector<Chord> rev = {parse_chord("G:dom7", 0, 1), parse_chord("C:maj", 1, 2)};
  SampleInput in_f = sample_for(cfg, fwd);
  SampleInput in_r = sample_for(cfg, rev);

  ForwardOutput o1 = a.forward_eval(in_f);
  ForwardOutput o2 = a.forward_eval(in_f);
  CHECK(o1.tag_probs == o2.tag_probs);
  CHECK(o1.va == o2.va);
  CHECK(a.forward_eval(in_f).tag_probs == b.forward_eval(in_f).tag_probs);

  // same token multiset, different positions
  CHECK(a.latent(in_f)->value.data != a.latent(in_r)->value.data);
}

TEST_CASE("masked PAD content cannot influence the latent") {
  ModelConfig cfg = testkit::toy_model_config();
  Model model(cfg, BranchSet{}, 21);

  SampleInput clean = sample_for(cfg, some_chords(3));
  SampleInput noisy = clean;
  for (size_t t = clean.tokens.num_real; t < clean.tokens.size(); ++t) {
    noisy.tokens.root_ids[t] = static_cast<int>(t * 7 % kRootVocabSize);
    noisy.tokens.quality_ids[t] = static_cast<int>(t * 5 % kQualityVocabSize);
  }
  CHECK(model.latent(clean)->value.data == model.latent(noisy)->value.data);

  // all PAD: the CLS token alone drives the chord side
  SampleInput empty = sample_for(cfg, {});
  CHECK(empty.tokens.num_real == 0);
  ForwardOutput out = model.forward_eval(empty);
  CHECK(out.has_tags);
  for (double p : out.tag_probs) CHECK(std::isfinite(p));
}

TEST_CASE("analytic gradients match finite differences on the tiny config") {
  ModelConfig cfg = testkit::tiny_model_config();
  Model model(cfg, BranchSet{}, 9);
  std::vector<SampleInput> batch = {sample_for(cfg, some_chords(2), "ga"),
                                    sample_for(cfg, some_chords(3), "gb", 1.0)};

  Rng weight_rng(555);
  Tensor wc(2, cfg.n_tags), wr(2, 2);
  for (double& v : wc.data) v = weight_rng.normal(0.0, 1.0);
  for (double& v : wr.data) v = weight_rng.normal(0.0, 1.0);

  auto loss = [&] {
    NodePtr z = model.batch_latent(batch);
    NodePtr cls = mul(sigmoid(model.classification_logits(z)), make_constant(wc));
    NodePtr reg = mul(model.regression_output(z), make_constant(wr));
    return add(sum_all(cls), sum_all(reg));
  };
  double err = testkit::finite_diff_worst_error(model.params(), loss);
  CHECK(err < 1e-4);
}

TEST_CASE("teacher variants expose a single branch") {
  ModelConfig cfg = testkit::toy_model_config();
  Model cat(cfg, BranchSet::teacher(LabelKind::categorical), 2);
  CHECK(cat.params().has("classification.out.weight"));
  CHECK_FALSE(cat.params().has("regression.out.weight"));
  ForwardOutput oc = cat.forward_eval(sample_for(cfg, some_chords(2)));
  CHECK(oc.has_tags);
  CHECK_FALSE(oc.has_va);

  Model dim(cfg, BranchSet::teacher(LabelKind::dimensional), 2);
  CHECK_FALSE(dim.params().has("classification.out.weight"));
  CHECK(dim.params().has("regression.out.weight"));
  ForwardOutput od = dim.forward_eval(sample_for(cfg, some_chords(2)));
  CHECK_FALSE(od.has_tags);
  CHECK(od.has_va);
}

TEST_CASE("latent rejects mismatched inputs") {
  ModelConfig cfg = testkit::toy_model_config();
  Model model(cfg, BranchSet{}, 4);
  SampleInput in = sample_for(cfg, some_chords(2));
  in.mert.push_back(0.0);
  CHECK_THROWS_AS(model.latent(in), InputError);

  SampleInput longer = sample_for(cfg, some_chords(2));
  longer.tokens.root_ids.push_back(0);
  longer.tokens.quality_ids.push_back(0);
  longer.tokens.mask.push_back(1);
  CHECK_THROWS_AS(model.latent(longer), InputError);
}

TEST_CASE("checkpoints round trip parameters, config, and metadata") {
  testkit::TempDir dir;
  ModelConfig cfg = testkit::toy_model_config();
  Model model(cfg, BranchSet{}, 17);
  SampleInput in = sample_for(cfg, some_chords(3));
  ForwardOutput before = model.forward_eval(in);

  json meta = {{"epoch", 3}, {"note", "round trip"}};
  fs::path path = dir / "model.ckpt";
  save_checkpoint(path, model, "tagfp", meta);

  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config.to_json() == cfg.to_json());
  CHECK(ckpt.branches.classification);
  CHECK(ckpt.branches.regression);
  CHECK(ckpt.seed == 17);
  CHECK(ckpt.tag_vocab_fingerprint == "tagfp");
  CHECK(ckpt.chord_vocab_fingerprint == chord_vocabulary_fingerprint());
  CHECK(ckpt.metadata.at("epoch") == 3);
  CHECK_FALSE(ckpt.optimizer.has_value());

  auto restored = model_from_checkpoint(ckpt);
  for (const auto& e : model.params().entries())
    CHECK(testkit::tensor_hash(restored->params().get(e.name)->value) ==
          testkit::tensor_hash(e.node->value));
  ForwardOutput after = restored->forward_eval(in);
  CHECK(after.tag_probs == before.tag_probs);
  CHECK(after.va == before.va);
}

TEST_CASE("checkpoints carry optimizer state when asked") {
  testkit::TempDir dir;
  ModelConfig cfg = testkit::tiny_model_config();
  Model model(cfg, BranchSet{}, 8);
  Adam adam(AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  SampleInput in = sample_for(cfg, some_chords(2));
  for (int step = 0; step < 3; ++step) {
    model.params().zero_grad();
    backward(sum_all(model.latent(in)));
    adam.step(model.params());
  }

  fs::path path = dir / "opt.ckpt";
  save_checkpoint(path, model, "fp", {}, &adam);
  Checkpoint ckpt = load_checkpoint(path);
  REQUIRE(ckpt.optimizer.has_value());
  CHECK(ckpt.optimizer->config.lr == 1e-3);
  CHECK(ckpt.optimizer->state.size() == adam.state().size());

  Adam fresh;
  restore_optimizer(fresh, *ckpt.optimizer);
  for (const auto& [name, s] : adam.state()) {
    const Adam::State& r = fresh.state().at(name);
    CHECK(r.t == s.t);
    CHECK(testkit::tensor_hash(r.m) == testkit::tensor_hash(s.m));
    CHECK(testkit::tensor_hash(r.v) == testkit::tensor_hash(s.v));
  }
}

TEST_CASE("checkpoints refuse corruption and incompatible shapes") {
  testkit::TempDir dir;
  ModelConfig cfg = testkit::tiny_model_config();
  Model model(cfg, BranchSet{}, 8);
  fs::path path = dir / "m.ckpt";
  save_checkpoint(path, model, "fp");

  std::string blob = read_text_file(path);
  std::string tampered = blob;
  tampered[tampered.size() - 3] ^= 0x1;
  atomic_write_file(dir / "tampered.ckpt", tampered);
  CHECK_THROWS_AS(load_checkpoint(dir / "tampered.ckpt"), ValidationError);

  atomic_write_file(dir / "short.ckpt", blob.substr(0, blob.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), ParseError);

  atomic_write_file(dir / "not.ckpt", "hello world, this is no checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(dir / "not.ckpt"), ParseError);

  Checkpoint wrong_chords = load_checkpoint(path);
  wrong_chords.chord_vocab_fingerprint = "0000000000000000";
  CHECK_THROWS_AS(model_from_checkpoint(wrong_chords), ValidationError);

  Checkpoint wrong_shape = load_checkpoint(path);
  wrong_shape.config.n_tags = cfg.n_tags + 1;
  CHECK_THROWS_AS(model_from_checkpoint(wrong_shape), ValidationError);

  Checkpoint wrong_count = load_checkpoint(path);
  wrong_count.branches.regression = false;
  CHECK_THROWS_AS(model_from_checkpoint(wrong_count), ValidationError);
}
