#pragma once

#include <array>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "muser/datamodel.hpp"
#include "muser/harmony.hpp"
#include "muser/jsonio.hpp"
#include "muser/nn.hpp"

namespace muser {

struct ModelConfig {
  int d_root = 64;
  int d_quality = 64;
  int layers = 2;
  int heads = 8;
  int d_mert = 1536;  // fused audio embedding width (two 768-d layers)
  int d_key = 8;
  int projection = 512;
  int branch_hidden = 256;
  int n_tags = kNumTags;
  int t_max = 512;
  double dropout = 0.1;

  int d_c() const { return d_root + d_quality; }
  int fused_dim() const { return d_c() + d_mert + d_key; }

  void validate() const {
    if (d_root <= 0 || d_quality <= 0 || layers <= 0 || heads <= 0 || d_mert <= 0 || d_key <= 0 ||
        projection <= 0 || branch_hidden <= 0 || n_tags <= 0 || t_max <= 0)
      throw ConfigError("model dimensions must be positive");
    if (d_c() % heads != 0)
      throw ConfigError("chord token dim " + std::to_string(d_c()) + " not divisible by " +
                        std::to_string(heads) + " heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  }

  json to_json() const {
    return {{"d_root", d_root},         {"d_quality", d_quality},
            {"layers", layers},         {"heads", heads},
            {"d_mert", d_mert},         {"d_key", d_key},
            {"projection", projection}, {"branch_hidden", branch_hidden},
            {"n_tags", n_tags},         {"t_max", t_max},
            {"dropout", dropout}};
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    c.d_root = j.value("d_root", c.d_root);
    c.d_quality = j.value("d_quality", c.d_quality);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.d_mert = j.value("d_mert", c.d_mert);
    c.d_key = j.value("d_key", c.d_key);
    c.projection = j.value("projection", c.projection);
    c.branch_hidden = j.value("branch_hidden", c.branch_hidden);
    c.n_tags = j.value("n_tags", c.n_tags);
    c.t_max = j.value("t_max", c.t_max);
    c.dropout = j.value("dropout", c.dropout);
    c.validate();
    return c;
  }
};

// Which task heads the network carries. Teachers get exactly one; the
// multitask student gets both.
struct BranchSet {
  bool classification = true;
  bool regression = true;

  static BranchSet student() { return {true, true}; }
  static BranchSet teacher(LabelKind kind) {
    return kind == LabelKind::categorical ? BranchSet{true, false} : BranchSet{false, true};
  }
};

inline bool is_classification_param(const std::string& name) {
  return name.rfind("classification.", 0) == 0;
}

inline bool is_regression_param(const std::string& name) {
  return name.rfind("regression.", 0) == 0;
}

inline bool is_trunk_param(const std::string& name) {
  return !is_classification_param(name) && !is_regression_param(name);
}

// One training/eval example, already preprocessed: tokenized chords in the
// track's reference key, the pooled audio embedding, and the key-mode scalar.
struct SampleInput {
  ChordTokenSequence tokens;
  std::vector<double> mert;
  double key_scalar = 0.0;
};

struct ForwardOutput {
  std::vector<double> tag_probs;  // empty when the branch is absent
  std::array<double, 2> va{0.0, 0.0};
  bool has_tags = false;
  bool has_va = false;
};

class Model {
 public:
  Model(ModelConfig cfg, BranchSet branches, uint64_t seed)
      : cfg_(cfg), branches_(branches), seed_(seed) {
    cfg_.validate();
    size_t d_c = static_cast<size_t>(cfg_.d_c());
    root_embed_ = reg_.add("root_embed",
                           normal_init(kRootVocabSize, cfg_.d_root, 0.02, seed, "root_embed"));
    quality_embed_ = reg_.add(
        "quality_embed", normal_init(kQualityVocabSize, cfg_.d_quality, 0.02, seed, "quality_embed"));
    cls_ = reg_.add("cls", normal_init(1, d_c, 0.02, seed, "cls"));
    for (int l = 0; l < cfg_.layers; ++l)
      encoder_.push_back(TransformerLayer::create(reg_, "encoder." + std::to_string(l), d_c,
                                                  cfg_.heads, 4 * d_c, seed));
    key_lift_ = Linear::create(reg_, "key_lift", 1, cfg_.d_key, seed);
    projection_ = Linear::create(reg_, "projection", cfg_.fused_dim(), cfg_.projection, seed);
    if (branches_.classification) {
      cls_hidden_ = Linear::create(reg_, "classification.hidden", cfg_.projection,
                                   cfg_.branch_hidden, seed);
      cls_out_ = Linear::create(reg_, "classification.out", cfg_.branch_hidden, cfg_.n_tags, seed);
    }
    if (branches_.regression) {
      reg_hidden_ =
          Linear::create(reg_, "regression.hidden", cfg_.projection, cfg_.branch_hidden, seed);
      reg_out_ = Linear::create(reg_, "regression.out", cfg_.branch_hidden, 2, seed);
    }
    positions_ = sinusoidal_positions(cfg_.t_max, d_c);
  }

  const ModelConfig& config() const { return cfg_; }
  const BranchSet& branches() const { return branches_; }
  uint64_t seed() const { return seed_; }
  ParameterRegistry& params() { return reg_; }
  const ParameterRegistry& params() const { return reg_; }

  // Latent for one sample: embed, positionally encode, prepend CLS (which
  // carries no positional term), run the masked encoder, take position 0,
  // fuse with the audio embedding and lifted key, project.
  NodePtr latent(const SampleInput& in, bool training = false, Rng* dropout_rng = nullptr) const {
    size_t t_len = in.tokens.size();
    if (t_len > static_cast<size_t>(cfg_.t_max))
      throw InputError("token sequence longer than t_max");
    if (in.mert.size() != static_cast<size_t>(cfg_.d_mert))
      throw InputError("audio embedding dim " + std::to_string(in.mert.size()) + ", expected " +
                       std::to_string(cfg_.d_mert));

    NodePtr x;
    std::vector<uint8_t> full_mask(t_len + 1, 1);
    if (t_len > 0) {
      NodePtr roots = embedding_lookup(root_embed_, in.tokens.root_ids);
      NodePtr quals = embedding_lookup(quality_embed_, in.tokens.quality_ids);
      NodePtr tokens = concat_cols({roots, quals});
      Tensor pe(t_len, static_cast<size_t>(cfg_.d_c()));
      for (size_t t = 0; t < t_len; ++t)
        for (size_t c = 0; c < pe.cols; ++c) pe.at(t, c) = positions_.at(t, c);
      NodePtr encoded = add(tokens, make_constant(std::move(pe)));
      x = concat_rows({cls_, encoded});
      for (size_t t = 0; t < t_len; ++t) full_mask[t + 1] = in.tokens.mask[t];
    } else {
      x = cls_;
    }
    NodePtr mask_bias = make_constant(attention_mask_bias(full_mask));
    double p = training ? cfg_.dropout : 0.0;
    for (const auto& layer : encoder_) x = layer(x, mask_bias, p, dropout_rng);
    NodePtr cls_out = slice_rows(x, 0, 1);

    NodePtr mert = make_constant(Tensor::row(in.mert));
    Tensor key_in(1, 1);
    key_in.at(0, 0) = in.key_scalar;
    NodePtr key = key_lift_(make_constant(std::move(key_in)));
    NodePtr fused = concat_cols({cls_out, mert, key});
    return relu(projection_(fused));
  }

  NodePtr batch_latent(const std::vector<SampleInput>& batch, bool training = false,
                       Rng* dropout_rng = nullptr) const {
    if (batch.empty()) throw InputError("empty batch");
    std::vector<NodePtr> rows;
    for (const auto& s : batch) rows.push_back(latent(s, training, dropout_rng));
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
  }

  NodePtr classification_logits(const NodePtr& latent) const {
    if (!branches_.classification) throw ConfigError("model has no classification branch");
    return cls_out_(relu(cls_hidden_(latent)));
  }

  NodePtr regression_output(const NodePtr& latent) const {
    if (!branches_.regression) throw ConfigError("model has no regression branch");
    return reg_out_(relu(reg_hidden_(latent)));
  }

  ForwardOutput forward_eval(const SampleInput& in) const {
    NodePtr z = latent(in);
    ForwardOutput out;
    if (branches_.classification) {
      NodePtr probs = sigmoid(classification_logits(z));
      out.tag_probs = probs->value.data;
      out.has_tags = true;
    }
    if (branches_.regression) {
      NodePtr va = regression_output(z);
      out.va = {va->value.at(0, 0), va->value.at(0, 1)};
      out.has_va = true;
    }
    return out;
  }

 private:
  ModelConfig cfg_;
  BranchSet branches_;
  uint64_t seed_ = 0;
  ParameterRegistry reg_;
  NodePtr root_embed_, quality_embed_, cls_;
  std::vector<TransformerLayer> encoder_;
  Linear key_lift_, projection_;
  Linear cls_hidden_, cls_out_;
  Linear reg_hidden_, reg_out_;
  Tensor positions_;
};

// --- checkpoints -------------------------------------------------------------
//
// Single file: magic line, little-endian uint64 header length, JSON header,
// then float64 payload. The header pins the config, branch set, feature-space
// fingerprints, and per-tensor offsets; optimizer moments ride in the same
// payload when present.

inline constexpr const char* kCheckpointMagic = "MUSERCKPT1\n";

struct OptimizerSnapshot {
  AdamConfig config;
  // name -> (t, m, v)
  std::vector<std::tuple<std::string, int64_t, Tensor, Tensor>> state;
};

struct Checkpoint {
  ModelConfig config;
  BranchSet branches;
  uint64_t seed = 0;
  std::string tag_vocab_fingerprint;
  std::string chord_vocab_fingerprint;
  std::vector<std::pair<std::string, Tensor>> params;
  std::optional<OptimizerSnapshot> optimizer;
  json metadata;
};

namespace detail {

inline void append_doubles(std::string& payload, const Tensor& t) {
  payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
}

inline Tensor read_doubles(const std::string& payload, size_t offset, size_t rows, size_t cols) {
  Tensor t(rows, cols);
  size_t bytes = rows * cols * sizeof(double);
  if (offset + bytes > payload.size()) throw ParseError("checkpoint payload truncated");
  std::memcpy(t.data.data(), payload.data() + offset, bytes);
  return t;
}

}  // namespace detail

inline void save_checkpoint(const fs::path& path, const Model& model,
                            const std::string& tag_vocab_fingerprint, const json& metadata = {},
                            const Adam* optimizer = nullptr) {
  std::string payload;
  json header;
  header["format"] = "muser-checkpoint-v1";
  header["config"] = model.config().to_json();
  header["branches"] = {{"classification", model.branches().classification},
                        {"regression", model.branches().regression}};
  header["seed"] = model.seed();
  header["fingerprints"] = {{"tag_vocab", tag_vocab_fingerprint},
                            {"chord_vocab", chord_vocabulary_fingerprint()},
                            {"d_mert", model.config().d_mert}};
  header["metadata"] = metadata.is_null() ? json::object() : metadata;

  json params = json::array();
  for (const auto& e : model.params().entries()) {
    params.push_back({{"name", e.name},
                      {"rows", e.node->value.rows},
                      {"cols", e.node->value.cols},
                      {"offset", payload.size()}});
    detail::append_doubles(payload, e.node->value);
  }
  header["params"] = std::move(params);

  if (optimizer) {
    json opt;
    opt["lr"] = optimizer->config().lr;
    opt["beta1"] = optimizer->config().beta1;
    opt["beta2"] = optimizer->config().beta2;
    opt["eps"] = optimizer->config().eps;
    json entries = json::array();
    for (const auto& e : model.params().entries()) {
      auto it = optimizer->state().find(e.name);
      if (it == optimizer->state().end()) continue;
      entries.push_back({{"name", e.name},
                         {"t", it->second.t},
                         {"rows", it->second.m.rows},
                         {"cols", it->second.m.cols},
                         {"m_offset", payload.size()},
                         {"v_offset", payload.size() + it->second.m.size() * sizeof(double)}});
      detail::append_doubles(payload, it->second.m);
      detail::append_doubles(payload, it->second.v);
    }
    opt["entries"] = std::move(entries);
    header["optimizer"] = std::move(opt);
  }

  header["payload_bytes"] = payload.size();
  header["payload_fnv1a64"] = hex64(fnv1a64_bytes(payload.data(), payload.size()));

  std::string header_text = header.dump();
  std::string blob;
  blob.reserve(sizeof(kCheckpointMagic) + 8 + header_text.size() + payload.size());
  blob += kCheckpointMagic;
  uint64_t hlen = header_text.size();
  blob.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  blob += header_text;
  blob += payload;
  atomic_write_file(path, blob);
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  std::string blob = read_text_file(path);
  const std::string magic = kCheckpointMagic;
  if (blob.size() < magic.size() + 8 || blob.compare(0, magic.size(), magic) != 0)
    throw ParseError(path.string() + ": not a checkpoint file");
  uint64_t hlen = 0;
  std::memcpy(&hlen, blob.data() + magic.size(), sizeof(hlen));
  size_t header_start = magic.size() + sizeof(hlen);
  if (header_start + hlen > blob.size()) throw ParseError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(blob.substr(header_start, hlen));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "muser-checkpoint-v1")
    throw ParseError(path.string() + ": unsupported checkpoint format");

  std::string payload = blob.substr(header_start + hlen);
  if (payload.size() != header.at("payload_bytes").get<size_t>())
    throw ParseError(path.string() + ": truncated payload");
  std::string fp = hex64(fnv1a64_bytes(payload.data(), payload.size()));
  if (fp != header.at("payload_fnv1a64").get<std::string>())
    throw ValidationError(path.string() + ": checkpoint payload fingerprint mismatch");

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("config"));
  ckpt.branches.classification = header.at("branches").at("classification").get<bool>();
  ckpt.branches.regression = header.at("branches").at("regression").get<bool>();
  ckpt.seed = header.value("seed", 0ULL);
  ckpt.tag_vocab_fingerprint = header.at("fingerprints").at("tag_vocab").get<std::string>();
  ckpt.chord_vocab_fingerprint = header.at("fingerprints").at("chord_vocab").get<std::string>();
  ckpt.metadata = header.value("metadata", json::object());

  for (const auto& p : header.at("params")) {
    ckpt.params.emplace_back(p.at("name").get<std::string>(),
                             detail::read_doubles(payload, p.at("offset").get<size_t>(),
                                                  p.at("rows").get<size_t>(),
                                                  p.at("cols").get<size_t>()));
  }

  if (header.contains("optimizer")) {
    OptimizerSnapshot snap;
    const json& opt = header.at("optimizer");
    snap.config.lr = opt.at("lr").get<double>();
    snap.config.beta1 = opt.at("beta1").get<double>();
    snap.config.beta2 = opt.at("beta2").get<double>();
    snap.config.eps = opt.at("eps").get<double>();
    for (const auto& e : opt.at("entries")) {
      size_t rows = e.at("rows").get<size_t>(), cols = e.at("cols").get<size_t>();
      snap.state.emplace_back(e.at("name").get<std::string>(), e.at("t").get<int64_t>(),
                              detail::read_doubles(payload, e.at("m_offset").get<size_t>(), rows, cols),
                              detail::read_doubles(payload, e.at("v_offset").get<size_t>(), rows, cols));
    }
    ckpt.optimizer = std::move(snap);
  }
  return ckpt;
}

// Rebuilds the model a checkpoint describes. The chord vocabulary fingerprint
// is code-derived, so it is checked here; the tag vocabulary fingerprint is
// returned for the caller to check against the vocabulary it loaded.
inline std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.chord_vocab_fingerprint != chord_vocabulary_fingerprint())
    throw ValidationError("checkpoint chord vocabulary fingerprint " +
                          ckpt.chord_vocab_fingerprint + " does not match this build (" +
                          chord_vocabulary_fingerprint() + ")");
  auto model = std::make_unique<Model>(ckpt.config, ckpt.branches, ckpt.seed);
  auto& reg = model->params();
  if (ckpt.params.size() != reg.entries().size())
    throw ValidationError("checkpoint parameter count mismatch");
  for (const auto& [name, tensor] : ckpt.params) {
    const NodePtr& node = reg.get(name);
    if (!node->value.same_shape(tensor))
      throw ValidationError("checkpoint parameter '" + name + "' shape " + tensor.shape_str() +
                            " does not match model " + node->value.shape_str());
    node->value = tensor;
  }
  return model;
}

inline void restore_optimizer(Adam& optimizer, const OptimizerSnapshot& snap) {
  optimizer.state().clear();
  for (const auto& [name, t, m, v] : snap.state) {
    Adam::State s;
    s.t = t;
    s.m = m;
    s.v = v;
    optimizer.state()[name] = std::move(s);
  }
}

}  // namespace muser
