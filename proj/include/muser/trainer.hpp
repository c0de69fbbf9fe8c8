#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muser/evaluation.hpp"
#include "muser/losses.hpp"
#include "muser/model.hpp"

namespace muser {

// Stream tags keeping shuffle, augmentation, and dropout draws independent.
inline constexpr uint64_t kShuffleSalt = 0x4655485342ULL;
inline constexpr uint64_t kAugSalt = 0x534755412eULL;
inline constexpr uint64_t kDropSalt = 0x504f52442eULL;

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double alpha = 0.2;  // categorical task-vs-distillation balance
  double beta = 0.2;   // dimensional counterpart
  uint64_t seed = 0;
  fs::path checkpoint_dir = "checkpoints";
  std::string run_name;  // derived from mode/datasets when empty
  ClassificationKd classification_kd = ClassificationKd::literal;
  RegressionKd regression_kd = RegressionKd::softmax_kl;
  std::string interleave = "round_robin";  // or "proportional"
  bool freeze_trunk_on_branch_steps = false;
  std::map<std::string, double> baseline_metrics;  // dataset -> single-task val metric
  std::optional<fs::path> resume_from;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0)
      throw ConfigError("epochs, batch size, and learning rate must be positive");
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
      throw ConfigError("alpha and beta must lie in [0, 1]");
    if (interleave != "round_robin" && interleave != "proportional")
      throw ConfigError("interleave must be round_robin or proportional");
  }

  json to_json() const {
    json j = {{"epochs", epochs},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"alpha", alpha},
              {"beta", beta},
              {"seed", seed},
              {"checkpoint_dir", checkpoint_dir.string()},
              {"run_name", run_name},
              {"classification_kd",
               classification_kd == ClassificationKd::literal ? "literal" : "bernoulli"},
              {"regression_kd",
               regression_kd == RegressionKd::softmax_kl ? "softmax_kl" : "squared_error"},
              {"interleave", interleave},
              {"freeze_trunk_on_branch_steps", freeze_trunk_on_branch_steps}};
    if (!baseline_metrics.empty()) j["baseline_metrics"] = baseline_metrics;
    return j;
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir.string());
    c.run_name = j.value("run_name", c.run_name);
    std::string ckd = j.value("classification_kd", "literal");
    if (ckd == "literal") c.classification_kd = ClassificationKd::literal;
    else if (ckd == "bernoulli") c.classification_kd = ClassificationKd::bernoulli;
    else throw ConfigError("classification_kd must be literal or bernoulli");
    std::string rkd = j.value("regression_kd", "softmax_kl");
    if (rkd == "softmax_kl") c.regression_kd = RegressionKd::softmax_kl;
    else if (rkd == "squared_error") c.regression_kd = RegressionKd::squared_error;
    else throw ConfigError("regression_kd must be softmax_kl or squared_error");
    c.interleave = j.value("interleave", c.interleave);
    c.freeze_trunk_on_branch_steps = j.value("freeze_trunk_on_branch_steps", false);
    if (j.contains("baseline_metrics"))
      c.baseline_metrics = j.at("baseline_metrics").get<std::map<std::string, double>>();
    c.validate();
    return c;
  }
};

// Teacher outputs for every training-split track of one dataset.
struct SoftLabelStore {
  Dataset dataset = Dataset::jamendo;
  LabelKind kind = LabelKind::categorical;
  std::string checkpoint_fingerprint;
  std::map<std::string, std::vector<double>> entries;

  void save(const fs::path& path) const {
    json j;
    j["format"] = "muser-softlabels-v1";
    j["dataset"] = std::string(to_string(dataset));
    j["kind"] = kind == LabelKind::categorical ? "categorical" : "dimensional";
    j["checkpoint"] = checkpoint_fingerprint;
    json e = json::object();
    for (const auto& [k, v] : entries) e[k] = v;
    j["entries"] = std::move(e);
    save_json_file(path, j);
  }

  static SoftLabelStore load(const fs::path& path) {
    json j = load_json_file(path);
    if (j.value("format", "") != "muser-softlabels-v1")
      throw ParseError(path.string() + ": not a soft-label store");
    SoftLabelStore s;
    auto ds = dataset_from_string(j.at("dataset").get<std::string>());
    if (!ds) throw ParseError(path.string() + ": unknown dataset name");
    s.dataset = *ds;
    s.kind = j.at("kind").get<std::string>() == "categorical" ? LabelKind::categorical
                                                              : LabelKind::dimensional;
    if (s.kind != label_kind_of(s.dataset))
      throw ValidationError(path.string() + ": label kind does not match dataset");
    s.checkpoint_fingerprint = j.value("checkpoint", "");
    for (const auto& [k, v] : j.at("entries").items()) {
      auto vec = v.get<std::vector<double>>();
      if (s.kind == LabelKind::categorical)
        for (double p : vec)
          if (p <= 0.0 || p >= 1.0)
            throw ValidationError(path.string() + ": classification soft label outside (0,1) for '" +
                                  k + "'");
      s.entries[k] = std::move(vec);
    }
    return s;
  }
};

inline SoftLabelStore generate_soft_labels(const Model& model, const DatasetManifest& manifest,
                                           const FeatureStore& store,
                                           const std::string& checkpoint_fingerprint = "") {
  LabelKind kind = label_kind_of(manifest.dataset);
  if (kind == LabelKind::categorical && !model.branches().classification)
    throw ConfigError("teacher lacks the classification branch required by " +
                      std::string(to_string(manifest.dataset)));
  if (kind == LabelKind::dimensional && !model.branches().regression)
    throw ConfigError("teacher lacks the regression branch required by " +
                      std::string(to_string(manifest.dataset)));

  std::vector<const TrackRecord*> train = manifest.split_records(Split::train);
  auto missing = store.missing(train);
  if (!missing.empty()) {
    std::string list;
    for (size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
    throw InputError("missing cached features for: " + list);
  }

  SoftLabelStore out;
  out.dataset = manifest.dataset;
  out.kind = kind;
  out.checkpoint_fingerprint = checkpoint_fingerprint;
  for (const TrackRecord* r : train) {
    ForwardOutput o = model.forward_eval(store.eval_input(r->track_id));
    out.entries[r->track_id] =
        kind == LabelKind::categorical ? o.tag_probs : std::vector<double>{o.va[0], o.va[1]};
  }
  return out;
}

// Positive-class frequency per tag over the categorical training records.
inline std::vector<double> tag_frequencies(const std::vector<const TrackRecord*>& train_records,
                                           const TagVocabulary& vocabulary) {
  if (train_records.empty()) throw InputError("tag frequencies need at least one record");
  std::vector<double> counts(vocabulary.size(), 0.0);
  for (const TrackRecord* r : train_records) {
    if (r->label.tags.size() != vocabulary.size())
      throw ValidationError("label vector length does not match the vocabulary");
    for (size_t i = 0; i < counts.size(); ++i)
      if (r->label.tags[i]) counts[i] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(train_records.size());
  return counts;
}

// One kind-homogeneous optimization batch, fully materialized.
struct BatchData {
  LabelKind kind = LabelKind::categorical;
  std::vector<SampleInput> inputs;
  Tensor targets;  // B x n_tags or B x 2
  Tensor teacher;  // same shape as the branch output; unused when !has_teacher
  bool has_teacher = false;
};

struct StepLosses {
  double task = 0.0;
  double kd = 0.0;
  double total = 0.0;
};

inline std::function<bool(const std::string&)> selective_update_filter(LabelKind kind,
                                                                       bool freeze_trunk) {
  if (kind == LabelKind::categorical) {
    if (freeze_trunk) return is_classification_param;
    return [](const std::string& n) { return !is_regression_param(n); };
  }
  if (freeze_trunk) return is_regression_param;
  return [](const std::string& n) { return !is_classification_param(n); };
}

// One optimizer step. Gradients flow through the active branch only; the
// other branch's parameters and optimizer state stay untouched. The shared
// trunk updates on every step unless explicitly frozen.
inline StepLosses step_selective(const BatchData& batch, Model& model, Adam& optimizer,
                                 const ClassWeights* class_wts, const TrainConfig& cfg,
                                 Rng* dropout_rng = nullptr) {
  if (batch.inputs.empty()) throw InputError("empty batch");
  NodePtr latent = model.batch_latent(batch.inputs, true, dropout_rng);
  NodePtr task, kd;
  double weight = 1.0;
  if (batch.kind == LabelKind::categorical) {
    if (!class_wts) throw ConfigError("categorical step needs class weights");
    NodePtr probs = sigmoid(model.classification_logits(latent));
    task = weighted_bce_loss(probs, batch.targets, *class_wts);
    if (batch.has_teacher) {
      kd = classification_kd_loss(probs, batch.teacher, cfg.classification_kd);
      weight = cfg.alpha;
    }
  } else {
    NodePtr pred = model.regression_output(latent);
    task = va_mse_loss(pred, batch.targets);
    if (batch.has_teacher) {
      kd = regression_kd_loss(pred, batch.teacher, cfg.regression_kd);
      weight = cfg.beta;
    }
  }
  NodePtr total = kd ? total_loss_graph(task, kd, weight) : task;

  model.params().zero_grad();
  backward(total);
  optimizer.step(model.params(),
                 selective_update_filter(batch.kind, cfg.freeze_trunk_on_branch_steps));

  StepLosses losses;
  losses.task = task->value.at(0, 0);
  losses.kd = kd ? kd->value.at(0, 0) : 0.0;
  losses.total = total->value.at(0, 0);
  return losses;
}

// Everything training needs to know about one dataset.
struct DatasetBundle {
  const DatasetManifest* manifest = nullptr;
  const FeatureStore* store = nullptr;
  const SoftLabelStore* soft_labels = nullptr;  // required for student runs
};

struct TrainResult {
  fs::path best_checkpoint;
  fs::path resume_checkpoint;
  fs::path log_path;
  json history = json::array();
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
};

namespace detail {

// Shuffled cycling record stream. The primary (largest) dataset ends its
// cycle with a partial batch so an epoch is exactly one pass; the others top
// up across reshuffles and always yield full batches.
struct DatasetStream {
  const DatasetBundle* bundle = nullptr;
  std::vector<const TrackRecord*> train_records;
  uint64_t dataset_id = 0;
  bool allow_partial = false;
  std::vector<size_t> order;
  size_t pos = 0;
  uint64_t reshuffle_count = 0;

  void reshuffle(uint64_t seed) {
    order.resize(train_records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, kShuffleSalt, dataset_id, reshuffle_count));
    rng.shuffle(order);
    ++reshuffle_count;
    pos = 0;
  }

  struct Draw {
    const TrackRecord* record;
    uint64_t cycle;  // reshuffle generation the record was drawn from
  };

  std::vector<Draw> draw(size_t batch, uint64_t seed) {
    std::vector<Draw> out;
    while (out.size() < batch) {
      if (pos >= order.size()) {
        if (allow_partial && !out.empty()) break;
        reshuffle(seed);
      }
      out.push_back({train_records[order[pos]], reshuffle_count - 1});
      ++pos;
    }
    return out;
  }
};

inline double validation_metric(const Model& model, const DatasetBundle& b,
                                const TagVocabulary* vocabulary) {
  try {
    DatasetMetrics m =
        evaluate_dataset(model, *b.manifest, Split::val, *b.store, vocabulary);
    return m.kind == LabelKind::categorical ? m.pr_auc : 0.5 * (m.r2_valence + m.r2_arousal);
  } catch (const EvalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline BatchData assemble_batch(const DatasetBundle& b,
                                const std::vector<DatasetStream::Draw>& draws,
                                const TagVocabulary* vocabulary, uint64_t seed,
                                uint64_t dataset_id) {
  BatchData batch;
  batch.kind = label_kind_of(b.manifest->dataset);
  size_t n = draws.size();
  size_t out_dim = batch.kind == LabelKind::categorical ? vocabulary->size() : 2;
  batch.targets = Tensor(n, out_dim);
  batch.has_teacher = b.soft_labels != nullptr;
  if (batch.has_teacher) batch.teacher = Tensor(n, out_dim);

  for (size_t i = 0; i < n; ++i) {
    const TrackRecord& r = *draws[i].record;
    Rng aug(mix_seed(seed ^ kAugSalt, dataset_id, draws[i].cycle, fnv1a64(r.track_id)));
    batch.inputs.push_back(b.store->train_input(r.track_id, aug));
    if (batch.kind == LabelKind::categorical) {
      if (r.label.tags.size() != vocabulary->size())
        throw ValidationError("label vector length does not match the vocabulary");
      for (size_t c = 0; c < r.label.tags.size(); ++c)
        batch.targets.at(i, c) = r.label.tags[c] ? 1.0 : 0.0;
    } else {
      batch.targets.at(i, 0) = r.label.valence;
      batch.targets.at(i, 1) = r.label.arousal;
    }
    if (batch.has_teacher) {
      auto it = b.soft_labels->entries.find(r.track_id);
      if (it == b.soft_labels->entries.end())
        throw InputError("missing soft labels for: " + r.track_id);
      if (it->second.size() != out_dim)
        throw ValidationError("soft label length mismatch for '" + r.track_id + "'");
      for (size_t c = 0; c < out_dim; ++c) batch.teacher.at(i, c) = it->second[c];
    }
  }
  return batch;
}

}  // namespace detail

// Shared training loop for teachers (one bundle, single branch, task loss
// only) and the multitask student (several bundles, both branches, Eq. 10/11
// with soft labels).
inline TrainResult run_training(Model& model, const std::vector<DatasetBundle>& bundles,
                                const TagVocabulary& vocabulary, const TrainConfig& cfg,
                                bool require_soft_labels) {
  cfg.validate();
  if (bundles.empty()) throw ConfigError("no datasets selected");

  // fail fast on anything missing before the first step
  for (const auto& b : bundles) {
    std::vector<const TrackRecord*> train = b.manifest->split_records(Split::train);
    if (train.empty())
      throw InputError("dataset " + std::string(to_string(b.manifest->dataset)) +
                       " has no training records");
    std::vector<const TrackRecord*> val = b.manifest->split_records(Split::val);
    train.insert(train.end(), val.begin(), val.end());
    auto missing = b.store->missing(train);
    if (!missing.empty()) {
      std::string list;
      for (size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
      throw InputError("missing cached features for: " + list);
    }
    if (require_soft_labels) {
      if (!b.soft_labels)
        throw InputError("no soft-label store for dataset " +
                         std::string(to_string(b.manifest->dataset)) +
                         "; run soft-labels first");
      std::string list;
      for (const TrackRecord* r : b.manifest->split_records(Split::train))
        if (!b.soft_labels->entries.count(r->track_id))
          list += (list.empty() ? "" : ", ") + r->track_id;
      if (!list.empty()) throw InputError("missing soft labels for: " + list);
    }
  }

  // class weights: frozen frequencies over all categorical training records
  std::optional<ClassWeights> class_wts;
  {
    std::vector<const TrackRecord*> cat_train;
    for (const auto& b : bundles)
      if (label_kind_of(b.manifest->dataset) == LabelKind::categorical) {
        auto t = b.manifest->split_records(Split::train);
        cat_train.insert(cat_train.end(), t.begin(), t.end());
      }
    if (!cat_train.empty()) class_wts = class_weights(tag_frequencies(cat_train, vocabulary));
  }

  // streams, largest dataset first decides epoch length
  std::vector<detail::DatasetStream> streams(bundles.size());
  size_t primary = 0;
  for (size_t i = 0; i < bundles.size(); ++i) {
    streams[i].bundle = &bundles[i];
    streams[i].train_records = bundles[i].manifest->split_records(Split::train);
    streams[i].dataset_id = static_cast<uint64_t>(bundles[i].manifest->dataset);
    if (streams[i].train_records.size() > streams[primary].train_records.size()) primary = i;
  }
  streams[primary].allow_partial = true;

  size_t batch = static_cast<size_t>(cfg.batch_size);
  size_t n_primary = streams[primary].train_records.size();
  size_t rounds_per_epoch = (n_primary + batch - 1) / batch;

  // proportional mode: dataset d contributes batches in proportion to its
  // size via a Bresenham schedule, so over one epoch each dataset is seen
  // about once instead of cycling to match the largest
  auto batches_in_round = [&](size_t d, size_t round) -> size_t {
    if (cfg.interleave != "proportional" || d == primary) return 1;
    uint64_t n = streams[d].train_records.size();
    return static_cast<size_t>((round + 1) * n / n_primary - round * n / n_primary);
  };

  Adam optimizer(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  int start_epoch = 0;
  uint64_t global_step = 0;

  if (cfg.resume_from) {
    Checkpoint ckpt = load_checkpoint(*cfg.resume_from);
    if (ckpt.tag_vocab_fingerprint != vocabulary.fingerprint())
      throw ValidationError("resume checkpoint was trained with a different tag vocabulary");
    auto restored = model_from_checkpoint(ckpt);
    if (restored->params().entries().size() != model.params().entries().size())
      throw ValidationError("resume checkpoint parameter set does not match this model");
    for (const auto& e : restored->params().entries()) {
      const NodePtr& target = model.params().get(e.name);
      if (!target->value.same_shape(e.node->value))
        throw ValidationError("resume parameter '" + e.name + "' shape mismatch");
      target->value = e.node->value;
    }
    if (!ckpt.optimizer) throw ValidationError("resume checkpoint has no optimizer state");
    restore_optimizer(optimizer, *ckpt.optimizer);
    start_epoch = ckpt.metadata.value("next_epoch", 0);
    global_step = ckpt.metadata.value("global_step", 0ULL);
    if (ckpt.metadata.contains("cursors")) {
      const json& cur = ckpt.metadata.at("cursors");
      if (cur.size() != streams.size())
        throw ValidationError("resume cursor count does not match dataset selection");
      for (size_t i = 0; i < streams.size(); ++i) {
        streams[i].reshuffle_count = cur[i].at("reshuffle_count").get<uint64_t>();
        size_t pos = cur[i].at("pos").get<size_t>();
        if (streams[i].reshuffle_count > 0) {
          --streams[i].reshuffle_count;  // regenerate the in-flight order
          streams[i].reshuffle(cfg.seed);
        }
        streams[i].pos = pos;
      }
    }
  }

  fs::create_directories(cfg.checkpoint_dir);
  std::string name = cfg.run_name.empty() ? "run" : cfg.run_name;
  TrainResult result;
  result.best_checkpoint = cfg.checkpoint_dir / (name + ".ckpt");
  result.resume_checkpoint = cfg.checkpoint_dir / (name + "_resume.ckpt");
  result.log_path = cfg.checkpoint_dir / (name + "_log.jsonl");

  std::vector<json> log_lines;
  double best = -std::numeric_limits<double>::infinity();
  bool saved_best = false;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<double> task_sum(bundles.size(), 0.0), kd_sum(bundles.size(), 0.0);
    std::vector<size_t> step_count(bundles.size(), 0);

    for (size_t round = 0; round < rounds_per_epoch; ++round) {
      for (size_t d = 0; d < streams.size(); ++d) {
        for (size_t rep = 0; rep < batches_in_round(d, round); ++rep) {
          auto draws = streams[d].draw(batch, cfg.seed);
          BatchData bd = detail::assemble_batch(*streams[d].bundle, draws, &vocabulary, cfg.seed,
                                                streams[d].dataset_id);
          if (require_soft_labels && !bd.has_teacher)
            throw InputError("soft labels unavailable mid-training");
          Rng drop(mix_seed(cfg.seed ^ kDropSalt, global_step));
          StepLosses losses =
              step_selective(bd, model, optimizer, class_wts ? &*class_wts : nullptr, cfg, &drop);
          task_sum[d] += losses.task;
          kd_sum[d] += losses.kd;
          ++step_count[d];
          ++global_step;
        }
      }
    }

    // per-dataset validation, then the combined selection metric
    json epoch_log;
    epoch_log["epoch"] = epoch;
    json per_dataset = json::array();
    double combined = 0.0;
    bool combined_valid = true;
    bool all_baselines = !cfg.baseline_metrics.empty();
    for (const auto& b : bundles)
      all_baselines =
          all_baselines && cfg.baseline_metrics.count(std::string(to_string(b.manifest->dataset)));
    for (size_t d = 0; d < bundles.size(); ++d) {
      double metric = detail::validation_metric(model, bundles[d], &vocabulary);
      json entry = {{"dataset", std::string(to_string(bundles[d].manifest->dataset))},
                    {"task_loss", task_sum[d] / std::max<size_t>(1, step_count[d])},
                    {"kd_loss", kd_sum[d] / std::max<size_t>(1, step_count[d])},
                    {"steps", step_count[d]}};
      if (std::isnan(metric)) {
        entry["val_metric"] = nullptr;
        combined_valid = false;
      } else {
        entry["val_metric"] = metric;
        double term = metric;
        if (all_baselines)
          term /= cfg.baseline_metrics.at(std::string(to_string(bundles[d].manifest->dataset)));
        combined += term;
      }
      per_dataset.push_back(std::move(entry));
    }
    combined /= static_cast<double>(bundles.size());
    epoch_log["datasets"] = std::move(per_dataset);
    epoch_log["val_combined"] = combined_valid ? json(combined) : json(nullptr);
    log_lines.push_back(epoch_log);
    result.history.push_back(std::move(epoch_log));

    if (combined_valid && combined > best) {
      best = combined;
      result.best_metric = combined;
      result.best_epoch = epoch;
      save_checkpoint(result.best_checkpoint, model, vocabulary.fingerprint(),
                      {{"epoch", epoch}, {"val_combined", combined}, {"run", name}});
      saved_best = true;
    }
  }

  // resume checkpoint always carries optimizer state and stream cursors
  json cursors = json::array();
  for (const auto& s : streams)
    cursors.push_back({{"reshuffle_count", s.reshuffle_count}, {"pos", s.pos}});
  json resume_meta = {{"next_epoch", cfg.epochs},
                      {"global_step", global_step},
                      {"cursors", std::move(cursors)},
                      {"run", name}};
  save_checkpoint(result.resume_checkpoint, model, vocabulary.fingerprint(), resume_meta,
                  &optimizer);
  if (!saved_best)
    save_checkpoint(result.best_checkpoint, model, vocabulary.fingerprint(),
                    {{"epoch", cfg.epochs - 1}, {"val_combined", nullptr}, {"run", name}});

  save_jsonl_file(result.log_path, log_lines);

  json manifest = {{"run", name},
                   {"config", cfg.to_json()},
                   {"model", model.config().to_json()},
                   {"tag_vocab", vocabulary.fingerprint()},
                   {"chord_vocab", chord_vocabulary_fingerprint()},
                   {"best_epoch", result.best_epoch},
                   {"best_metric", saved_best ? json(result.best_metric) : json(nullptr)},
                   {"history", result.history}};
  json ds = json::array();
  for (const auto& b : bundles)
    ds.push_back({{"dataset", std::string(to_string(b.manifest->dataset))},
                  {"train", b.manifest->split_records(Split::train).size()},
                  {"val", b.manifest->split_records(Split::val).size()},
                  {"test", b.manifest->split_records(Split::test).size()}});
  manifest["datasets"] = std::move(ds);
  save_json_file(cfg.checkpoint_dir / (name + "_manifest.json"), manifest);
  return result;
}

inline TrainResult train_teacher(const DatasetBundle& bundle, const TagVocabulary& vocabulary,
                                 const ModelConfig& model_cfg, TrainConfig cfg) {
  if (!bundle.manifest || !bundle.store) throw ConfigError("teacher training needs a dataset");
  LabelKind kind = label_kind_of(bundle.manifest->dataset);
  Model model(model_cfg, BranchSet::teacher(kind), cfg.seed);
  if (cfg.run_name.empty())
    cfg.run_name = "teacher_" + std::string(to_string(bundle.manifest->dataset));
  DatasetBundle plain = bundle;
  plain.soft_labels = nullptr;  // teachers train on hard labels only
  return run_training(model, {plain}, vocabulary, cfg, false);
}

inline TrainResult train_student(const std::vector<DatasetBundle>& bundles,
                                 const TagVocabulary& vocabulary, const ModelConfig& model_cfg,
                                 TrainConfig cfg) {
  Model model(model_cfg, BranchSet::student(), cfg.seed);
  if (cfg.run_name.empty()) cfg.run_name = "student";
  return run_training(model, bundles, vocabulary, cfg, true);
}

}  // namespace muser
