// muser: music emotion recognition pipeline driver.
//
// Subcommands cover the full workflow: extract features, train per-dataset
// teachers, dump their soft labels, train the multitask student, evaluate
// checkpoints, and run single-file prediction. Every command is deterministic
// given (config, seed, caches). Exit codes: 0 success, 1 runtime or data
// failure, 2 usage or config error.

#include <chrono>
#include <deque>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "muser/config.hpp"
#include "muser/evaluation.hpp"
#include "muser/extract.hpp"
#include "muser/features.hpp"
#include "muser/trainer.hpp"

namespace {

using namespace muser;

const std::vector<std::string> kDatasetNames = {"jamendo", "deam", "emomusic", "pmemo"};

fs::path default_vocabulary_path() { return fs::path(MUSER_DATA_DIR) / "tag_vocabulary_v1.txt"; }

struct Session {
  RunConfig cfg;
  TagVocabulary vocabulary;
  std::vector<std::string> argv;
};

Session open_session(const std::string& config_path, const std::vector<std::string>& overrides,
                     std::optional<uint64_t> seed, std::optional<int> workers, int argc,
                     char** argv) {
  Session s;
  try {
    s.cfg = RunConfig::load(config_path, overrides);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  if (seed) s.cfg.train.seed = *seed;
  if (workers) {
    if (*workers <= 0) throw ConfigError("--workers must be positive");
    s.cfg.extract_workers = *workers;
  }
  fs::path vocab =
      s.cfg.tag_vocabulary_path.empty() ? default_vocabulary_path() : s.cfg.tag_vocabulary_path;
  s.vocabulary = TagVocabulary::load(vocab);
  for (int i = 0; i < argc; ++i) s.argv.emplace_back(argv[i]);
  return s;
}

// The requested names, or every configured dataset when the list is empty.
std::vector<std::string> resolve_datasets(const RunConfig& cfg,
                                          const std::vector<std::string>& requested) {
  std::vector<std::string> out;
  if (requested.empty()) {
    for (const auto& [name, path] : cfg.manifests) out.push_back(name);
    if (out.empty()) throw ConfigError("config declares no dataset manifests");
    return out;
  }
  for (const auto& name : requested) {
    if (!cfg.manifests.count(name))
      throw ConfigError("dataset '" + name + "' has no manifest in the config");
    out.push_back(name);
  }
  return out;
}

// Loads one manifest. Fully unassigned manifests get the deterministic
// 70/15/15 split; manifests that carry their own split (official splits) are
// honored as-is. A mix of assigned and unassigned rows is an error.
DatasetManifest load_dataset(const Session& s, const std::string& name) {
  auto ds = dataset_from_string(name);
  if (!ds) throw ConfigError("unknown dataset '" + name + "'");
  ManifestOptions opts;
  opts.vocabulary = &s.vocabulary;
  opts.expected_dataset = *ds;
  auto vr = s.cfg.va_ranges.find(name);
  if (vr != s.cfg.va_ranges.end()) opts.va_range = vr->second;

  DatasetManifest manifest = load_manifest(s.cfg.manifests.at(name), opts);
  size_t unassigned = 0;
  for (const auto& r : manifest.records)
    if (r.split == Split::unassigned) ++unassigned;
  if (unassigned == manifest.records.size()) {
    manifest.records = split_dataset(std::move(manifest.records), SplitRatios{}, s.cfg.train.seed);
  } else if (unassigned > 0) {
    throw ValidationError("manifest for '" + name + "' assigns splits to only some records");
  }
  return manifest;
}

FeatureStore open_store(const Session& s, const std::string& name) {
  return FeatureStore(s.cfg.features_dir(name), s.cfg.normalized_chords_path(name),
                      s.cfg.model.t_max);
}

// Appends a provenance entry to <run_dir>/run.json. Reports stay free of
// timestamps so repeated evaluation is byte-identical; wall-clock context
// lives here instead.
void record_run(const Session& s, const std::string& command, const json& details) {
  fs::path path = s.cfg.run_dir / "run.json";
  json doc;
  if (fs::exists(path)) {
    try {
      doc = load_json_file(path);
    } catch (const std::exception&) {
      doc = json::object();  // never let a corrupt provenance file block work
    }
  }
  if (!doc.is_object()) doc = json::object();
  if (!doc.contains("commands") || !doc["commands"].is_array()) doc["commands"] = json::array();

  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));

  json entry = {{"command", command},
                {"time_utc", stamp},
                {"config_fingerprint", s.cfg.fingerprint()},
                {"seed", s.cfg.train.seed},
                {"argv", s.argv},
                {"details", details}};
  doc["commands"].push_back(std::move(entry));
  save_json_file(path, doc);
}

uint64_t checkpoint_fingerprint_of(const fs::path& path) {
  return fnv1a64(read_text_file(path));
}

std::unique_ptr<Model> load_model(const Session& s, const fs::path& checkpoint_path,
                                  Checkpoint* out_ckpt = nullptr) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.tag_vocab_fingerprint != s.vocabulary.fingerprint())
    throw ValidationError("tag vocabulary fingerprint mismatch: checkpoint has " +
                          ckpt.tag_vocab_fingerprint + ", loaded vocabulary is " +
                          s.vocabulary.fingerprint());
  auto model = model_from_checkpoint(ckpt);
  if (out_ckpt) *out_ckpt = std::move(ckpt);
  return model;
}

int cmd_extract(const Session& s, const std::vector<std::string>& datasets, bool force) {
  bool failed = false;
  json details = json::array();
  for (const auto& name : resolve_datasets(s.cfg, datasets)) {
    DatasetManifest manifest = load_dataset(s, name);
    ExtractOptions opts;
    opts.features_dir = s.cfg.features_dir(name);
    opts.normalized_chords_path = s.cfg.normalized_chords_path(name);
    opts.embedding_provider = s.cfg.embedding_provider;
    opts.embedding_dim = s.cfg.model.d_mert;
    auto cs = s.cfg.chord_streams.find(name);
    if (cs != s.cfg.chord_streams.end()) opts.chord_stream = cs->second;
    opts.workers = s.cfg.extract_workers;
    opts.force = force;

    ExtractReport report = extract_dataset(manifest, opts);
    std::cout << name << ": extracted " << report.extracted << ", skipped " << report.skipped
              << ", errors " << report.errors.size() << "\n";
    for (const auto& [track, message] : report.errors)
      std::cerr << name << "/" << track << ": " << message << "\n";
    if (!report.errors.empty()) failed = true;
    details.push_back({{"dataset", name},
                       {"extracted", report.extracted},
                       {"skipped", report.skipped},
                       {"errors", report.errors.size()}});
  }
  record_run(s, "extract", details);
  return failed ? 1 : 0;
}

int cmd_train_teacher(const Session& s, const std::string& dataset) {
  DatasetManifest manifest = load_dataset(s, dataset);
  FeatureStore store = open_store(s, dataset);
  DatasetBundle bundle{&manifest, &store, nullptr};

  TrainResult result = train_teacher(bundle, s.vocabulary, s.cfg.model, s.cfg.train);
  std::cout << "teacher " << dataset << ": best epoch " << result.best_epoch << ", checkpoint "
            << result.best_checkpoint.string() << "\n";
  record_run(s, "train-teacher",
             {{"dataset", dataset},
              {"checkpoint", result.best_checkpoint.string()},
              {"best_epoch", result.best_epoch}});
  return 0;
}

int cmd_soft_labels(const Session& s, const std::vector<std::string>& datasets,
                    const std::string& checkpoint) {
  std::vector<std::string> names = resolve_datasets(s.cfg, datasets);
  if (!checkpoint.empty() && names.size() != 1)
    throw ConfigError("--checkpoint applies to exactly one dataset");

  json details = json::array();
  for (const auto& name : names) {
    fs::path ckpt_path = checkpoint.empty()
                             ? s.cfg.checkpoint_dir() / ("teacher_" + name + ".ckpt")
                             : fs::path(checkpoint);
    if (!fs::exists(ckpt_path))
      throw InputError("no teacher checkpoint at " + ckpt_path.string() +
                       "; run train-teacher first");
    auto model = load_model(s, ckpt_path);
    DatasetManifest manifest = load_dataset(s, name);
    FeatureStore store = open_store(s, name);

    SoftLabelStore labels =
        generate_soft_labels(*model, manifest, store, hex64(checkpoint_fingerprint_of(ckpt_path)));
    fs::path out = s.cfg.soft_labels_path(name);
    labels.save(out);
    std::cout << name << ": " << labels.entries.size() << " soft-label rows -> " << out.string()
              << "\n";
    details.push_back({{"dataset", name}, {"rows", labels.entries.size()}, {"path", out.string()}});
  }
  record_run(s, "soft-labels", details);
  return 0;
}

int cmd_train_student(const Session& s, const std::vector<std::string>& datasets,
                      const std::string& resume) {
  std::vector<std::string> names = resolve_datasets(s.cfg, datasets);

  // deques keep addresses stable for the bundle pointers
  std::deque<DatasetManifest> manifests;
  std::deque<FeatureStore> stores;
  std::deque<SoftLabelStore> labels;
  std::vector<DatasetBundle> bundles;
  for (const auto& name : names) {
    manifests.push_back(load_dataset(s, name));
    stores.push_back(open_store(s, name));
    fs::path soft = s.cfg.soft_labels_path(name);
    if (!fs::exists(soft))
      throw InputError("no soft labels at " + soft.string() + "; run soft-labels first");
    labels.push_back(SoftLabelStore::load(soft));
    if (labels.back().dataset != manifests.back().dataset)
      throw ValidationError(soft.string() + " holds soft labels for a different dataset");
    bundles.push_back({&manifests.back(), &stores.back(), &labels.back()});
  }

  TrainConfig tc = s.cfg.train;
  if (!resume.empty()) tc.resume_from = fs::path(resume);
  TrainResult result = train_student(bundles, s.vocabulary, s.cfg.model, tc);
  std::cout << "student: best epoch " << result.best_epoch << ", checkpoint "
            << result.best_checkpoint.string() << "\n";
  record_run(s, "train-student",
             {{"datasets", names},
              {"checkpoint", result.best_checkpoint.string()},
              {"best_epoch", result.best_epoch}});
  return 0;
}

int cmd_evaluate(const Session& s, const std::string& checkpoint,
                 const std::vector<std::string>& datasets, const std::string& split_name) {
  auto split = split_from_string(split_name);
  if (!split || *split == Split::unassigned)
    throw ConfigError("--split must be train, val, or test");

  auto model = load_model(s, checkpoint);
  EvalReport report;
  report.checkpoint_fingerprint = hex64(checkpoint_fingerprint_of(checkpoint));
  report.split = split_name;

  for (const auto& name : resolve_datasets(s.cfg, datasets)) {
    DatasetManifest manifest = load_dataset(s, name);
    FeatureStore store = open_store(s, name);
    report.datasets.push_back(evaluate_dataset(*model, manifest, *split, store, &s.vocabulary));
  }

  fs::path base = s.cfg.reports_dir() /
                  (fs::path(checkpoint).stem().string() + "_" + split_name);
  fs::path json_path = base;
  json_path += ".json";
  fs::path csv_path = base;
  csv_path += ".csv";
  save_json_file(json_path, report.to_json());
  atomic_write_file(csv_path, report.to_csv());

  std::cout << report.to_csv();
  std::cout << "report: " << json_path.string() << "\n";
  record_run(s, "evaluate",
             {{"checkpoint", checkpoint}, {"split", split_name}, {"report", json_path.string()}});
  return 0;
}

// Prediction input is a cached feature file (the .json sidecar or the .f32
// payload next to it). Chords and key come from the normalized caches of the
// configured datasets.
int cmd_predict(const Session& s, const std::string& checkpoint, const std::string& input) {
  Checkpoint ckpt;
  auto model = load_model(s, checkpoint, &ckpt);

  fs::path in_path(input);
  if (!fs::exists(in_path)) throw InputError("no such feature file: " + input);
  fs::path sidecar = in_path;
  if (in_path.extension() != ".json") sidecar.replace_extension(".json");
  if (!fs::exists(sidecar)) throw InputError("no feature sidecar next to " + input);

  json meta = load_json_file(sidecar);
  std::string track_id = meta.at("track_id").get<std::string>();
  TrackFeatures features = load_track_features(sidecar.parent_path(), track_id);
  if (!features.segments.empty() &&
      features.segments.front().size() != static_cast<size_t>(ckpt.config.d_mert))
    throw ValidationError("feature dimension mismatch: cache has " +
                          std::to_string(features.segments.front().size()) +
                          ", checkpoint expects " + std::to_string(ckpt.config.d_mert));

  std::optional<TrackChords> chords;
  for (const auto& [name, path] : s.cfg.manifests) {
    fs::path chord_path = s.cfg.normalized_chords_path(name);
    if (!fs::exists(chord_path)) continue;
    for (auto& tc : load_chord_stream(chord_path)) {
      if (tc.track_id == track_id && tc.key) {
        chords = std::move(tc);
        break;
      }
    }
    if (chords) break;
  }
  if (!chords)
    throw InputError("no normalized chord entry for track '" + track_id +
                     "' in any configured dataset; run extract first");

  SampleInput sample;
  sample.mert = eval_feature(features.segments);
  size_t t = std::min(chords->chords.size(), static_cast<size_t>(s.cfg.model.t_max));
  sample.tokens = tokenize(chords->chords, t);
  sample.key_scalar = encode_key(*chords->key);

  ForwardOutput out = model->forward_eval(sample);
  json result;
  result["track_id"] = track_id;
  result["checkpoint"] = hex64(checkpoint_fingerprint_of(checkpoint));
  if (out.has_tags) {
    json tags = json::object();
    for (size_t i = 0; i < out.tag_probs.size(); ++i)
      tags[s.vocabulary.name(i)] = out.tag_probs[i];
    result["tags"] = std::move(tags);
  }
  if (out.has_va) {
    result["valence"] = out.va[0];
    result["arousal"] = out.va[1];
  }
  std::cout << result.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music emotion recognition: multitask training and distillation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--override", overrides, "config override as key=value, repeatable");
  app.add_option("--seed", seed, "override the training seed");
  app.add_option("--workers", workers, "extraction worker count");

  auto* p_extract = app.add_subcommand("extract", "populate feature and chord caches");
  std::vector<std::string> extract_datasets;
  bool extract_force = false;
  p_extract->add_option("--dataset", extract_datasets, "datasets to extract (default: all)")
      ->check(CLI::IsMember(kDatasetNames));
  p_extract->add_flag("--force", extract_force, "recompute even when caches are complete");

  auto* p_teacher = app.add_subcommand("train-teacher", "train a single-dataset teacher");
  std::string teacher_dataset;
  p_teacher->add_option("--dataset", teacher_dataset, "dataset to train on")
      ->required()
      ->check(CLI::IsMember(kDatasetNames));

  auto* p_soft = app.add_subcommand("soft-labels", "dump teacher outputs for the training split");
  std::vector<std::string> soft_datasets;
  std::string soft_checkpoint;
  p_soft->add_option("--dataset", soft_datasets, "datasets to process (default: all)")
      ->check(CLI::IsMember(kDatasetNames));
  p_soft->add_option("--checkpoint", soft_checkpoint,
                     "teacher checkpoint (default: <run_dir>/checkpoints/teacher_<dataset>.ckpt)");

  auto* p_student = app.add_subcommand("train-student", "train the multitask student");
  std::vector<std::string> student_datasets;
  std::string student_resume;
  p_student->add_option("--dataset", student_datasets, "datasets to train on (default: all)")
      ->check(CLI::IsMember(kDatasetNames));
  p_student->add_option("--resume", student_resume, "resume checkpoint from a previous run");

  auto* p_eval = app.add_subcommand("evaluate", "compute metrics for a checkpoint");
  std::string eval_checkpoint, eval_split = "test";
  std::vector<std::string> eval_datasets;
  p_eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")->required();
  p_eval->add_option("--dataset", eval_datasets, "datasets to evaluate (default: all)")
      ->check(CLI::IsMember(kDatasetNames));
  p_eval->add_option("--split", eval_split, "split to evaluate")
      ->check(CLI::IsMember(std::vector<std::string>{"train", "val", "test"}));

  auto* p_predict = app.add_subcommand("predict", "predict emotions for one cached track");
  std::string predict_checkpoint, predict_input;
  p_predict->add_option("--checkpoint", predict_checkpoint, "checkpoint to predict with")
      ->required();
  p_predict->add_option("input", predict_input, "cached feature file (.json sidecar or .f32)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Session session = open_session(config_path, overrides, seed, workers, argc, argv);
    if (app.got_subcommand(p_extract)) return cmd_extract(session, extract_datasets, extract_force);
    if (app.got_subcommand(p_teacher)) return cmd_train_teacher(session, teacher_dataset);
    if (app.got_subcommand(p_soft)) return cmd_soft_labels(session, soft_datasets, soft_checkpoint);
    if (app.got_subcommand(p_student))
      return cmd_train_student(session, student_datasets, student_resume);
    if (app.got_subcommand(p_eval))
      return cmd_evaluate(session, eval_checkpoint, eval_datasets, eval_split);
    if (app.got_subcommand(p_predict))
      return cmd_predict(session, predict_checkpoint, predict_input);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const muser::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
