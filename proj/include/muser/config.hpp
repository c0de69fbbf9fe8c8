#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muser/datamodel.hpp"
#include "muser/jsonio.hpp"
#include "muser/model.hpp"
#include "muser/trainer.hpp"

namespace muser {

// The declarative run configuration behind every CLI command: model and
// training hyperparameters plus all paths. Overrides land in the raw JSON
// before parsing, so anything configurable from the file is configurable
// from the command line.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  fs::path run_dir = "run";
  fs::path tag_vocabulary_path;
  std::map<std::string, fs::path> manifests;      // dataset name -> manifest JSONL
  std::map<std::string, fs::path> chord_streams;  // optional per-dataset label files
  std::map<std::string, std::pair<double, double>> va_ranges;  // native annotation scales
  std::string embedding_provider = "stub";
  int extract_workers = 1;
  json raw;  // merged document, for provenance

  fs::path features_dir(const std::string& dataset) const {
    return run_dir / "features" / dataset;
  }
  fs::path normalized_chords_path(const std::string& dataset) const {
    return run_dir / "chords" / (dataset + ".jsonl");
  }
  fs::path checkpoint_dir() const { return run_dir / "checkpoints"; }
  fs::path soft_labels_path(const std::string& dataset) const {
    return run_dir / "soft_labels" / (dataset + ".json");
  }
  fs::path reports_dir() const { return run_dir / "reports"; }

  std::string fingerprint() const { return hex64(fnv1a64(raw.dump())); }

  static RunConfig from_json(json j) {
    RunConfig c;
    c.raw = j;
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    c.run_dir = j.value("run_dir", c.run_dir.string());
    c.train.checkpoint_dir = c.checkpoint_dir();
    if (j.contains("tag_vocabulary")) c.tag_vocabulary_path = j.at("tag_vocabulary").get<std::string>();
    if (j.contains("manifests"))
      for (const auto& [name, path] : j.at("manifests").items()) {
        if (!dataset_from_string(name)) throw ConfigError("unknown dataset '" + name + "'");
        c.manifests[name] = path.get<std::string>();
      }
    if (j.contains("chord_streams"))
      for (const auto& [name, path] : j.at("chord_streams").items()) {
        if (!dataset_from_string(name)) throw ConfigError("unknown dataset '" + name + "'");
        c.chord_streams[name] = path.get<std::string>();
      }
    if (j.contains("va_ranges"))
      for (const auto& [name, range] : j.at("va_ranges").items()) {
        if (!dataset_from_string(name)) throw ConfigError("unknown dataset '" + name + "'");
        auto r = range.get<std::vector<double>>();
        if (r.size() != 2 || !(r[0] < r[1]))
          throw ConfigError("va_ranges." + name + " must be [lo, hi] with lo < hi");
        c.va_ranges[name] = {r[0], r[1]};
      }
    c.embedding_provider = j.value("embedding_provider", c.embedding_provider);
    c.extract_workers = j.value("extract_workers", c.extract_workers);
    if (c.extract_workers <= 0) throw ConfigError("extract_workers must be positive");
    return c;
  }

  static RunConfig load(const fs::path& path,
                        const std::vector<std::string>& overrides = {}) {
    json j = load_json_file(path);
    for (const auto& ov : overrides) apply_override(j, ov);
    return from_json(std::move(j));
  }

  // "a.b.c=value"; the value is parsed as JSON when possible, else kept as a
  // string, so --override train.epochs=5 and --override run_dir=out both work.
  static void apply_override(json& j, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + spec + "' is not key=value");
    std::string key = spec.substr(0, eq);
    std::string value = spec.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    json* cur = &j;
    size_t start = 0;
    while (true) {
      size_t dot = key.find('.', start);
      std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw ConfigError("override '" + spec + "' has an empty key segment");
      if (dot == std::string::npos) {
        (*cur)[part] = std::move(parsed);
        return;
      }
      cur = &(*cur)[part];
      start = dot + 1;
    }
  }
};

}  // namespace muser
