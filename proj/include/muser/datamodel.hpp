#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "muser/errors.hpp"
#include "muser/jsonio.hpp"
#include "muser/rng.hpp"

namespace muser {

enum class Dataset { jamendo, deam, pmemo, emomusic };
enum class Split { unassigned, train, val, test };
enum class LabelKind { categorical, dimensional };

inline constexpr size_t kNumTags = 56;
inline constexpr double kVaLow = 1.0;
inline constexpr double kVaHigh = 9.0;

inline const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::jamendo: return "jamendo";
    case Dataset::deam: return "deam";
    case Dataset::pmemo: return "pmemo";
    case Dataset::emomusic: return "emomusic";
  }
  return "?";
}

inline std::optional<Dataset> dataset_from_string(const std::string& s) {
  if (s == "jamendo") return Dataset::jamendo;
  if (s == "deam") return Dataset::deam;
  if (s == "pmemo") return Dataset::pmemo;
  if (s == "emomusic") return Dataset::emomusic;
  return std::nullopt;
}

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "?";
}

inline std::optional<Split> split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

// Jamendo carries the 56-tag categorical scheme; the VA datasets are dimensional.
inline LabelKind label_kind_of(Dataset d) {
  return d == Dataset::jamendo ? LabelKind::categorical : LabelKind::dimensional;
}

// Closed tag vocabulary. Line order in the backing file defines vector index.
class TagVocabulary {
 public:
  TagVocabulary() = default;

  explicit TagVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    for (size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = i;
    if (index_.size() != names_.size()) throw ValidationError("tag vocabulary has duplicates");
  }

  static TagVocabulary load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open tag vocabulary: " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    return TagVocabulary(std::move(names));
  }

  size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(size_t i) const { return names_.at(i); }

  std::optional<size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<uint8_t> multi_hot(const std::vector<std::string>& tags) const {
    std::vector<uint8_t> v(size(), 0);
    for (const auto& t : tags) {
      auto idx = index_of(t);
      if (!idx) throw ValidationError("unknown tag: '" + t + "'");
      v[*idx] = 1;
    }
    return v;
  }

  std::vector<std::string> tag_names(const std::vector<uint8_t>& multi_hot) const {
    std::vector<std::string> out;
    for (size_t i = 0; i < multi_hot.size() && i < size(); ++i)
      if (multi_hot[i]) out.push_back(names_[i]);
    return out;
  }

  std::string fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : names_) {
      h = fnv1a64(n, h);
      h = fnv1a64("\n", h);
    }
    return hex64(h);
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
};

struct EmotionLabel {
  LabelKind kind = LabelKind::categorical;
  std::vector<uint8_t> tags;  // categorical: multi-hot, length = vocabulary size
  double valence = 0.0;       // dimensional: [1, 9] after normalization
  double arousal = 0.0;

  static EmotionLabel categorical(std::vector<uint8_t> t) {
    EmotionLabel l;
    l.kind = LabelKind::categorical;
    l.tags = std::move(t);
    return l;
  }

  static EmotionLabel dimensional(double v, double a) {
    EmotionLabel l;
    l.kind = LabelKind::dimensional;
    l.valence = v;
    l.arousal = a;
    return l;
  }

  bool operator==(const EmotionLabel&) const = default;
};

struct TrackRecord {
  std::string track_id;
  std::string audio_path;
  Dataset dataset = Dataset::jamendo;
  EmotionLabel label;
  Split split = Split::unassigned;
  double duration_s = 0.0;  // 0 = unknown; required by providers that cannot read audio

  bool operator==(const TrackRecord&) const = default;
};

// Affine map of a raw annotation from [lo, hi] onto the common [1, 9] scale.
// Endpoints land exactly on 1 and 9. Out-of-range input is an error, never clamped.
inline double normalize_va_value(double raw, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("va source range requires lo < hi");
  if (raw < lo || raw > hi) {
    std::ostringstream os;
    os << "va value " << raw << " outside source range [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
  if (raw == lo) return kVaLow;
  if (raw == hi) return kVaHigh;
  return kVaLow + (kVaHigh - kVaLow) * (raw - lo) / (hi - lo);
}

inline std::pair<double, double> normalize_va(double raw_valence, double raw_arousal,
                                              std::pair<double, double> source_range) {
  return {normalize_va_value(raw_valence, source_range.first, source_range.second),
          normalize_va_value(raw_arousal, source_range.first, source_range.second)};
}

struct DatasetManifest {
  Dataset dataset = Dataset::jamendo;
  std::vector<TrackRecord> records;

  std::map<Split, size_t> split_counts() const {
    std::map<Split, size_t> counts;
    for (const auto& r : records) counts[r.split]++;
    return counts;
  }

  std::vector<const TrackRecord*> split_records(Split s) const {
    std::vector<const TrackRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }
};

struct ManifestOptions {
  const TagVocabulary* vocabulary = nullptr;            // required for categorical rows
  std::optional<Dataset> expected_dataset;              // validated against rows when set
  std::pair<double, double> va_range = {kVaLow, kVaHigh};  // per-dataset source range
};

// Parse a JSONL manifest. One record per line; errors name the line.
// Dimensional values are normalized onto [1, 9] using the per-dataset source
// range (row-level `va_range` overrides it).
inline DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& opts = {}) {
  DatasetManifest manifest;
  if (opts.expected_dataset) manifest.dataset = *opts.expected_dataset;
  bool dataset_seen = false;
  std::unordered_set<std::string> seen_ids;

  auto fail = [&](size_t lineno, const std::string& msg) -> void {
    throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };

  for_each_jsonl(path, [&](size_t lineno, const json& j) {
    if (!j.is_object()) fail(lineno, "manifest line is not a JSON object");
    TrackRecord rec;
    try {
      rec.track_id = j.at("track_id").get<std::string>();
      rec.audio_path = j.value("audio_path", std::string{});
      auto ds = dataset_from_string(j.at("dataset").get<std::string>());
      if (!ds) fail(lineno, "unknown dataset '" + j.at("dataset").get<std::string>() + "'");
      rec.dataset = *ds;
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }

    if (opts.expected_dataset && rec.dataset != *opts.expected_dataset)
      fail(lineno, std::string("dataset '") + to_string(rec.dataset) + "' does not match expected '" +
                       to_string(*opts.expected_dataset) + "'");
    if (dataset_seen && rec.dataset != manifest.dataset)
      fail(lineno, "manifest mixes datasets");
    manifest.dataset = rec.dataset;
    dataset_seen = true;

    if (!seen_ids.insert(rec.track_id).second)
      fail(lineno, "duplicate track_id '" + rec.track_id + "'");

    const LabelKind kind = label_kind_of(rec.dataset);
    const bool has_tags = j.contains("tags");
    const bool has_va = j.contains("valence") || j.contains("arousal");
    if (kind == LabelKind::categorical) {
      if (!has_tags || has_va)
        fail(lineno, std::string("dataset '") + to_string(rec.dataset) +
                         "' requires categorical tags, not valence/arousal");
      if (!opts.vocabulary) throw ConfigError("manifest with categorical labels needs a tag vocabulary");
      std::vector<std::string> names;
      try {
        names = j.at("tags").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      try {
        rec.label = EmotionLabel::categorical(opts.vocabulary->multi_hot(names));
      } catch (const ValidationError& e) {
        fail(lineno, e.what());
      }
    } else {
      if (has_tags || !j.contains("valence") || !j.contains("arousal"))
        fail(lineno, std::string("dataset '") + to_string(rec.dataset) +
                         "' requires valence/arousal, not tags");
      double raw_v, raw_a;
      std::pair<double, double> range = opts.va_range;
      try {
        raw_v = j.at("valence").get<double>();
        raw_a = j.at("arousal").get<double>();
        if (j.contains("va_range")) {
          auto r = j.at("va_range").get<std::vector<double>>();
          if (r.size() != 2) fail(lineno, "va_range must be [lo, hi]");
          range = {r[0], r[1]};
        }
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      try {
        auto [v, a] = normalize_va(raw_v, raw_a, range);
        rec.label = EmotionLabel::dimensional(v, a);
      } catch (const ValidationError& e) {
        fail(lineno, e.what());
      }
    }

    if (j.contains("split")) {
      auto sp = split_from_string(j.at("split").get<std::string>());
      if (!sp) fail(lineno, "unknown split '" + j.at("split").get<std::string>() + "'");
      rec.split = *sp;
    }
    if (j.contains("duration_s")) rec.duration_s = j.at("duration_s").get<double>();

    manifest.records.push_back(std::move(rec));
  });

  return manifest;
}

// Writes records with already-normalized VA values; reloading with default
// options reproduces the records bit-exactly.
inline void save_manifest(const DatasetManifest& manifest, const fs::path& path,
                          const TagVocabulary& vocabulary) {
  std::vector<json> rows;
  rows.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    json j;
    j["track_id"] = r.track_id;
    if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
    j["dataset"] = to_string(r.dataset);
    if (r.label.kind == LabelKind::categorical) {
      j["tags"] = vocabulary.tag_names(r.label.tags);
    } else {
      j["valence"] = r.label.valence;
      j["arousal"] = r.label.arousal;
    }
    if (r.split != Split::unassigned) j["split"] = to_string(r.split);
    if (r.duration_s > 0.0) j["duration_s"] = r.duration_s;
    rows.push_back(std::move(j));
  }
  save_jsonl_file(path, rows);
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

// Deterministic sizes for a ratio split: train takes floor(r_train*n), val
// takes ceil(r_val*n), test takes the rest. Matches the published counts of
// the 70/15/15 sets this pipeline targets (1802 -> 1261/271/270,
// 767 -> 536/116/115).
inline std::array<size_t, 3> split_sizes(size_t n, const SplitRatios& ratios) {
  double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ConfigError("split ratios must be non-negative");
  auto n_train = static_cast<size_t>(std::floor(ratios.train * static_cast<double>(n)));
  auto n_val = static_cast<size_t>(std::ceil(ratios.val * static_cast<double>(n)));
  if (n_train + n_val > n) n_val = n - n_train;
  size_t n_test = n - n_train - n_val;
  return {n_train, n_val, n_test};
}

// Shuffle records with the given seed and assign splits as contiguous blocks
// of the shuffled order: train, then val, then test. Every record lands in
// exactly one split; the same seed reproduces the same assignment.
inline std::vector<TrackRecord> split_dataset(std::vector<TrackRecord> records,
                                              const SplitRatios& ratios, uint64_t seed) {
  for (const auto& r : records)
    if (r.split != Split::unassigned)
      throw ValidationError("record '" + r.track_id + "' already holds a split");
  auto sizes = split_sizes(records.size(), ratios);

  std::vector<size_t> order(records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x53504c4954ULL));  // "SPLIT" stream salt
  rng.shuffle(order);

  for (size_t pos = 0; pos < order.size(); ++pos) {
    Split s = pos < sizes[0]                ? Split::train
              : pos < sizes[0] + sizes[1]   ? Split::val
                                            : Split::test;
    records[order[pos]].split = s;
  }
  return records;
}

}  // namespace muser
