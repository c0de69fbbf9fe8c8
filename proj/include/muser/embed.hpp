#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "muser/errors.hpp"
#include "muser/jsonio.hpp"
#include "muser/rng.hpp"

namespace muser {

inline constexpr double kSegmentLengthS = 30.0;
inline constexpr double kMinTailS = 5.0;
inline constexpr int kDefaultMertDim = 1536;  // two 768-d layers concatenated

struct Segment {
  size_t index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

// Non-overlapping 30 s windows. A partial tail survives only when it is at
// least 5 s long; shorter remainders are dropped.
inline std::vector<Segment> segment_track(double duration_s,
                                          double segment_length_s = kSegmentLengthS,
                                          double min_tail_s = kMinTailS) {
  if (duration_s <= 0.0) throw InputError("track duration must be positive");
  if (segment_length_s <= 0.0 || min_tail_s <= 0.0)
    throw ConfigError("segment length and minimum tail must be positive");
  std::vector<Segment> segments;
  size_t full = static_cast<size_t>(duration_s / segment_length_s);
  for (size_t i = 0; i < full; ++i)
    segments.push_back({i, i * segment_length_s, (i + 1) * segment_length_s});
  double tail = duration_s - full * segment_length_s;
  if (tail >= min_tail_s) segments.push_back({full, full * segment_length_s, duration_s});
  if (segments.empty())
    throw InputError("track of " + std::to_string(duration_s) + " s yields no segments");
  return segments;
}

// Frame sequences from the two pooled encoder layers for one segment.
struct SegmentFrames {
  std::vector<std::vector<double>> layer5;
  std::vector<std::vector<double>> layer6;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;  // fused dimension after the two-layer concat
  virtual SegmentFrames segment_frames(const std::string& track_id,
                                       const Segment& segment) const = 0;
};

// Deterministic stand-in for the audio encoder. Every frame value is a pure
// function of (track_id, segment index, layer, frame, lane), so extraction is
// reproducible across runs, machines, and worker counts.
class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(int dim = kDefaultMertDim, int frames_per_layer = 3)
      : dim_(dim), frames_(frames_per_layer) {
    if (dim_ <= 0 || dim_ % 2 != 0) throw ConfigError("stub embedding dim must be positive and even");
    if (frames_ <= 0) throw ConfigError("stub frames per layer must be positive");
  }

  std::string name() const override { return "stub"; }
  int dim() const override { return dim_; }

  SegmentFrames segment_frames(const std::string& track_id,
                               const Segment& segment) const override {
    SegmentFrames out;
    out.layer5 = layer_frames(track_id, segment.index, 5);
    out.layer6 = layer_frames(track_id, segment.index, 6);
    return out;
  }

 private:
  std::vector<std::vector<double>> layer_frames(const std::string& track_id, size_t segment,
                                                int layer) const {
    int lane_count = dim_ / 2;
    std::vector<std::vector<double>> frames(frames_, std::vector<double>(lane_count));
    for (int f = 0; f < frames_; ++f) {
      uint64_t state = mix_seed(fnv1a64(track_id), static_cast<uint64_t>(segment),
                                static_cast<uint64_t>(layer), static_cast<uint64_t>(f));
      for (int d = 0; d < lane_count; ++d) {
        // iterated splitmix64 stream mapped onto [-1, 1)
        state = splitmix64(state);
        frames[f][d] = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
      }
    }
    return frames;
  }

  int dim_;
  int frames_;
};

// Temporal mean per layer, then layer-5 and layer-6 means concatenated.
inline std::vector<double> pool_segment(const SegmentFrames& frames) {
  auto layer_mean = [](const std::vector<std::vector<double>>& layer) {
    if (layer.empty()) throw InputError("cannot pool a segment with no frames");
    std::vector<double> mean(layer.front().size(), 0.0);
    for (const auto& frame : layer) {
      if (frame.size() != mean.size()) throw InputError("ragged frame dimensions in segment");
      for (size_t d = 0; d < mean.size(); ++d) mean[d] += frame[d];
    }
    for (double& v : mean) v /= static_cast<double>(layer.size());
    return mean;
  };
  std::vector<double> pooled = layer_mean(frames.layer5);
  std::vector<double> l6 = layer_mean(frames.layer6);
  pooled.insert(pooled.end(), l6.begin(), l6.end());
  return pooled;
}

inline std::vector<std::vector<double>> compute_track_features(const EmbeddingProvider& provider,
                                                               const std::string& track_id,
                                                               double duration_s) {
  std::vector<std::vector<double>> features;
  for (const Segment& seg : segment_track(duration_s))
    features.push_back(pool_segment(provider.segment_frames(track_id, seg)));
  return features;
}

// A contiguous window of segment embeddings: 0-based first segment plus count.
struct WindowChoice {
  size_t start = 0;
  size_t k = 0;

  bool operator==(const WindowChoice&) const = default;
};

// Training-time augmentation. The (start, k) pair is drawn uniformly over all
// n(n+1)/2 valid contiguous windows, not k first and then start; every window
// is equally likely regardless of its length.
inline WindowChoice augment_select(size_t n_segments, Rng& rng) {
  if (n_segments == 0) throw InputError("cannot select a window from zero segments");
  uint64_t total = n_segments * (n_segments + 1) / 2;
  uint64_t idx = rng.uniform_below(total);
  for (size_t k = 1; k <= n_segments; ++k) {
    uint64_t count = n_segments - k + 1;
    if (idx < count) return {static_cast<size_t>(idx), k};
    idx -= count;
  }
  throw std::logic_error("window index out of range");  // unreachable
}

inline std::vector<double> mean_window(const std::vector<std::vector<double>>& segment_features,
                                       size_t start, size_t k) {
  if (k == 0 || start + k > segment_features.size())
    throw InputError("window [" + std::to_string(start) + ", +" + std::to_string(k) +
                     ") out of range for " + std::to_string(segment_features.size()) + " segments");
  std::vector<double> mean(segment_features[start].size(), 0.0);
  for (size_t i = start; i < start + k; ++i) {
    if (segment_features[i].size() != mean.size())
      throw InputError("ragged segment feature dimensions");
    for (size_t d = 0; d < mean.size(); ++d) mean[d] += segment_features[i][d];
  }
  for (double& v : mean) v /= static_cast<double>(k);
  return mean;
}

inline std::vector<double> train_feature(const std::vector<std::vector<double>>& segment_features,
                                         Rng& rng) {
  WindowChoice w = augment_select(segment_features.size(), rng);
  return mean_window(segment_features, w.start, w.k);
}

// Evaluation and soft-label passes use the whole track: the mean over every
// segment embedding, with no sampling.
inline std::vector<double> eval_feature(const std::vector<std::vector<double>>& segment_features) {
  return mean_window(segment_features, 0, segment_features.size());
}

// --- on-disk feature cache --------------------------------------------------
//
// <dir>/<name>.f32   float32 little-endian, num_segments x dim row-major
// <dir>/<name>.json  sidecar with shape, provider, and a payload fingerprint

static_assert(std::endian::native == std::endian::little,
              "feature cache assumes a little-endian host");

inline std::string cache_file_stem(const std::string& track_id) {
  std::string stem = track_id;
  bool dirty = false;
  for (char& ch : stem) {
    bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
              ch == '.' || ch == '_' || ch == '-';
    if (!ok) {
      ch = '_';
      dirty = true;
    }
  }
  if (dirty || stem.empty()) stem += "-" + hex64(fnv1a64(track_id)).substr(8);
  return stem;
}

struct FeatureCachePaths {
  fs::path bin;
  fs::path sidecar;
};

inline FeatureCachePaths feature_cache_paths(const fs::path& dir, const std::string& track_id) {
  std::string stem = cache_file_stem(track_id);
  return {dir / (stem + ".f32"), dir / (stem + ".json")};
}

inline bool track_features_cached(const fs::path& dir, const std::string& track_id) {
  auto paths = feature_cache_paths(dir, track_id);
  return fs::exists(paths.bin) && fs::exists(paths.sidecar);
}

inline void save_track_features(const fs::path& dir, const std::string& track_id,
                                const std::vector<std::vector<double>>& features,
                                const std::string& provider_name,
                                const std::vector<Segment>* bounds = nullptr) {
  if (features.empty()) throw InputError("refusing to cache an empty feature list");
  size_t dim = features.front().size();
  std::string payload;
  payload.reserve(features.size() * dim * sizeof(float));
  for (const auto& row : features) {
    if (row.size() != dim) throw InputError("ragged segment feature dimensions");
    for (double v : row) {
      float f = static_cast<float>(v);
      payload.append(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  fs::create_directories(dir);
  auto paths = feature_cache_paths(dir, track_id);
  atomic_write_file(paths.bin, payload);

  json sidecar = {
      {"track_id", track_id},
      {"provider", provider_name},
      {"layers", {5, 6}},
      {"dim", dim},
      {"num_segments", features.size()},
      {"segment_length_s", kSegmentLengthS},
      {"min_tail_s", kMinTailS},
      {"payload_fnv1a64", hex64(fnv1a64_bytes(payload.data(), payload.size()))},
  };
  if (bounds) {
    if (bounds->size() != features.size())
      throw InputError("segment bounds do not match feature rows");
    json b = json::array();
    for (const auto& s : *bounds) b.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}});
    sidecar["segments"] = std::move(b);
  }
  save_json_file(paths.sidecar, sidecar);
}

struct TrackFeatures {
  std::string track_id;
  std::string provider;
  std::vector<std::vector<double>> segments;
};

inline TrackFeatures load_track_features(const fs::path& dir, const std::string& track_id) {
  auto paths = feature_cache_paths(dir, track_id);
  if (!fs::exists(paths.bin) || !fs::exists(paths.sidecar))
    throw IoError("no cached features for track '" + track_id + "' under " + dir.string());
  json sidecar = load_json_file(paths.sidecar);
  size_t dim = sidecar.at("dim").get<size_t>();
  size_t n = sidecar.at("num_segments").get<size_t>();

  std::string payload = read_text_file(paths.bin);
  if (payload.size() != n * dim * sizeof(float))
    throw ValidationError(paths.bin.string() + ": expected " +
                          std::to_string(n * dim * sizeof(float)) + " bytes, found " +
                          std::to_string(payload.size()));
  std::string expect = sidecar.at("payload_fnv1a64").get<std::string>();
  std::string actual = hex64(fnv1a64_bytes(payload.data(), payload.size()));
  if (expect != actual)
    throw ValidationError(paths.bin.string() + ": payload fingerprint mismatch (" + actual +
                          " != " + expect + ")");

  TrackFeatures out;
  out.track_id = sidecar.at("track_id").get<std::string>();
  out.provider = sidecar.value("provider", std::string{});
  out.segments.assign(n, std::vector<double>(dim));
  const char* p = payload.data();
  for (size_t i = 0; i < n; ++i)
    for (size_t d = 0; d < dim; ++d) {
      float f;
      std::memcpy(&f, p, sizeof(f));
      p += sizeof(f);
      out.segments[i][d] = static_cast<double>(f);
    }
  return out;
}

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& name,
                                                                  int dim = kDefaultMertDim) {
  if (name == "stub") return std::make_unique<StubEmbeddingProvider>(dim);
  throw ConfigError("unknown embedding provider '" + name + "'");
}

}  // namespace muser
