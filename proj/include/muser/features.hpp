#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "muser/datamodel.hpp"
#include "muser/embed.hpp"
#include "muser/harmony.hpp"
#include "muser/model.hpp"

namespace muser {

// Read-side view over the extraction artifacts: the per-track embedding cache
// plus the normalized-chord cache (which carries the detected key). Assembles
// the model's SampleInput for both training (windowed) and eval (full mean).
class FeatureStore {
 public:
  FeatureStore(fs::path embed_dir, const fs::path& normalized_chords_path, int t_max)
      : embed_dir_(std::move(embed_dir)), t_max_(t_max) {
    for (auto& tc : load_chord_stream(normalized_chords_path)) {
      if (!tc.key)
        throw ValidationError(normalized_chords_path.string() + ": track '" + tc.track_id +
                              "' has no key; not a normalized cache");
      chords_[tc.track_id] = std::move(tc);
    }
  }

  // Tracks that cannot be served: no cached embedding or no chord entry.
  std::vector<std::string> missing(const std::vector<const TrackRecord*>& records) const {
    std::vector<std::string> out;
    for (const TrackRecord* r : records) {
      if (!chords_.count(r->track_id) || !track_features_cached(embed_dir_, r->track_id))
        out.push_back(r->track_id);
    }
    return out;
  }

  const std::vector<std::vector<double>>& segment_features(const std::string& track_id) const {
    auto it = feature_cache_.find(track_id);
    if (it == feature_cache_.end()) {
      TrackFeatures tf = load_track_features(embed_dir_, track_id);
      it = feature_cache_.emplace(track_id, std::move(tf.segments)).first;
    }
    return it->second;
  }

  SampleInput eval_input(const std::string& track_id) const {
    SampleInput in = base_input(track_id);
    in.mert = eval_feature(segment_features(track_id));
    return in;
  }

  SampleInput train_input(const std::string& track_id, Rng& rng) const {
    SampleInput in = base_input(track_id);
    in.mert = train_feature(segment_features(track_id), rng);
    return in;
  }

  size_t num_tracks_with_chords() const { return chords_.size(); }

 private:
  const TrackChords& chords_for(const std::string& track_id) const {
    auto it = chords_.find(track_id);
    if (it == chords_.end())
      throw InputError("no chord entry for track '" + track_id + "'");
    return it->second;
  }

  SampleInput base_input(const std::string& track_id) const {
    const TrackChords& tc = chords_for(track_id);
    SampleInput in;
    size_t t = std::min(tc.chords.size(), static_cast<size_t>(t_max_));
    in.tokens = tokenize(tc.chords, t);
    in.key_scalar = encode_key(*tc.key);
    return in;
  }

  fs::path embed_dir_;
  int t_max_;
  std::unordered_map<std::string, TrackChords> chords_;
  mutable std::unordered_map<std::string, std::vector<std::vector<double>>> feature_cache_;
};

}  // namespace muser
