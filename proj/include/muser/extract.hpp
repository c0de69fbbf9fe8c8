#pragma once

#include <algorithm>
#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "muser/datamodel.hpp"
#include "muser/embed.hpp"
#include "muser/harmony.hpp"

namespace muser {

// Deterministic pseudo progression for offline runs: a root walk over mostly
// fourth/fifth steps with all 13 qualities reachable and occasional N spans.
// Pure function of (track_id, duration), like the stub embedding provider.
inline std::vector<Chord> stub_chords(const std::string& track_id, double duration_s) {
  if (duration_s <= 0.0) throw InputError("track duration must be positive");
  Rng rng(mix_seed(fnv1a64(track_id), 0x43484f524453ULL));
  std::vector<Chord> out;
  double t = 0.0;
  int root = static_cast<int>(rng.uniform_below(12));
  while (t < duration_s) {
    double end = std::min(duration_s, t + rng.uniform(2.0, 8.0));
    if (rng.uniform() < 0.05) {
      out.push_back(Chord::no_chord(t, end));
    } else {
      static const int steps[] = {0, 5, 7, 2, 10};
      root = (root + steps[rng.uniform_below(5)]) % 12;
      auto quality = static_cast<ChordQuality>(rng.uniform_below(kNumQualities));
      out.push_back(Chord::make(root, quality, t, end));
    }
    t = end;
  }
  return out;
}

struct ExtractOptions {
  fs::path features_dir;
  fs::path normalized_chords_path;
  std::string embedding_provider = "stub";
  int embedding_dim = kDefaultMertDim;
  std::optional<fs::path> chord_stream;  // timed chord labels; absent -> stub chords
  int workers = 1;
  bool force = false;
};

struct ExtractReport {
  size_t extracted = 0;
  size_t skipped = 0;
  std::vector<std::pair<std::string, std::string>> errors;  // track_id, message
};

// Populates the embedding cache and the normalized-chord cache for one
// dataset. Idempotent: complete entries are skipped unless force is set.
// Output bytes are independent of the worker count.
inline ExtractReport extract_dataset(const DatasetManifest& manifest,
                                     const ExtractOptions& options) {
  if (options.workers <= 0) throw ConfigError("workers must be positive");
  auto provider = make_embedding_provider(options.embedding_provider, options.embedding_dim);

  std::unordered_map<std::string, std::vector<Chord>> raw_chords;
  if (options.chord_stream) {
    for (auto& tc : load_chord_stream(*options.chord_stream))
      raw_chords[tc.track_id] = std::move(tc.chords);
  }

  std::unordered_map<std::string, TrackChords> existing;
  if (!options.force && fs::exists(options.normalized_chords_path)) {
    for (auto& tc : load_chord_stream(options.normalized_chords_path))
      if (tc.key) existing[tc.track_id] = std::move(tc);
  }

  size_t n = manifest.records.size();
  std::vector<std::optional<TrackChords>> chord_rows(n);
  std::vector<std::string> errors(n);
  std::vector<uint8_t> did_work(n, 0);

  std::atomic<size_t> cursor{0};
  auto work = [&]() {
    for (size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) {
      const TrackRecord& r = manifest.records[i];
      try {
        bool embeds_ready =
            !options.force && track_features_cached(options.features_dir, r.track_id);
        auto existing_it = existing.find(r.track_id);
        bool chords_ready = existing_it != existing.end();
        if (embeds_ready && chords_ready) {
          chord_rows[i] = existing_it->second;
          continue;
        }
        if (r.duration_s <= 0.0)
          throw InputError("track has no duration; cannot segment");

        if (!embeds_ready) {
          auto segments = segment_track(r.duration_s);
          std::vector<std::vector<double>> features;
          for (const Segment& seg : segments)
            features.push_back(pool_segment(provider->segment_frames(r.track_id, seg)));
          save_track_features(options.features_dir, r.track_id, features, provider->name(),
                              &segments);
        }

        if (chords_ready) {
          chord_rows[i] = existing_it->second;
        } else {
          std::vector<Chord> chords;
          if (options.chord_stream) {
            auto it = raw_chords.find(r.track_id);
            if (it == raw_chords.end())
              throw InputError("no chord entry in " + options.chord_stream->string());
            chords = it->second;
          } else {
            chords = stub_chords(r.track_id, r.duration_s);
          }
          // Tracks with no sounded notes (empty or all-N) default to C major.
          auto notes = chords_to_notes(chords);
          Key key = notes.empty() ? Key{0, Mode::major} : detect_key(notes);
          TrackChords tc;
          tc.track_id = r.track_id;
          tc.key = key;
          tc.chords = normalize_to_reference(std::move(chords), key);
          chord_rows[i] = std::move(tc);
        }
        did_work[i] = 1;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };

  size_t n_threads = std::min<size_t>(static_cast<size_t>(options.workers), std::max<size_t>(n, 1));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  ExtractReport report;
  std::vector<TrackChords> rows;
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      report.errors.emplace_back(manifest.records[i].track_id, errors[i]);
      continue;
    }
    if (chord_rows[i]) rows.push_back(std::move(*chord_rows[i]));
    if (did_work[i])
      ++report.extracted;
    else
      ++report.skipped;
  }
  std::sort(rows.begin(), rows.end(),
            [](const TrackChords& a, const TrackChords& b) { return a.track_id < b.track_id; });
  if (options.normalized_chords_path.has_parent_path())
    fs::create_directories(options.normalized_chords_path.parent_path());
  save_chord_stream(rows, options.normalized_chords_path);
  return report;
}

}  // namespace muser
