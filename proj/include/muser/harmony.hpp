#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "muser/errors.hpp"
#include "muser/jsonio.hpp"

namespace muser {

// Closed 13-value chord quality vocabulary. Order is frozen: it defines
// the token ids fed to the model and the checkpoint fingerprint.
enum class ChordQuality : int {
  maj = 0,
  min,
  dim,
  aug,
  sus2,
  sus4,
  maj7,
  min7,
  dom7,
  dim7,
  hdim7,
  maj6,
  min6,
};

inline constexpr int kNumQualities = 13;
inline constexpr int kNumPitchClasses = 12;

inline const char* to_string(ChordQuality q) {
  static const char* names[kNumQualities] = {"maj",  "min",  "dim",   "aug",  "sus2", "sus4", "maj7",
                                             "min7", "dom7", "dim7", "hdim7", "maj6", "min6"};
  return names[static_cast<int>(q)];
}

// Semitone offsets from the root for each quality.
inline const std::vector<int>& quality_intervals(ChordQuality q) {
  static const std::array<std::vector<int>, kNumQualities> table = {{
      {0, 4, 7},      // maj
      {0, 3, 7},      // min
      {0, 3, 6},      // dim
      {0, 4, 8},      // aug
      {0, 2, 7},      // sus2
      {0, 5, 7},      // sus4
      {0, 4, 7, 11},  // maj7
      {0, 3, 7, 10},  // min7
      {0, 4, 7, 10},  // dom7
      {0, 3, 6, 9},   // dim7
      {0, 3, 6, 10},  // hdim7
      {0, 4, 7, 9},   // maj6
      {0, 3, 7, 9},   // min6
  }};
  return table[static_cast<int>(q)];
}

// Maps accepted quality spellings onto the canonical 13. Mirrored by the
// versioned data file chord_quality_aliases_v1.tsv.
inline const std::unordered_map<std::string, ChordQuality>& quality_aliases() {
  static const std::unordered_map<std::string, ChordQuality> table = {
      {"maj", ChordQuality::maj},    {"major", ChordQuality::maj},  {"M", ChordQuality::maj},
      {"min", ChordQuality::min},    {"minor", ChordQuality::min},  {"m", ChordQuality::min},
      {"dim", ChordQuality::dim},    {"o", ChordQuality::dim},
      {"aug", ChordQuality::aug},    {"+", ChordQuality::aug},
      {"sus2", ChordQuality::sus2},
      {"sus4", ChordQuality::sus4},  {"sus", ChordQuality::sus4},
      {"maj7", ChordQuality::maj7},  {"M7", ChordQuality::maj7},
      {"min7", ChordQuality::min7},  {"m7", ChordQuality::min7},
      {"dom7", ChordQuality::dom7},  {"7", ChordQuality::dom7},
      {"dim7", ChordQuality::dim7},  {"o7", ChordQuality::dim7},
      {"hdim7", ChordQuality::hdim7},{"m7b5", ChordQuality::hdim7}, {"hdim", ChordQuality::hdim7},
      {"maj6", ChordQuality::maj6},  {"6", ChordQuality::maj6},
      {"min6", ChordQuality::min6},  {"m6", ChordQuality::min6},
  };
  return table;
}

// Enharmonic spellings collapse onto one pitch class (C = 0).
inline const std::unordered_map<std::string, int>& root_pitch_classes() {
  static const std::unordered_map<std::string, int> table = {
      {"C", 0},  {"B#", 0},  {"C#", 1},  {"Db", 1}, {"D", 2},  {"D#", 3}, {"Eb", 3},
      {"E", 4},  {"Fb", 4},  {"F", 5},   {"E#", 5}, {"F#", 6}, {"Gb", 6}, {"G", 7},
      {"G#", 8}, {"Ab", 8},  {"A", 9},   {"A#", 10}, {"Bb", 10}, {"B", 11}, {"Cb", 11},
  };
  return table;
}

inline const char* pitch_class_name(int pc) {
  static const char* names[kNumPitchClasses] = {"C",  "C#", "D",  "D#", "E",  "F",
                                                "F#", "G",  "G#", "A",  "A#", "B"};
  return names[((pc % 12) + 12) % 12];
}

struct Chord {
  static constexpr int kNoChordRoot = -1;

  int root = kNoChordRoot;  // pitch class 0-11, or kNoChordRoot
  ChordQuality quality = ChordQuality::maj;
  double start_s = 0.0;
  double end_s = 0.0;

  bool is_no_chord() const { return root == kNoChordRoot; }

  static Chord no_chord(double start_s = 0.0, double end_s = 0.0) {
    Chord c;
    c.start_s = start_s;
    c.end_s = end_s;
    return c;
  }

  static Chord make(int root, ChordQuality q, double start_s = 0.0, double end_s = 0.0) {
    Chord c;
    c.root = ((root % 12) + 12) % 12;
    c.quality = q;
    c.start_s = start_s;
    c.end_s = end_s;
    return c;
  }

  bool operator==(const Chord&) const = default;
};

enum class Mode { major, minor };

inline const char* to_string(Mode m) { return m == Mode::major ? "major" : "minor"; }

struct Key {
  int tonic = 0;  // pitch class
  Mode mode = Mode::major;

  bool operator==(const Key&) const = default;
};

inline std::string to_string(const Key& k) {
  return std::string(pitch_class_name(k.tonic)) + ":" + to_string(k.mode);
}

inline std::optional<Key> key_from_string(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) return std::nullopt;
  auto root_it = root_pitch_classes().find(s.substr(0, colon));
  if (root_it == root_pitch_classes().end()) return std::nullopt;
  std::string mode = s.substr(colon + 1);
  if (mode == "major" || mode == "maj") return Key{root_it->second, Mode::major};
  if (mode == "minor" || mode == "min") return Key{root_it->second, Mode::minor};
  return std::nullopt;
}

// "<ROOT>:<QUALITY>" (e.g. "D:sus4"), or "N" for no chord.
inline Chord parse_chord(const std::string& label, double start_s = 0.0, double end_s = 0.0) {
  if (label == "N") return Chord::no_chord(start_s, end_s);
  auto colon = label.find(':');
  if (colon == std::string::npos)
    throw ParseError("chord label '" + label + "' is not <ROOT>:<QUALITY> or 'N'");
  std::string root_token = label.substr(0, colon);
  std::string quality_token = label.substr(colon + 1);
  auto root_it = root_pitch_classes().find(root_token);
  if (root_it == root_pitch_classes().end())
    throw ParseError("unknown chord root '" + root_token + "' in '" + label + "'");
  auto quality_it = quality_aliases().find(quality_token);
  if (quality_it == quality_aliases().end())
    throw ParseError("unknown chord quality '" + quality_token + "' in '" + label + "'");
  return Chord::make(root_it->second, quality_it->second, start_s, end_s);
}

// Canonical spelling; parse_chord(format_chord(c)) == c.
inline std::string format_chord(const Chord& c) {
  if (c.is_no_chord()) return "N";
  return std::string(pitch_class_name(c.root)) + ":" + to_string(c.quality);
}

// Pitch-class set of the chord (root-relative interval table shifted to the
// root). NO_CHORD expands to the empty set.
inline std::vector<int> chord_to_midi(const Chord& c) {
  if (c.is_no_chord()) return {};
  std::vector<int> out;
  for (int iv : quality_intervals(c.quality)) out.push_back((c.root + iv) % 12);
  std::sort(out.begin(), out.end());
  return out;
}

struct TimedNote {
  int pitch_class = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

// Timed note list for a chord sequence; chord boundaries become note on/off.
inline std::vector<TimedNote> chords_to_notes(const std::vector<Chord>& chords) {
  std::vector<TimedNote> notes;
  for (const auto& c : chords)
    for (int pc : chord_to_midi(c)) notes.push_back({pc, c.start_s, c.end_s});
  return notes;
}

class KeyProvider {
 public:
  virtual ~KeyProvider() = default;
  virtual Key detect(const std::vector<TimedNote>& notes) const = 0;
};

// Krumhansl-Schmuckler profile correlation: duration-weighted pitch-class
// histogram, Pearson-correlated against the major/minor key profiles over
// all 24 candidates. Ties break toward major, then toward the tonic closest
// above the mode's reference tonic (0 for major, 9 for minor); for majors that
// coincides with the lower tonic. Scanning minors from 9 keeps normalization
// idempotent when a rotation-symmetric histogram ties several minor keys: the
// retained candidate is the one that maps the sequence onto A minor.
//
// The per-candidate sums pair a rotated histogram index with the profile in a
// fixed index order, and histogram mean/variance come from a sorted copy, so
// transposing the input permutes the correlation grid bit-exactly. Detection
// therefore commutes with transposition even through ties, which the
// idempotence property relies on.
class KrumhanslSchmucklerProvider final : public KeyProvider {
 public:
  Key detect(const std::vector<TimedNote>& notes) const override {
    if (notes.empty()) throw InputError("key detection requires a non-empty note sequence");
    std::array<double, 12> hist{};
    for (const auto& n : notes) {
      double w = n.end_s - n.start_s;
      if (w <= 0.0) w = 1.0;  // untimed notes count equally
      hist[((n.pitch_class % 12) + 12) % 12] += w;
    }

    static const std::array<double, 12> major_profile = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                         2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
    static const std::array<double, 12> minor_profile = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                         2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

    std::array<double, 12> sorted_hist = hist;
    std::sort(sorted_hist.begin(), sorted_hist.end());
    double mean_h = 0.0;
    for (double v : sorted_hist) mean_h += v;
    mean_h /= 12.0;
    double den_h = 0.0;
    for (double v : sorted_hist) den_h += (v - mean_h) * (v - mean_h);

    Key best{0, Mode::major};
    double best_r = -2.0;
    for (Mode mode : {Mode::major, Mode::minor}) {
      const auto& profile = mode == Mode::major ? major_profile : minor_profile;
      double mean_p = 0.0;
      for (double v : profile) mean_p += v;
      mean_p /= 12.0;
      double den_p = 0.0;
      for (double v : profile) den_p += (v - mean_p) * (v - mean_p);
      int ref = reference_tonic(mode);
      for (int offset = 0; offset < 12; ++offset) {
        int tonic = (ref + offset) % 12;
        double r = correlation(hist, mean_h, den_h, profile, mean_p, den_p, tonic);
        if (r > best_r) {
          best_r = r;
          best = Key{tonic, mode};
        }
      }
    }
    return best;
  }

 private:
  static int reference_tonic(Mode mode) { return mode == Mode::major ? 0 : 9; }

  static double correlation(const std::array<double, 12>& hist, double mean_h, double den_h,
                            const std::array<double, 12>& profile, double mean_p, double den_p,
                            int tonic) {
    double num = 0.0;
    for (int i = 0; i < 12; ++i)
      num += (hist[(i + tonic) % 12] - mean_h) * (profile[i] - mean_p);
    if (den_h == 0.0 || den_p == 0.0) return 0.0;
    return num / std::sqrt(den_h * den_p);
  }
};

inline Key detect_key(const std::vector<TimedNote>& notes, const KeyProvider& provider) {
  return provider.detect(notes);
}

inline Key detect_key(const std::vector<TimedNote>& notes) {
  return KrumhanslSchmucklerProvider{}.detect(notes);
}

// Major keys transpose to C major, minor keys to A minor.
inline Key reference_key(Mode mode) {
  return mode == Mode::major ? Key{0, Mode::major} : Key{9, Mode::minor};
}

// Shift every root so the song reads in the reference key. Qualities,
// timings, and NO_CHORD entries pass through unchanged.
inline std::vector<Chord> normalize_to_reference(std::vector<Chord> chords, const Key& key) {
  int target = reference_key(key.mode).tonic;
  int shift = ((target - key.tonic) % 12 + 12) % 12;
  for (auto& c : chords) {
    if (c.is_no_chord()) continue;
    c.root = (c.root + shift) % 12;
  }
  return chords;
}

// Token id layout. Real pitch classes / qualities first, then the NO_CHORD
// sentinel, then PAD.
inline constexpr int kRootNoChordId = kNumPitchClasses;       // 12
inline constexpr int kRootPadId = kNumPitchClasses + 1;       // 13
inline constexpr int kRootVocabSize = kNumPitchClasses + 2;   // 14
inline constexpr int kQualityNoChordId = kNumQualities;       // 13
inline constexpr int kQualityPadId = kNumQualities + 1;       // 14
inline constexpr int kQualityVocabSize = kNumQualities + 2;   // 15

struct ChordTokenSequence {
  std::vector<int> root_ids;
  std::vector<int> quality_ids;
  std::vector<uint8_t> mask;  // 1 = real token, 0 = padding
  size_t num_real = 0;

  size_t size() const { return root_ids.size(); }
};

// One token per chord event in temporal order, truncated to t_max keeping the
// earliest events, padded with PAD ids beyond that.
inline ChordTokenSequence tokenize(const std::vector<Chord>& chords, size_t t_max) {
  ChordTokenSequence seq;
  seq.root_ids.assign(t_max, kRootPadId);
  seq.quality_ids.assign(t_max, kQualityPadId);
  seq.mask.assign(t_max, 0);
  seq.num_real = std::min(chords.size(), t_max);
  for (size_t t = 0; t < seq.num_real; ++t) {
    const Chord& c = chords[t];
    if (c.is_no_chord()) {
      seq.root_ids[t] = kRootNoChordId;
      seq.quality_ids[t] = kQualityNoChordId;
    } else {
      seq.root_ids[t] = c.root;
      seq.quality_ids[t] = static_cast<int>(c.quality);
    }
    seq.mask[t] = 1;
  }
  return seq;
}

// Key mode as the model's scalar input: 0 = major (C), 1 = minor (A).
inline double encode_key(const Key& key) { return key.mode == Mode::major ? 0.0 : 1.0; }

inline Key decode_key(double scalar) {
  return scalar < 0.5 ? reference_key(Mode::major) : reference_key(Mode::minor);
}

// Harmony fingerprint covering roots, qualities, and interval tables; embedded
// in checkpoints so a vocabulary change fails fast at load.
inline std::string chord_vocabulary_fingerprint() {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (int q = 0; q < kNumQualities; ++q) {
    h = fnv1a64(to_string(static_cast<ChordQuality>(q)), h);
    for (int iv : quality_intervals(static_cast<ChordQuality>(q)))
      h = fnv1a64_bytes(&iv, sizeof(iv), h);
  }
  for (int pc = 0; pc < kNumPitchClasses; ++pc) h = fnv1a64(pitch_class_name(pc), h);
  int ids[4] = {kRootNoChordId, kRootPadId, kQualityNoChordId, kQualityPadId};
  h = fnv1a64_bytes(ids, sizeof(ids), h);
  return hex64(h);
}

// --- chord stream files ---------------------------------------------------
//
// Input stream (one JSON object per line):
//   {"track_id": "...", "chords": [{"label": "D:sus4", "start_s": 0.0, "end_s": 2.5}, ...]}
// The normalized cache mirrors the input with a "key" field added and labels
// rewritten in the reference key.

struct TrackChords {
  std::string track_id;
  std::vector<Chord> chords;
  std::optional<Key> key;  // present in normalized caches
};

inline std::vector<TrackChords> load_chord_stream(const fs::path& path) {
  std::vector<TrackChords> out;
  for_each_jsonl(path, [&](size_t lineno, const json& j) {
    TrackChords tc;
    auto fail = [&](const std::string& msg) -> void {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!j.is_object() || !j.contains("track_id") || !j.contains("chords"))
      fail("chord stream line needs track_id and chords");
    tc.track_id = j.at("track_id").get<std::string>();
    for (const auto& cj : j.at("chords")) {
      double s = cj.value("start_s", 0.0);
      double e = cj.value("end_s", 0.0);
      try {
        tc.chords.push_back(parse_chord(cj.at("label").get<std::string>(), s, e));
      } catch (const ParseError& e2) {
        fail(e2.what());
      }
    }
    if (j.contains("key")) {
      auto k = key_from_string(j.at("key").get<std::string>());
      if (!k) fail("bad key '" + j.at("key").get<std::string>() + "'");
      tc.key = *k;
    }
    out.push_back(std::move(tc));
  });
  return out;
}

inline void save_chord_stream(const std::vector<TrackChords>& tracks, const fs::path& path) {
  std::vector<json> rows;
  for (const auto& tc : tracks) {
    json j;
    j["track_id"] = tc.track_id;
    if (tc.key) j["key"] = to_string(*tc.key);
    json arr = json::array();
    for (const auto& c : tc.chords) {
      arr.push_back({{"label", format_chord(c)}, {"start_s", c.start_s}, {"end_s", c.end_s}});
    }
    j["chords"] = std::move(arr);
    rows.push_back(std::move(j));
  }
  save_jsonl_file(path, rows);
}

}  // namespace muser
