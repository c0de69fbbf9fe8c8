#include "muser/embed.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>

#include "support/testkit.hpp"

using namespace muser;

TEST_CASE("segment_track cuts 30 s windows and keeps tails of at least 5 s") {
  auto segs60 = segment_track(60.0);
  REQUIRE(segs60.size() == 2);
  CHECK(segs60[0].start_s == 0.0);
  CHECK(segs60[0].end_s == 30.0);
  CHECK(segs60[1].start_s == 30.0);
  CHECK(segs60[1].end_s == 60.0);

  auto segs95 = segment_track(95.0);
  REQUIRE(segs95.size() == 4);
  CHECK(segs95[3].start_s == 90.0);
  CHECK(segs95[3].end_s == 95.0);

  auto segs92 = segment_track(92.0);
  CHECK(segs92.size() == 3);  // 2 s tail dropped

  CHECK(segment_track(30.0).size() == 1);
  CHECK(segment_track(34.9).size() == 1);
  CHECK(segment_track(35.0).size() == 2);
  CHECK(segment_track(5.0).size() == 1);

  for (size_t i = 0; i < segs95.size(); ++i) CHECK(segs95[i].index == i);

  CHECK_THROWS_AS(segment_track(4.0), InputError);
  CHECK_THROWS_AS(segment_track(0.0), InputError);
  CHECK_THROWS_AS(segment_track(-3.0), InputError);
  CHECK_THROWS_AS(segment_track(60.0, -1.0), ConfigError);
}

TEST_CASE("pool_segment averages frames per layer then concatenates") {
  SegmentFrames frames;
  frames.layer5 = {{1.0, 1.0}, {3.0, 3.0}};
  frames.layer6 = {{0.0, 0.0}, {2.0, 2.0}};
  CHECK(pool_segment(frames) == std::vector<double>{2.0, 2.0, 1.0, 1.0});
}

TEST_CASE("stub provider is a pure function of its coordinates") {
  StubEmbeddingProvider a(8, 3);
  StubEmbeddingProvider b(8, 3);
  Segment seg{1, 30.0, 60.0};
  auto fa = a.segment_frames("track", seg);
  auto fb = b.segment_frames("track", seg);
  CHECK(fa.layer5 == fb.layer5);
  CHECK(fa.layer6 == fb.layer6);
  CHECK(fa.layer5 != fa.layer6);
  CHECK(a.segment_frames("other", seg).layer5 != fa.layer5);
  Segment seg0{0, 0.0, 30.0};
  CHECK(a.segment_frames("track", seg0).layer5 != fa.layer5);

  for (const auto& frame : fa.layer5)
    for (double v : frame) {
      CHECK(v >= -1.0);
      CHECK(v < 1.0);
    }

  CHECK_THROWS_AS(StubEmbeddingProvider(7), ConfigError);
  CHECK_THROWS_AS(StubEmbeddingProvider(0), ConfigError);
  CHECK_THROWS_AS(StubEmbeddingProvider(8, 0), ConfigError);

  CHECK(make_embedding_provider("stub", 16)->dim() == 16);
  CHECK_THROWS_AS(make_embedding_provider("mert-v1"), ConfigError);
}

TEST_CASE("compute_track_features pools every segment") {
  StubEmbeddingProvider provider(8, 3);
  auto feats = compute_track_features(provider, "track", 95.0);
  REQUIRE(feats.size() == 4);
  for (const auto& row : feats) CHECK(row.size() == 8);
  auto segs = segment_track(95.0);
  for (size_t i = 0; i < segs.size(); ++i)
    CHECK(feats[i] == pool_segment(provider.segment_frames("track", segs[i])));
}

TEST_CASE("mean_window averages the chosen contiguous span") {
  std::vector<std::vector<double>> feats = {{0.0, 8.0}, {2.0, 6.0}, {4.0, 4.0}, {6.0, 2.0}};
  CHECK(mean_window(feats, 2, 2) == std::vector<double>{5.0, 3.0});
  CHECK(mean_window(feats, 1, 1) == feats[1]);
  CHECK(mean_window(feats, 0, 4) == std::vector<double>{3.0, 5.0});
  CHECK(eval_feature(feats) == std::vector<double>{3.0, 5.0});
  CHECK_THROWS_AS(mean_window(feats, 0, 0), InputError);
  CHECK_THROWS_AS(mean_window(feats, 3, 2), InputError);
}

TEST_CASE("augment_select draws uniformly over all contiguous windows") {
  Rng rng(404);
  CHECK(augment_select(1, rng) == WindowChoice{0, 1});
  CHECK_THROWS_AS(augment_select(0, rng), InputError);

  std::map<std::pair<size_t, size_t>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    WindowChoice w = augment_select(4, rng);
    REQUIRE(w.k >= 1);
    REQUIRE(w.start + w.k <= 4);
    ++counts[{w.start, w.k}];
  }
  REQUIRE(counts.size() == 10);
  double expected = draws / 10.0;
  double stat = 0.0;
  for (const auto& [cell, observed] : counts)
    stat += (observed - expected) * (observed - expected) / expected;
  double p = testkit::chi_square_p_value(stat, 9);
  INFO("chi-square stat " << stat << " p " << p);
  CHECK(p > 0.01);
}

TEST_CASE("train features stay in the convex hull and can equal the eval mean") {
  Rng rng(7);
  std::vector<std::vector<double>> feats;
  for (int s = 0; s < 5; ++s) {
    std::vector<double> row(6);
    for (double& v : row) v = rng.normal(0.0, 2.0);
    feats.push_back(row);
  }
  std::vector<double> lo(6, 1e300), hi(6, -1e300);
  for (const auto& row : feats)
    for (size_t d = 0; d < 6; ++d) {
      lo[d] = std::min(lo[d], row[d]);
      hi[d] = std::max(hi[d], row[d]);
    }

  bool saw_full_span = false;
  for (int i = 0; i < 500; ++i) {
    Rng probe(1000 + i);
    if (augment_select(5, probe) == WindowChoice{0, 5}) {
      Rng replay(1000 + i);
      CHECK(train_feature(feats, replay) == eval_feature(feats));
      saw_full_span = true;
    }
    Rng draw(1000 + i);
    auto f = train_feature(feats, draw);
    REQUIRE(f.size() == 6);
    for (size_t d = 0; d < 6; ++d) {
      CHECK(f[d] >= lo[d] - 1e-12);
      CHECK(f[d] <= hi[d] + 1e-12);
    }
  }
  CHECK(saw_full_span);
}

TEST_CASE("feature cache round-trips bit-exactly at storage precision") {
  testkit::TempDir dir;
  StubEmbeddingProvider provider(8, 3);
  auto feats = compute_track_features(provider, "song", 65.0);

  CHECK_FALSE(track_features_cached(dir.path(), "song"));
  auto segs = segment_track(65.0);
  save_track_features(dir.path(), "song", feats, provider.name(), &segs);
  CHECK(track_features_cached(dir.path(), "song"));

  TrackFeatures back = load_track_features(dir.path(), "song");
  CHECK(back.track_id == "song");
  CHECK(back.provider == "stub");
  REQUIRE(back.segments.size() == feats.size());
  for (size_t i = 0; i < feats.size(); ++i)
    for (size_t d = 0; d < feats[i].size(); ++d)
      CHECK(back.segments[i][d] == static_cast<double>(static_cast<float>(feats[i][d])));

  // a second save of the loaded values reproduces the payload byte for byte
  auto paths = feature_cache_paths(dir.path(), "song");
  std::string payload_a = read_text_file(paths.bin);
  save_track_features(dir.path(), "song", back.segments, provider.name());
  CHECK(read_text_file(paths.bin) == payload_a);
  CHECK(load_track_features(dir.path(), "song").segments == back.segments);
}

TEST_CASE("feature cache rejects tampered or missing payloads") {
  testkit::TempDir dir;
  std::vector<std::vector<double>> feats = {{1.0, 2.0}, {3.0, 4.0}};
  save_track_features(dir.path(), "t", feats, "stub");
  auto paths = feature_cache_paths(dir.path(), "t");

  std::string payload = read_text_file(paths.bin);
  payload[0] ^= 0x40;
  atomic_write_file(paths.bin, payload);
  CHECK_THROWS_AS(load_track_features(dir.path(), "t"), ValidationError);

  atomic_write_file(paths.bin, payload.substr(0, payload.size() - 4));
  CHECK_THROWS_AS(load_track_features(dir.path(), "t"), ValidationError);

  fs::remove(paths.bin);
  CHECK_THROWS_AS(load_track_features(dir.path(), "t"), IoError);
  CHECK_THROWS_AS(load_track_features(dir.path(), "never-saved"), IoError);

  CHECK_THROWS_AS(save_track_features(dir.path(), "empty", {}, "stub"), InputError);
  CHECK_THROWS_AS(save_track_features(dir.path(), "ragged", {{1.0}, {1.0, 2.0}}, "stub"),
                  InputError);
}

TEST_CASE("cache stems stay distinct for hostile track ids") {
  CHECK(cache_file_stem("clean-id_01.x") == "clean-id_01.x");
  std::string a = cache_file_stem("a/b");
  std::string b = cache_file_stem("a:b");
  CHECK(a != b);
  CHECK(a.find('/') == std::string::npos);

  testkit::TempDir dir;
  save_track_features(dir.path(), "a/b", {{1.0}}, "stub");
  save_track_features(dir.path(), "a:b", {{2.0}}, "stub");
  CHECK(load_track_features(dir.path(), "a/b").segments[0][0] == 1.0);
  CHECK(load_track_features(dir.path(), "a:b").segments[0][0] == 2.0);
}
