#include "muser/datamodel.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "support/testkit.hpp"

using namespace muser;

static const fs::path kVocabPath = fs::path(MUSER_DATA_DIR) / "tag_vocabulary_v1.txt";

TEST_CASE("split sizes reproduce the published dataset partitions") {
  SplitRatios r;
  CHECK(split_sizes(1802, r) == std::array<size_t, 3>{1261, 271, 270});
  CHECK(split_sizes(767, r) == std::array<size_t, 3>{536, 116, 115});
  CHECK(split_sizes(10, r) == std::array<size_t, 3>{7, 2, 1});
  CHECK(split_sizes(0, r) == std::array<size_t, 3>{0, 0, 0});
  CHECK(split_sizes(1, r) == std::array<size_t, 3>{0, 1, 0});
}

TEST_CASE("split sizes always partition n") {
  SplitRatios r;
  for (size_t n = 0; n < 500; ++n) {
    auto s = split_sizes(n, r);
    CHECK(s[0] + s[1] + s[2] == n);
  }
}

TEST_CASE("bad split ratios are rejected") {
  CHECK_THROWS_AS(split_sizes(100, SplitRatios{0.7, 0.2, 0.2}), ConfigError);
  CHECK_THROWS_AS(split_sizes(100, SplitRatios{1.2, -0.1, -0.1}), ConfigError);
}

static std::vector<TrackRecord> make_records(size_t n) {
  std::vector<TrackRecord> recs(n);
  for (size_t i = 0; i < n; ++i) {
    recs[i].track_id = "t" + std::to_string(i);
    recs[i].dataset = Dataset::deam;
    recs[i].label = EmotionLabel::dimensional(5.0, 5.0);
  }
  return recs;
}

TEST_CASE("split_dataset partitions deterministically") {
  auto a = split_dataset(make_records(101), SplitRatios{}, 42);
  auto b = split_dataset(make_records(101), SplitRatios{}, 42);
  auto c = split_dataset(make_records(101), SplitRatios{}, 43);

  REQUIRE(a.size() == 101);
  size_t train = 0, val = 0, test = 0;
  for (const auto& r : a) {
    REQUIRE(r.split != Split::unassigned);
    if (r.split == Split::train) ++train;
    if (r.split == Split::val) ++val;
    if (r.split == Split::test) ++test;
  }
  CHECK(train == 70);
  CHECK(val == 16);
  CHECK(test == 15);

  CHECK(a == b);
  bool any_differs = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].split != c[i].split) any_differs = true;
  CHECK(any_differs);

  CHECK_THROWS_AS(split_dataset(a, SplitRatios{}, 42), ValidationError);
}

TEST_CASE("normalize_va matches the affine map with exact endpoints") {
  CHECK(normalize_va(0.5, 0.5, {0.0, 1.0}) == std::pair<double, double>{5.0, 5.0});
  CHECK(normalize_va_value(1.0, -1.0, 1.0) == 9.0);
  CHECK(normalize_va_value(-1.0, -1.0, 1.0) == 1.0);
  CHECK(normalize_va_value(0.25, 0.0, 1.0) == Catch::Approx(3.0).margin(1e-12));
  CHECK(normalize_va_value(1.0, 1.0, 9.0) == 1.0);
  CHECK(normalize_va_value(9.0, 1.0, 9.0) == 9.0);

  CHECK_THROWS_AS(normalize_va_value(1.5, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(normalize_va_value(-0.1, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(normalize_va_value(0.5, 1.0, 1.0), ConfigError);

  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    double v = normalize_va_value(i / 100.0, 0.0, 1.0);
    if (i > 0) CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("tag vocabulary loads 56 ordered tags") {
  TagVocabulary vocab = TagVocabulary::load(kVocabPath);
  REQUIRE(vocab.size() == kNumTags);
  CHECK(vocab.name(0) == "action");
  CHECK(vocab.index_of("action") == 0);
  CHECK_FALSE(vocab.index_of("no-such-tag"));

  auto hot = vocab.multi_hot({vocab.name(3), vocab.name(7)});
  REQUIRE(hot.size() == 56);
  CHECK(hot[3] == 1);
  CHECK(hot[7] == 1);
  size_t total = 0;
  for (auto v : hot) total += v;
  CHECK(total == 2);
  CHECK_THROWS_AS(vocab.multi_hot({"definitely-not-a-tag"}), ValidationError);

  TagVocabulary other({"a", "b"});
  CHECK(vocab.fingerprint() != other.fingerprint());
  CHECK(vocab.fingerprint() == TagVocabulary::load(kVocabPath).fingerprint());
}

TEST_CASE("manifest loading validates structure and label kinds") {
  testkit::TempDir dir;
  TagVocabulary vocab = TagVocabulary::load(kVocabPath);
  fs::path path = dir / "m.jsonl";

  SECTION("round trip is bit exact") {
    DatasetManifest m;
    m.dataset = Dataset::jamendo;
    for (int i = 0; i < 5; ++i) {
      TrackRecord r;
      r.track_id = "trk" + std::to_string(i);
      r.dataset = Dataset::jamendo;
      r.label = EmotionLabel::categorical(vocab.multi_hot({vocab.name(i)}));
      r.split = i < 3 ? Split::train : Split::val;
      r.duration_s = 30.0 + i;
      m.records.push_back(r);
    }
    save_manifest(m, path, vocab);
    ManifestOptions opts;
    opts.vocabulary = &vocab;
    DatasetManifest back = load_manifest(path, opts);
    CHECK(back.dataset == Dataset::jamendo);
    REQUIRE(back.records.size() == m.records.size());
    for (size_t i = 0; i < m.records.size(); ++i) CHECK(back.records[i] == m.records[i]);
    auto counts = back.split_counts();
    CHECK(counts[Split::train] == 3);
    CHECK(counts[Split::val] == 2);
    CHECK(back.split_records(Split::train).size() == 3);
  }

  SECTION("empty file yields zero records") {
    atomic_write_file(path, "");
    CHECK(load_manifest(path).records.empty());
  }

  SECTION("malformed line names its number") {
    atomic_write_file(path, R"({"track_id":"a","dataset":"deam","valence":5,"arousal":5})"
                            "\nnot json\n");
    try {
      load_manifest(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SECTION("label kind must match the dataset") {
    atomic_write_file(path, R"({"track_id":"a","dataset":"jamendo","valence":5,"arousal":5})"
                            "\n");
    ManifestOptions opts;
    opts.vocabulary = &vocab;
    CHECK_THROWS_AS(load_manifest(path, opts), ValidationError);

    atomic_write_file(path, R"({"track_id":"a","dataset":"deam","tags":["action"]})"
                            "\n");
    CHECK_THROWS_AS(load_manifest(path, opts), ValidationError);
  }

  SECTION("duplicate track ids are rejected") {
    atomic_write_file(path,
                      R"({"track_id":"a","dataset":"deam","valence":5,"arousal":5})"
                      "\n"
                      R"({"track_id":"a","dataset":"deam","valence":4,"arousal":4})"
                      "\n");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }

  SECTION("unknown dataset and unknown split are rejected") {
    atomic_write_file(path, R"({"track_id":"a","dataset":"nope","valence":5,"arousal":5})"
                            "\n");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
    atomic_write_file(path,
                      R"({"track_id":"a","dataset":"deam","valence":5,"arousal":5,"split":"dev"})"
                      "\n");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }

  SECTION("row level va_range overrides the dataset range") {
    atomic_write_file(
        path,
        R"({"track_id":"a","dataset":"pmemo","valence":0.5,"arousal":1.0,"va_range":[0,1]})"
        "\n");
    DatasetManifest m = load_manifest(path);
    CHECK(m.records[0].label.valence == 5.0);
    CHECK(m.records[0].label.arousal == 9.0);
  }

  SECTION("dataset level va_range applies") {
    atomic_write_file(path, R"({"track_id":"a","dataset":"emomusic","valence":0,"arousal":10})"
                            "\n");
    ManifestOptions opts;
    opts.va_range = {0.0, 10.0};
    DatasetManifest m = load_manifest(path, opts);
    CHECK(m.records[0].label.valence == 1.0);
    CHECK(m.records[0].label.arousal == 9.0);
  }
}

TEST_CASE("dataset and split name round trips") {
  for (auto d : {Dataset::jamendo, Dataset::deam, Dataset::emomusic, Dataset::pmemo})
    CHECK(dataset_from_string(to_string(d)) == d);
  CHECK_FALSE(dataset_from_string("other"));
  for (auto s : {Split::train, Split::val, Split::test})
    CHECK(split_from_string(to_string(s)) == s);
  CHECK(label_kind_of(Dataset::jamendo) == LabelKind::categorical);
  CHECK(label_kind_of(Dataset::deam) == LabelKind::dimensional);
  CHECK(label_kind_of(Dataset::emomusic) == LabelKind::dimensional);
  CHECK(label_kind_of(Dataset::pmemo) == LabelKind::dimensional);
}
