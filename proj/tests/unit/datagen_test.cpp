#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include <unistd.h>

#include "test_util.hpp"
#include "nepadd/datagen.hpp"
#include "nepadd/errors.hpp"

using namespace nepadd;
namespace fs = std::filesystem;

namespace {

CorpusConfig small(std::uint64_t seed = 3) {
  CorpusConfig c;
  c.seed = seed;
  c.n_train = 40;
  c.n_dev = 10;
  c.n_eval = 10;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("nepadd_datagen_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool intersects(const SpoofSegment& s, const EntitySpan& e) { return s.start < e.end && e.start < s.end; }

}  // namespace

TEST_CASE("Datagen.TrainCountEchoesConfig") {
  auto c = small();
  c.n_train = 10;
  auto gen = generate_utterances(c);
  std::size_t train = 0;
  for (const auto& g : gen) train += g.record.split == Split::Train;
  CHECK_EQ(train, 10u);
  CHECK_EQ(gen.size(), 30u);
}

TEST_CASE("Datagen.FullOverlapPlacesEverySegmentOnAnEntity") {
  auto c = small();
  c.p_overlap = 1.0;
  for (const auto& g : generate_utterances(c)) {
    for (const auto& s : g.record.segments) {
      bool hit = false;
      for (const auto& e : g.record.entities) hit = hit || intersects(s, e);
      INFO(g.record.id);
      CHECK(hit);
    }
  }
}

TEST_CASE("Datagen.RecordInvariantsHold") {
  for (const auto& g : generate_utterances(small(8))) {
    const auto& r = g.record;
    CHECK_NOTHROW(validate_record(r));
    CHECK_EQ(r.labels, labels_from_segments(r.frames, r.segments));
    CHECK_EQ(g.features.shape(), (Shape{r.frames, 16}));
    for (std::size_t i = 1; i < r.segments.size(); ++i) CHECK_LE(r.segments[i - 1].end, r.segments[i].start);
    for (std::size_t i = 1; i < r.entities.size(); ++i) CHECK_LE(r.entities[i - 1].end, r.entities[i].start);
    CHECK_LE(r.segments.size(), 10u);
  }
}

TEST_CASE("Datagen.SameSeedByteIdenticalFiles") {
  auto a = scratch("a"), b = scratch("b");
  write_corpus(a, generate_utterances(small(4)), false);
  write_corpus(b, generate_utterances(small(4)), false);
  CHECK_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a / "feats")) {
    CHECK_EQ(slurp(e.path()), slurp(b / "feats" / e.path().filename()));
    ++files;
  }
  CHECK_EQ(files, 60u);
  auto c = scratch("c");
  write_corpus(c, generate_utterances(small(5)), false);
  CHECK_NE(slurp(a / "manifest.jsonl"), slurp(c / "manifest.jsonl"));
  CHECK_THROWS_AS(write_corpus(a, generate_utterances(small(4)), false), DataError);
  CHECK_NOTHROW(write_corpus(a, generate_utterances(small(4)), true));
  for (auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("Datagen.FeatureFileRoundTripsBitExactly") {
  auto gen = generate_utterances(small(6));
  const Tensor& f = gen.front().features;
  Tensor back = decode_features(encode_features(f));
  REQUIRE_EQ(back.shape(), f.shape());
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK_EQ(back[i], f[i]);
  auto bytes = encode_features(f);
  CHECK_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NEPD");
  CHECK_EQ(bytes.size(), 4 + 2 + 4 + 4 + 4 * f.numel());
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_features(bytes), DataError);
  bytes = encode_features(f);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_features(bytes), DataError);
}

TEST_CASE("Datagen.ManifestRoundTrip") {
  auto dir = scratch("m");
  auto gen = generate_utterances(small(7));
  write_corpus(dir, gen, false);
  auto back = read_manifest(dir / "manifest.jsonl");
  REQUIRE_EQ(back.size(), gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) CHECK_EQ(back[i], gen[i].record);
  Corpus corpus = load_corpus(dir);
  CHECK_EQ(corpus.train.size(), 40u);
  CHECK_EQ(corpus.feature_dim(), 16u);
  for (std::size_t i = 0; i < corpus.train[0].features.numel(); ++i)
    CHECK_EQ(corpus.train[0].features[i], gen[0].features[i]);
  fs::remove_all(dir);
}

TEST_CASE("Datagen.RunLengthLabels") {
  std::vector<int> labels{1, 1, 0, 0, 0, 1};
  auto rle = run_length_encode(labels);
  CHECK_EQ(rle, (std::vector<std::pair<int, std::size_t>>{{1, 2}, {0, 3}, {1, 1}}));
  CHECK_EQ(run_length_decode(rle), labels);
}

TEST_CASE("Datagen.MalformedManifestLineIsDataError") {
  CHECK_THROWS_AS(record_from_json_line("{\"id\":1}"), DataError);
  CHECK_THROWS_AS(record_from_json_line("not json"), DataError);
}

TEST_CASE("Datagen.DefaultCorpusProportions") {
  CorpusConfig c;
  auto gen = generate_utterances(c);
  std::size_t fake = 0, entities = 0;
  for (const auto& g : gen) {
    fake += g.record.is_fake();
    entities += g.record.entities.size();
  }
  const double ratio = double(fake) / gen.size();
  CHECK_NEAR(ratio, c.fake_utt_fraction, 0.02);
  const double mean_entities = double(entities) / gen.size();
  CHECK_GE(mean_entities, 1.0);
  CHECK_LE(mean_entities, 2.0);
}

TEST_CASE("Datagen.ForgeryLevelSplit") {
  auto gen = generate_utterances(small(9));
  std::vector<UtteranceRecord> manifest;
  for (const auto& g : gen) manifest.push_back(g.record);
  auto levels = split_by_forgery_level(manifest);
  REQUIRE_EQ(levels.size(), 10u);
  CHECK_EQ(levels.begin()->first, 1);
  CHECK_EQ(levels.rbegin()->first, 10);
  std::set<std::string> seen;
  for (const auto& [k, recs] : levels)
    for (const auto& r : recs) {
      CHECK_EQ(static_cast<int>(r.segments.size()), k);
      CHECK(r.is_fake());
      CHECK(seen.insert(r.id).second);
    }
  std::size_t fakes = 0;
  for (const auto& r : manifest) fakes += r.is_fake();
  CHECK_EQ(seen.size(), fakes);

  UtteranceRecord three;
  three.id = "x";
  three.frames = 30;
  three.segments = {{0, 3}, {5, 8}, {10, 12}};
  auto one = split_by_forgery_level({three});
  for (const auto& [k, recs] : one) CHECK_EQ(recs.size(), k == 3 ? 1u : 0u);
}

TEST_CASE("Datagen.StatsHaveDatasetColumns") {
  auto gen = generate_utterances(small());
  std::vector<UtteranceRecord> recs;
  for (const auto& g : gen) recs.push_back(g.record);
  const std::string csv = stats_csv(corpus_stats(recs));
  CHECK_EQ(csv.substr(0, csv.find('\n')), "Name,Bona fide,Fake,All,Named Entities Count");
  const auto stats = corpus_stats(recs);
  REQUIRE_EQ(stats.size(), 4u);
  CHECK_EQ(stats.back().name, "Total");
  CHECK_EQ(stats.back().all, recs.size());
  CHECK_EQ(stats.back().all, stats[0].all + stats[1].all + stats[2].all);
  CHECK_EQ(stats.back().fake + stats.back().bona_fide, stats.back().all);
}

TEST_CASE("Datagen.InvalidConfigRejected") {
  auto c = small();
  c.p_overlap = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.spoof_shift = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.n_dev = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("Datagen.TooShortForSegmentsIsGenerationError") {
  auto c = small();
  c.min_frames = c.max_frames = 20;
  c.min_segments = c.max_segments = 10;
  CHECK_THROWS_AS(generate_utterances(c), DataError);
}
