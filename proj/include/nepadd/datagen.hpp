#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nepadd/corpus.hpp"

namespace nepadd {

// Parametric stand-in for an entity-annotated partially spoofed corpus.
// Proportions follow the reference statistics (about 90% fake utterances,
// one to two entities per utterance); absolute sizes are desk scale.
struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t n_train = 400;
  std::size_t n_dev = 60;
  std::size_t n_eval = 60;
  std::size_t min_frames = 80;
  std::size_t max_frames = 200;
  std::size_t feature_dim = 16;
  // Trailing dims carry the entity signatures.
  std::size_t reserved_dims = 4;
  double spoof_shift = 0.6;
  std::size_t spoof_subspace_dims = 4;
  double ar_coeff_real = 0.9;
  double ar_coeff_spoof = 0.6;
  // Innovation std. Stationary std of the bona fide process is
  // innovation_std / sqrt(1 - ar_coeff_real^2), about 0.46 here; much more
  // noise drowns the 0.8 entity signatures.
  double innovation_std = 0.2;
  double entity_offset = 0.8;
  double entities_per_utt = 1.3;
  std::size_t min_entity_frames = 10;
  std::size_t max_entity_frames = 30;
  double p_overlap = 0.8;
  std::size_t min_segments = 1;
  std::size_t max_segments = 10;
  std::size_t min_segment_frames = 3;
  std::size_t max_segment_frames = 15;
  double fake_utt_fraction = 0.9;

  void validate() const;
};

struct GeneratedUtterance {
  UtteranceRecord record;
  Tensor features;  // [T x D], already rounded to f32 precision
};

// Deterministic given cfg.seed. Throws DataError when an utterance cannot
// hold the requested entities and segments.
std::vector<GeneratedUtterance> generate_utterances(const CorpusConfig& cfg);
Corpus to_corpus(const std::vector<GeneratedUtterance>& generated);
Corpus generate_corpus(const CorpusConfig& cfg);

// One row per split plus a total, mirroring the reference dataset table.
struct SplitStats {
  std::string name;
  std::size_t bona_fide = 0;
  std::size_t fake = 0;
  std::size_t all = 0;
  std::size_t entity_count = 0;
  std::size_t frames = 0;
  std::size_t spoof_frames = 0;
};
std::vector<SplitStats> corpus_stats(const std::vector<UtteranceRecord>& records);
std::string stats_csv(const std::vector<SplitStats>& stats);

// Writes feats/*.nepd, manifest.jsonl and stats.csv into `dir`. Refuses a
// non-empty directory unless `force`.
void write_corpus(const std::filesystem::path& dir, const std::vector<GeneratedUtterance>& generated,
                  bool force);

// Fake utterances keyed by spoof-segment count 1..10 (every key present).
std::map<int, std::vector<UtteranceRecord>> split_by_forgery_level(const std::vector<UtteranceRecord>& manifest);

}  // namespace nepadd
