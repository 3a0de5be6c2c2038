#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nepadd/entity.hpp"
#include "nepadd/tensor.hpp"

namespace nepadd {

// Frame label convention: 1 = authentic, 0 = spoof.
inline constexpr int kAuthentic = 1;
inline constexpr int kSpoof = 0;

enum class Split { Train, Dev, Eval };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

// Half-open [start, end) frame range.
struct SpoofSegment {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const SpoofSegment&) const = default;
};

struct UtteranceRecord {
  std::string id;
  std::string path;  // relative to the manifest directory
  std::size_t frames = 0;
  std::vector<int> labels;
  std::vector<EntitySpan> entities;
  std::vector<SpoofSegment> segments;
  Split split = Split::Train;

  bool is_fake() const { return !segments.empty(); }
  bool operator==(const UtteranceRecord&) const = default;
};

struct FrameFeatures {
  std::string utterance_id;
  Tensor features;  // [T x D]
  double frame_duration_ms = 20.0;
};

// Labels implied by a segment list over `frames` frames.
std::vector<int> labels_from_segments(std::size_t frames, const std::vector<SpoofSegment>& segments);
// Throws DataError naming the record when any record invariant is violated.
void validate_record(const UtteranceRecord& r);

// [[value, count], ...]
std::vector<std::pair<int, std::size_t>> run_length_encode(const std::vector<int>& labels);
std::vector<int> run_length_decode(const std::vector<std::pair<int, std::size_t>>& runs);

// "NEPD" feature files: magic, u16 version=1, u32 T, u32 D, then T*D
// little-endian f32, frame-major.
void write_feature_file(const std::filesystem::path& path, const Tensor& features);
Tensor read_feature_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const Tensor& features);
Tensor decode_features(const std::vector<std::uint8_t>& bytes);

// One JSON object per line.
std::string record_to_json_line(const UtteranceRecord& r);
UtteranceRecord record_from_json_line(const std::string& line);
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

struct Utterance {
  UtteranceRecord record;
  Tensor features;               // [T x D], values as stored (f32 precision)
  std::vector<double> targets;   // frame labels as doubles for BCE
  std::vector<int> tag_classes;  // frame BIO tags as class indices
};

Utterance make_utterance(UtteranceRecord record, Tensor features);

struct Corpus {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> eval;

  const std::vector<Utterance>& split(Split s) const;
  std::size_t feature_dim() const;
};

// Loads manifest.jsonl and the referenced feature files from `dir`.
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace nepadd
