#include "nepadd/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "nepadd/errors.hpp"
#include "byte_io.hpp"

namespace nepadd {

using ordered_json = nlohmann::ordered_json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Eval: return "eval";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "eval") return Split::Eval;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::vector<int> labels_from_segments(std::size_t frames, const std::vector<SpoofSegment>& segments) {
  std::vector<int> labels(frames, kAuthentic);
  for (const auto& s : segments) {
    if (s.start >= s.end || s.end > frames) throw DataError("spoof segment out of range");
    for (std::size_t t = s.start; t < s.end; ++t) labels[t] = kSpoof;
  }
  return labels;
}

void validate_record(const UtteranceRecord& r) {
  auto fail = [&](const std::string& why) { throw DataError("record " + r.id + ": " + why); };
  if (r.frames == 0) fail("zero frames");
  if (r.labels.size() != r.frames) fail("label count differs from frame count");
  for (std::size_t i = 0; i < r.segments.size(); ++i) {
    const auto& s = r.segments[i];
    if (s.start >= s.end || s.end > r.frames) fail("segment outside [0, T)");
    if (i > 0 && s.start < r.segments[i - 1].end) fail("segments overlap or are unsorted");
  }
  if (labels_from_segments(r.frames, r.segments) != r.labels) fail("labels disagree with segments");
  std::vector<EntitySpan> spans = r.entities;
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end || spans[i].end > r.frames) fail("entity span outside [0, T)");
    if (i > 0 && spans[i].start < spans[i - 1].end) fail("entity spans overlap");
  }
}

std::vector<std::pair<int, std::size_t>> run_length_encode(const std::vector<int>& labels) {
  std::vector<std::pair<int, std::size_t>> runs;
  for (int v : labels) {
    if (!runs.empty() && runs.back().first == v) {
      ++runs.back().second;
    } else {
      runs.emplace_back(v, 1);
    }
  }
  return runs;
}

std::vector<int> run_length_decode(const std::vector<std::pair<int, std::size_t>>& runs) {
  std::vector<int> labels;
  for (const auto& [v, n] : runs) labels.insert(labels.end(), n, v);
  return labels;
}

namespace {

constexpr char kMagic[4] = {'N', 'E', 'P', 'D'};
constexpr std::uint16_t kFeatureVersion = 1;

using detail::get_le;
using detail::put_le;

}  // namespace

std::vector<std::uint8_t> encode_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("features must be [T x D], got " + shape_str(features.shape()));
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kFeatureVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim(0)));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim(1)));
  out.reserve(out.size() + 4 * features.numel());
  for (double v : features.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_features(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("bad feature file magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos, "feature file");
  if (version != kFeatureVersion) throw DataError("unsupported feature file version " + std::to_string(version));
  const auto t = get_le<std::uint32_t>(bytes, pos, "feature file");
  const auto d = get_le<std::uint32_t>(bytes, pos, "feature file");
  if (t == 0 || d == 0) throw DataError("feature file with empty shape");
  const std::size_t n = static_cast<std::size_t>(t) * d;
  if (bytes.size() != pos + 4 * n) throw DataError("feature file size does not match header");
  std::vector<double> values(n);
  for (auto& v : values) {
    v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos, "feature file")));
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  return Tensor({t, d}, std::move(values));
}

void write_feature_file(const std::filesystem::path& path, const Tensor& features) {
  const auto bytes = encode_features(features);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

std::string record_to_json_line(const UtteranceRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["path"] = r.path;
  j["T"] = r.frames;
  ordered_json labels = ordered_json::array();
  for (const auto& [v, n] : run_length_encode(r.labels)) labels.push_back({v, n});
  j["labels"] = labels;
  ordered_json ents = ordered_json::array();
  for (const auto& e : r.entities) ents.push_back({e.start, e.end, std::string(entity_type_name(e.type))});
  j["entities"] = ents;
  ordered_json segs = ordered_json::array();
  for (const auto& s : r.segments) segs.push_back({s.start, s.end});
  j["segments"] = segs;
  j["split"] = std::string(split_name(r.split));
  return j.dump();
}

UtteranceRecord record_from_json_line(const std::string& line) {
  UtteranceRecord r;
  try {
    const auto j = ordered_json::parse(line);
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.frames = j.at("T").get<std::size_t>();
    std::vector<std::pair<int, std::size_t>> runs;
    for (const auto& run : j.at("labels")) runs.emplace_back(run.at(0).get<int>(), run.at(1).get<std::size_t>());
    r.labels = run_length_decode(runs);
    for (const auto& e : j.at("entities")) {
      r.entities.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                            parse_entity_type(e.at(2).get<std::string>())});
    }
    for (const auto& s : j.at("segments")) r.segments.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    r.split = parse_split(j.at("split").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest line: ") + e.what());
  }
  validate_record(r);
  return r;
}

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& r : records) os << record_to_json_line(r) << '\n';
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read manifest " + path.string());
  std::vector<UtteranceRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(record_from_json_line(line));
  }
  return out;
}

Utterance make_utterance(UtteranceRecord record, Tensor features) {
  if (features.rank() != 2 || features.dim(0) != record.frames) {
    throw DataError("record " + record.id + ": feature shape " + shape_str(features.shape()) +
                    " does not match T=" + std::to_string(record.frames));
  }
  Utterance u;
  u.targets.assign(record.labels.begin(), record.labels.end());
  for (Tag t : tags_from_spans(record.frames, record.entities)) u.tag_classes.push_back(static_cast<int>(t));
  u.record = std::move(record);
  u.features = std::move(features);
  return u;
}

const std::vector<Utterance>& Corpus::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Dev: return dev;
    case Split::Eval: return eval;
  }
  return train;
}

std::size_t Corpus::feature_dim() const {
  for (const auto* part : {&train, &dev, &eval}) {
    if (!part->empty()) return part->front().features.dim(1);
  }
  throw DataError("empty corpus");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  for (auto& rec : read_manifest(dir / "manifest.jsonl")) {
    Tensor feats = read_feature_file(dir / rec.path);
    const Split s = rec.split;
    auto u = make_utterance(std::move(rec), std::move(feats));
    (s == Split::Train ? c.train : s == Split::Dev ? c.dev : c.eval).push_back(std::move(u));
  }
  return c;
}

}  // namespace nepadd
