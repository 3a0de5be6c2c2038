#include "nepadd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nepadd/errors.hpp"
#include "nepadd/rng.hpp"

namespace nepadd {

void CorpusConfig::validate() const {
  auto bad = [](const std::string& why) { throw ConfigError("corpus: " + why); };
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) bad(std::string(name) + " must be in [0,1]");
  };
  prob(p_overlap, "p_overlap");
  prob(fake_utt_fraction, "fake_utt_fraction");
  if (!(spoof_shift > 0.0)) bad("spoof_shift must be positive");
  if (n_train == 0 || n_dev == 0 || n_eval == 0) bad("split sizes must be at least 1");
  if (min_frames == 0 || min_frames > max_frames) bad("frame range is empty");
  if (reserved_dims == 0 || reserved_dims >= feature_dim) bad("reserved_dims must be in [1, feature_dim)");
  if (spoof_subspace_dims == 0 || spoof_subspace_dims > feature_dim - reserved_dims) {
    bad("spoof_subspace_dims must be in [1, feature_dim - reserved_dims]");
  }
  if (min_segments == 0 || min_segments > max_segments) bad("segment count range is empty");
  if (min_segment_frames == 0 || min_segment_frames > max_segment_frames) bad("segment length range is empty");
  if (min_entity_frames == 0 || min_entity_frames > max_entity_frames) bad("entity length range is empty");
  if (!(entities_per_utt >= 1.0)) bad("entities_per_utt must be at least 1");
  if (!(innovation_std > 0.0)) bad("innovation_std must be positive");
  if (std::abs(ar_coeff_real) >= 1.0 || std::abs(ar_coeff_spoof) >= 1.0) bad("AR coefficients must be in (-1,1)");
}

namespace {

double signature_sign(EntityType type, std::size_t i, std::size_t reserved) {
  const bool low = i < reserved / 2;
  const bool even = i % 2 == 0;
  switch (type) {
    case EntityType::Org: return low ? 1.0 : -1.0;
    case EntityType::Per: return even ? 1.0 : -1.0;
    case EntityType::Loc: return even == low ? 1.0 : -1.0;
  }
  return 0.0;
}

bool fits(const std::vector<SpoofSegment>& taken, std::size_t start, std::size_t len) {
  for (const auto& s : taken) {
    // Keep at least one authentic frame between segments.
    if (start + len + 1 > s.start && start < s.end + 1) return false;
  }
  return true;
}

struct Layout {
  std::vector<EntitySpan> entities;
  std::vector<SpoofSegment> segments;
  std::vector<std::vector<std::size_t>> subspaces;  // per segment
};

Layout sample_layout(const CorpusConfig& cfg, Rng& rng, std::size_t frames, bool fake, const std::string& id) {
  Layout lay;
  const auto base_entities = static_cast<std::size_t>(std::floor(cfg.entities_per_utt));
  const std::size_t n_ent = base_entities + (rng.bernoulli(cfg.entities_per_utt - base_entities) ? 1 : 0);

  const std::size_t k = fake ? static_cast<std::size_t>(rng.integer(cfg.min_segments, cfg.max_segments)) : 0;
  std::vector<std::size_t> per_span(n_ent, 0);
  std::size_t overlapped = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (rng.bernoulli(cfg.p_overlap)) {
      ++per_span[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n_ent) - 1))];
      ++overlapped;
    }
  }

  std::vector<std::size_t> lengths(n_ent);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n_ent; ++i) {
    const auto drawn = static_cast<std::size_t>(rng.integer(cfg.min_entity_frames, cfg.max_entity_frames));
    lengths[i] = std::max(drawn, 2 * per_span[i] + 1);
    total += lengths[i];
  }
  if (total + n_ent - 1 > frames) {
    throw DataError(id + ": T=" + std::to_string(frames) + " cannot hold " + std::to_string(n_ent) +
                    " entity spans totalling " + std::to_string(total) + " frames");
  }
  const std::size_t slack = frames - total - (n_ent - 1);
  std::vector<std::size_t> offsets(n_ent);
  for (auto& o : offsets) o = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(slack)));
  std::sort(offsets.begin(), offsets.end());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n_ent; ++i) {
    const std::size_t start = offsets[i] + cursor;
    const auto type = static_cast<EntityType>(rng.integer(0, 2));
    lay.entities.push_back({start, start + lengths[i], type});
    cursor += lengths[i] + 1;
  }

  // Segments placed inside their entity span, one slot per segment.
  for (std::size_t i = 0; i < n_ent; ++i) {
    const std::size_t c = per_span[i];
    if (c == 0) continue;
    const std::size_t a = lay.entities[i].start, len = lengths[i];
    if (c == 1) {
      const auto jitter = static_cast<std::int64_t>(len / 4);
      const auto j1 = static_cast<std::size_t>(rng.integer(0, jitter));
      const auto j2 = static_cast<std::size_t>(rng.integer(0, jitter));
      lay.segments.push_back({a + j1, a + len - j2});
      continue;
    }
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t lo = a + j * len / c, hi = a + (j + 1) * len / c;
      const std::size_t width = hi - lo;
      const auto seg_len = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(width) - 1));
      const auto start = lo + static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(width - 1 - seg_len)));
      lay.segments.push_back({start, start + seg_len});
    }
  }

  // Remaining segments uniformly over valid positions.
  for (std::size_t i = overlapped; i < k; ++i) {
    auto len = static_cast<std::size_t>(rng.integer(cfg.min_segment_frames, cfg.max_segment_frames));
    bool placed = false;
    for (; len >= 1 && !placed; --len) {
      if (len > frames) continue;
      std::vector<std::size_t> starts;
      for (std::size_t s = 0; s + len <= frames; ++s) {
        if (fits(lay.segments, s, len)) starts.push_back(s);
      }
      if (starts.empty()) continue;
      const std::size_t s = starts[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(starts.size()) - 1))];
      lay.segments.push_back({s, s + len});
      placed = true;
    }
    if (!placed) {
      throw DataError(id + ": T=" + std::to_string(frames) + " too small for " + std::to_string(k) +
                      " spoof segments (placed " + std::to_string(lay.segments.size()) + ")");
    }
  }
  std::sort(lay.segments.begin(), lay.segments.end(),
            [](const SpoofSegment& x, const SpoofSegment& y) { return x.start < y.start; });

  const std::size_t free_dims = cfg.feature_dim - cfg.reserved_dims;
  for (std::size_t i = 0; i < lay.segments.size(); ++i) {
    std::vector<std::size_t> dims(free_dims);
    std::iota(dims.begin(), dims.end(), 0);
    for (std::size_t j = 0; j < cfg.spoof_subspace_dims; ++j) {
      const auto pick = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(j), static_cast<std::int64_t>(free_dims) - 1));
      std::swap(dims[j], dims[pick]);
    }
    dims.resize(cfg.spoof_subspace_dims);
    lay.subspaces.push_back(std::move(dims));
  }
  return lay;
}

Tensor synthesize(const CorpusConfig& cfg, Rng& rng, std::size_t frames, const Layout& lay) {
  const std::size_t D = cfg.feature_dim, R = cfg.reserved_dims;
  // Per-frame spoof subspace mask.
  std::vector<std::uint8_t> spoofed(frames * D, 0);
  for (std::size_t i = 0; i < lay.segments.size(); ++i) {
    for (std::size_t t = lay.segments[i].start; t < lay.segments[i].end; ++t)
      for (std::size_t d : lay.subspaces[i]) spoofed[t * D + d] = 1;
  }
  std::vector<double> offsets(frames * D, 0.0);
  for (const auto& e : lay.entities) {
    for (std::size_t t = e.start; t < e.end; ++t)
      for (std::size_t i = 0; i < R; ++i)
        offsets[t * D + (D - R + i)] = cfg.entity_offset * signature_sign(e.type, i, R);
  }

  std::vector<double> state(D);
  const double stationary = cfg.innovation_std / std::sqrt(1.0 - cfg.ar_coeff_real * cfg.ar_coeff_real);
  for (auto& s : state) s = rng.normal(0.0, stationary);
  Tensor x({frames, D});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const bool sp = spoofed[t * D + d] != 0;
      const double a = sp ? cfg.ar_coeff_spoof : cfg.ar_coeff_real;
      if (t > 0) state[d] = a * state[d] + rng.normal(0.0, cfg.innovation_std);
      const double v = state[d] + (sp ? cfg.spoof_shift : 0.0) + offsets[t * D + d];
      x(t, d) = static_cast<double>(static_cast<float>(v));
    }
  }
  return x;
}

}  // namespace

std::vector<GeneratedUtterance> generate_utterances(const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<GeneratedUtterance> out;
  const std::pair<Split, std::size_t> parts[] = {
      {Split::Train, cfg.n_train}, {Split::Dev, cfg.n_dev}, {Split::Eval, cfg.n_eval}};
  for (const auto& [split, n] : parts) {
    const auto n_fake = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.fake_utt_fraction));
    std::vector<bool> fake(n, false);
    std::fill(fake.begin(), fake.begin() + static_cast<std::ptrdiff_t>(n_fake), true);
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1));
      std::swap(fake[i - 1], fake[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05zu", std::string(split_name(split)).c_str(), i);
      const auto frames = static_cast<std::size_t>(rng.integer(cfg.min_frames, cfg.max_frames));
      Layout lay = sample_layout(cfg, rng, frames, fake[i], id);
      GeneratedUtterance g;
      g.features = synthesize(cfg, rng, frames, lay);
      g.record.id = id;
      g.record.path = std::string("feats/") + id + ".nepd";
      g.record.frames = frames;
      g.record.labels = labels_from_segments(frames, lay.segments);
      g.record.entities = std::move(lay.entities);
      g.record.segments = std::move(lay.segments);
      g.record.split = split;
      validate_record(g.record);
      out.push_back(std::move(g));
    }
  }
  return out;
}

Corpus to_corpus(const std::vector<GeneratedUtterance>& generated) {
  Corpus c;
  for (const auto& g : generated) {
    auto u = make_utterance(g.record, g.features.clone());
    (g.record.split == Split::Train ? c.train : g.record.split == Split::Dev ? c.dev : c.eval).push_back(std::move(u));
  }
  return c;
}

Corpus generate_corpus(const CorpusConfig& cfg) { return to_corpus(generate_utterances(cfg)); }

std::vector<SplitStats> corpus_stats(const std::vector<UtteranceRecord>& records) {
  std::vector<SplitStats> stats{{"Train"}, {"Dev"}, {"Eval"}};
  for (const auto& r : records) {
    auto& s = stats[static_cast<std::size_t>(r.split)];
    (r.is_fake() ? s.fake : s.bona_fide) += 1;
    s.all += 1;
    s.entity_count += r.entities.size();
    s.frames += r.frames;
    s.spoof_frames += static_cast<std::size_t>(std::count(r.labels.begin(), r.labels.end(), kSpoof));
  }
  SplitStats total{"Total"};
  for (const auto& s : stats) {
    total.bona_fide += s.bona_fide;
    total.fake += s.fake;
    total.all += s.all;
    total.entity_count += s.entity_count;
    total.frames += s.frames;
    total.spoof_frames += s.spoof_frames;
  }
  stats.push_back(total);
  return stats;
}

std::string stats_csv(const std::vector<SplitStats>& stats) {
  std::ostringstream os;
  os << "Name,Bona fide,Fake,All,Named Entities Count\n";
  for (const auto& s : stats) os << s.name << ',' << s.bona_fide << ',' << s.fake << ',' << s.all << ',' << s.entity_count << '\n';
  return os.str();
}

void write_corpus(const std::filesystem::path& dir, const std::vector<GeneratedUtterance>& generated, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw DataError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir / "feats");
  std::vector<UtteranceRecord> records;
  for (const auto& g : generated) {
    write_feature_file(dir / g.record.path, g.features);
    records.push_back(g.record);
  }
  write_manifest(dir / "manifest.jsonl", records);
  std::ofstream(dir / "stats.csv") << stats_csv(corpus_stats(records));
}

std::map<int, std::vector<UtteranceRecord>> split_by_forgery_level(const std::vector<UtteranceRecord>& manifest) {
  std::map<int, std::vector<UtteranceRecord>> levels;
  for (int k = 1; k <= 10; ++k) levels[k];
  for (const auto& r : manifest) {
    if (!r.is_fake()) continue;
    const auto k = static_cast<int>(r.segments.size());
    if (k >= 1 && k <= 10) levels[k].push_back(r);
  }
  return levels;
}

}  // namespace nepadd
