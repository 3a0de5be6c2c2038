#include "nepadd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "nepadd/errors.hpp"

namespace nepadd {

std::vector<DetPoint> det_curve(const ScoreSet& scores) {
  std::size_t n_spoof = 0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.spoof_score)) throw DomainError("eer: non-finite score");
    n_spoof += s.is_spoof ? 1 : 0;
  }
  const std::size_t n_bona = scores.size() - n_spoof;
  if (n_spoof == 0 || n_bona == 0) {
    throw DomainError("eer: undefined with " + std::to_string(n_spoof) + " spoof and " + std::to_string(n_bona) +
                      " bona fide frames");
  }
  ScoreSet sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredFrame& a, const ScoredFrame& b) { return a.spoof_score < b.spoof_score; });

  std::vector<DetPoint> pts;
  std::size_t spoof_below = 0, bona_below = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i].spoof_score;
    pts.push_back({t, static_cast<double>(n_bona - bona_below) / static_cast<double>(n_bona),
                   static_cast<double>(spoof_below) / static_cast<double>(n_spoof)});
    while (i < sorted.size() && sorted[i].spoof_score == t) {
      (sorted[i].is_spoof ? spoof_below : bona_below) += 1;
      ++i;
    }
  }
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return pts;
}

EerResult compute_eer(const ScoreSet& scores) {
  const auto pts = det_curve(scores);
  // FNR - FPR starts at -1 and ends at +1 and is non-decreasing.
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d1 = pts[i].fnr - pts[i].fpr;
    if (d1 < 0) continue;
    if (d1 == 0 || i == 0) return {pts[i].fpr, pts[i].threshold};
    const DetPoint& a = pts[i - 1];
    const DetPoint& b = pts[i];
    const double d0 = a.fnr - a.fpr;
    const double w = -d0 / (d1 - d0);
    const double eer = a.fpr + w * (b.fpr - a.fpr);
    const double thr = std::isfinite(b.threshold) ? a.threshold + w * (b.threshold - a.threshold) : a.threshold;
    return {eer, thr};
  }
  return {pts.back().fpr, pts.back().threshold};  // unreachable: last point has d = 1
}

bool UtteranceScores::fake() const {
  return std::find(labels.begin(), labels.end(), kSpoof) != labels.end();
}

ScoreSet pool_scores(const std::vector<UtteranceScores>& utts) {
  ScoreSet out;
  for (const auto& u : utts) {
    if (u.spoof_scores.size() != u.labels.size()) {
      throw DimensionError("scores for " + u.id + ": " + std::to_string(u.spoof_scores.size()) + " vs " +
                           std::to_string(u.labels.size()) + " labels");
    }
    for (std::size_t t = 0; t < u.labels.size(); ++t) out.push_back({u.spoof_scores[t], u.labels[t] == kSpoof});
  }
  return out;
}

std::vector<LevelEer> eer_by_forgery_level(const std::vector<UtteranceScores>& results,
                                           const std::map<int, std::vector<UtteranceRecord>>& levels,
                                           std::vector<std::string>* warnings) {
  std::unordered_map<std::string, const UtteranceScores*> by_id;
  std::vector<UtteranceScores> bona;
  for (const auto& r : results) {
    by_id[r.id] = &r;
    if (!r.fake()) bona.push_back(r);
  }
  std::vector<LevelEer> table;
  for (const auto& [level, records] : levels) {
    std::vector<UtteranceScores> pool = bona;
    std::size_t found = 0;
    for (const auto& rec : records) {
      auto it = by_id.find(rec.id);
      if (it == by_id.end()) continue;
      pool.push_back(*it->second);
      ++found;
    }
    if (found == 0) {
      if (warnings) warnings->push_back("level " + std::to_string(level) + ": no scored utterances, skipped");
      continue;
    }
    try {
      table.push_back({level, found, compute_eer(pool_scores(pool))});
    } catch (const DomainError& e) {
      if (warnings) warnings->push_back("level " + std::to_string(level) + ": " + e.what());
    }
  }
  return table;
}

void write_score_dump(const std::filesystem::path& path, const std::vector<UtteranceScores>& utts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& u : utts) {
    for (std::size_t t = 0; t < u.labels.size(); ++t) {
      nlohmann::ordered_json j;
      j["utt_id"] = u.id;
      j["frame"] = t;
      j["spoof_score"] = u.spoof_scores[t];
      j["label"] = u.labels[t];
      out << j.dump() << '\n';
    }
  }
}

std::vector<UtteranceScores> read_score_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<UtteranceScores> utts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string id = j.at("utt_id").get<std::string>();
      if (utts.empty() || utts.back().id != id) utts.push_back({id, {}, {}});
      if (j.at("frame").get<std::size_t>() != utts.back().labels.size()) throw DataError("frames out of order");
      utts.back().spoof_scores.push_back(j.at("spoof_score").get<double>());
      utts.back().labels.push_back(j.at("label").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return utts;
}

std::string format_eer_percent(double eer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * eer);
  return buf;
}

}  // namespace nepadd
