#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nepadd/corpus.hpp"

namespace nepadd {

// Higher spoof_score means "more likely spoofed"; s = 1 - p_authentic.
struct ScoredFrame {
  double spoof_score = 0.0;
  bool is_spoof = false;
};
using ScoreSet = std::vector<ScoredFrame>;

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Frames are called spoof when score >= t. FPR(t) = P(s >= t | bona fide),
// FNR(t) = P(s < t | spoof); thresholds are the distinct scores plus +inf,
// and the crossing is interpolated linearly between neighbouring points.
// Throws DomainError when either class is missing.
EerResult compute_eer(const ScoreSet& scores);

struct DetPoint {
  double threshold;
  double fpr;
  double fnr;
};
std::vector<DetPoint> det_curve(const ScoreSet& scores);

struct UtteranceScores {
  std::string id;
  std::vector<double> spoof_scores;
  std::vector<int> labels;  // 1 = authentic
  bool fake() const;
};

ScoreSet pool_scores(const std::vector<UtteranceScores>& utts);

struct LevelEer {
  int level = 0;
  std::size_t utterances = 0;
  EerResult result;
};

// Per level: frames of that level's fake utterances plus every bona fide
// utterance in `results`. Levels with no scored utterance are skipped and
// reported through `warnings`.
std::vector<LevelEer> eer_by_forgery_level(const std::vector<UtteranceScores>& results,
                                           const std::map<int, std::vector<UtteranceRecord>>& levels,
                                           std::vector<std::string>* warnings = nullptr);

// JSON lines {utt_id, frame, spoof_score, label}.
void write_score_dump(const std::filesystem::path& path, const std::vector<UtteranceScores>& utts);
std::vector<UtteranceScores> read_score_dump(const std::filesystem::path& path);

// "7.89" style: percent with two decimals.
std::string format_eer_percent(double eer);

}  // namespace nepadd
