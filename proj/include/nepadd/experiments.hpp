#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nepadd/training.hpp"

namespace nepadd {

using ProgressFn = std::function<void(const std::string&)>;

// One complete student run on a private copy of the teacher.
struct RunOutcome {
  Aggregation mode = Aggregation::None;
  std::optional<double> lambda_kl;
  std::uint64_t seed = 0;
  double best_dev_eer = 1.0;
  double final_dev_eer = 1.0;
  double eval_eer = 1.0;  // best-dev parameters on the eval split
  std::vector<UtteranceScores> eval_scores;
};

RunOutcome run_experiment(const Corpus& corpus, const RunConfig& cfg, const std::vector<ParamRecord>* teacher,
                          const ProgressFn& progress = {});

// from, from+step, ..., up to `to` inclusive (with 1e-9 slack). Values are
// rounded to 1e-9 so 0.1 steps print cleanly. step <= 0 is a ConfigError.
std::vector<double> lambda_grid(double from, double to, double step);

struct SweepRow {
  double lambda = 0.0;
  double dev_eer = 1.0;
  double eval_eer = 1.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best_index = 0;  // argmin dev_eer, first on ties
  double best_lambda() const { return rows.at(best_index).lambda; }
};

// AT runs, one per grid point; up to `jobs` run concurrently.
SweepResult sweep_lambda(const Corpus& corpus, const RunConfig& base, const std::vector<ParamRecord>& teacher,
                         const std::vector<double>& grid, std::size_t jobs, const ProgressFn& progress = {});
std::size_t argmin_dev(const std::vector<SweepRow>& rows);
std::string sweep_csv(const SweepResult& r);

// Train/dev/eval restricted to bona fide utterances plus fakes with exactly
// `level` spoof segments.
Corpus level_subset(const Corpus& corpus, int level);

struct ForgeryRow {
  int level = 0;
  std::vector<std::optional<double>> eer;  // one per mode; empty when skipped
};

struct ForgeryStudy {
  std::vector<Aggregation> modes;
  std::vector<ForgeryRow> rows;  // levels 1..10, always 10 rows
  std::vector<std::string> warnings;
};

// A level is skipped (with a warning) when any split has fewer than
// `min_fakes` fake utterances at that level.
ForgeryStudy forgery_study(const Corpus& corpus, const RunConfig& base, const std::vector<ParamRecord>* teacher,
                           const std::vector<Aggregation>& modes, std::size_t jobs, std::size_t min_fakes = 1,
                           const ProgressFn& progress = {});
std::string forgery_csv(const ForgeryStudy& s);

// ---- plots ----

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Self-contained SVG; each series becomes one <polyline>.
std::string render_svg(const LineChart& chart);

// Runs f(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f);

}  // namespace nepadd
