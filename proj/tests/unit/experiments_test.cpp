#include "doctest.h"

#include <atomic>
#include <regex>

#include "fixtures.hpp"
#include "test_util.hpp"
#include "nepadd/errors.hpp"
#include "nepadd/experiments.hpp"

using namespace nepadd;
using nepadd::testing::tiny_run_config;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("LambdaGrid.TenPointsFromPointOneToOne") {
  auto g = lambda_grid(0.1, 1.0, 0.1);
  REQUIRE_EQ(g.size(), 10u);
  for (int i = 0; i < 10; ++i) CHECK_DOUBLE_EQ(g[i], (i + 1) / 10.0);
  CHECK_THROWS_AS(lambda_grid(0.1, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(lambda_grid(0.1, 1.0, -0.1), ConfigError);
  CHECK_EQ(lambda_grid(0.5, 0.5, 0.1).size(), 1u);
}

TEST_CASE("Sweep.BestIsArgminOfTable") {
  SweepResult r;
  r.rows = {{0.1, 0.3, 0.2}, {0.2, 0.1, 0.5}, {0.3, 0.1, 0.05}, {0.4, 0.2, 0.1}};
  r.best_index = argmin_dev(r.rows);
  CHECK_EQ(r.best_index, 1u);  // first on ties
  CHECK_DOUBLE_EQ(r.best_lambda(), 0.2);
  const std::string csv = sweep_csv(r);
  CHECK_EQ(csv.substr(0, csv.find('\n')), "lambda_kl,dev_eer,eval_eer,best");
  CHECK_EQ(count(csv, "\n"), 5u);
}

TEST_CASE("Charts.OnePolylinePerSeries") {
  LineChart c{"t", "x", "y", {{"a", {{0.1, 1}, {0.2, 2}, {0.3, 1.5}}}, {"b", {{1, 1}}}}};
  const std::string svg = render_svg(c);
  CHECK_NE(svg.find("<svg"), std::string::npos);
  CHECK_EQ(count(svg, "<polyline"), 2u);
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, std::regex("<polyline[^>]*points=\"([^\"]*)\"")));
  CHECK_EQ(count(m[1].str(), ","), 3u);
}

TEST_CASE("Parallel.RunsAllAndRethrows") {
  std::atomic<int> sum{0};
  parallel_for(50, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  CHECK_EQ(sum.load(), 49 * 50 / 2);
  CHECK_THROWS_AS(parallel_for(8, 3, [](std::size_t i) {
                 if (i == 5) throw DataError("boom");
               }),
               DataError);
}

TEST_CASE("Forgery.LevelSubsetKeepsOnlyThatLevel") {
  Corpus c = generate_corpus(tiny_run_config().corpus);
  for (int level = 1; level <= 3; ++level) {
    Corpus s = level_subset(c, level);
    for (Split sp : {Split::Train, Split::Dev, Split::Eval})
      for (const auto& u : s.split(sp)) {
        if (u.record.is_fake()) CHECK_EQ(static_cast<int>(u.record.segments.size()), level);
      }
  }
}

TEST_CASE("Forgery.StudyTableHasTenRowsAndIsRepeatable") {
  auto cfg = tiny_run_config();
  cfg.train.epochs = 1;
  Corpus c = generate_corpus(cfg.corpus);
  auto a = forgery_study(c, cfg, nullptr, {Aggregation::None}, 2);
  auto b = forgery_study(c, cfg, nullptr, {Aggregation::None}, 1);
  REQUIRE_EQ(a.rows.size(), 10u);
  for (int k = 0; k < 10; ++k) CHECK_EQ(a.rows[k].level, k + 1);
  CHECK_EQ(forgery_csv(a), forgery_csv(b));
  // max_segments = 3 leaves levels 4..10 empty
  for (int k = 3; k < 10; ++k) CHECK_FALSE(a.rows[k].eer[0].has_value());
  CHECK_GE(a.warnings.size(), 7u);
}
