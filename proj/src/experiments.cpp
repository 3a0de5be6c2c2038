#include "nepadd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "nepadd/errors.hpp"

namespace nepadd {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RunOutcome run_experiment(const Corpus& corpus, const RunConfig& cfg, const std::vector<ParamRecord>* teacher_params,
                          const ProgressFn& progress) {
  RunOutcome out;
  out.mode = cfg.train.aggregation;
  out.lambda_kl = cfg.transfer.lambda_kl;
  out.seed = cfg.train.seed;

  std::unique_ptr<TeacherModel> teacher;
  if (out.mode != Aggregation::None) {
    if (!teacher_params) throw ConfigError("aggregation " + std::string(aggregation_name(out.mode)) + " needs a teacher");
    teacher = std::make_unique<TeacherModel>(cfg.ner, cfg.teacher_train.seed);
    restore_params(*teacher_params, teacher->store());
    teacher->freeze();
  }
  StudentModel student(cfg, cfg.train.seed);
  TrainHooks hooks;
  if (progress) {
    hooks.on_log = [&](const LogEntry& e) {
      if (!e.dev_eer) return;
      std::ostringstream os;
      os << aggregation_name(out.mode);
      if (out.mode == Aggregation::Transfer) os << " lambda=" << *out.lambda_kl;
      os << " seed=" << out.seed << " step=" << e.step << " dev_eer=" << *e.dev_eer;
      progress(os.str());
    };
  }
  TrainResult res = train_padd(student, teacher.get(), corpus, cfg, hooks);
  out.best_dev_eer = res.best_dev_eer;
  out.final_dev_eer = res.final_dev_eer;
  restore_params(res.best_params, student.store());
  out.eval_scores = score_utterances(student, teacher.get(), corpus.eval);
  out.eval_eer = compute_eer(pool_scores(out.eval_scores)).eer;
  return out;
}

std::vector<double> lambda_grid(double from, double to, double step) {
  if (!(step > 0.0)) throw ConfigError("sweep: step must be positive");
  if (!(to >= from)) throw ConfigError("sweep: --to must be >= --from");
  if (from < 0.0) throw ConfigError("sweep: lambda must be non-negative");
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < n; ++i) grid.push_back(std::round((from + static_cast<double>(i) * step) * 1e9) / 1e9);
  return grid;
}

std::size_t argmin_dev(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw ContractError("sweep: empty table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].dev_eer < rows[best].dev_eer) best = i;
  }
  return best;
}

SweepResult sweep_lambda(const Corpus& corpus, const RunConfig& base, const std::vector<ParamRecord>& teacher,
                         const std::vector<double>& grid, std::size_t jobs, const ProgressFn& progress) {
  if (grid.empty()) throw ConfigError("sweep: empty lambda grid");
  SweepResult r;
  r.rows.resize(grid.size());
  std::mutex log_mu;
  ProgressFn locked;
  if (progress) {
    locked = [&](const std::string& s) {
      std::lock_guard<std::mutex> lock(log_mu);
      progress(s);
    };
  }
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    RunConfig cfg = base;
    cfg.train.aggregation = Aggregation::Transfer;
    cfg.transfer.lambda_kl = grid[i];
    RunOutcome o = run_experiment(corpus, cfg, &teacher, locked);
    r.rows[i] = {grid[i], o.best_dev_eer, o.eval_eer};
  });
  r.best_index = argmin_dev(r.rows);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_lambda(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string sweep_csv(const SweepResult& r) {
  std::string s = "lambda_kl,dev_eer,eval_eer,best\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    s += fmt_lambda(row.lambda) + "," + fmt(row.dev_eer) + "," + fmt(row.eval_eer) + "," +
         (i == r.best_index ? "1" : "0") + "\n";
  }
  return s;
}

Corpus level_subset(const Corpus& corpus, int level) {
  auto keep = [level](const std::vector<Utterance>& in) {
    std::vector<Utterance> out;
    for (const auto& u : in) {
      const auto k = static_cast<int>(u.record.segments.size());
      if (k == 0 || k == level) out.push_back(u);
    }
    return out;
  };
  return Corpus{keep(corpus.train), keep(corpus.dev), keep(corpus.eval)};
}

ForgeryStudy forgery_study(const Corpus& corpus, const RunConfig& base, const std::vector<ParamRecord>* teacher,
                           const std::vector<Aggregation>& modes, std::size_t jobs, std::size_t min_fakes,
                           const ProgressFn& progress) {
  if (modes.empty()) throw ConfigError("forgery-study: no aggregation modes requested");
  ForgeryStudy s;
  s.modes = modes;
  std::vector<Corpus> subsets;
  std::vector<int> runnable;
  for (int level = 1; level <= 10; ++level) {
    s.rows.push_back({level, std::vector<std::optional<double>>(modes.size())});
    Corpus sub = level_subset(corpus, level);
    auto fakes = [](const std::vector<Utterance>& v) {
      return static_cast<std::size_t>(
          std::count_if(v.begin(), v.end(), [](const Utterance& u) { return u.record.is_fake(); }));
    };
    const std::size_t ft = fakes(sub.train), fd = fakes(sub.dev), fe = fakes(sub.eval);
    if (ft < min_fakes || fd < min_fakes || fe < min_fakes) {
      s.warnings.push_back("level " + std::to_string(level) + " skipped: fake utterances train=" + std::to_string(ft) +
                           " dev=" + std::to_string(fd) + " eval=" + std::to_string(fe));
      subsets.emplace_back();
      continue;
    }
    subsets.push_back(std::move(sub));
    runnable.push_back(level);
  }
  std::mutex log_mu;
  ProgressFn locked;
  if (progress) {
    locked = [&](const std::string& msg) {
      std::lock_guard<std::mutex> lock(log_mu);
      progress(msg);
    };
  }
  const std::size_t n = runnable.size() * modes.size();
  parallel_for(n, jobs, [&](std::size_t k) {
    const int level = runnable[k / modes.size()];
    const std::size_t m = k % modes.size();
    RunConfig cfg = base;
    cfg.train.aggregation = modes[m];
    RunOutcome o = run_experiment(subsets[static_cast<std::size_t>(level - 1)], cfg, teacher,
                                  locked ? ProgressFn([&, level](const std::string& msg) {
                                    locked("level " + std::to_string(level) + " " + msg);
                                  })
                                         : ProgressFn{});
    s.rows[static_cast<std::size_t>(level - 1)].eer[m] = o.eval_eer;
  });
  return s;
}

std::string forgery_csv(const ForgeryStudy& s) {
  std::string out = "level";
  for (auto m : s.modes) out += "," + std::string(aggregation_name(m)) + "_eer";
  out += "\n";
  for (const auto& row : s.rows) {
    out += std::to_string(row.level);
    for (const auto& e : row.eer) out += "," + (e ? fmt(*e) : std::string());
    out += "\n";
  }
  return out;
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1;
  ymax += 0.05 * (ymax - ymin);
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(chart.title)
     << "</text>\n";
  os << "<g stroke=\"black\"><line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\"/><line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\"/></g>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
     << escape_xml(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape_xml(chart.y_label) << "</text>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* c = colors[k % 5];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      os << (i ? " " : "") << px(s.points[i].first) << ',' << py(s.points[i].second);
    }
    os << "\"/>\n";
    const double ly = T + 20 + 18 * static_cast<double>(k);
    os << "<text x=\"" << W - R + 12 << "\" y=\"" << ly << "\" fill=\"" << c << "\">" << escape_xml(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nepadd
