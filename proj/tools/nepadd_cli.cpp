// nepadd: corpus generation, teacher pretraining, training, evaluation and
// the two experiment drivers. Errors end the process with one JSON line on
// stderr and exit code 2 (config), 3 (data), 4 (numeric) or 1 (other).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nepadd/errors.hpp"
#include "nepadd/experiments.hpp"

namespace fs = std::filesystem;
using namespace nepadd;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::string teacher;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  apply_seed_override(cfg);
  if (c.seed) {
    cfg.corpus.seed = *c.seed;
    cfg.train.seed = *c.seed;
    cfg.teacher_train.seed = *c.seed;
  }
  if (c.epochs) cfg.train.epochs = *c.epochs;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

void ensure_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
}

void progress(const std::string& s) { std::cerr << s << std::endl; }

// Teacher weights plus the ner section they were trained with.
struct LoadedTeacher {
  NerBranchConfig ner;
  std::uint64_t seed = 0;
  std::vector<ParamRecord> params;
};

LoadedTeacher load_teacher(const std::string& path) {
  if (path.empty()) throw ConfigError("a teacher checkpoint is required (--teacher)");
  if (!fs::exists(path)) throw DataError("teacher checkpoint not found: " + path);
  Checkpoint ck = load_checkpoint(path);
  RunConfig tc = parse_run_config(ck.config_json);
  LoadedTeacher t{tc.ner, tc.teacher_train.seed, {}};
  for (auto& r : ck.params) {
    if (r.name.rfind("ner.", 0) == 0) t.params.push_back(std::move(r));
  }
  if (t.params.empty()) throw DataError(path + " holds no teacher parameters");
  return t;
}

void adopt_teacher(RunConfig& cfg, const LoadedTeacher& t) {
  cfg.ner = t.ner;
  cfg.teacher_train.seed = t.seed;
}

int cmd_gen_data(const Common& c, bool force) {
  RunConfig cfg = load_config(c);
  if (c.out.empty()) throw ConfigError("--out is required");
  cfg.validate();
  const auto gen = generate_utterances(cfg.corpus);
  write_corpus(c.out, gen, force);
  write_text(fs::path(c.out) / "config.json", serialize_run_config(cfg));
  std::vector<UtteranceRecord> recs;
  for (const auto& g : gen) recs.push_back(g.record);
  std::cout << stats_csv(corpus_stats(recs));
  return 0;
}

int cmd_pretrain(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.epochs) cfg.teacher_train.epochs = *c.epochs;
  cfg.validate();
  ensure_out(c.out);
  Corpus corpus = load_corpus(c.data);
  TeacherModel teacher(cfg.ner, cfg.teacher_train.seed);
  TeacherReport rep = pretrain_teacher(teacher, corpus, cfg.teacher_train, progress);
  save_checkpoint(fs::path(c.out) / "teacher.ckpt", teacher_checkpoint(teacher, cfg, rep.steps));
  nlohmann::ordered_json j;
  j["steps"] = rep.steps;
  j["final_loss"] = rep.final_loss;
  j["epoch_losses"] = rep.epoch_losses;
  j["untrained_accuracy"] = rep.untrained_accuracy;
  j["heldout_accuracy"] = rep.heldout_accuracy;
  j["majority_rate"] = rep.majority_rate;
  j["teacher_sha256"] = params_sha256(teacher.store());
  write_text(fs::path(c.out) / "teacher_report.json", j.dump(2) + "\n");
  std::printf("held-out tag accuracy %.4f (majority O rate %.4f)\n", rep.heldout_accuracy, rep.majority_rate);
  return 0;
}

int cmd_train(const Common& c, const std::string& aggregation, std::optional<double> lambda) {
  RunConfig cfg = load_config(c);
  if (!aggregation.empty()) cfg.train.aggregation = parse_aggregation(aggregation);
  if (lambda) cfg.transfer.lambda_kl = *lambda;
  const Aggregation mode = cfg.train.aggregation;
  if (mode == Aggregation::Transfer && !cfg.transfer.lambda_kl) {
    throw ConfigError("--aggregation at requires --lambda-kl (or transfer.lambda_kl in the config)");
  }
  std::optional<LoadedTeacher> lt;
  if (mode != Aggregation::None) {
    if (c.teacher.empty()) {
      throw ConfigError("train --aggregation " + std::string(aggregation_name(mode)) + " requires --teacher <ckpt>");
    }
    lt = load_teacher(c.teacher);
    adopt_teacher(cfg, *lt);
  }
  cfg.validate();
  ensure_out(c.out);
  Corpus corpus = load_corpus(c.data);

  std::unique_ptr<TeacherModel> teacher;
  if (lt) {
    teacher = std::make_unique<TeacherModel>(cfg.ner, cfg.teacher_train.seed);
    restore_params(lt->params, teacher->store());
    teacher->freeze();
  }
  StudentModel student(cfg, cfg.train.seed);
  std::ofstream log(fs::path(c.out) / "train_log.jsonl");
  TrainHooks hooks;
  hooks.on_log = [&](const LogEntry& e) {
    log << log_entry_json(e) << '\n';
    if (e.dev_eer) progress("step " + std::to_string(e.step) + " dev EER " + format_eer_percent(*e.dev_eer) + "%");
  };
  TrainResult res = train_padd(student, teacher.get(), corpus, cfg, hooks);
  log.close();

  save_checkpoint(fs::path(c.out) / "final.ckpt",
                  model_checkpoint(student, teacher.get(), res.final_optimizer, cfg, res.steps));
  restore_params(res.best_params, student.store());
  save_checkpoint(fs::path(c.out) / "best.ckpt",
                  model_checkpoint(student, teacher.get(), res.best_optimizer, cfg, res.best_step));
  write_text(fs::path(c.out) / "config.json", serialize_run_config(cfg));

  nlohmann::ordered_json j;
  j["aggregation"] = std::string(aggregation_name(mode));
  j["lambda_kl"] = cfg.transfer.lambda_kl ? nlohmann::json(*cfg.transfer.lambda_kl) : nlohmann::json(nullptr);
  j["steps"] = res.steps;
  j["best_step"] = res.best_step;
  j["best_dev_eer"] = res.best_dev_eer;
  j["final_dev_eer"] = res.final_dev_eer;
  if (teacher) {
    j["teacher_sha256_before"] = res.teacher_hash_before;
    j["teacher_sha256_after"] = res.teacher_hash_after;
  }
  write_text(fs::path(c.out) / "summary.json", j.dump(2) + "\n");
  std::printf("best dev EER %s%% (step %llu), final dev EER %s%%\n", format_eer_percent(res.best_dev_eer).c_str(),
              static_cast<unsigned long long>(res.best_step), format_eer_percent(res.final_dev_eer).c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const Common& c, const std::string& split) {
  if (ckpt_path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(ckpt_path)) throw DataError("checkpoint not found: " + ckpt_path);
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = parse_run_config(ck.config_json);
  if (config_hash(cfg) != ck.config_hash) throw DataError("checkpoint config hash mismatch");
  StudentModel student(cfg, cfg.train.seed);
  restore_params(ck.params, student.store());
  std::unique_ptr<TeacherModel> teacher;
  if (cfg.train.aggregation == Aggregation::Fusion) {
    teacher = std::make_unique<TeacherModel>(cfg.ner, cfg.teacher_train.seed);
    restore_params(ck.params, teacher->store());
    teacher->freeze();
  }
  Corpus corpus = load_corpus(c.data);
  const auto& utts = corpus.split(parse_split(split));
  auto scores = score_utterances(student, teacher.get(), utts);
  const EerResult r = compute_eer(pool_scores(scores));
  if (!c.out.empty()) {
    ensure_out(c.out);
    write_score_dump(fs::path(c.out) / "scores.jsonl", scores);
    std::vector<UtteranceRecord> recs;
    for (const auto& u : utts) recs.push_back(u.record);
    std::vector<std::string> warnings;
    auto table = eer_by_forgery_level(scores, split_by_forgery_level(recs), &warnings);
    for (const auto& w : warnings) progress("warning: " + w);
    std::string csv = "level,utterances,eer\n";
    for (const auto& row : table) {
      csv += std::to_string(row.level) + "," + std::to_string(row.utterances) + "," +
             std::to_string(row.result.eer) + "\n";
    }
    write_text(fs::path(c.out) / "eer_by_level.csv", csv);
  }
  std::printf("%s\n", format_eer_percent(r.eer).c_str());
  return 0;
}

int cmd_sweep(const Common& c, double from, double to, double step, std::size_t jobs) {
  const auto grid = lambda_grid(from, to, step);
  RunConfig cfg = load_config(c);
  cfg.train.aggregation = Aggregation::Transfer;
  cfg.transfer.lambda_kl = grid.front();
  LoadedTeacher lt = load_teacher(c.teacher);
  adopt_teacher(cfg, lt);
  cfg.validate();
  ensure_out(c.out);
  Corpus corpus = load_corpus(c.data);
  SweepResult r = sweep_lambda(corpus, cfg, lt.params, grid, jobs, progress);
  const std::string csv = sweep_csv(r);
  write_text(fs::path(c.out) / "sweep.csv", csv);
  LineChart chart{"EER vs lambda_KL (attention transfer)", "lambda_KL", "eval EER (%)", {{"at", {}}}};
  for (const auto& row : r.rows) chart.series[0].points.emplace_back(row.lambda, 100.0 * row.eval_eer);
  write_text(fs::path(c.out) / "sweep.svg", render_svg(chart));
  std::cout << csv;
  std::printf("best lambda_kl %g (dev EER %s%%)\n", r.best_lambda(), format_eer_percent(r.rows[r.best_index].dev_eer).c_str());
  return 0;
}

int cmd_forgery(const Common& c, const std::string& modes_arg, std::size_t jobs, std::size_t min_fakes,
                std::optional<double> lambda) {
  RunConfig cfg = load_config(c);
  if (lambda) cfg.transfer.lambda_kl = *lambda;
  std::vector<Aggregation> modes;
  std::stringstream ss(modes_arg);
  for (std::string m; std::getline(ss, m, ',');) {
    if (!m.empty()) modes.push_back(parse_aggregation(m));
  }
  bool needs_teacher = false;
  for (auto m : modes) {
    needs_teacher |= m != Aggregation::None;
    if (m == Aggregation::Transfer && !cfg.transfer.lambda_kl) throw ConfigError("mode at requires --lambda-kl");
  }
  std::optional<LoadedTeacher> lt;
  if (needs_teacher) {
    lt = load_teacher(c.teacher);
    adopt_teacher(cfg, *lt);
  }
  cfg.validate();
  ensure_out(c.out);
  Corpus corpus = load_corpus(c.data);
  ForgeryStudy s = forgery_study(corpus, cfg, lt ? &lt->params : nullptr, modes, jobs, min_fakes, progress);
  for (const auto& w : s.warnings) progress("warning: " + w);
  const std::string csv = forgery_csv(s);
  write_text(fs::path(c.out) / "forgery.csv", csv);
  LineChart chart{"EER vs forgery level", "forgery level (spoofed segments)", "eval EER (%)", {}};
  for (std::size_t m = 0; m < modes.size(); ++m) {
    Series series{std::string(aggregation_name(modes[m])), {}};
    for (const auto& row : s.rows) {
      if (row.eer[m]) series.points.emplace_back(row.level, 100.0 * *row.eer[m]);
    }
    chart.series.push_back(std::move(series));
  }
  write_text(fs::path(c.out) / "forgery.svg", render_svg(chart));
  std::cout << csv;
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
    default: return 1;
  }
}

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-aware partial spoof detection: data, training and experiments"};
  app.require_subcommand(1);
  Common c;
  bool force = false;
  std::string aggregation, checkpoint, split = "eval", modes = "none,af,at";
  std::optional<double> lambda;
  double from = 0.1, to = 1.0, step = 0.1;
  std::size_t jobs = 1, min_fakes = 1;

  auto add_common = [&](CLI::App* sub, bool data, bool teacher) {
    sub->add_option("--config", c.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory")->required();
    if (data) sub->add_option("--data", c.data, "corpus directory from gen-data")->required();
    if (teacher) sub->add_option("--teacher", c.teacher, "teacher checkpoint from pretrain-ner");
    sub->add_option("--seed", c.seed, "overrides every seed in the config");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, false, false);
  gen->add_flag("--force", force, "write into a non-empty directory");

  auto* pre = app.add_subcommand("pretrain-ner", "pretrain and freeze the entity teacher");
  add_common(pre, true, false);
  pre->add_option("--epochs", c.epochs, "teacher epochs");

  auto* train = app.add_subcommand("train", "train the detector");
  add_common(train, true, true);
  train->add_option("--aggregation", aggregation, "af | at | none");
  train->add_option("--lambda-kl", lambda, "weight of the attention transfer loss");
  train->add_option("--epochs", c.epochs, "training epochs");

  auto* eval = app.add_subcommand("eval", "frame-level EER of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", c.data, "corpus directory")->required();
  eval->add_option("--split", split, "train | dev | eval");
  eval->add_option("--out", c.out, "write scores.jsonl and eer_by_level.csv here");

  auto* sweep = app.add_subcommand("sweep-lambda", "attention transfer runs over a lambda grid");
  add_common(sweep, true, true);
  sweep->add_option("--from", from);
  sweep->add_option("--to", to);
  sweep->add_option("--step", step);
  sweep->add_option("--jobs", jobs, "concurrent runs");
  sweep->add_option("--epochs", c.epochs, "training epochs per run");

  auto* forgery = app.add_subcommand("forgery-study", "per-forgery-level training and evaluation");
  add_common(forgery, true, true);
  forgery->add_option("--modes", modes, "comma-separated aggregation modes");
  forgery->add_option("--lambda-kl", lambda, "lambda for mode at");
  forgery->add_option("--jobs", jobs, "concurrent runs");
  forgery->add_option("--min-fakes", min_fakes, "skip levels with fewer fake utterances in any split");
  forgery->add_option("--epochs", c.epochs, "training epochs per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), 2);
  }

  try {
    if (*gen) return cmd_gen_data(c, force);
    if (*pre) return cmd_pretrain(c);
    if (*train) return cmd_train(c, aggregation, lambda);
    if (*eval) return cmd_eval(checkpoint, c, split);
    if (*sweep) return cmd_sweep(c, from, to, step, jobs);
    if (*forgery) return cmd_forgery(c, modes, jobs, min_fakes, lambda);
  } catch (const Error& e) {
    return fail(error_kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("data", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
