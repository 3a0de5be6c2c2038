#include "nepadd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "nepadd/errors.hpp"

namespace nepadd {

namespace {

// Shuffle, sort by length inside pools of a few batches, cut into batches,
// then shuffle the batch order. Batches hold utterances of similar T.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Utterance>& utts, std::size_t batch_size,
                                                   Rng& rng) {
  std::vector<std::size_t> idx(utts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  const std::size_t pool = batch_size * 8;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t p = 0; p < idx.size(); p += pool) {
    auto first = idx.begin() + static_cast<std::ptrdiff_t>(p);
    auto last = idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), p + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return utts[a].record.frames < utts[b].record.frames;
    });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - it))) {
      batches.emplace_back(it, it + static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - it)));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng.engine());
  return batches;
}

void check_zero_grads(const ParamStore& store, std::uint64_t step) {
  for (const auto& p : store.params()) {
    for (double g : p.tensor.grad()) {
      if (g != 0.0) throw ContractError("teacher gradient " + p.name + " is nonzero at step " + std::to_string(step));
    }
  }
}

constexpr std::uint64_t kBatchStream = 0x5DEECE66DULL;

}  // namespace

double tag_accuracy(TeacherModel& teacher, const std::vector<Utterance>& utts) {
  InferenceGuard guard(teacher.store());
  std::size_t hit = 0, total = 0;
  for (const auto& u : utts) {
    Tape tape;
    const Tensor logits = teacher.forward(tape, u.features).tag_logits;
    for (std::size_t t = 0; t < logits.rows(); ++t) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j) {
        if (logits(t, j) > logits(t, best)) best = j;
      }
      hit += static_cast<int>(best) == u.tag_classes[t] ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

TeacherReport pretrain_teacher(TeacherModel& teacher, const Corpus& corpus, const TeacherTrainConfig& cfg,
                               const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  const bool annotated = std::any_of(corpus.train.begin(), corpus.train.end(),
                                     [](const Utterance& u) { return !u.record.entities.empty(); });
  if (corpus.train.empty() || !annotated) throw DataError("teacher pretraining needs entity annotations in train split");

  TeacherReport rep;
  const auto& held = corpus.dev.empty() ? corpus.train : corpus.dev;
  std::size_t o_frames = 0, frames = 0;
  for (const auto& u : held) {
    for (int c : u.tag_classes) o_frames += c == static_cast<int>(Tag::O) ? 1 : 0;
    frames += u.tag_classes.size();
  }
  rep.majority_rate = static_cast<double>(o_frames) / static_cast<double>(frames);
  rep.untrained_accuracy = tag_accuracy(teacher, held);

  Adam adam(teacher.store());
  Rng rng(cfg.seed ^ kBatchStream);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t n = 0;
    for (const auto& batch : make_batches(corpus.train, cfg.batch_size, rng)) {
      Tape tape;
      Tensor acc;
      for (std::size_t i : batch) {
        const auto& u = corpus.train[i];
        Tensor l = pretrain_ner_loss(tape, teacher.forward(tape, u.features).tag_logits,
                                     std::span<const int>(u.tag_classes));
        acc = acc.defined() ? ops::add(tape, acc, l) : l;
      }
      Tensor loss = ops::affine(tape, acc, 1.0 / static_cast<double>(batch.size()));
      teacher.store().zero_grad();
      tape.backward(loss);
      adam.step(teacher.store(), cfg.lr, ++rep.steps);
      epoch_loss += loss.item();
      ++n;
    }
    rep.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    if (progress) progress("teacher epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(rep.epoch_losses.back()));
  }
  rep.final_loss = rep.epoch_losses.back();
  teacher.store().zero_grad();
  teacher.freeze();
  rep.heldout_accuracy = tag_accuracy(teacher, held);
  return rep;
}

Checkpoint teacher_checkpoint(const TeacherModel& teacher, const RunConfig& cfg, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  c.config_hash = config_hash(cfg);
  c.config_json = serialize_run_config(cfg);
  c.params = capture_params(teacher.store());
  return c;
}

LossParts utterance_loss(Tape& tape, const StudentModel& student, const TeacherModel* teacher, const Utterance& u,
                         const RunConfig& cfg) {
  const Aggregation mode = student.aggregation();
  NerOutput t;
  if (mode != Aggregation::None) {
    if (!teacher) throw ConfigError("aggregation " + std::string(aggregation_name(mode)) + " needs a teacher");
    t = teacher->forward(tape, u.features);
  }
  StudentOutput out = student.forward(tape, u.features, mode == Aggregation::None ? nullptr : &t);
  LossParts parts;
  parts.ce = bce_frame_loss(tape, out.probs, std::span<const double>(u.targets), cfg.train.pos_weight);
  if (mode == Aggregation::Transfer) {
    if (!cfg.transfer.lambda_kl) throw ConfigError("aggregation at requires transfer.lambda_kl");
    Tensor teacher_attn = t.attn;
    if (teacher_attn.dim(0) != out.student_attn.dim(0)) {
      teacher_attn = resample_attention(teacher_attn, out.student_attn.dim(0));
    }
    parts.kl = attention_transfer_loss(tape, teacher_attn, out.student_attn, cfg.transfer);
    parts.total = total_loss(tape, parts.ce, parts.kl, *cfg.transfer.lambda_kl);
  } else {
    if (!std::isfinite(parts.ce.item())) throw NumericError("non-finite BCE for " + u.record.id);
    parts.total = parts.ce;
  }
  return parts;
}

std::string log_entry_json(const LogEntry& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["lr"] = e.lr;
  j["loss_ce"] = e.loss_ce;
  if (e.loss_kl) j["loss_kl"] = *e.loss_kl;
  j["loss_total"] = e.loss_total;
  if (e.dev_eer) j["dev_eer"] = *e.dev_eer;
  return j.dump();
}

std::vector<UtteranceScores> score_utterances(StudentModel& student, TeacherModel* teacher,
                                              const std::vector<Utterance>& utts) {
  const bool fusion = student.aggregation() == Aggregation::Fusion;
  if (fusion && !teacher) throw ConfigError("scoring an af model needs its teacher");
  InferenceGuard guard(student.store());
  std::optional<InferenceGuard> tguard;
  if (teacher) tguard.emplace(teacher->store());
  std::vector<UtteranceScores> out;
  out.reserve(utts.size());
  for (const auto& u : utts) {
    Tape tape;
    NerOutput t;
    if (fusion) t = teacher->forward(tape, u.features);
    const Tensor probs = student.forward(tape, u.features, fusion ? &t : nullptr).probs;
    UtteranceScores s{u.record.id, {}, u.record.labels};
    s.spoof_scores.reserve(probs.numel());
    for (double p : probs.data()) s.spoof_scores.push_back(1.0 - p);
    out.push_back(std::move(s));
  }
  return out;
}

double evaluate_eer(StudentModel& student, TeacherModel* teacher, const std::vector<Utterance>& utts) {
  return compute_eer(pool_scores(score_utterances(student, teacher, utts))).eer;
}

TrainResult train_padd(StudentModel& student, TeacherModel* teacher, const Corpus& corpus, const RunConfig& cfg,
                       const TrainHooks& hooks) {
  cfg.train.validate();
  const Aggregation mode = student.aggregation();
  if (mode != cfg.train.aggregation) throw ConfigError("student was built for a different aggregation mode");
  if (mode == Aggregation::Transfer && !cfg.transfer.lambda_kl) {
    throw ConfigError("aggregation at requires transfer.lambda_kl (--lambda-kl)");
  }
  if (mode != Aggregation::None && !teacher) {
    throw ConfigError("aggregation " + std::string(aggregation_name(mode)) + " requires a teacher checkpoint");
  }
  if (corpus.train.empty() || corpus.dev.empty()) throw DataError("training needs non-empty train and dev splits");
  if (mode == Aggregation::None) teacher = nullptr;

  TrainResult res;
  if (teacher) {
    teacher->freeze();
    teacher->store().zero_grad();  // stale pretraining grads would mask leaks
    res.teacher_hash_before = params_sha256(teacher->store());
  }

  Adam adam(student.store());
  Rng rng(cfg.train.seed ^ kBatchStream);
  const std::size_t batches_per_epoch = (corpus.train.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
  const std::uint64_t total_steps = cfg.train.epochs * batches_per_epoch;

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (const auto& batch : make_batches(corpus.train, cfg.train.batch_size, rng)) {
      ++step;
      const double lr = noam_lr(step, cfg.train.base_lr, cfg.train.warmup_steps);
      Tape tape;
      Tensor acc;
      double ce_sum = 0.0, kl_sum = 0.0;
      for (std::size_t i : batch) {
        LossParts parts = utterance_loss(tape, student, teacher, corpus.train[i], cfg);
        ce_sum += parts.ce.item();
        if (parts.kl.defined()) kl_sum += parts.kl.item();
        acc = acc.defined() ? ops::add(tape, acc, parts.total) : parts.total;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      Tensor loss = ops::affine(tape, acc, inv);
      if (!std::isfinite(loss.item())) throw NumericError("non-finite loss at step " + std::to_string(step));
      student.store().zero_grad();
      tape.backward(loss);
      if (teacher) check_zero_grads(teacher->store(), step);
      if (hooks.after_backward) hooks.after_backward(step);
      adam.step(student.store(), lr, step);

      LogEntry e{step, lr, ce_sum * inv, std::nullopt, loss.item(), std::nullopt};
      if (mode == Aggregation::Transfer) e.loss_kl = kl_sum * inv;
      if (step % cfg.train.eval_every == 0 || step == total_steps) {
        const double eer = evaluate_eer(student, teacher, corpus.dev);
        e.dev_eer = eer;
        res.final_dev_eer = eer;
        if (res.best_step == 0 || eer < res.best_dev_eer) {
          res.best_dev_eer = eer;
          res.best_step = step;
          res.best_params = capture_params(student.store());
          res.best_optimizer = adam.state();
        }
      }
      if (hooks.on_log) hooks.on_log(e);
      res.log.push_back(e);
    }
  }
  res.steps = step;
  res.final_optimizer = adam.state();
  if (teacher) {
    res.teacher_hash_after = params_sha256(teacher->store());
    if (res.teacher_hash_after != res.teacher_hash_before) throw ContractError("teacher parameters changed during training");
  }
  return res;
}

Checkpoint model_checkpoint(const StudentModel& student, const TeacherModel* teacher, const AdamState& adam,
                            const RunConfig& cfg, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  c.config_hash = config_hash(cfg);
  c.config_json = serialize_run_config(cfg);
  c.params = capture_params(student.store());
  if (teacher) {
    auto tp = capture_params(teacher->store());
    c.params.insert(c.params.end(), tp.begin(), tp.end());
  }
  c.optimizer = capture_optimizer(student.store(), adam);
  return c;
}

}  // namespace nepadd
