#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nepadd/checkpoint.hpp"
#include "nepadd/config.hpp"
#include "nepadd/metrics.hpp"
#include "nepadd/model.hpp"

namespace nepadd {

// ---- teacher ----

struct TeacherReport {
  std::size_t steps = 0;
  double final_loss = 0.0;           // mean loss of the last epoch
  double untrained_accuracy = 0.0;   // dev frame-tag accuracy before training
  double heldout_accuracy = 0.0;     // dev frame-tag accuracy after training
  double majority_rate = 0.0;        // dev share of tag O
  std::vector<double> epoch_losses;
};

// Plain Adam at a fixed rate; freezes the teacher afterwards. Throws
// DataError when the training split carries no entity annotations.
TeacherReport pretrain_teacher(TeacherModel& teacher, const Corpus& corpus, const TeacherTrainConfig& cfg,
                               const std::function<void(const std::string&)>& progress = {});

// Raw argmax accuracy over all frames.
double tag_accuracy(TeacherModel& teacher, const std::vector<Utterance>& utts);

Checkpoint teacher_checkpoint(const TeacherModel& teacher, const RunConfig& cfg, std::uint64_t step);

// ---- student ----

struct LossParts {
  Tensor ce;
  Tensor kl;     // undefined unless mode at
  Tensor total;
};

// Per-utterance objective: BCE, plus lambda * KL in at mode.
LossParts utterance_loss(Tape& tape, const StudentModel& student, const TeacherModel* teacher, const Utterance& u,
                         const RunConfig& cfg);

struct LogEntry {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss_ce = 0.0;
  std::optional<double> loss_kl;
  double loss_total = 0.0;
  std::optional<double> dev_eer;
};
std::string log_entry_json(const LogEntry& e);

struct TrainHooks {
  std::function<void(const LogEntry&)> on_log;
  // Runs after each backward pass, before the optimizer step.
  std::function<void(std::uint64_t step)> after_backward;
};

struct TrainResult {
  std::vector<LogEntry> log;
  std::uint64_t steps = 0;
  double final_dev_eer = 1.0;
  double best_dev_eer = 1.0;
  std::uint64_t best_step = 0;
  std::vector<ParamRecord> best_params;
  AdamState best_optimizer;
  AdamState final_optimizer;
  std::string teacher_hash_before;
  std::string teacher_hash_after;
};

// Trains the student in place (ending at the final parameters). The teacher
// must be frozen for af/at; it runs live on every step and its gradients are
// verified to stay exactly zero. Throws ConfigError for at without lambda or
// af/at without a teacher.
TrainResult train_padd(StudentModel& student, TeacherModel* teacher, const Corpus& corpus, const RunConfig& cfg,
                       const TrainHooks& hooks = {});

std::vector<UtteranceScores> score_utterances(StudentModel& student, TeacherModel* teacher,
                                              const std::vector<Utterance>& utts);
double evaluate_eer(StudentModel& student, TeacherModel* teacher, const std::vector<Utterance>& utts);

// Student params (+ teacher params when given) and optimizer moments.
Checkpoint model_checkpoint(const StudentModel& student, const TeacherModel* teacher, const AdamState& adam,
                            const RunConfig& cfg, std::uint64_t step);

}  // namespace nepadd
