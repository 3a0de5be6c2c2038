#pragma once

#include <cstdint>
#include <optional>

#include "nepadd/config.hpp"

namespace nepadd {

// Entity-aware branch with its own parameter store. Not copyable: the
// branch layers alias the store's tensors.
class TeacherModel {
 public:
  TeacherModel(const NerBranchConfig& cfg, std::uint64_t seed);
  TeacherModel(const TeacherModel&) = delete;
  TeacherModel& operator=(const TeacherModel&) = delete;

  NerOutput forward(Tape& tape, const Tensor& features) const { return branch_.forward(tape, features); }
  void freeze() { store_.set_frozen(true); }

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const NerBranch& branch() const { return branch_; }

 private:
  ParamStore store_;
  NerBranch branch_;
};

struct StudentOutput {
  Tensor probs;         // [T] authenticity probabilities
  Tensor student_attn;  // [T x T]
  Tensor gate;          // fusion gate, undefined outside af mode
};

// PADD branch, optional fusion gate (af mode only) and frame classifier.
class StudentModel {
 public:
  StudentModel(const RunConfig& cfg, std::uint64_t seed);
  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;

  // `teacher` is required in af mode and ignored otherwise.
  StudentOutput forward(Tape& tape, const Tensor& features, const NerOutput* teacher) const;

  Aggregation aggregation() const { return aggregation_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const PaddBranch& padd() const { return padd_; }
  const std::optional<FusionGate>& gate() const { return gate_; }

 private:
  Aggregation aggregation_;
  ParamStore store_;
  PaddBranch padd_;
  std::optional<FusionGate> gate_;
  FrameClassifier classifier_;
};

// Freezes a store for the guard's lifetime so forward passes record nothing.
class InferenceGuard {
 public:
  explicit InferenceGuard(ParamStore& store);
  ~InferenceGuard();
  InferenceGuard(const InferenceGuard&) = delete;
  InferenceGuard& operator=(const InferenceGuard&) = delete;

 private:
  ParamStore& store_;
  std::vector<bool> was_frozen_;
};

}  // namespace nepadd
