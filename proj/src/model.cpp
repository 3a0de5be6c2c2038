#include "nepadd/model.hpp"

#include "nepadd/errors.hpp"

namespace nepadd {

namespace {

NerBranch build_teacher(ParamStore& store, const NerBranchConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return NerBranch(store, cfg, rng);
}

// Separate streams per component so enabling the gate does not perturb the
// branch or classifier initialization.
std::uint64_t component_seed(std::uint64_t seed, std::uint64_t component) {
  return seed * 0x9E3779B97F4A7C15ULL + component;
}

}  // namespace

TeacherModel::TeacherModel(const NerBranchConfig& cfg, std::uint64_t seed)
    : branch_(build_teacher(store_, cfg, seed)) {}

namespace {

PaddBranch build_padd(ParamStore& store, const PaddBranchConfig& cfg, std::uint64_t seed) {
  Rng rng(component_seed(seed, 1));
  return PaddBranch(store, cfg, rng);
}

std::optional<FusionGate> build_gate(ParamStore& store, const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.train.aggregation != Aggregation::Fusion) return std::nullopt;
  Rng rng(component_seed(seed, 2));
  return FusionGate(store, cfg.padd.model_dim, cfg.gate.mode, rng);
}

FrameClassifier build_classifier(ParamStore& store, const ClassifierConfig& cfg, std::uint64_t seed) {
  Rng rng(component_seed(seed, 3));
  return FrameClassifier(store, cfg, rng);
}

}  // namespace

StudentModel::StudentModel(const RunConfig& cfg, std::uint64_t seed)
    : aggregation_(cfg.train.aggregation),
      padd_(build_padd(store_, cfg.padd, seed)),
      gate_(build_gate(store_, cfg, seed)),
      classifier_(build_classifier(store_, cfg.classifier, seed)) {
  if (cfg.classifier.model_dim != cfg.padd.model_dim) {
    throw ConfigError("classifier.model_dim must equal padd.model_dim");
  }
}

StudentOutput StudentModel::forward(Tape& tape, const Tensor& features, const NerOutput* teacher) const {
  BranchOutput s = padd_.forward(tape, features);
  Tensor h = s.attended;
  Tensor gate;
  if (aggregation_ == Aggregation::Fusion) {
    if (!teacher) throw ContractError("fusion mode needs the teacher output");
    FusionOutput f = gate_->forward(tape, s.attended, teacher->attended);
    h = f.fused;
    gate = f.gate;
  }
  return {classifier_.forward(tape, h), s.attn, gate};
}

InferenceGuard::InferenceGuard(ParamStore& store) : store_(store) {
  for (const auto& p : store_.params()) {
    was_frozen_.push_back(p.tensor.frozen());
    Tensor t = p.tensor;
    t.set_frozen(true);
  }
}

InferenceGuard::~InferenceGuard() {
  const auto& ps = store_.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor t = ps[i].tensor;
    t.set_frozen(was_frozen_[i]);
  }
}

}  // namespace nepadd
