#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nepadd/aggregation.hpp"
#include "nepadd/classifier.hpp"
#include "nepadd/datagen.hpp"
#include "nepadd/ner_branch.hpp"
#include "nepadd/padd_branch.hpp"

namespace nepadd {

struct GateConfig {
  GateMode mode = GateMode::PerFrameScalar;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double base_lr = 1e-4;
  std::size_t warmup_steps = 100;
  Aggregation aggregation = Aggregation::Fusion;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  // Weight on the authentic-class BCE term; 1 = unweighted.
  double pos_weight = 1.0;

  void validate() const;
};

struct TeacherTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RunConfig {
  CorpusConfig corpus;
  PaddBranchConfig padd;
  NerBranchConfig ner;
  ClassifierConfig classifier;
  GateConfig gate;
  TransferConfig transfer;
  TrainConfig train;
  TeacherTrainConfig teacher_train;

  // Cross-section checks: feature dims agree, branch widths match the
  // classifier, transfer settings sane.
  void validate() const;
};

// Strict JSON: unknown keys and wrong types raise ConfigError; missing keys
// keep their defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& cfg);

// FNV-1a over the serialized config.
std::uint64_t config_hash(const RunConfig& cfg);

// NEPADD_SEED, when set, replaces the corpus, teacher and training seeds.
void apply_seed_override(RunConfig& cfg);

}  // namespace nepadd
