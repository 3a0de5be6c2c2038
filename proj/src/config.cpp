#include "nepadd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "nepadd/errors.hpp"

namespace nepadd {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (warmup_steps == 0) throw ConfigError("train.warmup_steps must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (eval_every == 0) throw ConfigError("train.eval_every must be >= 1");
  if (!(pos_weight > 0.0)) throw ConfigError("train.pos_weight must be positive");
}

void TeacherTrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("teacher_train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("teacher_train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("teacher_train.lr must be positive");
}

void RunConfig::validate() const {
  corpus.validate();
  padd.validate();
  ner.validate();
  classifier.validate();
  train.validate();
  teacher_train.validate();
  if (padd.input_dim != corpus.feature_dim || ner.input_dim != corpus.feature_dim) {
    throw ConfigError("padd.input_dim and ner.input_dim must equal corpus.feature_dim");
  }
  if (classifier.model_dim != padd.model_dim) throw ConfigError("classifier.model_dim must equal padd.model_dim");
  if (train.aggregation != Aggregation::None && ner.model_dim() != padd.model_dim) {
    throw ConfigError("teacher width 2*ner.lstm_hidden must equal padd.model_dim for af/at");
  }
  if (transfer.lambda_kl && !(*transfer.lambda_kl >= 0.0)) throw ConfigError("transfer.lambda_kl must be >= 0");
  if (!(transfer.epsilon_clamp > 0.0)) throw ConfigError("transfer.epsilon_clamp must be positive");
}

namespace {

// Reads known keys of one object and rejects the rest.
class Section {
 public:
  Section(const json& parent, const std::string& name) : where_(name) {
    if (!parent.contains(name)) return;
    obj_ = &parent.at(name);
    if (!obj_->is_object()) throw ConfigError(name + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    const std::string at = where_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(at + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(at + ": expected a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(at + ": expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(at + ": expected a string");
      out = v.get<T>();
    }
  }

  void read(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      throw ConfigError(where_ + "." + key + ": expected a number or null");
    }
  }

  template <class E, class Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = parse(s);
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& item : obj_->items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where_ + "." + item.key());
    }
  }

 private:
  std::string where_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  json j;
  const auto& k = c.corpus;
  j["corpus"] = {{"seed", k.seed},
                 {"n_train", k.n_train},
                 {"n_dev", k.n_dev},
                 {"n_eval", k.n_eval},
                 {"min_frames", k.min_frames},
                 {"max_frames", k.max_frames},
                 {"feature_dim", k.feature_dim},
                 {"reserved_dims", k.reserved_dims},
                 {"spoof_shift", k.spoof_shift},
                 {"spoof_subspace_dims", k.spoof_subspace_dims},
                 {"ar_coeff_real", k.ar_coeff_real},
                 {"ar_coeff_spoof", k.ar_coeff_spoof},
                 {"innovation_std", k.innovation_std},
                 {"entity_offset", k.entity_offset},
                 {"entities_per_utt", k.entities_per_utt},
                 {"min_entity_frames", k.min_entity_frames},
                 {"max_entity_frames", k.max_entity_frames},
                 {"p_overlap", k.p_overlap},
                 {"min_segments", k.min_segments},
                 {"max_segments", k.max_segments},
                 {"min_segment_frames", k.min_segment_frames},
                 {"max_segment_frames", k.max_segment_frames},
                 {"fake_utt_fraction", k.fake_utt_fraction}};
  j["padd"] = {{"input_dim", c.padd.input_dim},
               {"conv_channels", c.padd.conv_channels},
               {"residual_blocks", c.padd.residual_blocks},
               {"model_dim", c.padd.model_dim},
               {"heads", c.padd.heads}};
  j["ner"] = {{"input_dim", c.ner.input_dim},       {"conv_channels", c.ner.conv_channels},
              {"conv_kernel", c.ner.conv_kernel},   {"lstm_layers", c.ner.lstm_layers},
              {"lstm_hidden", c.ner.lstm_hidden},   {"heads", c.ner.heads}};
  j["classifier"] = {{"model_dim", c.classifier.model_dim},
                     {"layers", c.classifier.layers},
                     {"heads", c.classifier.heads},
                     {"ff_dim", c.classifier.ff_dim},
                     {"lstm_hidden", c.classifier.lstm_hidden},
                     {"fc_dim", c.classifier.fc_dim},
                     {"positional_encoding", c.classifier.positional_encoding}};
  j["gate"] = {{"mode", std::string(gate_mode_name(c.gate.mode))}};
  j["transfer"] = json::object();
  j["transfer"]["lambda_kl"] = c.transfer.lambda_kl ? json(*c.transfer.lambda_kl) : json(nullptr);
  j["transfer"]["epsilon_clamp"] = c.transfer.epsilon_clamp;
  j["transfer"]["row_reduction"] = std::string(row_reduction_name(c.transfer.reduction));
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"base_lr", c.train.base_lr},
                {"warmup_steps", c.train.warmup_steps},
                {"aggregation", std::string(aggregation_name(c.train.aggregation))},
                {"seed", c.train.seed},
                {"eval_every", c.train.eval_every},
                {"pos_weight", c.train.pos_weight}};
  j["teacher_train"] = {{"epochs", c.teacher_train.epochs},
                        {"batch_size", c.teacher_train.batch_size},
                        {"lr", c.teacher_train.lr},
                        {"seed", c.teacher_train.seed}};
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> sections = {"corpus", "padd",     "ner",   "classifier",
                                                 "gate",   "transfer", "train", "teacher_train"};
  for (const auto& item : root.items()) {
    if (!sections.count(item.key())) throw ConfigError("unknown key " + item.key());
  }

  RunConfig c;
  {
    Section s(root, "corpus");
    auto& k = c.corpus;
    s.read("seed", k.seed);
    s.read("n_train", k.n_train);
    s.read("n_dev", k.n_dev);
    s.read("n_eval", k.n_eval);
    s.read("min_frames", k.min_frames);
    s.read("max_frames", k.max_frames);
    s.read("feature_dim", k.feature_dim);
    s.read("reserved_dims", k.reserved_dims);
    s.read("spoof_shift", k.spoof_shift);
    s.read("spoof_subspace_dims", k.spoof_subspace_dims);
    s.read("ar_coeff_real", k.ar_coeff_real);
    s.read("ar_coeff_spoof", k.ar_coeff_spoof);
    s.read("innovation_std", k.innovation_std);
    s.read("entity_offset", k.entity_offset);
    s.read("entities_per_utt", k.entities_per_utt);
    s.read("min_entity_frames", k.min_entity_frames);
    s.read("max_entity_frames", k.max_entity_frames);
    s.read("p_overlap", k.p_overlap);
    s.read("min_segments", k.min_segments);
    s.read("max_segments", k.max_segments);
    s.read("min_segment_frames", k.min_segment_frames);
    s.read("max_segment_frames", k.max_segment_frames);
    s.read("fake_utt_fraction", k.fake_utt_fraction);
    s.finish();
  }
  {
    Section s(root, "padd");
    s.read("input_dim", c.padd.input_dim);
    s.read("conv_channels", c.padd.conv_channels);
    s.read("residual_blocks", c.padd.residual_blocks);
    s.read("model_dim", c.padd.model_dim);
    s.read("heads", c.padd.heads);
    s.finish();
  }
  {
    Section s(root, "ner");
    s.read("input_dim", c.ner.input_dim);
    s.read("conv_channels", c.ner.conv_channels);
    s.read("conv_kernel", c.ner.conv_kernel);
    s.read("lstm_layers", c.ner.lstm_layers);
    s.read("lstm_hidden", c.ner.lstm_hidden);
    s.read("heads", c.ner.heads);
    s.finish();
  }
  {
    Section s(root, "classifier");
    s.read("model_dim", c.classifier.model_dim);
    s.read("layers", c.classifier.layers);
    s.read("heads", c.classifier.heads);
    s.read("ff_dim", c.classifier.ff_dim);
    s.read("lstm_hidden", c.classifier.lstm_hidden);
    s.read("fc_dim", c.classifier.fc_dim);
    s.read("positional_encoding", c.classifier.positional_encoding);
    s.finish();
  }
  {
    Section s(root, "gate");
    s.read_enum("mode", c.gate.mode, parse_gate_mode);
    s.finish();
  }
  {
    Section s(root, "transfer");
    s.read("lambda_kl", c.transfer.lambda_kl);
    s.read("epsilon_clamp", c.transfer.epsilon_clamp);
    s.read_enum("row_reduction", c.transfer.reduction, parse_row_reduction);
    s.finish();
  }
  {
    Section s(root, "train");
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("base_lr", c.train.base_lr);
    s.read("warmup_steps", c.train.warmup_steps);
    s.read_enum("aggregation", c.train.aggregation, parse_aggregation);
    s.read("seed", c.train.seed);
    s.read("eval_every", c.train.eval_every);
    s.read("pos_weight", c.train.pos_weight);
    s.finish();
  }
  {
    Section s(root, "teacher_train");
    s.read("epochs", c.teacher_train.epochs);
    s.read("batch_size", c.teacher_train.batch_size);
    s.read("lr", c.teacher_train.lr);
    s.read("seed", c.teacher_train.seed);
    s.finish();
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_run_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("NEPADD_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || env[0] == '-') throw ConfigError(std::string("NEPADD_SEED is not an unsigned integer: ") + env);
  cfg.corpus.seed = v;
  cfg.train.seed = v;
  cfg.teacher_train.seed = v;
}

}  // namespace nepadd
