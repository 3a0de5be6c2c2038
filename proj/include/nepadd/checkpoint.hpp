#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nepadd/optim.hpp"
#include "nepadd/params.hpp"

namespace nepadd {

struct ParamRecord {
  std::string name;
  bool frozen = false;
  Shape shape;
  std::vector<double> values;
};

// Little-endian binary: "NEPC", u16 version, u64 step, u64 config hash,
// u32 + config JSON, u32 count + param records, u32 count + optimizer
// records ("m/<name>", "v/<name>", plus a scalar "adam/t").
struct Checkpoint {
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  std::string config_json;
  std::vector<ParamRecord> params;
  std::vector<ParamRecord> optimizer;
};

std::vector<ParamRecord> capture_params(const ParamStore& store);
std::vector<ParamRecord> capture_optimizer(const ParamStore& store, const AdamState& state);

// Copies values whose names exist in `store`; every store param must be
// present with a matching shape (DataError otherwise). Freeze flags follow
// the records.
void restore_params(const std::vector<ParamRecord>& records, ParamStore& store);
void restore_optimizer(const std::vector<ParamRecord>& records, const ParamStore& store, AdamState& state);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex SHA-256 of the serialized parameter records of `store`.
std::string params_sha256(const ParamStore& store);

}  // namespace nepadd
