#include "nepadd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <openssl/evp.h>

#include "byte_io.hpp"
#include "nepadd/errors.hpp"

namespace nepadd {

using detail::get_le;
using detail::put_le;

namespace {

constexpr char kMagic[4] = {'N', 'E', 'P', 'C'};
constexpr std::uint16_t kVersion = 1;

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  const auto n = get_le<std::uint32_t>(in, pos, "checkpoint");
  if (pos + n > in.size()) throw DataError("checkpoint truncated");
  std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
  pos += n;
  return s;
}

void put_records(std::vector<std::uint8_t>& out, const std::vector<ParamRecord>& recs) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(recs.size()));
  for (const auto& r : recs) {
    put_string(out, r.name);
    out.push_back(r.frozen ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : r.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<ParamRecord> get_records(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  const auto n = get_le<std::uint32_t>(in, pos, "checkpoint");
  std::vector<ParamRecord> recs;
  for (std::uint32_t k = 0; k < n; ++k) {
    ParamRecord r;
    r.name = get_string(in, pos);
    if (pos + 2 > in.size()) throw DataError("checkpoint truncated");
    r.frozen = in[pos++] != 0;
    const std::size_t rank = in[pos++];
    for (std::size_t i = 0; i < rank; ++i) r.shape.push_back(get_le<std::uint32_t>(in, pos, "checkpoint"));
    const std::size_t count = shape_numel(r.shape);
    if (pos + 8 * count > in.size()) throw DataError("checkpoint truncated in " + r.name);
    r.values.resize(count);
    for (auto& v : r.values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, pos, "checkpoint"));
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace

std::vector<ParamRecord> capture_params(const ParamStore& store) {
  std::vector<ParamRecord> out;
  for (const auto& p : store.params()) {
    out.push_back({p.name, p.tensor.frozen(), p.tensor.shape(),
                   std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return out;
}

std::vector<ParamRecord> capture_optimizer(const ParamStore& store, const AdamState& state) {
  std::vector<ParamRecord> out;
  const auto& ps = store.params();
  if (state.m.size() != ps.size()) throw ContractError("optimizer state does not match the store");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out.push_back({"m/" + ps[i].name, ps[i].tensor.frozen(), ps[i].tensor.shape(), state.m[i]});
    out.push_back({"v/" + ps[i].name, ps[i].tensor.frozen(), ps[i].tensor.shape(), state.v[i]});
  }
  out.push_back({"adam/t", false, {1}, {static_cast<double>(state.t)}});
  return out;
}

void restore_params(const std::vector<ParamRecord>& records, ParamStore& store) {
  std::map<std::string, const ParamRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& p : store.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + p.name);
    const ParamRecord& r = *it->second;
    if (r.shape != p.tensor.shape()) {
      throw DataError("checkpoint shape " + shape_str(r.shape) + " for " + p.name + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(r.values.begin(), r.values.end(), t.data().begin());
    t.set_frozen(r.frozen);
  }
}

void restore_optimizer(const std::vector<ParamRecord>& records, const ParamStore& store, AdamState& state) {
  std::map<std::string, const ParamRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  const auto& ps = store.params();
  state.m.assign(ps.size(), {});
  state.v.assign(ps.size(), {});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (auto [prefix, dst] : {std::pair{"m/", &state.m[i]}, std::pair{"v/", &state.v[i]}}) {
      auto it = by_name.find(prefix + ps[i].name);
      if (it == by_name.end() || it->second->values.size() != ps[i].tensor.numel()) {
        throw DataError("checkpoint optimizer state missing or malformed for " + ps[i].name);
      }
      *dst = it->second->values;
    }
  }
  auto t = by_name.find("adam/t");
  state.t = t == by_name.end() ? 0 : static_cast<std::uint64_t>(t->second->values.at(0));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint64_t>(out, ckpt.step);
  put_le<std::uint64_t>(out, ckpt.config_hash);
  put_string(out, ckpt.config_json);
  put_records(out, ckpt.params);
  put_records(out, ckpt.optimizer);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos, "checkpoint");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.step = get_le<std::uint64_t>(bytes, pos, "checkpoint");
  c.config_hash = get_le<std::uint64_t>(bytes, pos, "checkpoint");
  c.config_json = get_string(bytes, pos);
  c.params = get_records(bytes, pos);
  c.optimizer = get_records(bytes, pos);
  if (pos != bytes.size()) throw DataError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string params_sha256(const ParamStore& store) {
  std::vector<std::uint8_t> bytes;
  put_records(bytes, capture_params(store));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw ContractError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

}  // namespace nepadd
