#include "nepadd/params.hpp"

#include <algorithm>

#include "nepadd/errors.hpp"

namespace nepadd {

Tensor ParamStore::create(const std::string& name, Shape shape, double fill) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor t(std::move(shape), fill, true);
  params_.push_back({name, t});
  return t;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  Tensor t = create(name, std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const NamedParam& p) { return p.name == name; });
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::set_frozen(bool frozen) {
  for (auto& p : params_) p.tensor.set_frozen(frozen);
}

bool ParamStore::all_frozen() const {
  return std::all_of(params_.begin(), params_.end(), [](const NamedParam& p) { return p.tensor.frozen(); });
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot does not match parameter store");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = params_[i].tensor.data();
    if (values[i].size() != dst.size()) throw ContractError("snapshot shape mismatch for " + params_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace nepadd
