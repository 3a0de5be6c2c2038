#pragma once

#include <string>
#include <vector>

#include "nepadd/rng.hpp"
#include "nepadd/tensor.hpp"

namespace nepadd {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Ordered registry of trainable arrays. Registration order is the
// serialization order.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, double fill = 0.0);
  Tensor uniform(const std::string& name, Shape shape, double bound, Rng& rng);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<NamedParam>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void set_frozen(bool frozen);
  bool all_frozen() const;
  void zero_grad();

  // Value snapshot for best-checkpoint retention.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<NamedParam> params_;
};

}  // namespace nepadd
