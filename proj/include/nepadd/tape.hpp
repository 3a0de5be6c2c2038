#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nepadd/tensor.hpp"

namespace nepadd {

// Reverse-mode recording of primitive ops. Each entry's closure reads the
// output adjoint (`out->pass`) and accumulates into the inputs' `pass`
// buffers. backward() replays entries in exact reverse recording order and
// may be called repeatedly; leaf grads accumulate across calls.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn);

  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<TensorNode> out;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

}  // namespace nepadd
