#include "nepadd/tape.hpp"

#include <cmath>
#include <unordered_set>

#include "nepadd/errors.hpp"

namespace nepadd {

void Tape::record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn) {
  Entry e;
  e.out = out.shared_node();
  e.out->leaf = false;
  e.inputs.reserve(inputs.size());
  for (auto& in : inputs) {
    if (in.defined()) e.inputs.push_back(in.shared_node());
  }
  e.fn = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  TensorNode* root = loss.node();
  if (!root->tracks()) return;

  // Zero every adjoint buffer reachable from the tape.
  std::vector<TensorNode*> nodes;
  std::unordered_set<TensorNode*> seen;
  auto visit = [&](TensorNode* n) {
    if (seen.insert(n).second) {
      n->pass.assign(n->value.size(), 0.0);
      nodes.push_back(n);
    }
  };
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in->tracks()) visit(in.get());
    }
    visit(e.out.get());
  }
  visit(root);
  root->pass[0] = 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();

  for (TensorNode* n : nodes) {
    if (!n->tracks()) {
      n->pass.clear();
      continue;
    }
    if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
    if (n->leaf) {
      for (std::size_t i = 0; i < n->pass.size(); ++i) {
        if (!std::isfinite(n->pass[i])) {
          throw NumericError("non-finite gradient in tensor of shape " + shape_str(n->shape));
        }
        n->grad[i] += n->pass[i];
      }
      n->pass.clear();
    } else {
      n->grad.swap(n->pass);
      n->pass.clear();
    }
  }
}

}  // namespace nepadd
