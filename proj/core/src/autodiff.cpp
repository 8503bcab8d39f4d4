#include "invdec/autodiff.hpp"

#include <algorithm>

#include "invdec/error.hpp"

namespace invdec {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void Parameter::zero_grad() { std::fill(grad.data().begin(), grad.data().end(), 0.0); }

ParamId ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  params_.emplace_back(std::move(name), std::move(value));
  return ParamId{idx};
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Node node;
  node.op = "parameter";
  node.value = p.value;
  node.requires_grad = true;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = requires_grad && static_cast<bool>(backward);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss belongs to a different tape");
  if (loss.value().numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  replay_.clear();
  const std::size_t root = loss.id();
  if (!nodes_[root].requires_grad) return;
  grad(root)[0] = 1.0;
  for (std::size_t id = root + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad) continue;
    if (node.backward) {
      replay_.push_back(id);
      node.backward(*this, node.grad);
    }
    if (node.param != nullptr) node.param->grad += node.grad;
  }
}

std::size_t Tape::first_non_finite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].value.all_finite()) return id;
  }
  return nodes_.size();
}

}  // namespace invdec
