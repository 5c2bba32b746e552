#include "woundnet/autodiff.hpp"

#include "woundnet/errors.hpp"

namespace woundnet::ad {

Parameter::Parameter(std::string n, NdArray v, bool t)
    : name(std::move(n)), value(std::move(v)), grad(NdArray::zeros(value.shape())), trainable(t) {}

const NdArray& Var::value() const {
  if (!tape_) throw ContractError("Var: empty handle");
  return tape_->value(id_);
}

NdArray Gradients::of(Var v) const {
  if (v.tape() != tape_) throw ContractError("Gradients::of: value from another tape");
  const auto& g = node_grads_.at(v.id());
  if (g.size() == 0) return NdArray::zeros(v.shape());
  return g;
}

NdArray Gradients::of(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end()) return NdArray::zeros(p.value.shape());
  return it->second;
}

void Gradients::write_to(const std::vector<Parameter*>& params) const {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto it = params_.find(p);
    if (it == params_.end())
      p->grad.fill(0.0);
    else
      p->grad = it->second;
  }
}

const NdArray& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.ref ? *n.ref : n.value;
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ContractError("Tape: value recorded on a different tape");
}

Var Tape::variable(NdArray value) {
  value.require_finite("variable");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(NdArray value) {
  value.require_finite("constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, NdArray output, std::vector<Var> inputs, BackwardFn backward) {
  output.require_finite(op);
  Node n;
  n.value = std::move(output);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  check_owned(loss);
  if (!value(loss.id()).is_scalar())
    throw ContractError("backward: loss must be scalar, got " + shape_str(value(loss.id()).shape()));

  Gradients out;
  out.tape_ = this;
  out.node_grads_.resize(nodes_.size());
  auto& grads = out.node_grads_;
  grads[loss.id()] = NdArray::full(value(loss.id()).shape(), 1.0);

  std::vector<NdArray*> gin;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (grads[i].size() == 0 || !n.requires_grad) continue;
    if (n.backward) {
      gin.assign(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t in = n.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].size() == 0) grads[in] = NdArray::zeros(value(in).shape());
        gin[k] = &grads[in];
      }
      n.backward(grads[i], gin);
    }
    if (n.param) {
      auto [it, fresh] = out.params_.try_emplace(n.param, grads[i]);
      if (!fresh)
        for (std::size_t k = 0; k < it->second.size(); ++k) it->second[k] += grads[i][k];
    }
  }
  return out;
}

}  // namespace woundnet::ad
