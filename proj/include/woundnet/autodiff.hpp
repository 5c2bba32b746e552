#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "woundnet/ndarray.hpp"

namespace woundnet::ad {

/// Named model weight with its gradient buffer. Non-trainable parameters
/// (batch-norm running statistics) ride along for checkpointing.
struct Parameter {
  Parameter(std::string name, NdArray value, bool trainable = true);

  std::string name;
  NdArray value;
  NdArray grad;
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule: receives d(loss)/d(output) and adds into the gradient
/// buffers of each input. Entries of `grad_inputs` are null for inputs that
/// do not require a gradient.
using BackwardFn =
    std::function<void(const NdArray& grad_out, std::vector<NdArray*>& grad_inputs)>;

/// Result of a backward sweep.
class Gradients {
 public:
  /// Gradient w.r.t. a recorded value; zeros when the value was not reached.
  NdArray of(Var v) const;
  /// Gradient w.r.t. a parameter, summed over every use on the tape. Zeros
  /// (shaped like the parameter) when the loss does not depend on it.
  NdArray of(const Parameter& p) const;

  bool reached(const Parameter& p) const { return params_.count(&p) != 0; }

  /// Overwrites `grad` of each listed trainable parameter.
  void write_to(const std::vector<Parameter*>& params) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<NdArray> node_grads_;
  std::unordered_map<const Parameter*, NdArray> params_;
};

/// Linear record of forward operations. One tape per forward pass; not
/// shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(NdArray value);
  /// Leaf without a gradient.
  Var constant(NdArray value);
  /// Leaf that references a parameter's current value (no copy). Gradients
  /// are collected for it when the parameter is trainable.
  Var param(const Parameter& p);

  /// Records an operation. The output is checked for NaN/Inf.
  Var record(const char* op, NdArray output, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss recorded on this tape.
  Gradients backward(Var loss) const;

  const NdArray& value(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    NdArray value;
    const NdArray* ref = nullptr;
    const Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace woundnet::ad
