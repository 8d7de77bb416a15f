#pragma once

// Reverse-mode differentiation over a tape of primitive operations on 2-D tensors.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "chaoslab/nn/tensor.hpp"

namespace chaoslab::nn {

/// Trainable tensor with its gradient and Adam moments.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const noexcept { return value.size(); }
};

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    Constant, Param, MatMul, Add, AddRow, Sub, Mul, Tanh, Sigmoid, Relu,
    ConcatCols, SliceCols, StackRows, Mse, Sum
  };

  Var constant(Tensor value);
  /// A parameter enters a tape once; repeated calls return the same node.
  Var param(Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (r x c) plus a 1 x c row broadcast over every row.
  Var add_row(Var a, Var row);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var stack_rows(std::span<const Var> parts);
  /// Mean of squared differences over all elements, as a 1 x 1 node.
  Var mse(Var pred, Var target);
  Var sum(Var a);

  /// References stay valid until clear().
  const Tensor& value(Var v) const;
  /// Gradient of the last backward() loss with respect to node `v`. Empty for nodes with no
  /// parameter upstream (constants and anything computed only from constants).
  const Tensor& grad(Var v) const;

  /// Reverse accumulation from a 1 x 1 node. Gradients of the tape's parameters are
  /// overwritten; parameters on the tape but off every path to `loss` get exact zeros.
  /// Running it twice gives identical results.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    explicit Node(Op op_, std::size_t a_ = Var::kNone, std::size_t b_ = Var::kNone) : op(op_), a(a_), b(b_) {}
    Op op;
    std::size_t a = Var::kNone;
    std::size_t b = Var::kNone;
    std::size_t offset = 0;  // SliceCols begin
    std::vector<std::size_t> parts;
    Parameter* param = nullptr;
    bool requires_grad = false;  // some parameter lies upstream
    Tensor value;
    Tensor grad;
  };

  Var push(Node node);
  const Node& node(Var v, const char* who) const;
  void backward_node(Node& n);

  std::deque<Node> nodes_;  // stable references across pushes
  std::vector<std::pair<const Parameter*, std::size_t>> param_nodes_;
};

}  // namespace chaoslab::nn
