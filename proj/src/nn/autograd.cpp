#include "chaoslab/nn/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "chaoslab/error.hpp"
#include "chaoslab/nn/kernels.hpp"

namespace chaoslab::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DomainError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// Lazily sized gradient buffer: an empty tensor means "no gradient reached this node".
Tensor& grad_buffer(Tensor& g, const Tensor& like) {
  if (g.empty() && !like.empty()) g = Tensor(like.rows(), like.cols());
  return g;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(value.rows(), value.cols()),
      m(value.rows(), value.cols()),
      v(value.rows(), value.cols()) {}

Var Tape::push(Node node) {
  if (node.op == Op::Param) {
    node.requires_grad = true;
  } else if (node.op != Op::Constant) {
    auto req = [&](std::size_t id) { return id != Var::kNone && nodes_[id].requires_grad; };
    node.requires_grad = req(node.a) || req(node.b) || std::any_of(node.parts.begin(), node.parts.end(), req);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v, const char* who) const {
  if (v.id >= nodes_.size()) throw DomainError(std::string(who) + ": variable is not on this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v, "value").value; }

const Tensor& Tape::grad(Var v) const { return node(v, "grad").grad; }

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

Var Tape::constant(Tensor value) {
  Node n{Op::Constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  for (const auto& [ptr, id] : param_nodes_)
    if (ptr == &p) return Var{id};
  Node n{Op::Param};
  n.param = &p;
  n.value = p.value;
  const Var v = push(std::move(n));
  param_nodes_.emplace_back(&p, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = node(a, "matmul").value;
  const Tensor& y = node(b, "matmul").value;
  if (x.cols() != y.rows()) shape_error("matmul", x, y);
  Tensor out(x.rows(), y.cols());
  kernels().gemm_nn(x.rows(), y.cols(), x.cols(), x.data(), y.data(), out.data());
  Node n{Op::MatMul, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = node(a, "add").value;
  const Tensor& y = node(b, "add").value;
  if (!x.same_shape(y)) shape_error("add", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  Node n{Op::Add, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
  const Tensor& x = node(a, "add_row").value;
  const Tensor& r = node(row, "add_row").value;
  if (r.rows() != 1 || r.cols() != x.cols()) shape_error("add_row", x, r);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r[j];
  Node n{Op::AddRow, a.id, row.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& x = node(a, "sub").value;
  const Tensor& y = node(b, "sub").value;
  if (!x.same_shape(y)) shape_error("sub", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  Node n{Op::Sub, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& x = node(a, "mul").value;
  const Tensor& y = node(b, "mul").value;
  if (!x.same_shape(y)) shape_error("mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  Node n{Op::Mul, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Tensor out = node(a, "tanh").value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Node n{Op::Tanh, a.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Tensor out = node(a, "sigmoid").value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nn::sigmoid(out[i]);
  Node n{Op::Sigmoid, a.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Tensor out = node(a, "relu").value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  Node n{Op::Relu, a.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_cols: no inputs");
  const std::size_t rows = node(parts[0], "concat_cols").value.rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    const Tensor& t = node(p, "concat_cols").value;
    if (t.rows() != rows) shape_error("concat_cols", node(parts[0], "concat_cols").value, t);
    cols += t.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  Node n{Op::ConcatCols};
  for (Var p : parts) {
    const Tensor& t = nodes_[p.id].value;
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.data() + r * t.cols(), t.cols(), out.data() + r * cols + offset);
    offset += t.cols();
    n.parts.push_back(p.id);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = node(a, "slice_cols").value;
  if (begin + count > x.cols() || count == 0) {
    throw DomainError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                      ") out of range for " + x.shape_string());
  }
  Tensor out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(x.data() + r * x.cols() + begin, count, out.data() + r * count);
  Node n{Op::SliceCols, a.id};
  n.offset = begin;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("stack_rows: no inputs");
  const std::size_t cols = node(parts[0], "stack_rows").value.cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    const Tensor& t = node(p, "stack_rows").value;
    if (t.cols() != cols) shape_error("stack_rows", node(parts[0], "stack_rows").value, t);
    rows += t.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  Node n{Op::StackRows};
  for (Var p : parts) {
    const Tensor& t = nodes_[p.id].value;
    out.insert(out.end(), t.values().begin(), t.values().end());
    n.parts.push_back(p.id);
  }
  n.value = Tensor(rows, cols, std::move(out));
  return push(std::move(n));
}

Var Tape::mse(Var pred, Var target) {
  const Tensor& p = node(pred, "mse").value;
  const Tensor& t = node(target, "mse").value;
  if (!p.same_shape(t)) shape_error("mse", p, t);
  if (p.empty()) throw DomainError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  Node n{Op::Mse, pred.id, target.id};
  n.value = Tensor(1, 1, s / static_cast<double>(p.size()));
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Tensor& x = node(a, "sum").value;
  double s = 0.0;
  for (double v : x.values()) s += v;
  Node n{Op::Sum, a.id};
  n.value = Tensor(1, 1, s);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  const Node& l = node(loss, "backward");
  if (l.value.rows() != 1 || l.value.cols() != 1) {
    throw DomainError("backward: loss must be a scalar, got " + l.value.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[loss.id].grad = Tensor(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!nodes_[i].grad.empty()) backward_node(nodes_[i]);
  }
  for (auto& [ptr, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
      n.param->grad = Tensor(n.value.rows(), n.value.cols());
    } else {
      n.param->grad = n.grad;
    }
  }
}

void Tape::backward_node(Node& n) {
  if (!n.requires_grad) return;
  const Tensor& g = n.grad;
  auto wants = [&](std::size_t id) { return nodes_[id].requires_grad; };
  const KernelTable& k = kernels();
  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      return;
    case Op::MatMul: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      const std::size_t m = a.value.rows(), kk = a.value.cols(), cols = b.value.cols();
      if (a.requires_grad) k.gemm_nt(m, cols, kk, g.data(), b.value.data(), grad_buffer(a.grad, a.value).data());
      if (b.requires_grad) k.gemm_tn(m, cols, kk, a.value.data(), g.data(), grad_buffer(b.grad, b.value).data());
      return;
    }
    case Op::Add:
    case Op::Sub: {
      if (wants(n.a)) k.axpy(g.size(), 1.0, g.data(), grad_buffer(nodes_[n.a].grad, g).data());
      if (wants(n.b)) k.axpy(g.size(), n.op == Op::Add ? 1.0 : -1.0, g.data(), grad_buffer(nodes_[n.b].grad, g).data());
      return;
    }
    case Op::AddRow: {
      if (wants(n.a)) k.axpy(g.size(), 1.0, g.data(), grad_buffer(nodes_[n.a].grad, g).data());
      if (!wants(n.b)) return;
      Tensor& gr = grad_buffer(nodes_[n.b].grad, nodes_[n.b].value);
      for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(g.cols(), 1.0, g.data() + r * g.cols(), gr.data());
      return;
    }
    case Op::Mul: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      if (a.requires_grad) {
        Tensor& ga = grad_buffer(a.grad, g);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value[i];
      }
      if (b.requires_grad) {
        Tensor& gb = grad_buffer(b.grad, g);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value[i];
      }
      return;
    }
    case Op::Tanh: {
      Tensor& ga = grad_buffer(nodes_[n.a].grad, g);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      return;
    }
    case Op::Sigmoid: {
      Tensor& ga = grad_buffer(nodes_[n.a].grad, g);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      return;
    }
    case Op::Relu: {
      const Tensor& x = nodes_[n.a].value;
      Tensor& ga = grad_buffer(nodes_[n.a].grad, g);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) ga[i] += g[i];
      return;
    }
    case Op::ConcatCols: {
      std::size_t offset = 0;
      for (std::size_t id : n.parts) {
        Node& p = nodes_[id];
        const std::size_t c = p.value.cols();
        if (!p.requires_grad) {
          offset += c;
          continue;
        }
        Tensor& gp = grad_buffer(p.grad, p.value);
        for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(c, 1.0, g.data() + r * g.cols() + offset, gp.data() + r * c);
        offset += c;
      }
      return;
    }
    case Op::SliceCols: {
      Node& a = nodes_[n.a];
      Tensor& ga = grad_buffer(a.grad, a.value);
      const std::size_t c = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        k.axpy(c, 1.0, g.data() + r * c, ga.data() + r * a.value.cols() + n.offset);
      return;
    }
    case Op::StackRows: {
      std::size_t offset = 0;
      for (std::size_t id : n.parts) {
        Node& p = nodes_[id];
        if (!p.requires_grad) {
          offset += p.value.size();
          continue;
        }
        Tensor& gp = grad_buffer(p.grad, p.value);
        k.axpy(p.value.size(), 1.0, g.data() + offset, gp.data());
        offset += p.value.size();
      }
      return;
    }
    case Op::Mse: {
      Node& p = nodes_[n.a];
      Node& t = nodes_[n.b];
      const double scale = 2.0 * g[0] / static_cast<double>(p.value.size());
      if (p.requires_grad) {
        Tensor& gp = grad_buffer(p.grad, p.value);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += scale * (p.value[i] - t.value[i]);
      }
      if (t.requires_grad) {
        Tensor& gt = grad_buffer(t.grad, t.value);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= scale * (p.value[i] - t.value[i]);
      }
      return;
    }
    case Op::Sum: {
      Tensor& ga = grad_buffer(nodes_[n.a].grad, nodes_[n.a].value);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      return;
    }
  }
}

}  // namespace chaoslab::nn
