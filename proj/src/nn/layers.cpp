#include "chaoslab/nn/layers.hpp"

#include <cmath>

#include "chaoslab/error.hpp"

namespace chaoslab::nn {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

Dense::Dense(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : weight(prefix + ".weight", glorot_uniform(in, out, rng)), bias(prefix + ".bias", Tensor(1, out)) {}

Var Dense::forward(Tape& tape, Var x) {
  return tape.add_row(tape.matmul(x, tape.param(weight)), tape.param(bias));
}

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Vanilla: return "rnn";
    case CellKind::Lstm: return "lstm";
    case CellKind::Gru: return "gru";
  }
  return "?";
}

std::size_t gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::Vanilla: return 1;
    case CellKind::Lstm: return 4;
    case CellKind::Gru: return 3;
  }
  return 0;
}

RecurrentCell::RecurrentCell(const std::string& prefix, CellKind kind, std::size_t input, std::size_t hidden,
                             Rng& rng)
    : kind_(kind), input_(input), hidden_(hidden) {
  if (input == 0 || hidden == 0) throw DomainError("recurrent cell needs positive input and hidden sizes");
  const std::size_t width = gate_count(kind) * hidden;
  wx = Parameter(prefix + ".wx", glorot_uniform(input, width, rng));
  wh = Parameter(prefix + ".wh", glorot_uniform(hidden, width, rng));
  Tensor bias(1, width);
  if (kind == CellKind::Lstm) {
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  }
  b = Parameter(prefix + ".b", std::move(bias));
  if (kind == CellKind::Gru) bh = Parameter(prefix + ".bh", Tensor(1, width));
}

std::vector<Parameter*> RecurrentCell::parameters() {
  if (kind_ == CellKind::Gru) return {&wx, &wh, &b, &bh};
  return {&wx, &wh, &b};
}

CellState RecurrentCell::initial_state(Tape& tape, std::size_t batch) const {
  CellState s{tape.constant(Tensor(batch, hidden_)), {}};
  if (kind_ == CellKind::Lstm) s.c = tape.constant(Tensor(batch, hidden_));
  return s;
}

CellState RecurrentCell::state_from(Tape& tape, const Tensor& h, const Tensor& c) const {
  if (h.cols() != hidden_) throw DomainError("carried hidden state has width " + std::to_string(h.cols()));
  CellState s{tape.constant(h), {}};
  if (kind_ == CellKind::Lstm) s.c = tape.constant(c);
  return s;
}

CellState RecurrentCell::step(Tape& tape, Var x, const CellState& state) {
  const std::size_t in = tape.value(x).cols();
  if (in != input_) {
    throw DomainError("recurrent cell expects input width " + std::to_string(input_) + ", got " + std::to_string(in));
  }
  const std::size_t H = hidden_;
  const Var gx = tape.matmul(x, tape.param(wx));
  const Var gh = tape.matmul(state.h, tape.param(wh));
  switch (kind_) {
    case CellKind::Vanilla:
      return {tape.tanh(tape.add_row(tape.add(gx, gh), tape.param(b))), {}};
    case CellKind::Lstm: {
      const Var z = tape.add_row(tape.add(gx, gh), tape.param(b));
      const Var i = tape.sigmoid(tape.slice_cols(z, 0, H));
      const Var f = tape.sigmoid(tape.slice_cols(z, H, H));
      const Var g = tape.tanh(tape.slice_cols(z, 2 * H, H));
      const Var o = tape.sigmoid(tape.slice_cols(z, 3 * H, H));
      const Var c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
      return {tape.mul(o, tape.tanh(c)), c};
    }
    case CellKind::Gru: {
      const Var ax = tape.add_row(gx, tape.param(b));
      const Var ah = tape.add_row(gh, tape.param(bh));
      const Var r = tape.sigmoid(tape.add(tape.slice_cols(ax, 0, H), tape.slice_cols(ah, 0, H)));
      const Var u = tape.sigmoid(tape.add(tape.slice_cols(ax, H, H), tape.slice_cols(ah, H, H)));
      const Var n = tape.tanh(tape.add(tape.slice_cols(ax, 2 * H, H), tape.mul(r, tape.slice_cols(ah, 2 * H, H))));
      return {tape.add(n, tape.mul(u, tape.sub(state.h, n))), {}};
    }
  }
  throw DomainError("unknown cell kind");
}

RecurrentStack::RecurrentStack(const std::string& prefix, CellKind kind, std::size_t input, std::size_t hidden,
                               std::size_t layers, bool bidirectional, Rng& rng)
    : hidden_(hidden), bidirectional_(bidirectional) {
  if (layers == 0) throw DomainError("recurrent stack needs at least one layer");
  std::size_t in = input;
  for (std::size_t l = 0; l < layers; ++l) {
    forward_.emplace_back(prefix + ".l" + std::to_string(l) + ".fwd", kind, in, hidden, rng);
    if (bidirectional) backward_.emplace_back(prefix + ".l" + std::to_string(l) + ".bwd", kind, in, hidden, rng);
    in = hidden * (bidirectional ? 2 : 1);
  }
}

std::vector<Parameter*> RecurrentStack::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    for (Parameter* p : forward_[l].parameters()) out.push_back(p);
    if (bidirectional_)
      for (Parameter* p : backward_[l].parameters()) out.push_back(p);
  }
  return out;
}

RecurrentStack::Output RecurrentStack::run(Tape& tape, const std::vector<Var>& xs, const SequenceState* carry,
                                           SequenceState* carry_out) {
  if (xs.empty()) throw DomainError("recurrent stack: empty sequence");
  const std::size_t batch = tape.value(xs[0]).rows();
  const std::size_t T = xs.size();
  if (carry != nullptr && !carry->empty() && carry->h.size() != forward_.size()) {
    throw DomainError("recurrent stack: carried state has the wrong layer count");
  }
  if (carry_out != nullptr) {
    carry_out->h.assign(forward_.size(), Tensor());
    carry_out->c.assign(forward_.size(), Tensor());
  }
  std::vector<Var> inputs = xs;
  Output out;
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    RecurrentCell& fc = forward_[l];
    CellState s = (carry != nullptr && !carry->empty()) ? fc.state_from(tape, carry->h[l], carry->c[l])
                                                        : fc.initial_state(tape, batch);
    std::vector<Var> fwd(T), bwd;
    for (std::size_t t = 0; t < T; ++t) {
      s = fc.step(tape, inputs[t], s);
      fwd[t] = s.h;
    }
    if (carry_out != nullptr) {
      carry_out->h[l] = tape.value(s.h);
      if (s.c.valid()) carry_out->c[l] = tape.value(s.c);
    }
    if (bidirectional_) {
      RecurrentCell& bc = backward_[l];
      bwd.resize(T);
      CellState sb = bc.initial_state(tape, batch);
      for (std::size_t t = T; t-- > 0;) {
        sb = bc.step(tape, inputs[t], sb);
        bwd[t] = sb.h;
      }
    }
    if (l + 1 == forward_.size()) {
      out.forward = std::move(fwd);
      out.backward = std::move(bwd);
    } else if (bidirectional_) {
      for (std::size_t t = 0; t < T; ++t) {
        const Var parts[2] = {fwd[t], bwd[t]};
        inputs[t] = tape.concat_cols(parts);
      }
    } else {
      inputs = std::move(fwd);
    }
  }
  return out;
}

std::vector<Var> RecurrentStack::per_step(Tape& tape, const Output& out) const {
  if (!bidirectional_) return out.forward;
  std::vector<Var> v(out.forward.size());
  for (std::size_t t = 0; t < v.size(); ++t) {
    const Var parts[2] = {out.forward[t], out.backward[t]};
    v[t] = tape.concat_cols(parts);
  }
  return v;
}

Var RecurrentStack::final_state(Tape& tape, const Output& out) const {
  if (!bidirectional_) return out.forward.back();
  const Var parts[2] = {out.forward.back(), out.backward.front()};
  return tape.concat_cols(parts);
}

}  // namespace chaoslab::nn
