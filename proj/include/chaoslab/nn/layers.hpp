#pragma once

// Dense layer, recurrent cells, and the stacked / bidirectional sequence wrapper.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "chaoslab/nn/autograd.hpp"
#include "chaoslab/random.hpp"

namespace chaoslab::nn {

/// Glorot-uniform matrix: U(-a, a) with a = sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

  /// x (batch x in) -> batch x out
  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

enum class CellKind { Vanilla, Lstm, Gru };

std::string_view to_string(CellKind kind);
std::size_t gate_count(CellKind kind);

/// Hidden (and, for LSTM, cell) state of one recurrent layer.
struct CellState {
  Var h;
  Var c;
};

/// vanilla: h' = tanh(x Wx + h Wh + b)
/// LSTM:    gates [i, f, g, o] from x Wx + h Wh + b; c' = f c + i g; h' = o tanh(c')
/// GRU:     r, z from x Wx + b and h Wh + bh; n = tanh(xWn + bn + r (hWhn + bhn)); h' = n + z (h - n)
/// Biases start at zero except the LSTM forget gate, which starts at +1.
class RecurrentCell {
 public:
  RecurrentCell() = default;
  RecurrentCell(const std::string& prefix, CellKind kind, std::size_t input, std::size_t hidden, Rng& rng);

  CellKind kind() const noexcept { return kind_; }
  std::size_t input_size() const noexcept { return input_; }
  std::size_t hidden_size() const noexcept { return hidden_; }

  /// Zero state, or a detached copy of stored values.
  CellState initial_state(Tape& tape, std::size_t batch) const;
  CellState state_from(Tape& tape, const Tensor& h, const Tensor& c) const;

  CellState step(Tape& tape, Var x, const CellState& state);

  std::vector<Parameter*> parameters();

  Parameter wx;  // input x (gates * hidden)
  Parameter wh;  // hidden x (gates * hidden)
  Parameter b;   // 1 x (gates * hidden)
  Parameter bh;  // GRU only: 1 x (3 * hidden)

 private:
  CellKind kind_ = CellKind::Vanilla;
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

/// Detached recurrent state carried between calls (one entry per layer, forward direction).
struct SequenceState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
  bool empty() const noexcept { return h.empty(); }
};

/// `layers` recurrent layers, each optionally bidirectional. Layer k > 0 consumes the per-step
/// output of layer k - 1 (forward and backward hidden states concatenated when bidirectional).
/// The backward direction always starts from a zero state at the end of the given sequence.
class RecurrentStack {
 public:
  RecurrentStack() = default;
  RecurrentStack(const std::string& prefix, CellKind kind, std::size_t input, std::size_t hidden,
                 std::size_t layers, bool bidirectional, Rng& rng);

  struct Output {
    std::vector<Var> forward;   // top-layer forward hidden state per step
    std::vector<Var> backward;  // top-layer backward hidden state per step (empty if unidirectional)
  };

  /// Runs over xs (one batch x input tensor per step). `carry` seeds the forward direction and,
  /// when `carry_out` is given, receives its final state.
  Output run(Tape& tape, const std::vector<Var>& xs, const SequenceState* carry = nullptr,
             SequenceState* carry_out = nullptr);

  /// Per-step features for a head: forward, or [forward, backward] when bidirectional.
  std::vector<Var> per_step(Tape& tape, const Output& out) const;
  /// Final-state features: forward at the last step, plus backward at the first step.
  Var final_state(Tape& tape, const Output& out) const;

  std::size_t output_size() const noexcept { return hidden_ * (bidirectional_ ? 2 : 1); }
  std::size_t layers() const noexcept { return forward_.size(); }
  bool bidirectional() const noexcept { return bidirectional_; }
  std::vector<Parameter*> parameters();

 private:
  std::vector<RecurrentCell> forward_;
  std::vector<RecurrentCell> backward_;
  std::size_t hidden_ = 0;
  bool bidirectional_ = false;
};

}  // namespace chaoslab::nn
