#include <cmath>
#include <string>

#include "chaoslab/error.hpp"
#include "chaoslab/nn/autograd.hpp"
#include "chaoslab/nn/kernels.hpp"
#include "chaoslab/nn/layers.hpp"
#include "chaoslab/nn/optim.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace chaoslab;
using namespace chaoslab::nn;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, oracle::Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop reference for one LSTM / GRU step on a single example, written from the textbook
// equations with gate order [i, f, g, o] and [r, z, n].
std::vector<double> ref_linear(const std::vector<double>& x, const Tensor& w, std::size_t col0, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w(i, col0 + j);
  return out;
}

}  // namespace

TEST_CASE("primitive forward values") {
  Tape tape;
  const Var eye = tape.constant(Tensor(2, 2, {1, 0, 0, 1}));
  const Var x = tape.constant(Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK(tape.value(tape.matmul(eye, x)) == tape.value(x));

  const Var z = tape.constant(Tensor(1, 2));
  CHECK(tape.value(tape.tanh(z))[0] == 0.0);
  CHECK(tape.value(tape.sigmoid(z))[1] == 0.5);
  CHECK(tape.value(tape.relu(tape.constant(Tensor(1, 2, {-1.0, 2.0})))) == Tensor(1, 2, {0.0, 2.0}));

  // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12] = [58 64; 139 154]
  const Var b = tape.constant(Tensor(3, 2, {7, 8, 9, 10, 11, 12}));
  CHECK(tape.value(tape.matmul(x, b)) == Tensor(2, 2, {58, 64, 139, 154}));

  const Var parts[2] = {x, eye};
  const Var cat = tape.concat_cols(parts);
  CHECK(tape.value(cat) == Tensor(2, 5, {1, 2, 3, 1, 0, 4, 5, 6, 0, 1}));
  CHECK(tape.value(tape.slice_cols(cat, 2, 2)) == Tensor(2, 2, {3, 1, 6, 0}));
  const Var rows[2] = {eye, eye};
  CHECK(tape.value(tape.stack_rows(rows)).rows() == 4);
  CHECK(tape.value(tape.add_row(x, tape.constant(Tensor(1, 3, {1, 1, 1})))) == Tensor(2, 3, {2, 3, 4, 5, 6, 7}));
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor(2, 3));
  const Var b = tape.constant(Tensor(2, 3));
  try {
    tape.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2 x 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(a, tape.constant(Tensor(3, 2))), DomainError);
  CHECK_THROWS_AS(tape.mse(a, tape.constant(Tensor(1, 6))), DomainError);
  CHECK_THROWS_AS(tape.slice_cols(a, 2, 2), DomainError);
}

TEST_CASE("mse values") {
  Tape tape;
  const Var p = tape.constant(Tensor(1, 3, {1, 2, 3}));
  CHECK(tape.value(tape.mse(p, p))[0] == 0.0);
  const Var t = tape.constant(Tensor(1, 3, {2, 2, 2}));
  CHECK(tape.value(tape.mse(p, t))[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("backward of sum(W x) is the outer-product structure") {
  Parameter w("w", Tensor(2, 3, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6}));
  Parameter unused("unused", Tensor(1, 2, {5, 5}));
  Tape tape;
  const Var x = tape.constant(Tensor(3, 1, {2.0, -1.0, 0.5}));
  tape.param(unused);
  const Var loss = tape.sum(tape.matmul(tape.param(w), x));
  tape.backward(loss);
  CHECK(w.grad == Tensor(2, 3, {2.0, -1.0, 0.5, 2.0, -1.0, 0.5}));
  CHECK(unused.grad == Tensor(1, 2));
  CHECK(tape.grad(x).empty());

  const Tensor first = w.grad;
  tape.backward(loss);
  CHECK(w.grad == first);

  CHECK_THROWS_AS(tape.backward(tape.matmul(tape.param(w), x)), DomainError);
}

TEST_CASE("a parameter enters a tape once") {
  Parameter w("w", Tensor(1, 1, 3.0));
  Tape tape;
  const Var a = tape.param(w);
  const Var b = tape.param(w);
  CHECK(a.id == b.id);
  // d/dw (w * w) = 2w
  tape.backward(tape.sum(tape.mul(a, b)));
  CHECK(w.grad[0] == 6.0);
}

TEST_CASE("vanilla cell with zero weights outputs zero") {
  Rng rng(1);
  RecurrentCell cell("c", CellKind::Vanilla, 3, 4, rng);
  cell.wx.value.fill(0.0);
  cell.wh.value.fill(0.0);
  cell.b.value.fill(0.0);
  Tape tape;
  oracle::Rng r(2);
  const CellState s{tape.constant(random_tensor(2, 4, r)), {}};
  const CellState next = cell.step(tape, tape.constant(random_tensor(2, 3, r, 5.0)), s);
  CHECK(tape.value(next.h) == Tensor(2, 4));
}

TEST_CASE("LSTM with zero pre-activations halves the cell state") {
  Rng rng(1);
  RecurrentCell cell("c", CellKind::Lstm, 2, 3, rng);
  cell.wx.value.fill(0.0);
  cell.wh.value.fill(0.0);
  cell.b.value.fill(0.0);
  Tape tape;
  const Tensor c0(1, 3, {1.0, -2.0, 0.25});
  const CellState s = cell.state_from(tape, Tensor(1, 3, {0.3, 0.1, -0.7}), c0);
  const CellState next = cell.step(tape, tape.constant(Tensor(1, 2, {4.0, -3.0})), s);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(tape.value(next.c)[j] == doctest::Approx(0.5 * c0[j]).epsilon(1e-15));
    CHECK(tape.value(next.h)[j] == doctest::Approx(0.5 * std::tanh(0.5 * c0[j])).epsilon(1e-15));
  }
}

TEST_CASE("LSTM initial forget bias is +1") {
  Rng rng(3);
  RecurrentCell cell("c", CellKind::Lstm, 2, 3, rng);
  for (std::size_t j = 0; j < 12; ++j) CHECK(cell.b.value[j] == ((j >= 3 && j < 6) ? 1.0 : 0.0));
}

TEST_CASE("GRU with a saturated update gate carries the state through") {
  Rng rng(1);
  RecurrentCell cell("c", CellKind::Gru, 2, 3, rng);
  for (std::size_t j = 3; j < 6; ++j) cell.b.value[j] = 50.0;
  Tape tape;
  const Tensor h0(2, 3, {0.3, -0.2, 0.9, -0.5, 0.1, 0.4});
  const CellState s = cell.state_from(tape, h0, Tensor());
  const CellState next = cell.step(tape, tape.constant(Tensor(2, 2, {1.0, -1.0, 0.5, 2.0})), s);
  for (std::size_t i = 0; i < h0.size(); ++i) CHECK(std::abs(tape.value(next.h)[i] - h0[i]) < 1e-15);
}

TEST_CASE("cells match a plain-loop reference") {
  oracle::Rng r(11);
  const std::size_t in = 3, H = 4;
  const std::vector<double> x = {0.2, -0.7, 1.1}, h = {0.1, -0.3, 0.5, 0.2}, c = {0.4, -0.1, 0.9, -0.6};

  SUBCASE("lstm") {
    Rng rng(5);
    RecurrentCell cell("c", CellKind::Lstm, in, H, rng);
    cell.b.value = random_tensor(1, 4 * H, r);
    Tape tape;
    const CellState s = cell.state_from(tape, Tensor::row(h), Tensor::row(c));
    const CellState next = cell.step(tape, tape.constant(Tensor::row(x)), s);
    for (std::size_t j = 0; j < H; ++j) {
      double z[4];
      for (std::size_t g = 0; g < 4; ++g) {
        z[g] = ref_linear(x, cell.wx.value, g * H, H)[j] + ref_linear(h, cell.wh.value, g * H, H)[j] +
               cell.b.value[g * H + j];
      }
      const double cn = sig(z[1]) * c[j] + sig(z[0]) * std::tanh(z[2]);
      CHECK(tape.value(next.c)[j] == doctest::Approx(cn).epsilon(1e-13));
      CHECK(tape.value(next.h)[j] == doctest::Approx(sig(z[3]) * std::tanh(cn)).epsilon(1e-13));
    }
  }
  SUBCASE("gru") {
    Rng rng(6);
    RecurrentCell cell("c", CellKind::Gru, in, H, rng);
    cell.b.value = random_tensor(1, 3 * H, r);
    cell.bh.value = random_tensor(1, 3 * H, r);
    Tape tape;
    const CellState s = cell.state_from(tape, Tensor::row(h), Tensor());
    const CellState next = cell.step(tape, tape.constant(Tensor::row(x)), s);
    for (std::size_t j = 0; j < H; ++j) {
      auto xa = [&](std::size_t g) { return ref_linear(x, cell.wx.value, g * H, H)[j] + cell.b.value[g * H + j]; };
      auto ha = [&](std::size_t g) { return ref_linear(h, cell.wh.value, g * H, H)[j] + cell.bh.value[g * H + j]; };
      const double rg = sig(xa(0) + ha(0)), zg = sig(xa(1) + ha(1));
      const double n = std::tanh(xa(2) + rg * ha(2));
      CHECK(tape.value(next.h)[j] == doctest::Approx((1.0 - zg) * n + zg * h[j]).epsilon(1e-13));
    }
  }
}

TEST_CASE("Adam updates") {
  SUBCASE("first step with unit gradient is about -lr") {
    Parameter p("p", Tensor(1, 1, 0.0));
    Adam opt({&p});
    p.grad[0] = 1.0;
    opt.step();
    CHECK(p.value[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("zero gradient leaves parameters and decays moments") {
    Parameter p("p", Tensor(1, 2, {1.5, -2.0}));
    p.m = Tensor(1, 2, {0.2, 0.4});
    p.v = Tensor(1, 2, {0.1, 0.3});
    Adam opt({&p});
    p.zero_grad();
    opt.step();
    CHECK(p.m[0] == doctest::Approx(0.18));
    CHECK(p.v[1] == doctest::Approx(0.3 * 0.999));
    // With nonzero carried moments the parameter still moves; from fresh moments it must not.
    Parameter q("q", Tensor(1, 2, {1.5, -2.0}));
    Adam fresh({&q});
    q.zero_grad();
    fresh.step();
    CHECK(q.value == Tensor(1, 2, {1.5, -2.0}));
  }
  SUBCASE("non-finite gradient names the parameter") {
    Parameter p("layer.weight", Tensor(1, 2, {1.0, 2.0}));
    Adam opt({&p});
    p.grad[1] = std::nan("");
    try {
      opt.step();
      FAIL("expected a training error");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
    }
    CHECK(p.value == Tensor(1, 2, {1.0, 2.0}));
  }
  SUBCASE("clipping rescales by the global norm") {
    Parameter a("a", Tensor(1, 1, 0.0)), b("b", Tensor(1, 1, 0.0));
    Adam opt({&a, &b}, AdamConfig{1e-3, 0.9, 0.999, 1e-8, 1.0});
    a.grad[0] = 3.0;
    b.grad[0] = 4.0;
    opt.step();
    CHECK(opt.last_grad_norm() == doctest::Approx(5.0));
    CHECK(a.m[0] == doctest::Approx(0.1 * 0.6));
    CHECK(b.m[0] == doctest::Approx(0.1 * 0.8));
    // Below the threshold nothing changes.
    Parameter c("c", Tensor(1, 1, 0.0));
    Adam loose({&c}, AdamConfig{1e-3, 0.9, 0.999, 1e-8, 10.0});
    c.grad[0] = 3.0;
    loose.step();
    CHECK(c.m[0] == doctest::Approx(0.3));
  }
}

TEST_CASE("plateau schedule halves and respects the floor") {
  PlateauSchedule s(1e-3, 0.5, 2, 1e-4);
  CHECK(s.observe(1.0) == 1e-3);
  CHECK(s.observe(1.0) == 1e-3);
  CHECK(s.observe(1.0) == 1e-3);
  CHECK(s.observe(1.0) == 5e-4);
  for (int i = 0; i < 1000; ++i) s.observe(1.0);
  CHECK(s.lr() == 1e-4);
  CHECK(s.observe(0.5) == 1e-4);
}

TEST_CASE("gradient check trivial cases") {
  CHECK(gradient_check({}, [](Tape& t) { return t.constant(Tensor(1, 1, 1.0)); }) == 0.0);
  Parameter w("w", Tensor(3, 2, {0.1, 0.2, -0.3, 0.4, 0.5, -0.6}));
  const Tensor x(4, 3, {1, 2, 3, -1, 0.5, 2, 0, 1, -2, 3, 3, 1});
  const double err = gradient_check({&w}, [&](Tape& t) { return t.sum(t.matmul(t.constant(x), t.param(w))); });
  CHECK(err < 1e-9);
}

TEST_CASE("gradient checks for every layer kind") {
  const std::size_t in = 3, H = 4, T = 5, B = 2;
  oracle::Rng r(99);
  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(random_tensor(B, in, r));
  const Tensor target_seq = random_tensor(B * T, 2, r);
  const Tensor target_last = random_tensor(B, 2, r);

  SUBCASE("dense") {
    Rng rng(1);
    Dense d1("d1", in, H, rng), d2("d2", H, 2, rng);
    std::vector<Parameter*> ps = d1.parameters();
    for (Parameter* p : d2.parameters()) ps.push_back(p);
    for (Parameter* p : ps)
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] += 0.1 * r.uniform(-1, 1);
    const double err = gradient_check(ps, [&](Tape& t) {
      const Var h = t.tanh(d1.forward(t, t.constant(xs[0])));
      return t.mse(d2.forward(t, h), t.constant(target_last));
    });
    CHECK(err < 1e-4);
  }

  struct Case {
    const char* name;
    CellKind kind;
    std::size_t layers;
    bool bidirectional;
  };
  const Case cases[] = {{"vanilla", CellKind::Vanilla, 1, false}, {"lstm", CellKind::Lstm, 1, false},
                        {"gru", CellKind::Gru, 1, false},         {"bidirectional", CellKind::Vanilla, 1, true},
                        {"stacked", CellKind::Vanilla, 2, false}, {"bidirectional-lstm", CellKind::Lstm, 1, true},
                        {"stacked-gru", CellKind::Gru, 2, false}};
  for (const Case& c : cases) {
    CAPTURE(c.name);
    Rng rng(7);
    RecurrentStack stack("s", c.kind, in, H, c.layers, c.bidirectional, rng);
    Dense head("head", stack.output_size(), 2, rng);
    std::vector<Parameter*> ps = stack.parameters();
    for (Parameter* p : head.parameters()) ps.push_back(p);
    // Nonzero biases so no gradient path is trivially degenerate.
    for (Parameter* p : ps)
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] += 0.1 * r.uniform(-1, 1);

    const SequenceState carry{{random_tensor(B, H, r)}, {random_tensor(B, H, r)}};
    const double seq_err = gradient_check(ps, [&](Tape& t) {
      std::vector<Var> in_vars;
      for (const auto& x : xs) in_vars.push_back(t.constant(x));
      const auto out = stack.run(t, in_vars, c.layers == 1 ? &carry : nullptr);
      std::vector<Var> preds;
      for (Var h : stack.per_step(t, out)) preds.push_back(head.forward(t, h));
      return t.mse(t.stack_rows(preds), t.constant(target_seq));
    });
    CHECK(seq_err < 1e-4);

    const double last_err = gradient_check(ps, [&](Tape& t) {
      std::vector<Var> in_vars;
      for (const auto& x : xs) in_vars.push_back(t.constant(x));
      const auto out = stack.run(t, in_vars);
      return t.mse(head.forward(t, stack.final_state(t, out)), t.constant(target_last));
    });
    CHECK(last_err < 1e-4);
  }
}

TEST_CASE("carried state round-trips through run") {
  Rng rng(4);
  RecurrentStack stack("s", CellKind::Lstm, 2, 3, 1, false, rng);
  oracle::Rng r(4);
  std::vector<Tensor> xs;
  for (int t = 0; t < 6; ++t) xs.push_back(random_tensor(1, 2, r));
  // Six steps at once equal three plus three with the state carried.
  Tape whole;
  std::vector<Var> all;
  for (const auto& x : xs) all.push_back(whole.constant(x));
  const auto full = stack.run(whole, all);

  SequenceState mid;
  Tape a, b;
  std::vector<Var> first, second;
  for (int t = 0; t < 3; ++t) first.push_back(a.constant(xs[t]));
  for (int t = 3; t < 6; ++t) second.push_back(b.constant(xs[t]));
  stack.run(a, first, nullptr, &mid);
  const auto tail = stack.run(b, second, &mid);
  CHECK(b.value(tail.forward.back()) == whole.value(full.forward.back()));
}

TEST_CASE("initialization is seeded") {
  Rng a(42), b(42), c(43);
  const Tensor ta = glorot_uniform(8, 16, a), tb = glorot_uniform(8, 16, b), tc = glorot_uniform(8, 16, c);
  CHECK(ta == tb);
  CHECK(!(ta == tc));
  const double lim = std::sqrt(6.0 / 24.0);
  for (double v : ta.values()) CHECK(std::abs(v) <= lim);
}

TEST_CASE("SIMD kernels agree with the scalar reference") {
  if (!isa_available(Isa::Avx2)) {
    MESSAGE("AVX2 not available; only the scalar kernels are exercised");
    return;
  }
  const KernelTable& s = kernels(Isa::Scalar);
  const KernelTable& v = kernels(Isa::Avx2);
  oracle::Rng r(123);
  auto close = [](const Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12 * std::max(1.0, std::abs(a[i]))) return false;
    return true;
  };
  const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {31, 128, 32}, {2, 17, 3}, {33, 20, 65}, {4, 16, 16}};
  for (const auto& d : sizes) {
    const std::size_t m = d[0], n = d[1], k = d[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    {
      const Tensor a = random_tensor(m, k, r), b = random_tensor(k, n, r), c0 = random_tensor(m, n, r);
      Tensor c1 = c0, c2 = c0;
      s.gemm_nn(m, n, k, a.data(), b.data(), c1.data());
      v.gemm_nn(m, n, k, a.data(), b.data(), c2.data());
      CHECK(close(c1, c2));
    }
    {
      const Tensor a = random_tensor(m, k, r), b = random_tensor(m, n, r), c0 = random_tensor(k, n, r);
      Tensor c1 = c0, c2 = c0;
      s.gemm_tn(m, n, k, a.data(), b.data(), c1.data());
      v.gemm_tn(m, n, k, a.data(), b.data(), c2.data());
      CHECK(close(c1, c2));
    }
    {
      const Tensor a = random_tensor(m, n, r), b = random_tensor(k, n, r), c0 = random_tensor(m, k, r);
      Tensor c1 = c0, c2 = c0;
      s.gemm_nt(m, n, k, a.data(), b.data(), c1.data());
      v.gemm_nt(m, n, k, a.data(), b.data(), c2.data());
      CHECK(close(c1, c2));
    }
    {
      const Tensor x = random_tensor(1, n * k, r), y0 = random_tensor(1, n * k, r);
      CHECK(s.dot(x.size(), x.data(), y0.data()) == doctest::Approx(v.dot(x.size(), x.data(), y0.data())).epsilon(1e-12));
      Tensor y1 = y0, y2 = y0;
      s.axpy(x.size(), 0.37, x.data(), y1.data());
      v.axpy(x.size(), 0.37, x.data(), y2.data());
      CHECK(close(y1, y2));
    }
    {
      const std::size_t len = m * n;
      const Tensor g = random_tensor(1, len, r);
      Tensor m1 = random_tensor(1, len, r), v1(1, len), p1 = random_tensor(1, len, r);
      for (std::size_t i = 0; i < len; ++i) v1[i] = std::abs(r.uniform(0, 1));
      Tensor m2 = m1, v2 = v1, p2 = p1;
      const AdamCoefficients co{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      s.adam_update(len, co, g.data(), m1.data(), v1.data(), p1.data());
      v.adam_update(len, co, g.data(), m2.data(), v2.data(), p2.data());
      CHECK(close(m1, m2));
      CHECK(close(v1, v2));
      CHECK(close(p1, p2));
    }
  }
}

TEST_CASE("kernel selection") {
  CHECK(kernels(Isa::Scalar).isa == Isa::Scalar);
  CHECK(isa_available(Isa::Scalar));
  CHECK(to_string(kernels().isa).size() > 0);
}
