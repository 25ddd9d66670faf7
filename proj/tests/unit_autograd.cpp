#include <cmath>
#include <functional>

#include "doctest.h"
#include "gmf/autograd.hpp"
#include "gmf/rng.hpp"
#include "oracles.hpp"

using namespace gmf;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Checks d(sum(op(x...)))/dx against central finite differences for each
// input, on the same eager path the tape replays.
void check_op_gradient(const char* name,
                       const std::function<Var(const std::vector<Var>&)>& op_var,
                       const std::function<Tensor(const std::vector<Tensor>&)>& op_eager,
                       std::vector<Tensor> inputs, double tol = 1e-6) {
  CAPTURE(name);
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  Var loss = sum_all(op_var(vars));
  tape.backward(loss);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor analytic = tape.grad(vars[k]);
    auto eval = [&]() { return sum_all(op_eager(inputs))[0]; };
    Tensor fd = oracles::finite_diff_grad(eval, inputs[k], 1e-5);
    CHECK_MESSAGE(oracles::max_rel_err(analytic, fd, 1e-4) < tol,
                  name << " input " << k << " gradient mismatch");
  }
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("scalar identities") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{}, 3.0));
  Var y = sum_all(mul(x, x));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));

  Tape tape2;
  Var z = tape2.leaf(Tensor(Shape{}, 0.0));
  Var s = sum_all(sigmoid(z));
  tape2.backward(s);
  CHECK(tape2.grad(z)[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("every differentiable primitive matches finite differences") {
  Rng rng(101);

  check_op_gradient(
      "add", [](const std::vector<Var>& v) { return add(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return add(v[0], v[1]); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})});
  check_op_gradient(
      "add broadcast", [](const std::vector<Var>& v) { return add(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return add(v[0], v[1]); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {4})});
  check_op_gradient(
      "sub", [](const std::vector<Var>& v) { return sub(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return sub(v[0], v[1]); },
      {random_tensor(rng, {5}), random_tensor(rng, {5})});
  check_op_gradient(
      "mul broadcast", [](const std::vector<Var>& v) { return mul(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return mul(v[0], v[1]); },
      {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4})});
  {
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4});
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = (b[i] < 0 ? -1 : 1) * (std::abs(b[i]) + 0.5);
    check_op_gradient(
        "divide", [](const std::vector<Var>& v) { return divide(v[0], v[1]); },
        [](const std::vector<Tensor>& v) { return divide(v[0], v[1]); }, {a, b});
  }
  {
    // Keep operands separated so finite differences never cross the kink.
    Tensor a = random_tensor(rng, {4, 4});
    Tensor b = random_tensor(rng, {4, 4});
    for (std::size_t i = 0; i < a.numel(); ++i)
      if (std::abs(a[i] - b[i]) < 1e-2) a[i] += 0.1;
    check_op_gradient(
        "maximum", [](const std::vector<Var>& v) { return maximum(v[0], v[1]); },
        [](const std::vector<Tensor>& v) { return maximum(v[0], v[1]); }, {a, b});
  }
  check_op_gradient(
      "exp", [](const std::vector<Var>& v) { return exp(v[0]); },
      [](const std::vector<Tensor>& v) { return exp(v[0]); }, {random_tensor(rng, {3, 3})});
  check_op_gradient(
      "sigmoid", [](const std::vector<Var>& v) { return sigmoid(v[0]); },
      [](const std::vector<Tensor>& v) { return sigmoid(v[0]); }, {random_tensor(rng, {7})});
  check_op_gradient(
      "softplus", [](const std::vector<Var>& v) { return softplus(v[0]); },
      [](const std::vector<Tensor>& v) { return softplus(v[0]); }, {random_tensor(rng, {7})});
  check_op_gradient(
      "tanh", [](const std::vector<Var>& v) { return tanh(v[0]); },
      [](const std::vector<Tensor>& v) { return tanh(v[0]); }, {random_tensor(rng, {7})});
  check_op_gradient(
      "matmul", [](const std::vector<Var>& v) { return matmul(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return matmul(v[0], v[1]); },
      {random_tensor(rng, {3, 5}), random_tensor(rng, {5, 2})});
  check_op_gradient(
      "softmax", [](const std::vector<Var>& v) { return softmax_lastdim(v[0]); },
      [](const std::vector<Tensor>& v) { return softmax_lastdim(v[0]); },
      {random_tensor(rng, {4, 6})});
  check_op_gradient(
      "mean_all", [](const std::vector<Var>& v) { return mean_all(v[0]); },
      [](const std::vector<Tensor>& v) { return mean_all(v[0]); }, {random_tensor(rng, {3, 4})});
  check_op_gradient(
      "gap_hw", [](const std::vector<Var>& v) { return gap_hw(v[0]); },
      [](const std::vector<Tensor>& v) { return gap_hw(v[0]); }, {random_tensor(rng, {4, 4, 3})});
  check_op_gradient(
      "conv_dw3x3", [](const std::vector<Var>& v) { return conv_dw3x3(v[0], v[1]); },
      [](const std::vector<Tensor>& v) { return conv_dw3x3(v[0], v[1]); },
      {random_tensor(rng, {5, 5, 2}), random_tensor(rng, {2, 3, 3})});
  check_op_gradient(
      "avgpool", [](const std::vector<Var>& v) { return avgpool(v[0], 2); },
      [](const std::vector<Tensor>& v) { return avgpool(v[0], 2); },
      {random_tensor(rng, {4, 4, 3})});
  check_op_gradient(
      "upsample_nn", [](const std::vector<Var>& v) { return upsample_nn(v[0], 2); },
      [](const std::vector<Tensor>& v) { return upsample_nn(v[0], 2); },
      {random_tensor(rng, {3, 3, 2})});
  {
    std::vector<std::uint32_t> perm = {3, 1, 0, 2};
    check_op_gradient(
        "gather_rows", [&](const std::vector<Var>& v) { return gather_rows(v[0], perm); },
        [&](const std::vector<Tensor>& v) { return gather_rows(v[0], perm); },
        {random_tensor(rng, {4, 3})});
  }
  check_op_gradient(
      "transpose2d", [](const std::vector<Var>& v) { return transpose2d(v[0]); },
      [](const std::vector<Tensor>& v) { return transpose2d(v[0]); }, {random_tensor(rng, {3, 5})});
  check_op_gradient(
      "concat+slice",
      [](const std::vector<Var>& v) {
        return slice_lastdim(concat_lastdim({v[0], v[1]}), 1, 4);
      },
      [](const std::vector<Tensor>& v) {
        return slice_lastdim(concat_lastdim<double>({v[0], v[1]}), 1, 4);
      },
      {random_tensor(rng, {3, 2}), random_tensor(rng, {3, 3})});
  check_op_gradient(
      "cumsum", [](const std::vector<Var>& v) { return cumsum(v[0], 0); },
      [](const std::vector<Tensor>& v) { return cumsum(v[0], 0); }, {random_tensor(rng, {6, 2})});
  {
    Tensor pos = random_tensor(rng, {6, 2}, 0.3, 1.5);
    check_op_gradient(
        "cumprod", [](const std::vector<Var>& v) { return cumprod(v[0], 0); },
        [](const std::vector<Tensor>& v) { return cumprod(v[0], 0); }, {pos});
  }
  {
    // Gates in (0,1), drive unconstrained; length crosses a chunk boundary.
    Tensor gate = random_tensor(rng, {130, 3}, 0.05, 0.95);
    Tensor drive = random_tensor(rng, {130, 3});
    check_op_gradient(
        "scan_gated", [](const std::vector<Var>& v) { return scan_gated(v[0], v[1], 64); },
        [](const std::vector<Tensor>& v) { return scan_gated(v[0], v[1], 64); }, {gate, drive},
        1e-5);
  }
  {
    Tensor feat = random_tensor(rng, {5, 5, 2});
    Tensor pts(Shape{6, 2});
    for (std::size_t p = 0; p < 6; ++p) {
      // Fractional parts kept away from cell boundaries (bilinear is only
      // piecewise smooth).
      pts[p * 2] = rng.uniform_index(4) + rng.uniform(0.25, 0.75);
      pts[p * 2 + 1] = rng.uniform_index(4) + rng.uniform(0.25, 0.75);
    }
    check_op_gradient(
        "bilinear_sample",
        [](const std::vector<Var>& v) { return bilinear_sample(v[0], v[1]); },
        [](const std::vector<Tensor>& v) { return bilinear_sample(v[0], v[1]); }, {feat, pts});
  }
}

TEST_CASE("chunked scan gradient matches finite differences at 1e-4") {
  Rng rng(55);
  const std::size_t L = 192, D = 4;
  Tensor raw = random_tensor(rng, {L, D}, -3.0, 3.0);
  Tensor drive = random_tensor(rng, {L, D});

  Tape tape;
  Var vraw = tape.leaf(raw);
  Var vdrive = tape.leaf(drive);
  Var h = scan_gated(sigmoid(vraw), vdrive, 64);
  Var loss = sum_all(h);
  tape.backward(loss);

  auto eval = [&]() { return sum_all(scan_gated(sigmoid(raw), drive, 64))[0]; };
  Tensor fd_raw = oracles::finite_diff_grad(eval, raw, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(vraw), fd_raw, 1e-4) < 1e-4);
  Tensor fd_drive = oracles::finite_diff_grad(eval, drive, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(vdrive), fd_drive, 1e-4) < 1e-4);
}

TEST_CASE("diamond reuse of a subexpression accumulates correctly") {
  Rng rng(71);
  Tensor x0 = random_tensor(rng, {4});
  Tape tape;
  Var x = tape.leaf(x0);
  Var g = sigmoid(x);                        // shared node
  Var loss = sum_all(add(mul(g, g), exp(g)));  // two consumers of g
  tape.backward(loss);

  Tensor xc = x0;
  auto eval = [&]() {
    Tensor s = sigmoid(xc);
    return sum_all(add(mul(s, s), exp(s)))[0];
  };
  Tensor fd = oracles::finite_diff_grad(eval, xc, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(x), fd, 1e-6) < 1e-6);
}

TEST_CASE("replaying a tape twice yields bitwise-identical gradients") {
  Rng rng(9);
  Tape tape;
  Var x = tape.leaf(random_tensor(rng, {4, 4}));
  Var y = tape.leaf(random_tensor(rng, {4, 4}));
  Var loss = sum_all(mul(sigmoid(mul(x, y)), add(x, y)));
  tape.backward(loss);
  Tensor gx1 = tape.grad(x), gy1 = tape.grad(y);
  tape.backward(loss);
  Tensor gx2 = tape.grad(x), gy2 = tape.grad(y);
  for (std::size_t i = 0; i < gx1.numel(); ++i) {
    CHECK(gx1[i] == gx2[i]);
    CHECK(gy1[i] == gy2[i]);
  }
}

TEST_CASE("adjoint of an unused output is exactly zero") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{3}, 1.0));
  Var used = sum_all(mul(x, x));
  Var unused = exp(x);  // traced but not part of the loss
  tape.backward(used);
  Tensor g_unused = tape.grad(unused);
  for (std::size_t i = 0; i < g_unused.numel(); ++i) CHECK(g_unused[i] == 0.0);
}

TEST_CASE("constants participate in forward but receive no node") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2}, 2.0));
  Var c = tape.constant(Tensor(Shape{2}, 5.0));
  Var y = sum_all(mul(x, c));
  tape.backward(y);
  Tensor gx = tape.grad(x);
  CHECK(gx[0] == 5.0);
  CHECK(gx[1] == 5.0);
}

TEST_CASE("backward requires a scalar traced output") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2, 2}, 1.0));
  Var y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

}  // TEST_SUITE
