#include <cmath>

#include "doctest.h"
#include "gmf/aware_ssm.hpp"
#include "oracles.hpp"

using namespace gmf;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_SUITE("aware-ssm") {

TEST_CASE("combine_transitions") {
  Rng rng(3);
  DirectionalTransition<Tensor> dt;
  dt.forward_state = random_tensor(rng, {8});
  dt.lateral_state = random_tensor(rng, {8});
  dt.backward_state = random_tensor(rng, {8});

  SUBCASE("forced (1,0,0) weights select the forward transition") {
    dt.raster_logits = Tensor::from({3}, {1000.0, 0.0, 0.0});
    Tensor a = combine_transitions(dt, ScanPattern::Raster);
    for (std::size_t i = 0; i < 8; ++i) CHECK(a[i] == doctest::Approx(dt.forward_state[i]).epsilon(1e-14));
  }
  SUBCASE("equal transitions are a fixed point for any weights") {
    dt.lateral_state = dt.forward_state;
    dt.backward_state = dt.forward_state;
    dt.zigzag_logits = random_tensor(rng, {3});
    Tensor a = combine_transitions(dt, ScanPattern::Zigzag);
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(a[i] == doctest::Approx(dt.forward_state[i]).epsilon(1e-13));
  }
  SUBCASE("random logits match the explicit weighted sum") {
    dt.raster_logits = random_tensor(rng, {3});
    Tensor a = combine_transitions(dt, ScanPattern::Raster);
    double e[3];
    double denom = 0;
    double mx = std::max({dt.raster_logits[0], dt.raster_logits[1], dt.raster_logits[2]});
    for (int i = 0; i < 3; ++i) denom += (e[i] = std::exp(dt.raster_logits[std::size_t(i)] - mx));
    for (std::size_t i = 0; i < 8; ++i) {
      const double expect = (e[0] * dt.forward_state[i] + e[1] * dt.lateral_state[i] +
                             e[2] * dt.backward_state[i]) /
                            denom;
      CHECK(oracles::rel_err(a[i], expect, 1e-12) < 1e-12);
    }
  }
}

TEST_CASE("initial directional weights: forward > lateral > backward on raster") {
  Rng rng(1);
  auto p = make_aware_ssm_params(rng, 8, 8, 10.0);
  Tensor wr = softmax_lastdim(p.transitions.raster_logits);
  CHECK(wr[0] > wr[1]);
  CHECK(wr[1] > wr[2]);
  CHECK(std::abs(wr[0] + wr[1] + wr[2] - 1.0) < 1e-12);
  CHECK(wr[0] == doctest::Approx(0.5).epsilon(1e-12));
  Tensor wz = softmax_lastdim(p.transitions.zigzag_logits);
  CHECK(std::abs(wz[0] + wz[1] + wz[2] - 1.0) < 1e-12);
  CHECK(wz[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(wz[2] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("distance decay") {
  Rng rng(9);
  const std::size_t L = 64, C = 6;
  DecayParams<Tensor> p{Tensor(Shape{1}, lambda_raw_for(1.0)), 20.0};
  Tensor x = random_tensor(rng, {L, C});

  SUBCASE("d = 0 leaves features untouched") {
    Tensor d(Shape{L}, 0.0);
    Tensor y = distance_decay(x, d, p);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("d = d_max with lambda = 1 scales by e^-1") {
    Tensor d(Shape{L}, 20.0);
    Tensor y = distance_decay(x, d, p);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(y[i] == doctest::Approx(x[i] * std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("scales strictly decrease along a sorted distance ramp") {
    Tensor ones(Shape{L, 1}, 1.0);
    Tensor d(Shape{L});
    for (std::size_t i = 0; i < L; ++i) d[i] = 20.0 * static_cast<double>(i) / (L - 1);
    Tensor y = distance_decay(ones, d, p);
    for (std::size_t i = 1; i < L; ++i) CHECK(y[i] < y[i - 1]);
  }
  SUBCASE("lambda -> 0 is the bitwise identity") {
    DecayParams<Tensor> p0{Tensor(Shape{1}, -1000.0), 20.0};  // softplus underflows to exactly 0
    Tensor d = random_tensor(rng, {L}, 0.0, 20.0);
    Tensor y = distance_decay(x, d, p0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("distances beyond d_max are clamped") {
    Tensor d(Shape{L}, 25.0);  // above d_max = 20
    Tensor at_max(Shape{L}, 20.0);
    Tensor y = distance_decay(x, d, p);
    Tensor expect = distance_decay(x, at_max, p);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == expect[i]);
  }
}

TEST_CASE("scan_parallel matches scan_sequential across sizes and the underflow stress") {
  Rng rng(77);
  for (std::size_t L : {1u, 2u, 16u, 256u, 4096u}) {
    for (std::size_t D : {1u, 16u}) {
      ScanSequences seq;
      seq.b = random_tensor(rng, {L, D});
      seq.c = random_tensor(rng, {L, D});
      seq.delta = random_tensor(rng, {L, D}, -3.0, 3.0);
      Tensor a_comb = random_tensor(rng, {D}, -1.0, 1.0);

      Tensor gate = sigmoid(add(seq.delta, a_comb));
      Tensor drive = mul(seq.b, seq.c);
      Tensor expect = scan_sequential(gate, drive);
      Tensor got = scan_parallel(seq, a_comb);
      CHECK(oracles::max_rel_err(got, expect, 1e-9) < 1e-5);
    }
  }
  SUBCASE("L = 1 returns the drive u = B * C exactly") {
    ScanSequences seq;
    seq.b = random_tensor(rng, {1, 8});
    seq.c = random_tensor(rng, {1, 8});
    seq.delta = random_tensor(rng, {1, 8});
    Tensor a_comb = random_tensor(rng, {8});
    Tensor h = scan_parallel(seq, a_comb);
    Tensor u = mul(seq.b, seq.c);
    for (std::size_t i = 0; i < 8; ++i) CHECK(h[i] == u[i]);
  }
  SUBCASE("A + Delta = -8 everywhere") {
    const std::size_t L = 4096, D = 16;
    ScanSequences seq;
    seq.b = random_tensor(rng, {L, D});
    seq.c = random_tensor(rng, {L, D});
    seq.delta = Tensor(Shape{L, D}, -8.0);
    Tensor a_comb(Shape{D}, 0.0);
    Tensor expect = scan_sequential(sigmoid(seq.delta), mul(seq.b, seq.c));
    Tensor got = scan_parallel(seq, a_comb);
    CHECK(oracles::max_rel_err(got, expect, 1e-9) < 1e-5);
  }
}

TEST_CASE("gate range and retention monotonicity") {
  Rng rng(13);
  // Length kept where the cumulative product stays representable; the
  // chunked scan itself never forms this global product.
  const std::size_t L = 128, D = 8;
  ScanSequences seq;
  seq.b = random_tensor(rng, {L, D});
  seq.c = random_tensor(rng, {L, D});
  seq.delta = random_tensor(rng, {L, D}, -2.0, 2.0);
  Tensor a_comb = random_tensor(rng, {D}, -1.0, 1.0);
  ScanState state = scan_state(seq, a_comb);
  for (std::size_t i = 0; i < state.gate.numel(); ++i) {
    CHECK(state.gate[i] > 0.0);
    CHECK(state.gate[i] < 1.0);
  }
  for (std::size_t d = 0; d < D; ++d) {
    CHECK(state.retention[d] <= 1.0);
    for (std::size_t t = 1; t < L; ++t) {
      CHECK(state.retention[t * D + d] <= state.retention[(t - 1) * D + d]);
      CHECK(state.retention[t * D + d] > 0.0);
    }
  }
  // The materialized state agrees with the plain parallel surface.
  Tensor h = scan_parallel(seq, a_comb);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(h[i] == state.hidden[i]);
}

TEST_CASE("causality: h_t ignores later inputs") {
  Rng rng(5);
  const std::size_t L = 96, D = 4, cut = 40;
  Tensor gate = random_tensor(rng, {L, D}, 0.05, 0.95);
  Tensor drive = random_tensor(rng, {L, D});
  Tensor h1 = scan_gated(gate, drive, 32);
  Tensor gate2 = gate, drive2 = drive;
  for (std::size_t t = cut; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      gate2[t * D + d] = rng.uniform(0.05, 0.95);
      drive2[t * D + d] = rng.uniform(-2, 2);
    }
  Tensor h2 = scan_gated(gate2, drive2, 32);
  for (std::size_t t = 0; t < cut; ++t)
    for (std::size_t d = 0; d < D; ++d) REQUIRE(h1[t * D + d] == h2[t * D + d]);
}

TEST_CASE("aware_ssm_forward contracts") {
  Rng rng(21);
  const std::size_t C = 8, D = 8;
  auto params = make_aware_ssm_params(rng, C, D, 30.0);

  SUBCASE("zero input maps to zero output") {
    const std::size_t L = 32;
    Tensor x(Shape{L, C}, 0.0);
    Tensor d = random_tensor(rng, {L}, 0.0, 30.0);
    Tensor y = aware_ssm_forward(x, d, ScanPattern::Raster, params);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
  }
  SUBCASE("output shape equals input shape") {
    for (std::size_t L : {16u, 100u, 1024u}) {
      Tensor x = random_tensor(rng, {L, C});
      Tensor d = random_tensor(rng, {L}, 0.0, 30.0);
      Tensor y = aware_ssm_forward(x, d, ScanPattern::Zigzag, params);
      CHECK(y.shape() == x.shape());
    }
  }
  SUBCASE("float instantiation tracks the double path") {
    const std::size_t L = 64;
    Tensor x = random_tensor(rng, {L, C}, -1.0, 1.0);
    Tensor d = random_tensor(rng, {L}, 0.0, 30.0);
    Tensor yd = aware_ssm_forward(x, d, ScanPattern::Raster, params);
    auto pf = lift_aware_ssm_params<TensorF>(params, nullptr);
    TensorF yf = aware_ssm_forward(tensor_cast_from_double<float>(x),
                                   tensor_cast_from_double<float>(d), ScanPattern::Raster, pf);
    CHECK(oracles::max_rel_err(yd, tensor_to_double(yf), 1e-2) < 1e-3);
  }
}

TEST_CASE("gradients of lambda and directional logits match finite differences") {
  Rng rng(33);
  const std::size_t L = 48, C = 6, D = 4;
  auto params = make_aware_ssm_params(rng, C, D, 25.0, 16);
  Tensor x = random_tensor(rng, {L, C}, -1.0, 1.0);
  Tensor d = random_tensor(rng, {L}, 0.0, 25.0);

  Tape tape;
  auto lifted = lift_aware_ssm_params<Var>(params, &tape);
  Var vx = tape.constant(x);
  Var vd = tape.constant(d);
  Var loss = sum_all(aware_ssm_forward(vx, vd, ScanPattern::Raster, lifted));
  tape.backward(loss);

  auto eval = [&]() {
    return sum_all(aware_ssm_forward(x, d, ScanPattern::Raster, params))[0];
  };
  Tensor fd_lambda = oracles::finite_diff_grad(eval, params.decay.lambda_raw, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(lifted.decay.lambda_raw), fd_lambda, 1e-6) < 1e-4);

  Tensor fd_logits = oracles::finite_diff_grad(eval, params.transitions.raster_logits, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(lifted.transitions.raster_logits), fd_logits, 1e-6) < 1e-4);

  Tensor fd_fw = oracles::finite_diff_grad(eval, params.transitions.forward_state, 1e-5);
  CHECK(oracles::max_rel_err(tape.grad(lifted.transitions.forward_state), fd_fw, 1e-6) < 1e-4);

  // The zigzag logits are unused on the raster path.
  Tensor gz = tape.grad(lifted.transitions.zigzag_logits);
  for (std::size_t i = 0; i < gz.numel(); ++i) CHECK(gz[i] == 0.0);
}

}  // TEST_SUITE
