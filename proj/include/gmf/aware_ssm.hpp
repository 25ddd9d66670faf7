#pragma once

#include <cmath>

#include "gmf/autograd.hpp"
#include "gmf/ops.hpp"
#include "gmf/rng.hpp"
#include "gmf/scan_serializer.hpp"

namespace gmf {

// Learnable per-direction state transitions plus per-pattern combination
// logits. Softmax of the logits gives convex weights (w_fw, w_lat, w_bw).
template <class T>
struct DirectionalTransition {
  T forward_state;   // {d_state}
  T lateral_state;   // {d_state}
  T backward_state;  // {d_state}
  T raster_logits;   // {3}
  T zigzag_logits;   // {3}
};

// Multiplicative range attenuation exp(-lambda * d / d_max). lambda is kept
// positive through a softplus reparameterization; lambda_raw of
// softplus^-1(1) gives the unit init.
template <class T>
struct DecayParams {
  T lambda_raw;  // {1}
  double d_max = 1.0;
};

inline double lambda_raw_for(double lambda) { return std::log(std::expm1(lambda)); }

template <class T>
struct AwareSsmParams {
  DirectionalTransition<T> transitions;
  DecayParams<T> decay;
  T in_b, in_c, in_delta;  // {C, d_state} channel-wise linear projections
  T out_proj;              // {d_state, C}
  std::size_t chunk_len = 64;
};

// Per-step drive/gate/distance sequences for the double-precision scan
// surface.
struct ScanSequences {
  Tensor b;      // L x d_state
  Tensor c;      // L x d_state
  Tensor delta;  // L x d_state
  Tensor d;      // {L} distances
};

// A = w_fw * A_forward + w_lat * A_lateral + w_bw * A_backward with
// pattern-specific softmax weights.
template <class T>
T combine_transitions(const DirectionalTransition<T>& dt, ScanPattern pattern) {
  const T& logits = pattern == ScanPattern::Raster ? dt.raster_logits : dt.zigzag_logits;
  T w = softmax_lastdim(logits);
  T out = mul(dt.forward_state, slice_lastdim(w, 0, 1));
  out = add(out, mul(dt.lateral_state, slice_lastdim(w, 1, 2)));
  out = add(out, mul(dt.backward_state, slice_lastdim(w, 2, 3)));
  return out;
}

// x'_i = x_i * exp(-lambda * d_i / d_max), broadcast over channels.
// Distances beyond d_max (boundary cells) are clamped with a warning.
template <class T>
T distance_decay(const T& x, const T& d, const DecayParams<T>& p) {
  if (x.rank() != 2 || d.numel() != x.dim(0))
    throw ShapeError("distance_decay: x " + shape_str(x.shape()) + " vs d of length " +
                     std::to_string(d.numel()));
  T d_use = d;
  {
    const auto& dv = value_of(d);
    std::size_t clamped = 0, noteworthy = 0;
    const double rounding_slack = p.d_max * (1.0 + 1e-6);
    for (std::size_t i = 0; i < dv.numel(); ++i)
      if (dv[i] > p.d_max) {
        if (dv[i] > rounding_slack) ++noteworthy;
        ++clamped;
      }
    if (clamped) {
      if (noteworthy)
        log_warn("distance_decay: clamped " + std::to_string(noteworthy) +
                 " distances above d_max = " + std::to_string(p.d_max));
      Tensor capped = dv;
      for (std::size_t i = 0; i < capped.numel(); ++i) capped[i] = std::min(capped[i], p.d_max);
      d_use = Lift<T>::from(capped, tape_of(x));
    }
  }
  T lambda = softplus(p.lambda_raw);
  T scale = exp(mul_scalar(mul(d_use, lambda), -1.0 / p.d_max));  // {L}
  const std::size_t L = x.dim(0), C = x.dim(1);
  T ones_row = Lift<T>::from(Tensor(Shape{1, C}, 1.0), tape_of(x));
  return mul(x, matmul(reshape(scale, {L, 1}), ones_row));
}

// Intermediate state of one scan evaluation: exogenous drive u_t = B_t * C_t,
// sigmoid transition gates, cumulative retention P_t, and the hidden states.
struct ScanState {
  Tensor drive;      // L x d_state
  Tensor gate;       // L x d_state, strictly in (0, 1)
  Tensor retention;  // L x d_state, P_t = prod_{i<=t} gate_i, nonincreasing
  Tensor hidden;     // L x d_state
};

// Parallel evaluation of h_t = sigma(A + Delta_t) * h_{t-1} + B_t * C_t via
// chunked cumulative retention (see scan_gated). Matches scan_sequential
// within 1e-5 relative in double precision.
inline Tensor scan_parallel(const ScanSequences& seq, const Tensor& a_combined,
                            std::size_t chunk_len = 64) {
  Tensor gate = sigmoid(add(seq.delta, a_combined));
  Tensor drive = mul(seq.b, seq.c);
  return scan_gated(gate, drive, chunk_len);
}

// Same evaluation with the intermediates materialized (diagnostics and
// property tests; the retention here is the global cumulative product, which
// underflows for long adversarial sequences - the scan itself never forms it).
inline ScanState scan_state(const ScanSequences& seq, const Tensor& a_combined,
                            std::size_t chunk_len = 64) {
  ScanState s;
  s.gate = sigmoid(add(seq.delta, a_combined));
  s.drive = mul(seq.b, seq.c);
  s.retention = cumprod(s.gate, 0);
  s.hidden = scan_gated(s.gate, s.drive, chunk_len);
  return s;
}

// Full spatial-aware scan on a serialized sequence: distance decay, B/C/Delta
// projections, pattern-combined transition, gated recurrence, output
// projection back to the input channel count.
template <class T>
T aware_ssm_forward(const T& x_seq, const T& d, ScanPattern pattern, const AwareSsmParams<T>& p) {
  T attenuated = distance_decay(x_seq, d, p.decay);
  T b = matmul(attenuated, p.in_b);
  T c = matmul(attenuated, p.in_c);
  T delta = matmul(attenuated, p.in_delta);
  T a = combine_transitions(p.transitions, pattern);
  T gate = sigmoid(add(delta, a));
  T h = scan_gated(gate, mul(b, c), p.chunk_len);
  return matmul(h, p.out_proj);
}

// Initialization. Raster weights start at softmax (0.5, 0.3, 0.2), zigzag at
// (0.4, 0.4, 0.2): forward heaviest, lateral moderate, backward lightest.
inline AwareSsmParams<Tensor> make_aware_ssm_params(Rng& rng, std::size_t channels,
                                                    std::size_t d_state, double d_max,
                                                    std::size_t chunk_len = 64) {
  AwareSsmParams<Tensor> p;
  p.chunk_len = chunk_len;
  auto normal = [&rng](Shape s, double sigma) {
    Tensor t(std::move(s));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sigma);
    return t;
  };
  p.transitions.forward_state = normal({d_state}, 0.5);
  p.transitions.lateral_state = normal({d_state}, 0.5);
  p.transitions.backward_state = normal({d_state}, 0.5);
  p.transitions.raster_logits =
      Tensor::from({3}, {std::log(0.5), std::log(0.3), std::log(0.2)});
  p.transitions.zigzag_logits =
      Tensor::from({3}, {std::log(0.4), std::log(0.4), std::log(0.2)});
  p.decay.lambda_raw = Tensor(Shape{1}, lambda_raw_for(1.0));
  p.decay.d_max = d_max;
  p.in_b = normal({channels, d_state}, 1.0 / std::sqrt(static_cast<double>(channels)));
  p.in_c = normal({channels, d_state}, 1.0 / std::sqrt(static_cast<double>(channels)));
  p.in_delta = normal({channels, d_state}, 1.0 / std::sqrt(static_cast<double>(channels)));
  p.out_proj = normal({d_state, channels}, 1.0 / std::sqrt(static_cast<double>(d_state)));
  return p;
}

template <class T>
AwareSsmParams<T> lift_aware_ssm_params(const AwareSsmParams<Tensor>& p, Tape* tape) {
  AwareSsmParams<T> out;
  out.chunk_len = p.chunk_len;
  out.transitions.forward_state = Lift<T>::param(p.transitions.forward_state, tape);
  out.transitions.lateral_state = Lift<T>::param(p.transitions.lateral_state, tape);
  out.transitions.backward_state = Lift<T>::param(p.transitions.backward_state, tape);
  out.transitions.raster_logits = Lift<T>::param(p.transitions.raster_logits, tape);
  out.transitions.zigzag_logits = Lift<T>::param(p.transitions.zigzag_logits, tape);
  out.decay.lambda_raw = Lift<T>::param(p.decay.lambda_raw, tape);
  out.decay.d_max = p.decay.d_max;
  out.in_b = Lift<T>::param(p.in_b, tape);
  out.in_c = Lift<T>::param(p.in_c, tape);
  out.in_delta = Lift<T>::param(p.in_delta, tape);
  out.out_proj = Lift<T>::param(p.out_proj, tape);
  return out;
}

}  // namespace gmf
