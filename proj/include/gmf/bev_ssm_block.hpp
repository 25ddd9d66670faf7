#pragma once

#include <array>

#include "gmf/aware_ssm.hpp"
#include "gmf/bev_encoding.hpp"
#include "gmf/scan_serializer.hpp"

namespace gmf {

// Immutable per-grid data shared by every block invocation at a given
// resolution: the positional encoding, both scan orders, and the scan-order
// distance sequences.
struct BlockGeometry {
  std::size_t rows = 0, cols = 0;
  ScanOrder raster, zigzag;
  Tensor pe;        // rows x cols x C
  Tensor d_raster;  // {rows*cols}
  Tensor d_zigzag;  // {rows*cols}
  double d_max = 1.0;
};

inline BlockGeometry make_block_geometry(const GridConfig& cfg, std::size_t channels,
                                         double base_d = 10000.0, double base_theta = 10000.0) {
  const std::size_t H = cfg.rows(), W = cfg.cols();
  if (H % 4 != 0 || W % 4 != 0)
    throw ConfigError("block grid dims must be divisible by 4 for the multi-scale branch, got " +
                      std::to_string(H) + "x" + std::to_string(W));
  BlockGeometry g;
  g.rows = H;
  g.cols = W;
  PolarGrid polar = polar_from_grid(cfg);
  g.pe = encode_bev_position(polar, channels, base_d, base_theta).enc;
  g.raster = raster_order(H, W);
  g.zigzag = zigzag_order(H, W);
  g.d_raster = permute_distances(polar.d, g.raster);
  g.d_zigzag = permute_distances(polar.d, g.zigzag);
  g.d_max = polar.d_max;
  return g;
}

template <class T>
struct BlockInputs {
  T pe;
  T d_raster;
  T d_zigzag;
};

template <class T>
BlockInputs<T> lift_block_geometry(const BlockGeometry& g, Tape* tape) {
  return {Lift<T>::from(g.pe, tape), Lift<T>::from(g.d_raster, tape),
          Lift<T>::from(g.d_zigzag, tape)};
}

template <class T>
struct BlockParams {
  T gate_logits;  // {C}
  T dw_kernel;    // {C, 3, 3}
  T pw_kernel;    // {C, C}
  T fusion_w1;    // {C, C/4}
  T fusion_b1;    // {C/4}
  T fusion_w2;    // {C/4, 4}
  T fusion_b2;    // {4}
  T msf_merge;    // {3C, C}
  AwareSsmParams<T> ssm_raster;
  AwareSsmParams<T> ssm_zigzag;
  bool residual = true;
};

// out = g * (x + pe) + (1 - g) * x, computed as x + g * pe; g = sigmoid of
// the per-channel gate logits.
template <class T>
T gated_pe(const T& x, const T& pe, const T& gate_logits) {
  if (x.shape() != pe.shape())
    throw ShapeError("gated_pe: features " + shape_str(x.shape()) + " vs encoding " +
                     shape_str(pe.shape()));
  return add(x, mul(pe, sigmoid(gate_logits)));
}

// 3x3 depthwise (zero padding, stride 1) followed by a 1x1 pointwise mix.
template <class T>
T dw_separable_conv(const T& x, const T& dw_kernel, const T& pw_kernel) {
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  T spatial = conv_dw3x3(x, dw_kernel);
  return reshape(matmul(reshape(spatial, {H * W, C}), pw_kernel), {H, W, C});
}

// Average-pool pyramid at factors 2 and 4, nearest-neighbor upsample back,
// 1x1 merge of the three scales.
template <class T>
T multi_scale_branch(const T& x, const T& merge) {
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % 4 != 0 || W % 4 != 0)
    throw ShapeError("multi_scale_branch: dims " + shape_str(x.shape()) + " not divisible by 4");
  T up2 = upsample_nn(avgpool(x, 2), 2);
  T up4 = upsample_nn(avgpool(x, 4), 4);
  T cat = concat_lastdim(std::vector<T>{x, up2, up4});
  return reshape(matmul(reshape(cat, {H * W, 3 * C}), merge), {H, W, C});
}

// Scene-conditioned branch weights: GAP of the summed branches through a
// small MLP, softmax over the four branches.
template <class T>
T adaptive_fusion_weights(const std::array<T, 4>& branches, const BlockParams<T>& p) {
  T summed = add(add(branches[0], branches[1]), add(branches[2], branches[3]));
  const std::size_t C = summed.dim(2);
  T ctx = reshape(gap_hw(summed), {std::size_t(1), C});
  T hidden = tanh(add(matmul(ctx, p.fusion_w1), p.fusion_b1));
  return softmax_lastdim(add(matmul(hidden, p.fusion_w2), p.fusion_b2));  // {1, 4}
}

template <class T>
T adaptive_fuse(const std::array<T, 4>& branches, const BlockParams<T>& p) {
  for (int b = 1; b < 4; ++b)
    if (branches[0].shape() != branches[static_cast<std::size_t>(b)].shape())
      throw ShapeError("adaptive_fuse: branch shapes differ");
  T w = adaptive_fusion_weights(branches, p);
  T out = mul(branches[0], slice_lastdim(w, 0, 1));
  for (std::size_t b = 1; b < 4; ++b)
    out = add(out, mul(branches[b], slice_lastdim(w, b, b + 1)));
  return out;
}

// Full block: gated positional encoding, depthwise-separable conv, then four
// parallel branches (identity, raster scan + AwareSSM, zigzag scan +
// AwareSSM, multi-scale) joined by the adaptive fusion head. The residual
// around the whole block is on by default and toggleable.
template <class T>
T block_forward(const T& x, const BlockInputs<T>& in, const BlockGeometry& geo,
                const BlockParams<T>& p) {
  if (x.rank() != 3 || x.dim(0) != geo.rows || x.dim(1) != geo.cols)
    throw ShapeError("block_forward: input " + shape_str(x.shape()) + " does not match geometry " +
                     std::to_string(geo.rows) + "x" + std::to_string(geo.cols));
  T pos = gated_pe(x, in.pe, p.gate_logits);
  T conv = dw_separable_conv(pos, p.dw_kernel, p.pw_kernel);

  T raster_seq = serialize(conv, geo.raster);
  T raster_out = deserialize(
      aware_ssm_forward(raster_seq, in.d_raster, ScanPattern::Raster, p.ssm_raster), geo.raster);
  T zigzag_seq = serialize(conv, geo.zigzag);
  T zigzag_out = deserialize(
      aware_ssm_forward(zigzag_seq, in.d_zigzag, ScanPattern::Zigzag, p.ssm_zigzag), geo.zigzag);
  T msf = multi_scale_branch(conv, p.msf_merge);

  T fused = adaptive_fuse(std::array<T, 4>{conv, raster_out, zigzag_out, msf}, p);
  return p.residual ? add(fused, x) : fused;
}

// Depthwise kernel starts as a noisy center tap, pointwise as a noisy
// identity, and the multi-scale merge as an exact three-way average; the
// fusion head starts at zero so the four branch weights begin uniform.
inline BlockParams<Tensor> make_block_params(Rng& rng, std::size_t channels, std::size_t d_state,
                                             double d_max, std::size_t chunk_len = 64,
                                             bool residual = true, double fusion_noise = 0.0) {
  BlockParams<Tensor> p;
  p.residual = residual;
  auto normal = [&rng](Shape s, double sigma) {
    Tensor t(std::move(s));
    if (sigma > 0)
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sigma);
    return t;
  };
  const std::size_t hidden = std::max<std::size_t>(1, channels / 4);
  p.gate_logits = normal({channels}, 0.5);
  p.dw_kernel = normal({channels, 3, 3}, 0.05);
  for (std::size_t c = 0; c < channels; ++c) p.dw_kernel[c * 9 + 4] += 1.0;
  p.pw_kernel = normal({channels, channels}, 0.05 / std::sqrt(static_cast<double>(channels)));
  for (std::size_t c = 0; c < channels; ++c) p.pw_kernel[c * channels + c] += 1.0;
  p.fusion_w1 = normal({channels, hidden}, fusion_noise);
  p.fusion_b1 = Tensor(Shape{hidden}, 0.0);
  p.fusion_w2 = normal({hidden, std::size_t(4)}, fusion_noise);
  p.fusion_b2 = Tensor(Shape{4}, 0.0);
  p.msf_merge = Tensor(Shape{3 * channels, channels}, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t s = 0; s < 3; ++s) p.msf_merge[(s * channels + c) * channels + c] = 1.0 / 3.0;
  p.ssm_raster = make_aware_ssm_params(rng, channels, d_state, d_max, chunk_len);
  p.ssm_zigzag = make_aware_ssm_params(rng, channels, d_state, d_max, chunk_len);
  return p;
}

template <class T>
BlockParams<T> lift_block_params(const BlockParams<Tensor>& p, Tape* tape) {
  BlockParams<T> out;
  out.residual = p.residual;
  out.gate_logits = Lift<T>::param(p.gate_logits, tape);
  out.dw_kernel = Lift<T>::param(p.dw_kernel, tape);
  out.pw_kernel = Lift<T>::param(p.pw_kernel, tape);
  out.fusion_w1 = Lift<T>::param(p.fusion_w1, tape);
  out.fusion_b1 = Lift<T>::param(p.fusion_b1, tape);
  out.fusion_w2 = Lift<T>::param(p.fusion_w2, tape);
  out.fusion_b2 = Lift<T>::param(p.fusion_b2, tape);
  out.msf_merge = Lift<T>::param(p.msf_merge, tape);
  out.ssm_raster = lift_aware_ssm_params<T>(p.ssm_raster, tape);
  out.ssm_zigzag = lift_aware_ssm_params<T>(p.ssm_zigzag, tape);
  return out;
}

}  // namespace gmf
