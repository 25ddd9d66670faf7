#pragma once

#include <vector>

#include "gmf/bev_ssm_block.hpp"

namespace gmf {

// Camera-branch stand-in output plus the BEV grid at one pyramid scale.
struct ModalityFeatures {
  Tensor image;  // H_i x W_i x C
  Tensor bev;    // H x W x C
  std::size_t scale_id = 0;
};

// Integer-factor pooling / nearest-neighbor upsampling between pyramid
// levels.
template <class T>
T resample_to(const T& x, std::size_t rows, std::size_t cols) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  if (h == rows && w == cols) return x;
  if (h % rows == 0 && w % cols == 0 && h / rows == w / cols) return avgpool(x, h / rows);
  if (rows % h == 0 && cols % w == 0 && rows / h == cols / w) return upsample_nn(x, rows / h);
  throw ShapeError("resample_to: " + shape_str(x.shape()) + " to " + std::to_string(rows) + "x" +
                   std::to_string(cols) + " is not an integer factor");
}

// ---------------------------------------------------------------------------
// Channel attention alignment.
// ---------------------------------------------------------------------------

template <class T>
struct ChannelAlignParams {
  T mlp_w1;  // {2C, C/2}
  T mlp_b1;  // {C/2}
  T mlp_w2;  // {C/2, 2C}
  T mlp_b2;  // {2C}
  T merge;   // {2C, C}
};

// Squeeze-excitation over the concatenated modalities: sigmoid scales in
// (0, 1) per channel.
template <class T>
T channel_align_scales(const T& img, const T& bev, const ChannelAlignParams<T>& p) {
  T cat = concat_lastdim(std::vector<T>{img, bev});
  const std::size_t twoc = cat.dim(2);
  T ctx = reshape(gap_hw(cat), {std::size_t(1), twoc});
  T hidden = tanh(add(matmul(ctx, p.mlp_w1), p.mlp_b1));
  return sigmoid(add(matmul(hidden, p.mlp_w2), p.mlp_b2));  // {1, 2C}
}

template <class T>
T channel_align(const T& img, const T& bev, const ChannelAlignParams<T>& p) {
  if (img.shape() != bev.shape())
    throw ShapeError("channel_align: modality dims differ, " + shape_str(img.shape()) + " vs " +
                     shape_str(bev.shape()));
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  T cat = concat_lastdim(std::vector<T>{img, bev});
  T scales = reshape(channel_align_scales(img, bev, p), {2 * C});
  T scaled = mul(cat, scales);
  return reshape(matmul(reshape(scaled, {H * W, 2 * C}), p.merge), {H, W, C});
}

// ---------------------------------------------------------------------------
// Gated cross-attention: aligned features provide K, V; BEV provides queries.
// ---------------------------------------------------------------------------

template <class T>
struct CrossAttentionParams {
  T wq, wk, wv;   // {C, C}
  T gate_logits;  // {C}
};

template <class T>
T cross_attention_weights(const T& q_bev, const T& kv, const CrossAttentionParams<T>& p) {
  const std::size_t C = q_bev.dim(2);
  const std::size_t n = q_bev.dim(0) * q_bev.dim(1);
  const std::size_t m = kv.dim(0) * kv.dim(1);
  T q = matmul(reshape(q_bev, {n, C}), p.wq);
  T k = matmul(reshape(kv, {m, C}), p.wk);
  T scores = mul_scalar(matmul(q, transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(C)));
  return softmax_lastdim(scores);  // {n, m}
}

template <class T>
T gated_cross_attention(const T& q_bev, const T& kv, const CrossAttentionParams<T>& p,
                        std::size_t max_tokens = 4096) {
  if (q_bev.shape() != kv.shape())
    throw ShapeError("gated_cross_attention: query grid " + shape_str(q_bev.shape()) +
                     " vs kv grid " + shape_str(kv.shape()));
  const std::size_t H = q_bev.dim(0), W = q_bev.dim(1), C = q_bev.dim(2);
  if (H * W > max_tokens)
    throw ConfigError("gated_cross_attention: " + std::to_string(H * W) + " tokens exceed the " +
                      std::to_string(max_tokens) + "-token budget; downsample the grids first");
  T weights = cross_attention_weights(q_bev, kv, p);
  T v = matmul(reshape(kv, {H * W, C}), p.wv);
  T attn = matmul(weights, v);
  T q_flat = reshape(q_bev, {H * W, C});
  // g * attn + (1 - g) * q, written as q + g * (attn - q).
  T out = add(q_flat, mul(sub(attn, q_flat), sigmoid(p.gate_logits)));
  return reshape(out, {H, W, C});
}

// ---------------------------------------------------------------------------
// Hierarchical deformable cross-attention.
// ---------------------------------------------------------------------------

template <class T>
struct HcaParams {
  std::vector<T> offset_w;  // per scale {C, heads*K*2}
  std::vector<T> offset_b;  // per scale {heads*K*2}
  std::vector<T> attn_w;    // per scale {C, heads*K}
  std::vector<T> attn_b;    // per scale {heads*K}
  T value_w;                // {C, C}, shared across scales
  T out_w;                  // {C, C}
  std::size_t heads = 2;
  std::size_t points = 4;  // K sampling points per query per head
};

// Query cell centers expressed in a scale's pixel coordinates, tiled K times.
inline Tensor hca_reference_points(std::size_t q_rows, std::size_t q_cols, std::size_t s_rows,
                                   std::size_t s_cols, std::size_t k_points) {
  Tensor ref(Shape{q_rows * q_cols * k_points, 2});
  std::size_t i = 0;
  for (std::size_t h = 0; h < q_rows; ++h)
    for (std::size_t w = 0; w < q_cols; ++w) {
      const double u = (static_cast<double>(h) + 0.5) / static_cast<double>(q_rows) *
                           static_cast<double>(s_rows) -
                       0.5;
      const double v = (static_cast<double>(w) + 0.5) / static_cast<double>(q_cols) *
                           static_cast<double>(s_cols) -
                       0.5;
      for (std::size_t k = 0; k < k_points; ++k) {
        ref[i * 2] = u;
        ref[i * 2 + 1] = v;
        ++i;
      }
    }
  return ref;
}

// Post-softmax sampling weights for one scale: {N, heads*K}, simplex over K
// within each head.
template <class T>
T hca_sampling_weights(const T& q_flat, const HcaParams<T>& p, std::size_t scale) {
  T logits = add(matmul(q_flat, p.attn_w[scale]), p.attn_b[scale]);
  const std::size_t n = q_flat.dim(0);
  T per_head = reshape(logits, {n * p.heads, p.points});
  return reshape(softmax_lastdim(per_head), {n, p.heads * p.points});
}

// Per scale: predict tanh-bounded offsets and K softmax weights per head from
// the queries, bilinear-sample the projected image features at reference +
// offset, take the weighted sum per head, merge heads; scale outputs sum.
template <class T>
T hca_forward(const T& queries, const std::vector<T>& pyramid, const HcaParams<T>& p) {
  const std::size_t H = queries.dim(0), W = queries.dim(1), C = queries.dim(2);
  const std::size_t n = H * W, heads = p.heads, K = p.points;
  if (C % heads != 0) throw ShapeError("hca_forward: channels not divisible by head count");
  if (pyramid.size() != p.offset_w.size())
    throw ShapeError("hca_forward: pyramid has " + std::to_string(pyramid.size()) +
                     " scales, params have " + std::to_string(p.offset_w.size()));
  const std::size_t ch = C / heads;
  Tape* tape = tape_of(queries);
  T q_flat = reshape(queries, {n, C});
  T ones_ch = Lift<T>::from(Tensor(Shape{1, ch}, 1.0), tape);

  T total;
  for (std::size_t s = 0; s < pyramid.size(); ++s) {
    const std::size_t sh = pyramid[s].dim(0), sw = pyramid[s].dim(1);
    T offsets = tanh(add(matmul(q_flat, p.offset_w[s]), p.offset_b[s]));  // {n, heads*K*2}
    T weights = hca_sampling_weights(q_flat, p, s);                       // {n, heads*K}
    Tensor bound = Tensor::from({2}, {static_cast<double>(sh > 1 ? sh - 1 : 1),
                                      static_cast<double>(sw > 1 ? sw - 1 : 1)});
    T bound_t = Lift<T>::from(bound, tape);
    T ref = Lift<T>::from(hca_reference_points(H, W, sh, sw, K), tape);  // {n*K, 2}
    T v_flat = matmul(reshape(pyramid[s], {sh * sw, C}), p.value_w);

    std::vector<T> head_outs;
    for (std::size_t h = 0; h < heads; ++h) {
      T off_h = reshape(slice_lastdim(offsets, h * K * 2, (h + 1) * K * 2), {n * K, 2});
      T pts = add(mul(off_h, bound_t), ref);
      T w_h = slice_lastdim(weights, h * K, (h + 1) * K);  // {n, K}
      T v_head = reshape(slice_lastdim(v_flat, h * ch, (h + 1) * ch), {sh, sw, ch});
      T sampled = bilinear_sample(v_head, pts);  // {n*K, ch}
      T w_exp = matmul(reshape(w_h, {n * K, std::size_t(1)}), ones_ch);
      head_outs.push_back(sum_axis(reshape(mul(sampled, w_exp), {n, K, ch}), 1));
    }
    T merged = matmul(concat_lastdim(head_outs), p.out_w);
    total = (s == 0) ? merged : add(total, merged);
  }
  return reshape(total, {H, W, C});
}

// ---------------------------------------------------------------------------
// Full GM-Fusion at one pyramid scale.
// ---------------------------------------------------------------------------

template <class T>
struct GmFusionParams {
  ChannelAlignParams<T> align;
  CrossAttentionParams<T> ca;
  BlockParams<T> block_aligned;
  BlockParams<T> block_bev;
  BlockParams<T> block_fused;
  HcaParams<T> hca;
  std::size_t max_tokens = 4096;
};

// channel_align -> gated cross-attention -> three parallel BEV-SSM blocks
// (aligned, raw BEV, gated-CA streams) -> HCA against the image pyramid with
// queries = summed aligned and BEV streams -> fused output.
template <class T>
T gm_fusion_forward(const T& bev, const T& image, const std::vector<T>& pyramid,
                    const BlockInputs<T>& bin, const BlockGeometry& geo,
                    const GmFusionParams<T>& p) {
  T img_r = resample_to(image, geo.rows, geo.cols);
  T aligned = channel_align(img_r, bev, p.align);
  T ca_out = gated_cross_attention(bev, aligned, p.ca, p.max_tokens);

  T s_aligned = block_forward(aligned, bin, geo, p.block_aligned);
  T s_bev = block_forward(bev, bin, geo, p.block_bev);
  T s_fused = block_forward(ca_out, bin, geo, p.block_fused);

  T queries = add(s_aligned, s_bev);
  T hca = hca_forward(queries, pyramid, p.hca);
  return add(add(queries, s_fused), hca);
}

// Double-precision convenience surface over the generic forward.
inline Tensor gm_fusion_forward(const ModalityFeatures& mf, const std::vector<Tensor>& pyramid,
                                const BlockGeometry& geo, const GmFusionParams<Tensor>& p) {
  BlockInputs<Tensor> in = lift_block_geometry<Tensor>(geo, nullptr);
  return gm_fusion_forward<Tensor>(mf.bev, mf.image, pyramid, in, geo, p);
}

inline GmFusionParams<Tensor> make_gm_fusion_params(Rng& rng, std::size_t channels,
                                                    std::size_t d_state, double d_max,
                                                    std::size_t chunk_len = 64,
                                                    std::size_t heads = 2, std::size_t k_points = 4,
                                                    std::size_t n_scales = 4) {
  GmFusionParams<Tensor> p;
  auto normal = [&rng](Shape s, double sigma) {
    Tensor t(std::move(s));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sigma);
    return t;
  };
  const std::size_t C = channels;
  const double wscale = 1.0 / std::sqrt(static_cast<double>(C));

  p.align.mlp_w1 = normal({2 * C, C / 2}, wscale);
  p.align.mlp_b1 = Tensor(Shape{C / 2}, 0.0);
  p.align.mlp_w2 = normal({C / 2, 2 * C}, wscale);
  p.align.mlp_b2 = Tensor(Shape{2 * C}, 0.0);
  p.align.merge = Tensor(Shape{2 * C, C}, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    p.align.merge[c * C + c] = 0.5;
    p.align.merge[(C + c) * C + c] = 0.5;
  }
  for (std::size_t i = 0; i < p.align.merge.numel(); ++i)
    p.align.merge[i] += rng.normal(0.0, 0.02 * wscale);

  p.ca.wq = normal({C, C}, wscale);
  p.ca.wk = normal({C, C}, wscale);
  p.ca.wv = normal({C, C}, wscale);
  p.ca.gate_logits = normal({C}, 0.5);

  p.block_aligned = make_block_params(rng, C, d_state, d_max, chunk_len);
  p.block_bev = make_block_params(rng, C, d_state, d_max, chunk_len);
  p.block_fused = make_block_params(rng, C, d_state, d_max, chunk_len);

  p.hca.heads = heads;
  p.hca.points = k_points;
  for (std::size_t s = 0; s < n_scales; ++s) {
    p.hca.offset_w.push_back(normal({C, heads * k_points * 2}, 0.1 * wscale));
    p.hca.offset_b.push_back(normal({heads * k_points * 2}, 0.1));
    p.hca.attn_w.push_back(normal({C, heads * k_points}, wscale));
    p.hca.attn_b.push_back(Tensor(Shape{heads * k_points}, 0.0));
  }
  p.hca.value_w = normal({C, C}, wscale);
  p.hca.out_w = normal({C, C}, wscale);
  return p;
}

template <class T>
GmFusionParams<T> lift_gm_fusion_params(const GmFusionParams<Tensor>& p, Tape* tape) {
  GmFusionParams<T> out;
  out.max_tokens = p.max_tokens;
  out.align.mlp_w1 = Lift<T>::param(p.align.mlp_w1, tape);
  out.align.mlp_b1 = Lift<T>::param(p.align.mlp_b1, tape);
  out.align.mlp_w2 = Lift<T>::param(p.align.mlp_w2, tape);
  out.align.mlp_b2 = Lift<T>::param(p.align.mlp_b2, tape);
  out.align.merge = Lift<T>::param(p.align.merge, tape);
  out.ca.wq = Lift<T>::param(p.ca.wq, tape);
  out.ca.wk = Lift<T>::param(p.ca.wk, tape);
  out.ca.wv = Lift<T>::param(p.ca.wv, tape);
  out.ca.gate_logits = Lift<T>::param(p.ca.gate_logits, tape);
  out.block_aligned = lift_block_params<T>(p.block_aligned, tape);
  out.block_bev = lift_block_params<T>(p.block_bev, tape);
  out.block_fused = lift_block_params<T>(p.block_fused, tape);
  out.hca.heads = p.hca.heads;
  out.hca.points = p.hca.points;
  for (std::size_t s = 0; s < p.hca.offset_w.size(); ++s) {
    out.hca.offset_w.push_back(Lift<T>::param(p.hca.offset_w[s], tape));
    out.hca.offset_b.push_back(Lift<T>::param(p.hca.offset_b[s], tape));
    out.hca.attn_w.push_back(Lift<T>::param(p.hca.attn_w[s], tape));
    out.hca.attn_b.push_back(Lift<T>::param(p.hca.attn_b[s], tape));
  }
  out.hca.value_w = Lift<T>::param(p.hca.value_w, tape);
  out.hca.out_w = Lift<T>::param(p.hca.out_w, tape);
  return out;
}

// ---------------------------------------------------------------------------
// Backbone stand-in: a fixed seeded 2-layer strided convolution producing the
// 4-scale image pyramid. Replaces the out-of-scope learned image backbone.
// ---------------------------------------------------------------------------

Tensor conv3x3_stride2(const Tensor& x, const Tensor& kernel /* {Cout, Cin, 3, 3} */);

Tensor synth_image(std::size_t rows, std::size_t cols, std::size_t channels, std::uint64_t seed);

// Scales: {H/2, H/4, H/8, H/16} of the input image (the first two via strided
// convs, the rest pooled). An image of 2x the BEV dims yields a pyramid whose
// finest level matches the BEV grid.
std::vector<Tensor> backbone_pyramid_standin(const Tensor& image, std::size_t out_channels,
                                             std::uint64_t seed);

}  // namespace gmf
