#pragma once

#include <cstdint>

namespace gmf {

// Analytic cost models, counted as floating-point multiply/add/exp
// operations per grid cell (or per token pair). Only work that grows with
// the cell count is counted; O(1) head work (the 4-way fusion MLP, scalar
// normalizations) is excluded, so the totals scale exactly with N.

// One AwareSSM branch on a length-L sequence, per step.
inline std::uint64_t aware_ssm_flops_per_step(std::uint64_t C, std::uint64_t d_state,
                                              std::uint64_t chunk_len) {
  std::uint64_t f = 0;
  f += 3 + C;                 // decay: lambda*d/d_max, exp, scale C channels
  f += 3 * 2 * C * d_state;   // B, C, Delta projections
  f += d_state;               // drive u = B * C
  f += 5 * d_state;           // gate sigmoid(A + Delta)
  f += 8 * d_state;           // chunked scan: retention, ratio sum, from-zero
                              // response, recombination
  f += (2 * d_state + chunk_len - 1) / chunk_len;  // boundary carry, amortized
  f += 2 * d_state * C;       // output projection
  return f;
}

// BEV-SSM block forward, per cell.
inline std::uint64_t bev_ssm_block_flops_per_cell(std::uint64_t C, std::uint64_t d_state,
                                                  std::uint64_t chunk_len) {
  std::uint64_t f = 0;
  f += 2 * C;                      // gated positional encoding: x + g * pe
  f += 18 * C + 2 * C * C;         // 3x3 depthwise + 1x1 pointwise
  f += 2 * aware_ssm_flops_per_step(C, d_state, chunk_len);  // raster + zigzag branches
  f += C + C / 4 + C / 16;         // average-pool pyramid accumulations
  f += C / 4 + C / 16;             // pool normalizations
  f += 2 * 3 * C * C;              // multi-scale 1x1 merge over 3C inputs
  f += 4 * C;                      // branch sum feeding the fusion context
  f += C;                          // GAP accumulation
  f += 8 * C;                      // weighted 4-branch sum
  f += C;                          // residual
  return f;
}

inline std::uint64_t bev_ssm_block_flops(std::uint64_t n_cells, std::uint64_t C,
                                         std::uint64_t d_state, std::uint64_t chunk_len) {
  return n_cells * bev_ssm_block_flops_per_cell(C, d_state, chunk_len);
}

// Single-layer scaled-dot-product self-attention with identity projections,
// per token pair: scores (2C), streaming softmax (5), weighted value sum (2C).
inline std::uint64_t attention_flops_per_pair(std::uint64_t C) { return 4 * C + 5; }

inline std::uint64_t attention_flops(std::uint64_t n_tokens, std::uint64_t C) {
  return n_tokens * n_tokens * attention_flops_per_pair(C);
}

// Hierarchical deformable cross-attention per query: offset and weight nets,
// K bilinear samples per head, weighted sums, head merge. Linear in the
// query count and in K * heads; never quadratic in tokens.
inline std::uint64_t hca_flops_per_query(std::uint64_t C, std::uint64_t heads, std::uint64_t k,
                                         std::uint64_t n_scales) {
  const std::uint64_t ch = C / heads;
  std::uint64_t f = 0;
  f += 2 * C * heads * k * 2 + 2 * heads * k * 2;  // offset net + tanh/bound
  f += 2 * C * heads * k + 4 * heads * k;          // weight net + softmax
  f += heads * k * (8 * ch + 2);                   // bilinear samples (4 corners)
  f += heads * k * 2 * ch;                         // weighted per-head sum
  f += 2 * C * C;                                  // head-merge projection
  return f * n_scales;
}

inline std::uint64_t hca_flops(std::uint64_t n_queries, std::uint64_t n_image_cells,
                               std::uint64_t C, std::uint64_t heads, std::uint64_t k,
                               std::uint64_t n_scales) {
  // Value projection is per image cell, everything else per query.
  return n_queries * hca_flops_per_query(C, heads, k, n_scales) + n_image_cells * 2 * C * C;
}

}  // namespace gmf
