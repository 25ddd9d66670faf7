#pragma once

#include <cmath>
#include <vector>

#include "gmf/parallel.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

// Benchmark baseline: single-layer scaled dot-product self-attention with
// Q = K = V = x, evaluated row-blocked so no N x N intermediate is ever
// allocated. Quadratic time, linear memory.
template <class S>
BasicTensor<S> self_attention_baseline(const BasicTensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("self_attention_baseline expects N x C tokens");
  const std::size_t N = x.dim(0), C = x.dim(1);
  BasicTensor<S> out(x.shape());
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(C)));
  parallel_for(N, [&](std::size_t i0, std::size_t i1) {
    std::vector<S, TrackingAllocator<S>> scores(N);
    for (std::size_t i = i0; i < i1; ++i) {
      const S* qi = x.data() + i * C;
      S row_max = -std::numeric_limits<S>::infinity();
      for (std::size_t j = 0; j < N; ++j) {
        const S* kj = x.data() + j * C;
        S dot = S(0);
        for (std::size_t c = 0; c < C; ++c) dot += qi[c] * kj[c];
        scores[j] = dot * scale;
        row_max = std::max(row_max, scores[j]);
      }
      S denom = S(0);
      for (std::size_t j = 0; j < N; ++j) {
        scores[j] = std::exp(scores[j] - row_max);
        denom += scores[j];
      }
      S* oi = out.data() + i * C;
      for (std::size_t j = 0; j < N; ++j) {
        const S w = scores[j];
        const S* vj = x.data() + j * C;
        for (std::size_t c = 0; c < C; ++c) oi[c] += w * vj[c];
      }
      const S inv = S(1) / denom;
      for (std::size_t c = 0; c < C; ++c) oi[c] *= inv;
    }
  });
  return out;
}

}  // namespace gmf
