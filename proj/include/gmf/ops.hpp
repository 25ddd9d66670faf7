#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gmf/parallel.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

template <class S>
void ensure_finite(const BasicTensor<S>& t, const char* op) {
  if (!finite_checks_enabled()) return;
  const S* p = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(p[i]))
      throw NumericError(std::string(op) + " produced a non-finite value at flat index " +
                         std::to_string(i));
  }
}

inline bool is_shape_suffix(const Shape& suffix, const Shape& full) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

// ---------------------------------------------------------------------------
// Elementwise ops. The second operand may be a scalar or broadcast along
// trailing dims.
// ---------------------------------------------------------------------------

template <class S, class F>
BasicTensor<S> ew_binary(const char* name, const BasicTensor<S>& a, const BasicTensor<S>& b, F f) {
  const bool a_big = a.numel() >= b.numel();
  const BasicTensor<S>& big = a_big ? a : b;
  const BasicTensor<S>& small = a_big ? b : a;
  BasicTensor<S> out(big.shape());
  const std::size_t n = big.numel();
  if (a.same_shape(b)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  } else if (small.numel() == 1) {
    const S s = small[0];
    if (a_big)
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], s);
    else
      for (std::size_t i = 0; i < n; ++i) out[i] = f(s, b[i]);
  } else if (is_shape_suffix(small.shape(), big.shape())) {
    const std::size_t m = small.numel();
    if (a_big)
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i % m]);
    else
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i % m], b[i]);
  } else {
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcast-compatible");
  }
  ensure_finite(out, name);
  return out;
}

template <class S, class F>
BasicTensor<S> ew_unary(const char* name, const BasicTensor<S>& a, F f) {
  BasicTensor<S> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  ensure_finite(out, name);
  return out;
}

template <class S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary("add", a, b, [](S x, S y) { return x + y; });
}
template <class S>
BasicTensor<S> sub(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary("sub", a, b, [](S x, S y) { return x - y; });
}
template <class S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary("mul", a, b, [](S x, S y) { return x * y; });
}
template <class S>
BasicTensor<S> divide(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary("div", a, b, [](S x, S y) { return x / y; });
}
template <class S>
BasicTensor<S> maximum(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return ew_binary("max", a, b, [](S x, S y) { return x >= y ? x : y; });
}

template <class S>
BasicTensor<S> exp(const BasicTensor<S>& a) {
  return ew_unary("exp", a, [](S x) { return std::exp(x); });
}
template <class S>
BasicTensor<S> sigmoid(const BasicTensor<S>& a) {
  return ew_unary("sigmoid", a, [](S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  });
}
template <class S>
BasicTensor<S> softplus(const BasicTensor<S>& a) {
  // log1p(exp(x)) with the large-x branch to avoid overflow.
  return ew_unary("softplus", a, [](S x) {
    return x > S(30) ? x : std::log1p(std::exp(x));
  });
}
template <class S>
BasicTensor<S> tanh(const BasicTensor<S>& a) {
  return ew_unary("tanh", a, [](S x) { return std::tanh(x); });
}
template <class S>
BasicTensor<S> neg(const BasicTensor<S>& a) {
  return ew_unary("neg", a, [](S x) { return -x; });
}

template <class S>
BasicTensor<S> add_scalar(const BasicTensor<S>& a, double s) {
  return ew_unary("add_scalar", a, [s](S x) { return x + static_cast<S>(s); });
}
template <class S>
BasicTensor<S> mul_scalar(const BasicTensor<S>& a, double s) {
  return ew_unary("mul_scalar", a, [s](S x) { return x * static_cast<S>(s); });
}

template <class S>
BasicTensor<S> operator+(const BasicTensor<S>& a, const BasicTensor<S>& b) { return add(a, b); }
template <class S>
BasicTensor<S> operator-(const BasicTensor<S>& a, const BasicTensor<S>& b) { return sub(a, b); }
template <class S>
BasicTensor<S> operator*(const BasicTensor<S>& a, const BasicTensor<S>& b) { return mul(a, b); }
template <class S>
BasicTensor<S> operator-(const BasicTensor<S>& a) { return neg(a); }
template <class S>
BasicTensor<S> operator*(const BasicTensor<S>& a, double s) { return mul_scalar(a, s); }
template <class S>
BasicTensor<S> operator*(double s, const BasicTensor<S>& a) { return mul_scalar(a, s); }

// Materializes a trailing-dim broadcast. Exists so tests can compare the
// explicit tile against the implicit path.
template <class S>
BasicTensor<S> broadcast_to(const BasicTensor<S>& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (a.numel() != 1 && !is_shape_suffix(a.shape(), shape))
    throw ShapeError("broadcast_to: " + shape_str(a.shape()) + " to " + shape_str(shape));
  BasicTensor<S> out(shape);
  const std::size_t m = a.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[m == 1 ? 0 : i % m];
  return out;
}

// ---------------------------------------------------------------------------
// Reductions. Plain sums are pairwise; cumulative sums are compensated and
// cumulative products are chunked, all in the tensor's own precision.
// ---------------------------------------------------------------------------

template <class S>
S pairwise_sum(const S* p, std::size_t n, std::size_t stride = 1) {
  if (n <= 8) {
    S acc = S(0);
    for (std::size_t i = 0; i < n; ++i) acc += p[i * stride];
    return acc;
  }
  std::size_t half = n / 2;
  return pairwise_sum(p, half, stride) + pairwise_sum(p + half * stride, n - half, stride);
}

enum class Reduce { Sum, Mean, Max, CumSum, CumProd };

template <class S>
BasicTensor<S> reduce(Reduce tag, const BasicTensor<S>& a, std::size_t axis) {
  if (axis >= a.rank())
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape()));
  const std::size_t len = a.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

  const bool cumulative = (tag == Reduce::CumSum || tag == Reduce::CumProd);
  if (len == 0 && tag == Reduce::Max) throw ShapeError("empty reduction: max over axis of length 0");

  Shape out_shape;
  if (cumulative) {
    out_shape = a.shape();
  } else {
    for (std::size_t i = 0; i < a.rank(); ++i)
      if (i != axis) out_shape.push_back(a.dim(i));
  }
  BasicTensor<S> out(out_shape);

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const S* base = a.data() + (o * len) * inner + in;
      switch (tag) {
        case Reduce::Sum:
        case Reduce::Mean: {
          S s = pairwise_sum(base, len, inner);
          if (tag == Reduce::Mean) s /= static_cast<S>(len);
          out[o * inner + in] = s;
          break;
        }
        case Reduce::Max: {
          S m = base[0];
          for (std::size_t t = 1; t < len; ++t) m = std::max(m, base[t * inner]);
          out[o * inner + in] = m;
          break;
        }
        case Reduce::CumSum: {
          S acc = S(0), comp = S(0);
          for (std::size_t t = 0; t < len; ++t) {
            S y = base[t * inner] - comp;
            S u = acc + y;
            comp = (u - acc) - y;
            acc = u;
            out[(o * len + t) * inner + in] = acc;
          }
          break;
        }
        case Reduce::CumProd: {
          // Fresh local products every 64 steps; the chunk-boundary carry
          // bounds rounding growth along long axes.
          constexpr std::size_t kChunk = 64;
          S carry = S(1);
          S local = S(1);
          for (std::size_t t = 0; t < len; ++t) {
            if (t % kChunk == 0 && t != 0) {
              carry *= local;
              local = S(1);
            }
            local *= base[t * inner];
            out[(o * len + t) * inner + in] = carry * local;
          }
          break;
        }
      }
    }
  }
  ensure_finite(out, "reduce");
  return out;
}

template <class S>
BasicTensor<S> cumsum(const BasicTensor<S>& a, std::size_t axis) { return reduce(Reduce::CumSum, a, axis); }
template <class S>
BasicTensor<S> cumprod(const BasicTensor<S>& a, std::size_t axis) { return reduce(Reduce::CumProd, a, axis); }

template <class S>
BasicTensor<S> sum_all(const BasicTensor<S>& a) {
  BasicTensor<S> out(Shape{});
  out[0] = pairwise_sum(a.data(), a.numel());
  ensure_finite(out, "sum_all");
  return out;
}

template <class S>
BasicTensor<S> mean_all(const BasicTensor<S>& a) {
  BasicTensor<S> out = sum_all(a);
  out[0] /= static_cast<S>(a.numel());
  return out;
}

// H x W x C -> C, mean over cells per channel.
template <class S>
BasicTensor<S> gap_hw(const BasicTensor<S>& x) {
  if (x.rank() != 3) throw ShapeError("gap_hw expects H x W x C, got " + shape_str(x.shape()));
  const std::size_t cells = x.dim(0) * x.dim(1), C = x.dim(2);
  BasicTensor<S> out(Shape{C});
  parallel_for(C, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c)
      out[c] = pairwise_sum(x.data() + c, cells, C) / static_cast<S>(cells);
  });
  ensure_finite(out, "gap_hw");
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra (small dense only).
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  BasicTensor<S> out(Shape{M, N});
  parallel_for(M, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const S* ai = a.data() + i * K;
      S* oi = out.data() + i * N;
      for (std::size_t k = 0; k < K; ++k) {
        const S av = ai[k];
        const S* bk = b.data() + k * N;
        for (std::size_t j = 0; j < N; ++j) oi[j] += av * bk[j];
      }
    }
  });
  ensure_finite(out, "matmul");
  return out;
}

template <class S>
BasicTensor<S> transpose2d(const BasicTensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d expects rank 2, got " + shape_str(a.shape()));
  const std::size_t M = a.dim(0), N = a.dim(1);
  BasicTensor<S> out(Shape{N, M});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) out[j * M + i] = a[i * N + j];
  return out;
}

template <class S>
BasicTensor<S> softmax_lastdim(const BasicTensor<S>& a) {
  if (a.rank() == 0) throw ShapeError("softmax_lastdim expects rank >= 1");
  const std::size_t K = a.dim(a.rank() - 1);
  const std::size_t rows = a.numel() / K;
  BasicTensor<S> out(a.shape());
  parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const S* in = a.data() + r * K;
      S* o = out.data() + r * K;
      S m = in[0];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, in[k]);
      S sum = S(0);
      for (std::size_t k = 0; k < K; ++k) {
        o[k] = std::exp(in[k] - m);
        sum += o[k];
      }
      for (std::size_t k = 0; k < K; ++k) o[k] /= sum;
    }
  });
  ensure_finite(out, "softmax");
  return out;
}

// ---------------------------------------------------------------------------
// Shape movement.
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> reshape(const BasicTensor<S>& a, Shape s) { return a.reshaped(std::move(s)); }

// out[t] = a[perm[t]] over rows of a 2-d tensor.
template <class S>
BasicTensor<S> gather_rows(const BasicTensor<S>& a, const std::vector<std::uint32_t>& perm) {
  if (a.rank() != 2) throw ShapeError("gather_rows expects rank 2, got " + shape_str(a.shape()));
  const std::size_t C = a.dim(1);
  BasicTensor<S> out(Shape{perm.size(), C});
  parallel_for(perm.size(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t t = r0; t < r1; ++t)
      std::memcpy(out.data() + t * C, a.data() + static_cast<std::size_t>(perm[t]) * C,
                  C * sizeof(S));
  });
  return out;
}

template <class S>
BasicTensor<S> concat_lastdim(const std::vector<BasicTensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) throw ShapeError("concat_lastdim: leading dims differ");
    total += p.dim(p.rank() - 1);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  BasicTensor<S> out(out_shape);
  const std::size_t rows = shape_numel(lead);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(p.rank() - 1);
    for (std::size_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * total + offset, p.data() + r * pc, pc * sizeof(S));
    offset += pc;
  }
  return out;
}

template <class S>
BasicTensor<S> slice_lastdim(const BasicTensor<S>& a, std::size_t c0, std::size_t c1) {
  const std::size_t C = a.dim(a.rank() - 1);
  if (c0 >= c1 || c1 > C) throw ShapeError("slice_lastdim: bad range");
  Shape out_shape = a.shape();
  out_shape.back() = c1 - c0;
  BasicTensor<S> out(out_shape);
  const std::size_t rows = a.numel() / C, W = c1 - c0;
  for (std::size_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * W, a.data() + r * C + c0, W * sizeof(S));
  return out;
}

// ---------------------------------------------------------------------------
// Spatial kernels on H x W x C grids.
// ---------------------------------------------------------------------------

// 3x3 depthwise convolution, zero padding, stride 1. kernel: C x 3 x 3.
template <class S>
BasicTensor<S> conv_dw3x3(const BasicTensor<S>& x, const BasicTensor<S>& kernel) {
  if (x.rank() != 3) throw ShapeError("conv_dw3x3 expects H x W x C input");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (kernel.shape() != Shape{C, 3, 3})
    throw ShapeError("conv_dw3x3 kernel must be C x 3 x 3, got " + shape_str(kernel.shape()));
  BasicTensor<S> out(x.shape());
  parallel_for(H, [&](std::size_t h0, std::size_t h1) {
    for (std::size_t h = h0; h < h1; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        S* o = out.data() + (h * W + w) * C;
        for (int dy = -1; dy <= 1; ++dy) {
          const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h) + dy;
          if (hh < 0 || hh >= static_cast<std::ptrdiff_t>(H)) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(w) + dx;
            if (ww < 0 || ww >= static_cast<std::ptrdiff_t>(W)) continue;
            const S* xi = x.data() + (hh * W + ww) * C;
            const S* kc = kernel.data() + (dy + 1) * 3 + (dx + 1);
            for (std::size_t c = 0; c < C; ++c) o[c] += xi[c] * kc[c * 9];
          }
        }
      }
    }
  });
  ensure_finite(out, "conv_dw3x3");
  return out;
}

template <class S>
BasicTensor<S> avgpool(const BasicTensor<S>& x, std::size_t f) {
  if (x.rank() != 3) throw ShapeError("avgpool expects H x W x C input");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % f || W % f)
    throw ShapeError("avgpool: dims " + shape_str(x.shape()) + " not divisible by " +
                     std::to_string(f));
  BasicTensor<S> out(Shape{H / f, W / f, C});
  const S inv = S(1) / static_cast<S>(f * f);
  for (std::size_t h = 0; h < H / f; ++h)
    for (std::size_t w = 0; w < W / f; ++w) {
      S* o = out.data() + (h * (W / f) + w) * C;
      for (std::size_t dy = 0; dy < f; ++dy)
        for (std::size_t dx = 0; dx < f; ++dx) {
          const S* xi = x.data() + ((h * f + dy) * W + (w * f + dx)) * C;
          for (std::size_t c = 0; c < C; ++c) o[c] += xi[c];
        }
      for (std::size_t c = 0; c < C; ++c) o[c] *= inv;
    }
  ensure_finite(out, "avgpool");
  return out;
}

template <class S>
BasicTensor<S> upsample_nn(const BasicTensor<S>& x, std::size_t f) {
  if (x.rank() != 3) throw ShapeError("upsample_nn expects H x W x C input");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  BasicTensor<S> out(Shape{H * f, W * f, C});
  for (std::size_t h = 0; h < H * f; ++h)
    for (std::size_t w = 0; w < W * f; ++w)
      std::memcpy(out.data() + (h * W * f + w) * C, x.data() + ((h / f) * W + (w / f)) * C,
                  C * sizeof(S));
  return out;
}

// Bilinear interpolation at continuous (row, col) coordinates expressed in
// cell-center units: (0, 0) is the center of cell (0, 0). Corners that fall
// outside the grid contribute zeros.
template <class S>
BasicTensor<S> bilinear_sample(const BasicTensor<S>& feat, const BasicTensor<S>& points) {
  if (feat.rank() != 3 || points.rank() != 2 || points.dim(1) != 2)
    throw ShapeError("bilinear_sample expects H x W x C features and P x 2 points");
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(feat.dim(0));
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(feat.dim(1));
  const std::size_t C = feat.dim(2), P = points.dim(0);
  BasicTensor<S> out(Shape{P, C});
  for (std::size_t p = 0; p < P; ++p) {
    const S u = points[p * 2], v = points[p * 2 + 1];
    const S fu = std::floor(u), fv = std::floor(v);
    const std::ptrdiff_t u0 = static_cast<std::ptrdiff_t>(fu);
    const std::ptrdiff_t v0 = static_cast<std::ptrdiff_t>(fv);
    const S du = u - fu, dv = v - fv;
    const S wgt[4] = {(S(1) - du) * (S(1) - dv), (S(1) - du) * dv, du * (S(1) - dv), du * dv};
    const std::ptrdiff_t uu[4] = {u0, u0, u0 + 1, u0 + 1};
    const std::ptrdiff_t vv[4] = {v0, v0 + 1, v0, v0 + 1};
    S* o = out.data() + p * C;
    for (int k = 0; k < 4; ++k) {
      if (uu[k] < 0 || uu[k] >= H || vv[k] < 0 || vv[k] >= W) continue;
      const S* fp = feat.data() + (uu[k] * W + vv[k]) * C;
      for (std::size_t c = 0; c < C; ++c) o[c] += wgt[k] * fp[c];
    }
  }
  ensure_finite(out, "bilinear_sample");
  return out;
}

// ---------------------------------------------------------------------------
// Gated first-order recurrence h_t = gate_t * h_{t-1} + drive_t on L x D
// sequences, h_{-1} = 0.
// ---------------------------------------------------------------------------

// Ground-truth sequential evaluation.
template <class S>
BasicTensor<S> scan_sequential(const BasicTensor<S>& gate, const BasicTensor<S>& drive) {
  if (gate.rank() != 2 || !gate.same_shape(drive))
    throw ShapeError("scan: gate " + shape_str(gate.shape()) + " vs drive " +
                     shape_str(drive.shape()));
  const std::size_t L = gate.dim(0), D = gate.dim(1);
  BasicTensor<S> h(gate.shape());
  std::vector<S> carry(D, S(0));
  for (std::size_t t = 0; t < L; ++t) {
    const S* a = gate.data() + t * D;
    const S* u = drive.data() + t * D;
    S* o = h.data() + t * D;
    for (std::size_t d = 0; d < D; ++d) {
      carry[d] = a[d] * carry[d] + u[d];
      o[d] = carry[d];
    }
  }
  ensure_finite(h, "scan_sequential");
  return h;
}

namespace detail {
template <class S>
constexpr S scan_underflow_floor() {
  if constexpr (sizeof(S) >= 8)
    return S(1e-280);
  else
    return S(1e-25);
}
}  // namespace detail

// Chunked evaluation of the same recurrence through cumulative retention
// products. Within a chunk of length `chunk_len`:
//   P_t = prod_{i<=t} gate_i,   h_t = P_t * (h_enter + sum_{j<=t} drive_j / P_j)
// which matches the sequential recurrence algebraically; the hidden state is
// carried across chunk boundaries so no global cumulative product is formed.
// Channels whose intra-chunk retention drops below a floor are recomputed
// sequentially for that chunk.
template <class S>
BasicTensor<S> scan_gated(const BasicTensor<S>& gate, const BasicTensor<S>& drive,
                          std::size_t chunk_len = 64) {
  if (gate.rank() != 2 || !gate.same_shape(drive))
    throw ShapeError("scan: gate " + shape_str(gate.shape()) + " vs drive " +
                     shape_str(drive.shape()));
  if (chunk_len == 0) throw ShapeError("scan: chunk_len must be positive");
  const std::size_t L = gate.dim(0), D = gate.dim(1);
  BasicTensor<S> h(gate.shape());
  if (L == 0) return h;
  const std::size_t n_chunks = (L + chunk_len - 1) / chunk_len;
  const S floor_p = detail::scan_underflow_floor<S>();

  // Per-chunk affine action on the entering state: h_end = a * h_enter + b,
  // with a the chunk retention product and b the chunk's from-zero response
  // (accumulated directly, not through the ratio sum).
  std::vector<S> coef_a(n_chunks * D), coef_b(n_chunks * D);
  std::vector<std::uint8_t> fallback(n_chunks * D, 0);
  BasicTensor<S> retention(gate.shape());  // intra-chunk P_t
  BasicTensor<S> ratio_sum(gate.shape());  // intra-chunk sum of drive_j / P_j

  parallel_for(n_chunks, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      const std::size_t t0 = k * chunk_len;
      const std::size_t t1 = std::min(L, t0 + chunk_len);
      for (std::size_t d = 0; d < D; ++d) {
        S p = S(1), s = S(0), from_zero = S(0);
        bool under = false;
        for (std::size_t t = t0; t < t1; ++t) {
          p *= gate[t * D + d];
          if (std::abs(p) < floor_p) {
            under = true;
            break;
          }
          s += drive[t * D + d] / p;
          if (!std::isfinite(s)) {  // ratio overflow; the recurrence itself is fine
            under = true;
            break;
          }
          from_zero = gate[t * D + d] * from_zero + drive[t * D + d];
          retention[t * D + d] = p;
          ratio_sum[t * D + d] = s;
        }
        if (under) {
          fallback[k * D + d] = 1;
          S a = S(1), b = S(0);
          for (std::size_t t = t0; t < t1; ++t) {
            a *= gate[t * D + d];
            b = gate[t * D + d] * b + drive[t * D + d];
          }
          coef_a[k * D + d] = a;
          coef_b[k * D + d] = b;
        } else {
          coef_a[k * D + d] = p;
          coef_b[k * D + d] = from_zero;
        }
      }
    }
  });

  // Boundary states, sequential over chunks.
  std::vector<S> enter(n_chunks * D);
  {
    std::vector<S> carry(D, S(0));
    for (std::size_t k = 0; k < n_chunks; ++k) {
      for (std::size_t d = 0; d < D; ++d) {
        enter[k * D + d] = carry[d];
        carry[d] = coef_a[k * D + d] * carry[d] + coef_b[k * D + d];
      }
    }
  }

  // Interior fill.
  parallel_for(n_chunks, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      const std::size_t t0 = k * chunk_len;
      const std::size_t t1 = std::min(L, t0 + chunk_len);
      for (std::size_t d = 0; d < D; ++d) {
        const S h_enter = enter[k * D + d];
        if (fallback[k * D + d]) {
          S hc = h_enter;
          for (std::size_t t = t0; t < t1; ++t) {
            hc = gate[t * D + d] * hc + drive[t * D + d];
            h[t * D + d] = hc;
          }
        } else {
          // First step of the chunk takes the recurrence directly; the
          // ratio form would round P * (drive / P).
          h[t0 * D + d] = gate[t0 * D + d] * h_enter + drive[t0 * D + d];
          for (std::size_t t = t0 + 1; t < t1; ++t)
            h[t * D + d] = retention[t * D + d] * (h_enter + ratio_sum[t * D + d]);
        }
      }
    }
  });
  ensure_finite(h, "scan_gated");
  return h;
}

}  // namespace gmf
