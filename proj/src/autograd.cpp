#include "gmf/autograd.hpp"

#include <cmath>

namespace gmf {

namespace {

Tape* resolve_tape(const Var& a, const Var& b) { return a.tape ? a.tape : b.tape; }

Var finish(Tensor value, Tape* tape, std::vector<int> parents, Tape::BackFn back) {
  bool any = false;
  for (int p : parents) any = any || p >= 0;
  if (!tape || !any) return Var(std::move(value), tape, -1);
  int id = tape->add_node(std::move(parents), std::move(back));
  return Var(std::move(value), tape, id);
}

}  // namespace

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  const std::size_t m = shape_numel(target);
  Tensor out(target, 0.0);
  if (m == 1) {
    out[0] = pairwise_sum(g.data(), g.numel());
    return out;
  }
  if (!is_shape_suffix(target, g.shape()))
    throw ShapeError("reduce_to_shape: " + shape_str(g.shape()) + " to " + shape_str(target));
  for (std::size_t i = 0; i < g.numel(); ++i) out[i % m] += g[i];
  return out;
}

Var add(const Var& a, const Var& b) {
  Tensor v = add(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Shape as = a.shape(), bs = b.shape();
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    if (aid >= 0) t.accumulate(aid, reduce_to_shape(g, as));
    if (bid >= 0) t.accumulate(bid, reduce_to_shape(g, bs));
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor v = sub(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Shape as = a.shape(), bs = b.shape();
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    if (aid >= 0) t.accumulate(aid, reduce_to_shape(g, as));
    if (bid >= 0) t.accumulate(bid, reduce_to_shape(neg(g), bs));
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor v = mul(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Tensor av = a.value, bv = b.value;
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    if (aid >= 0) t.accumulate(aid, reduce_to_shape(mul(g, bv), av.shape()));
    if (bid >= 0) t.accumulate(bid, reduce_to_shape(mul(g, av), bv.shape()));
  });
}

Var divide(const Var& a, const Var& b) {
  Tensor v = divide(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Tensor av = a.value, bv = b.value;
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    if (aid >= 0) t.accumulate(aid, reduce_to_shape(divide(g, bv), av.shape()));
    if (bid >= 0) {
      Tensor db = neg(divide(mul(g, av), mul(bv, bv)));
      t.accumulate(bid, reduce_to_shape(db, bv.shape()));
    }
  });
}

Var maximum(const Var& a, const Var& b) {
  Tensor v = maximum(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Tensor av = a.value, bv = b.value;
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    // Ties route the gradient to the first operand.
    Tensor mask = ew_binary("maxmask", av, bv, [](double x, double y) { return x >= y ? 1.0 : 0.0; });
    if (aid >= 0) t.accumulate(aid, reduce_to_shape(mul(g, mask), av.shape()));
    if (bid >= 0) {
      Tensor inv = ew_unary("maxmaskinv", mask, [](double m) { return 1.0 - m; });
      t.accumulate(bid, reduce_to_shape(mul(g, inv), bv.shape()));
    }
  });
}

Var exp(const Var& a) {
  Tensor v = exp(a.value);
  const int aid = a.id;
  const Tensor out = v;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, mul(g, out)); });
}

Var sigmoid(const Var& a) {
  Tensor v = sigmoid(a.value);
  const int aid = a.id;
  const Tensor out = v;
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    Tensor one_minus = ew_unary("sigback", out, [](double y) { return 1.0 - y; });
    t.accumulate(aid, mul(g, mul(out, one_minus)));
  });
}

Var softplus(const Var& a) {
  Tensor v = softplus(a.value);
  const int aid = a.id;
  const Tensor xv = a.value;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, mul(g, sigmoid(xv))); });
}

Var tanh(const Var& a) {
  Tensor v = tanh(a.value);
  const int aid = a.id;
  const Tensor out = v;
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    Tensor d = ew_unary("tanhback", out, [](double y) { return 1.0 - y * y; });
    t.accumulate(aid, mul(g, d));
  });
}

Var neg(const Var& a) {
  Tensor v = neg(a.value);
  const int aid = a.id;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, neg(g)); });
}

Var add_scalar(const Var& a, double s) {
  Tensor v = add_scalar(a.value, s);
  const int aid = a.id;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, g); });
}

Var mul_scalar(const Var& a, double s) {
  Tensor v = mul_scalar(a.value, s);
  const int aid = a.id;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, mul_scalar(g, s)); });
}

Var sum_all(const Var& a) {
  Tensor v = sum_all(a.value);
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, Tensor(as, g[0])); });
}

Var mean_all(const Var& a) {
  Tensor v = mean_all(a.value);
  const int aid = a.id;
  const Shape as = a.shape();
  const double inv = 1.0 / static_cast<double>(a.numel());
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, Tensor(as, g[0] * inv)); });
}

Var gap_hw(const Var& a) {
  Tensor v = gap_hw(a.value);
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t cells = as[0] * as[1], C = as[2];
    Tensor da(as);
    for (std::size_t i = 0; i < cells; ++i)
      for (std::size_t c = 0; c < C; ++c) da[i * C + c] = g[c] / static_cast<double>(cells);
    t.accumulate(aid, da);
  });
}

Var softmax_lastdim(const Var& a) {
  Tensor v = softmax_lastdim(a.value);
  const int aid = a.id;
  const Tensor out = v;
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t K = out.dim(out.rank() - 1);
    const std::size_t rows = out.numel() / K;
    Tensor da(out.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = out.data() + r * K;
      const double* gr = g.data() + r * K;
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += gr[k] * y[k];
      for (std::size_t k = 0; k < K; ++k) da[r * K + k] = (gr[k] - dot) * y[k];
    }
    t.accumulate(aid, da);
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor v = matmul(a.value, b.value);
  const int aid = a.id, bid = b.id;
  const Tensor av = a.value, bv = b.value;
  return finish(std::move(v), resolve_tape(a, b), {aid, bid}, [=](Tape& t, const Tensor& g) {
    if (aid >= 0) t.accumulate(aid, matmul(g, transpose2d(bv)));
    if (bid >= 0) t.accumulate(bid, matmul(transpose2d(av), g));
  });
}

Var transpose2d(const Var& a) {
  Tensor v = transpose2d(a.value);
  const int aid = a.id;
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, transpose2d(g)); });
}

Var reshape(const Var& a, Shape s) {
  Tensor v = a.value.reshaped(std::move(s));
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid},
                [=](Tape& t, const Tensor& g) { t.accumulate(aid, g.reshaped(as)); });
}

Var gather_rows(const Var& a, const std::vector<std::uint32_t>& perm) {
  Tensor v = gather_rows(a.value, perm);
  const int aid = a.id;
  const Shape as = a.shape();
  const std::vector<std::uint32_t> p = perm;
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t C = as[1];
    Tensor da(as, 0.0);
    for (std::size_t r = 0; r < p.size(); ++r)
      for (std::size_t c = 0; c < C; ++c) da[static_cast<std::size_t>(p[r]) * C + c] += g[r * C + c];
    t.accumulate(aid, da);
  });
}

Var concat_lastdim(const std::vector<Var>& parts) {
  std::vector<Tensor> vals;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    vals.push_back(p.value);
    ids.push_back(p.id);
    widths.push_back(p.dim(p.rank() - 1));
    if (!tape) tape = p.tape;
  }
  Tensor v = concat_lastdim(vals);
  const Shape out_shape = v.shape();
  return finish(std::move(v), tape, ids, [=](Tape& t, const Tensor& g) {
    const std::size_t total = out_shape.back();
    const std::size_t rows = g.numel() / total;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= 0) {
        Shape ps(out_shape);
        ps.back() = widths[i];
        Tensor dp(ps);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[i]; ++c) dp[r * widths[i] + c] = g[r * total + offset + c];
        t.accumulate(ids[i], dp);
      }
      offset += widths[i];
    }
  });
}

Var slice_lastdim(const Var& a, std::size_t c0, std::size_t c1) {
  Tensor v = slice_lastdim(a.value, c0, c1);
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t C = as.back(), W = c1 - c0;
    const std::size_t rows = shape_numel(as) / C;
    Tensor da(as, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < W; ++c) da[r * C + c0 + c] = g[r * W + c];
    t.accumulate(aid, da);
  });
}

Var conv_dw3x3(const Var& x, const Var& kernel) {
  Tensor v = conv_dw3x3(x.value, kernel.value);
  const int xid = x.id, kid = kernel.id;
  const Tensor xv = x.value, kv = kernel.value;
  return finish(std::move(v), resolve_tape(x, kernel), {xid, kid}, [=](Tape& t, const Tensor& g) {
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(xv.dim(0));
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(xv.dim(1));
    const std::size_t C = xv.dim(2);
    if (xid >= 0) {
      Tensor dx(xv.shape(), 0.0);
      for (std::ptrdiff_t h = 0; h < H; ++h)
        for (std::ptrdiff_t w = 0; w < W; ++w)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx_ = -1; dx_ <= 1; ++dx_) {
              const std::ptrdiff_t hh = h + dy, ww = w + dx_;
              if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
              for (std::size_t c = 0; c < C; ++c)
                dx[(hh * W + ww) * C + c] +=
                    g[(h * W + w) * C + c] * kv[c * 9 + (dy + 1) * 3 + (dx_ + 1)];
            }
      t.accumulate(xid, dx);
    }
    if (kid >= 0) {
      Tensor dk(kv.shape(), 0.0);
      for (std::ptrdiff_t h = 0; h < H; ++h)
        for (std::ptrdiff_t w = 0; w < W; ++w)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx_ = -1; dx_ <= 1; ++dx_) {
              const std::ptrdiff_t hh = h + dy, ww = w + dx_;
              if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
              for (std::size_t c = 0; c < C; ++c)
                dk[c * 9 + (dy + 1) * 3 + (dx_ + 1)] +=
                    xv[(hh * W + ww) * C + c] * g[(h * W + w) * C + c];
            }
      t.accumulate(kid, dk);
    }
  });
}

Var avgpool(const Var& x, std::size_t f) {
  Tensor v = avgpool(x.value, f);
  const int xid = x.id;
  const Shape xs = x.shape();
  return finish(std::move(v), x.tape, {xid}, [=](Tape& t, const Tensor& g) {
    const std::size_t H = xs[0], W = xs[1], C = xs[2];
    const double inv = 1.0 / static_cast<double>(f * f);
    Tensor dx(xs);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c)
          dx[(h * W + w) * C + c] = g[((h / f) * (W / f) + (w / f)) * C + c] * inv;
    t.accumulate(xid, dx);
  });
}

Var upsample_nn(const Var& x, std::size_t f) {
  Tensor v = upsample_nn(x.value, f);
  const int xid = x.id;
  const Shape xs = x.shape();
  return finish(std::move(v), x.tape, {xid}, [=](Tape& t, const Tensor& g) {
    const std::size_t H = xs[0], W = xs[1], C = xs[2];
    Tensor dx(xs, 0.0);
    for (std::size_t h = 0; h < H * f; ++h)
      for (std::size_t w = 0; w < W * f; ++w)
        for (std::size_t c = 0; c < C; ++c)
          dx[((h / f) * W + (w / f)) * C + c] += g[(h * W * f + w) * C + c];
    t.accumulate(xid, dx);
  });
}

Var bilinear_sample(const Var& feat, const Var& points) {
  Tensor v = bilinear_sample(feat.value, points.value);
  const int fid = feat.id, pid = points.id;
  const Tensor fv = feat.value, pv = points.value;
  return finish(std::move(v), resolve_tape(feat, points), {fid, pid}, [=](Tape& t, const Tensor& g) {
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(fv.dim(0));
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(fv.dim(1));
    const std::size_t C = fv.dim(2), P = pv.dim(0);
    Tensor dfeat(fv.shape(), 0.0);
    Tensor dpts(pv.shape(), 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      const double u = pv[p * 2], vq = pv[p * 2 + 1];
      const double fu = std::floor(u), fvv = std::floor(vq);
      const std::ptrdiff_t u0 = static_cast<std::ptrdiff_t>(fu);
      const std::ptrdiff_t v0 = static_cast<std::ptrdiff_t>(fvv);
      const double du = u - fu, dv = vq - fvv;
      const double wgt[4] = {(1 - du) * (1 - dv), (1 - du) * dv, du * (1 - dv), du * dv};
      const double dwdu[4] = {-(1 - dv), -dv, (1 - dv), dv};
      const double dwdv[4] = {-(1 - du), (1 - du), -du, du};
      const std::ptrdiff_t uu[4] = {u0, u0, u0 + 1, u0 + 1};
      const std::ptrdiff_t vv[4] = {v0, v0 + 1, v0, v0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (uu[k] < 0 || uu[k] >= H || vv[k] < 0 || vv[k] >= W) continue;
        const std::size_t base = (uu[k] * W + vv[k]) * C;
        double gu = 0.0, gv = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double gc = g[p * C + c];
          dfeat[base + c] += wgt[k] * gc;
          gu += dwdu[k] * fv[base + c] * gc;
          gv += dwdv[k] * fv[base + c] * gc;
        }
        dpts[p * 2] += gu;
        dpts[p * 2 + 1] += gv;
      }
    }
    if (fid >= 0) t.accumulate(fid, dfeat);
    if (pid >= 0) t.accumulate(pid, dpts);
  });
}

Var scan_gated(const Var& gate, const Var& drive, std::size_t chunk_len) {
  Tensor v = scan_gated(gate.value, drive.value, chunk_len);
  const int gid = gate.id, did = drive.id;
  const Tensor gv = gate.value;
  const Tensor hv = v;
  return finish(std::move(v), resolve_tape(gate, drive), {gid, did}, [=](Tape& t, const Tensor& g) {
    // Adjoint recurrence: gbar_t = g_t + gate_{t+1} * gbar_{t+1};
    // d(drive_t) = gbar_t, d(gate_t) = gbar_t * h_{t-1}.
    const std::size_t L = gv.dim(0), D = gv.dim(1);
    Tensor gbar(gv.shape());
    std::vector<double> carry(D, 0.0);
    for (std::size_t tt = L; tt-- > 0;) {
      for (std::size_t d = 0; d < D; ++d) {
        carry[d] = g[tt * D + d] + (tt + 1 < L ? gv[(tt + 1) * D + d] * carry[d] : 0.0);
        gbar[tt * D + d] = carry[d];
      }
    }
    if (did >= 0) t.accumulate(did, gbar);
    if (gid >= 0) {
      Tensor dgate(gv.shape(), 0.0);
      for (std::size_t tt = 1; tt < L; ++tt)
        for (std::size_t d = 0; d < D; ++d)
          dgate[tt * D + d] = gbar[tt * D + d] * hv[(tt - 1) * D + d];
      t.accumulate(gid, dgate);
    }
  });
}

Var cumsum(const Var& a, std::size_t axis) {
  Tensor v = cumsum(a.value, axis);
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t len = as[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= as[i];
    for (std::size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    Tensor da(as);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double acc = 0.0;
        for (std::size_t tt = len; tt-- > 0;) {
          acc += g[(o * len + tt) * inner + in];
          da[(o * len + tt) * inner + in] = acc;
        }
      }
    t.accumulate(aid, da);
  });
}

Var sum_axis(const Var& a, std::size_t axis) {
  Tensor v = reduce(Reduce::Sum, a.value, axis);
  const int aid = a.id;
  const Shape as = a.shape();
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    const std::size_t len = as[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= as[i];
    for (std::size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    Tensor da(as);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t tt = 0; tt < len; ++tt)
        for (std::size_t in = 0; in < inner; ++in)
          da[(o * len + tt) * inner + in] = g[o * inner + in];
    t.accumulate(aid, da);
  });
}

Var cumprod(const Var& a, std::size_t axis) {
  Tensor v = cumprod(a.value, axis);
  const int aid = a.id;
  const Tensor av = a.value, out = v;
  return finish(std::move(v), a.tape, {aid}, [=](Tape& t, const Tensor& g) {
    // d(x_t) = sum_{s >= t} g_s * out_s / x_t. Requires nonzero inputs, which
    // holds for the retention gates this is used with.
    const Shape& as = av.shape();
    const std::size_t len = as[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= as[i];
    for (std::size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    Tensor da(as);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double acc = 0.0;
        for (std::size_t tt = len; tt-- > 0;) {
          const std::size_t idx = (o * len + tt) * inner + in;
          acc += g[idx] * out[idx];
          da[idx] = acc / av[idx];
        }
      }
    t.accumulate(aid, da);
  });
}

}  // namespace gmf
