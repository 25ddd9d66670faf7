#pragma once

#include <functional>
#include <vector>

#include "gmf/ops.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

class Tape;

// Handle to a (possibly traced) double tensor. id < 0 marks a constant that
// participates in forward computation without receiving gradients.
struct Var {
  Tensor value;
  Tape* tape = nullptr;
  int id = -1;

  Var() = default;
  Var(Tensor v) : value(std::move(v)) {}
  Var(Tensor v, Tape* t, int i) : value(std::move(v)), tape(t), id(i) {}

  const Shape& shape() const { return value.shape(); }
  std::size_t numel() const { return value.numel(); }
  std::size_t dim(std::size_t i) const { return value.dim(i); }
  std::size_t rank() const { return value.rank(); }
};

// Reverse-mode record of primitive operations. Single-writer: one tape per
// worker.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Var leaf(Tensor v) {
    int id = add_node({}, nullptr);
    return Var(std::move(v), this, id);
  }

  Var constant(Tensor v) { return Var(std::move(v), this, -1); }

  int add_node(std::vector<int> parents, BackFn back) {
    nodes_.push_back(Node{std::move(parents), std::move(back)});
    adjoints_.emplace_back();
    has_adjoint_.push_back(0);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(int id, const Tensor& g) {
    if (id < 0) return;
    if (!has_adjoint_[static_cast<std::size_t>(id)]) {
      adjoints_[static_cast<std::size_t>(id)] = g;
      has_adjoint_[static_cast<std::size_t>(id)] = 1;
    } else {
      adjoints_[static_cast<std::size_t>(id)] = add(adjoints_[static_cast<std::size_t>(id)], g);
    }
  }

  // Seeds d(output)/d(output) = 1 and replays the record once, in reverse.
  // Adjoints are cleared first, so repeated calls are bitwise reproducible.
  void backward(const Var& output) {
    if (output.tape != this || output.id < 0)
      throw ShapeError("backward: output is not traced on this tape");
    if (output.numel() != 1)
      throw ShapeError("backward: output must be scalar, got " + shape_str(output.shape()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      adjoints_[i] = Tensor();
      has_adjoint_[i] = 0;
    }
    Tensor seed(output.shape(), 1.0);
    accumulate(output.id, seed);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const std::size_t si = static_cast<std::size_t>(i);
      if (!has_adjoint_[si] || !nodes_[si].back) continue;
      nodes_[si].back(*this, adjoints_[si]);
    }
  }

  // Gradient accumulated for a traced Var; zeros when it never received one.
  Tensor grad(const Var& v) const {
    if (v.tape != this || v.id < 0) throw ShapeError("grad: var is not traced on this tape");
    const std::size_t i = static_cast<std::size_t>(v.id);
    if (!has_adjoint_[i]) return Tensor(v.shape(), 0.0);
    return adjoints_[i];
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  std::vector<std::uint8_t> has_adjoint_;
};

// Sums gradient blocks until it matches a trailing-broadcast operand shape.
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

// Traced counterparts of the eager ops. Each computes its forward value via
// the same kernel the untraced path uses.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var exp(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var tanh(const Var& a);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var gap_hw(const Var& a);
Var softmax_lastdim(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose2d(const Var& a);
Var reshape(const Var& a, Shape s);
Var gather_rows(const Var& a, const std::vector<std::uint32_t>& perm);
Var concat_lastdim(const std::vector<Var>& parts);
Var slice_lastdim(const Var& a, std::size_t c0, std::size_t c1);
Var conv_dw3x3(const Var& x, const Var& kernel);
Var avgpool(const Var& x, std::size_t f);
Var upsample_nn(const Var& x, std::size_t f);
Var bilinear_sample(const Var& feat, const Var& points);
Var scan_gated(const Var& gate, const Var& drive, std::size_t chunk_len = 64);
Var cumsum(const Var& a, std::size_t axis);
Var cumprod(const Var& a, std::size_t axis);
Var sum_axis(const Var& a, std::size_t axis);

template <class S>
BasicTensor<S> sum_axis(const BasicTensor<S>& a, std::size_t axis) {
  return reduce(Reduce::Sum, a, axis);
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }

inline Tape* tape_of(const Var& v) { return v.tape; }
template <class S>
inline Tape* tape_of(const BasicTensor<S>&) {
  return nullptr;
}

inline const Tensor& value_of(const Var& v) { return v.value; }
inline const Tensor& value_of(const Tensor& t) { return t; }
inline Tensor value_of(const TensorF& t) { return tensor_to_double(t); }

// Bridges double tensors into an arbitrary value type. `from` yields a
// constant, `param` a gradient-receiving leaf where that exists.
template <class T>
struct Lift;

template <>
struct Lift<Tensor> {
  static Tensor from(const Tensor& t, Tape*) { return t; }
  static Tensor param(const Tensor& t, Tape*) { return t; }
};

template <>
struct Lift<TensorF> {
  static TensorF from(const Tensor& t, Tape*) { return tensor_cast_from_double<float>(t); }
  static TensorF param(const Tensor& t, Tape*) { return tensor_cast_from_double<float>(t); }
};

template <>
struct Lift<Var> {
  static Var from(const Tensor& t, Tape* tape) {
    return tape ? tape->constant(t) : Var(t);
  }
  static Var param(const Tensor& t, Tape* tape) {
    return tape ? tape->leaf(t) : Var(t);
  }
};

}  // namespace gmf
