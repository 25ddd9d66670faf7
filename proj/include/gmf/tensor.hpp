#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include "gmf/common.hpp"

namespace gmf {

// Live/peak bytes held by tensor payloads. The benchmark reports the peak
// per timed run; tests use it to verify nothing allocates an N x N
// intermediate.
struct AllocStats {
  static std::size_t current();
  static std::size_t peak();
  static void reset_peak();
  static void add(std::size_t bytes);
  static void sub(std::size_t bytes);
};

template <class S>
struct TrackingAllocator {
  using value_type = S;
  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) {}
  S* allocate(std::size_t n) {
    AllocStats::add(n * sizeof(S));
    return static_cast<S*>(::operator new(n * sizeof(S)));
  }
  void deallocate(S* p, std::size_t n) {
    AllocStats::sub(n * sizeof(S));
    ::operator delete(p);
  }
  bool operator==(const TrackingAllocator&) const { return true; }
  bool operator!=(const TrackingAllocator&) const { return false; }
};

// Dense row-major N-d array. Double is the verification default; the float
// instantiation exists for the benchmark path.
template <class S>
class BasicTensor {
 public:
  using scalar_type = S;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, S fill = S(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<S, TrackingAllocator<S>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static BasicTensor from(Shape shape, std::initializer_list<S> vals) {
    BasicTensor t(std::move(shape));
    if (vals.size() != t.numel())
      throw ShapeError("initializer length " + std::to_string(vals.size()) +
                       " does not match shape " + shape_str(t.shape()));
    std::size_t i = 0;
    for (S v : vals) t.data_[i++] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  // 3-d convenience accessor for H x W x C grids.
  S& at(std::size_t h, std::size_t w, std::size_t c) {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }
  const S& at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  BasicTensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    BasicTensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  bool same_shape(const BasicTensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<S, TrackingAllocator<S>> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <class S>
BasicTensor<S> tensor_cast_from_double(const Tensor& t) {
  BasicTensor<S> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<S>(t[i]);
  return out;
}

inline Tensor tensor_to_double(const TensorF& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(t[i]);
  return out;
}

}  // namespace gmf
