#pragma once

#include <cstdint>
#include <vector>

#include "gmf/ops.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

enum class ScanPattern { Raster, Zigzag };

inline const char* scan_pattern_name(ScanPattern p) {
  return p == ScanPattern::Raster ? "raster" : "zigzag";
}

// Bijective grid-to-sequence mapping. Rows advance along the vehicle's
// forward axis, so raster order walks the driving direction first.
struct ScanOrder {
  ScanPattern pattern;
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint32_t> perm;  // sequence position -> flat grid index
  std::vector<std::uint32_t> inv;   // flat grid index -> sequence position
};

// Row-by-row, each row left to right.
ScanOrder raster_order(std::size_t rows, std::size_t cols);

// Serpentine: alternating row direction, consecutive positions always
// Manhattan-adjacent. Row 0 runs left to right unless flipped.
ScanOrder zigzag_order(std::size_t rows, std::size_t cols, bool first_row_left_to_right = true);

// Grid H x W x C -> sequence L x C along the scan order.
template <class T>
T serialize(const T& grid, const ScanOrder& order) {
  if (grid.rank() != 3 || grid.dim(0) != order.rows || grid.dim(1) != order.cols)
    throw ShapeError("serialize: grid " + shape_str(grid.shape()) + " does not match order " +
                     std::to_string(order.rows) + "x" + std::to_string(order.cols));
  const std::size_t C = grid.dim(2);
  return gather_rows(reshape(grid, {order.rows * order.cols, C}), order.perm);
}

// Inverse of serialize; deserialize(serialize(x)) == x bitwise.
template <class T>
T deserialize(const T& seq, const ScanOrder& order) {
  if (seq.rank() != 2 || seq.dim(0) != order.rows * order.cols)
    throw ShapeError("deserialize: sequence " + shape_str(seq.shape()) +
                     " does not match order length " + std::to_string(order.rows * order.cols));
  const std::size_t C = seq.dim(1);
  return reshape(gather_rows(seq, order.inv), {order.rows, order.cols, C});
}

// Per-step ego distances for a scan order, permuted from an H x W distance
// field. Feeds the distance-decay branch downstream.
Tensor permute_distances(const Tensor& dist_hw, const ScanOrder& order);

}  // namespace gmf
