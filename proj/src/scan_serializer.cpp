#include "gmf/scan_serializer.hpp"

namespace gmf {

namespace {

void check_dims(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0)
    throw ShapeError("scan order dimensions must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
}

std::vector<std::uint32_t> invert(const std::vector<std::uint32_t>& perm) {
  std::vector<std::uint32_t> inv(perm.size());
  for (std::size_t t = 0; t < perm.size(); ++t) inv[perm[t]] = static_cast<std::uint32_t>(t);
  return inv;
}

}  // namespace

ScanOrder raster_order(std::size_t rows, std::size_t cols) {
  check_dims(rows, cols);
  ScanOrder o;
  o.pattern = ScanPattern::Raster;
  o.rows = rows;
  o.cols = cols;
  o.perm.resize(rows * cols);
  for (std::size_t t = 0; t < o.perm.size(); ++t) o.perm[t] = static_cast<std::uint32_t>(t);
  o.inv = o.perm;
  return o;
}

ScanOrder zigzag_order(std::size_t rows, std::size_t cols, bool first_row_left_to_right) {
  check_dims(rows, cols);
  ScanOrder o;
  o.pattern = ScanPattern::Zigzag;
  o.rows = rows;
  o.cols = cols;
  o.perm.resize(rows * cols);
  std::size_t t = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const bool ltr = (r % 2 == 0) == first_row_left_to_right;
    for (std::size_t i = 0; i < cols; ++i) {
      const std::size_t c = ltr ? i : cols - 1 - i;
      o.perm[t++] = static_cast<std::uint32_t>(r * cols + c);
    }
  }
  o.inv = invert(o.perm);
  return o;
}

Tensor permute_distances(const Tensor& dist_hw, const ScanOrder& order) {
  if (dist_hw.rank() != 2 || dist_hw.dim(0) != order.rows || dist_hw.dim(1) != order.cols)
    throw ShapeError("permute_distances: field " + shape_str(dist_hw.shape()) +
                     " does not match order " + std::to_string(order.rows) + "x" +
                     std::to_string(order.cols));
  Tensor out(Shape{order.rows * order.cols});
  for (std::size_t t = 0; t < out.numel(); ++t) out[t] = dist_hw[order.perm[t]];
  return out;
}

}  // namespace gmf
