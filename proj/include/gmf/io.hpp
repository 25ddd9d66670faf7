#pragma once

#include <string>

#include "gmf/pillarizer.hpp"
#include "gmf/tensor.hpp"

namespace gmf {

// Point cloud files: either little-endian binary records of 20 bytes each
// (f32 x, f32 y, f32 z, f32 r, u32 ring) or CSV with header "x,y,z,r,ring".
// A ".csv" extension selects the text format.
PointCloud read_point_cloud(const std::string& path);
void write_point_cloud_binary(const std::string& path, const PointCloud& points);
void write_point_cloud_csv(const std::string& path, const PointCloud& points);

// Dense tensor file: 12-byte header of three little-endian u32 dims
// (H, W, C) followed by f32 payload, row-major.
Tensor read_tensor_file(const std::string& path);
void write_tensor_file(const std::string& path, const Tensor& t);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace gmf
