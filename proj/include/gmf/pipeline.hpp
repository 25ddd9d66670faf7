#pragma once

#include "gmf/config.hpp"
#include "gmf/gm_fusion.hpp"

namespace gmf {

// Full seeded forward pass over a pillar feature grid: project the 14
// pillar channels to the working width, pool to a 32x32 fusion grid, run
// GM-Fusion at four pyramid scales against a seeded backbone stand-in,
// sum the per-scale outputs at the finest fusion scale, and upsample back
// to the input dims. Deterministic for a fixed (config, seed); bitwise
// independent of the thread count.
Tensor forward_pipeline(const Tensor& grid14, const RunConfig& cfg);

}  // namespace gmf
