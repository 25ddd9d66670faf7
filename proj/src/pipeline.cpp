#include "gmf/pipeline.hpp"

namespace gmf {

namespace {
constexpr std::size_t kFusionDim = 32;  // finest fusion scale; 1024 tokens
}

Tensor forward_pipeline(const Tensor& grid14, const RunConfig& cfg) {
  cfg.validate();
  const GridConfig grid_cfg = cfg.grid();
  const std::size_t H = grid_cfg.rows(), W = grid_cfg.cols();
  if (grid14.rank() != 3 || grid14.dim(0) != H || grid14.dim(1) != W)
    throw ShapeError("forward: grid " + shape_str(grid14.shape()) + " does not match config dims " +
                     std::to_string(H) + "x" + std::to_string(W));
  if (grid14.dim(2) != kPillarFeatureDim)
    throw ShapeError("forward: expected " + std::to_string(kPillarFeatureDim) +
                     " pillar channels, got " + std::to_string(grid14.dim(2)));
  if (H != W || H < kFusionDim || (H & (H - 1)) != 0)
    throw ConfigError("forward: grid must be a square power of two >= " +
                      std::to_string(kFusionDim) + " cells, got " + std::to_string(H) + "x" +
                      std::to_string(W));

  const std::size_t C = cfg.channels;
  Rng rng(cfg.seed);

  // Fixed draw order: input projection, synthetic image, backbone kernels,
  // fusion parameters.
  Tensor w_in(Shape{kPillarFeatureDim, C});
  for (std::size_t i = 0; i < w_in.numel(); ++i)
    w_in[i] = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(kPillarFeatureDim)));
  const std::uint64_t image_seed = rng.next_u64();
  const std::uint64_t backbone_seed = rng.next_u64();

  // Raw pillar channels span very different ranges (meters vs reflectance
  // variance); scale each to unit RMS. Zeros stay zero, so empty pillars are
  // untouched.
  Tensor scaled = grid14;
  for (std::size_t c = 0; c < kPillarFeatureDim; ++c) {
    double sq = 0;
    for (std::size_t cell = 0; cell < H * W; ++cell) {
      const double v = grid14[cell * kPillarFeatureDim + c];
      sq += v * v;
    }
    const double rms = std::sqrt(sq / static_cast<double>(H * W));
    if (rms > 1e-12)
      for (std::size_t cell = 0; cell < H * W; ++cell)
        scaled[cell * kPillarFeatureDim + c] /= rms;
  }

  Tensor x = reshape(matmul(reshape(scaled, {H * W, kPillarFeatureDim}), w_in), {H, W, C});
  Tensor bev = resample_to(x, kFusionDim, kFusionDim);

  Tensor image = synth_image(2 * kFusionDim, 2 * kFusionDim, 3, image_seed);
  std::vector<Tensor> pyramid = backbone_pyramid_standin(image, C, backbone_seed);

  // Per-scale geometry over the same metric extents.
  std::vector<BlockGeometry> geos;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t dim = kFusionDim >> s;
    GridConfig gc = grid_cfg;
    gc.rho = static_cast<double>(dim) / (grid_cfg.x_max - grid_cfg.x_min);
    geos.push_back(make_block_geometry(gc, C, cfg.pe_base, cfg.pe_base));
  }
  GmFusionParams<Tensor> params =
      make_gm_fusion_params(rng, C, cfg.d_state, geos[0].d_max, cfg.chunk_len);

  Tensor accum(Shape{kFusionDim, kFusionDim, C}, 0.0);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t dim = kFusionDim >> s;
    Tensor bev_s = resample_to(bev, dim, dim);
    auto in = lift_block_geometry<Tensor>(geos[s], nullptr);
    Tensor out_s = gm_fusion_forward(bev_s, pyramid[s], pyramid, in, geos[s], params);
    accum = add(accum, resample_to(out_s, kFusionDim, kFusionDim));
  }
  return resample_to(accum, H, W);
}

}  // namespace gmf
