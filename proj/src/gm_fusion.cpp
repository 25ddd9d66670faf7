#include "gmf/gm_fusion.hpp"

namespace gmf {

Tensor conv3x3_stride2(const Tensor& x, const Tensor& kernel) {
  const std::size_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  if (H % 2 || W % 2) throw ShapeError("conv3x3_stride2: input dims must be even");
  if (kernel.rank() != 4 || kernel.dim(1) != Cin)
    throw ShapeError("conv3x3_stride2: kernel " + shape_str(kernel.shape()) +
                     " does not match input channels " + std::to_string(Cin));
  const std::size_t Cout = kernel.dim(0);
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out(Shape{Ho, Wo, Cout});
  for (std::size_t h = 0; h < Ho; ++h)
    for (std::size_t w = 0; w < Wo; ++w)
      for (std::size_t co = 0; co < Cout; ++co) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(2 * h) + dy;
            const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(2 * w) + dx;
            if (hh < 0 || hh >= static_cast<std::ptrdiff_t>(H) || ww < 0 ||
                ww >= static_cast<std::ptrdiff_t>(W))
              continue;
            for (std::size_t ci = 0; ci < Cin; ++ci)
              acc += x[(static_cast<std::size_t>(hh) * W + static_cast<std::size_t>(ww)) * Cin + ci] *
                     kernel[((co * Cin + ci) * 3 + static_cast<std::size_t>(dy + 1)) * 3 +
                            static_cast<std::size_t>(dx + 1)];
          }
        out.at(h, w, co) = acc;
      }
  ensure_finite(out, "conv3x3_stride2");
  return out;
}

Tensor synth_image(std::size_t rows, std::size_t cols, std::size_t channels, std::uint64_t seed) {
  Rng rng(seed);
  Tensor img(Shape{rows, cols, channels});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform(0.0, 1.0);
  return img;
}

std::vector<Tensor> backbone_pyramid_standin(const Tensor& image, std::size_t out_channels,
                                             std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t Cin = image.dim(2);
  auto normal = [&rng](Shape s, double sigma) {
    Tensor t(std::move(s));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sigma);
    return t;
  };
  Tensor k1 = normal({out_channels, Cin, 3, 3}, 1.0 / std::sqrt(9.0 * static_cast<double>(Cin)));
  Tensor k2 = normal({out_channels, out_channels, 3, 3},
                     1.0 / std::sqrt(9.0 * static_cast<double>(out_channels)));
  std::vector<Tensor> pyr;
  pyr.push_back(conv3x3_stride2(image, k1));
  pyr.push_back(conv3x3_stride2(pyr[0], k2));
  pyr.push_back(avgpool(pyr[1], 2));
  pyr.push_back(avgpool(pyr[2], 2));
  return pyr;
}

}  // namespace gmf
