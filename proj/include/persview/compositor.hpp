#pragma once

#include <optional>
#include <vector>

#include "persview/image.hpp"
#include "persview/mesh_warp.hpp"

namespace persview {

// 1 where the render shows a non-culled face whose three corners are all
// visible, 0 elsewhere, optionally multiplied by a matte.
BlendMask build_blend_mask(const RenderOutput& render, const RangeGridMesh& mesh,
                           const GrayImage* matte = nullptr);

// Binarise (> 0.5), erode with a (2*erode_px+1)^2 square, then box blur with
// a blur_px^2 window. Borders use reflect-101 padding.
BlendMask dilate_and_blur(const BlendMask& mask, int erode_px = 2, int blur_px = 5);

// Single channel plane used by the pyramid code.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// 5-tap binomial [1 4 6 4 1]/16 blur followed by 2x decimation.
Plane pyramid_down(const Plane& p);
// Zero insertion to (width, height) followed by the same kernel scaled x2 per axis.
Plane pyramid_up(const Plane& p, int width, int height);

std::vector<Plane> gaussian_pyramid(const Plane& p, int levels);
// Band-pass levels with the low-pass residual last; `levels` entries total.
std::vector<Plane> laplacian_pyramid(const Plane& p, int levels);
Plane reconstruct_laplacian(const std::vector<Plane>& pyramid);

ImageBuffer laplacian_blend(const ImageBuffer& warped, const ImageBuffer& generated,
                            const BlendMask& mask, int levels = 3);

}  // namespace persview
