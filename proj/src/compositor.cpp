#include "persview/compositor.hpp"

#include <algorithm>
#include <cmath>

#include "persview/error.hpp"

namespace persview {

namespace {

// Reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

Plane blur_binomial(const Plane& p, double gain) {
  Plane tmp(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * p.at(reflect(x + k, p.width), y);
      tmp.at(x, y) = acc * gain;
    }
  }
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * tmp.at(x, reflect(y + k, p.height));
      out.at(x, y) = acc * gain;
    }
  }
  return out;
}

Plane channel_plane(const ImageBuffer& img, int c) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) p.at(x, y) = img.at(x, y, c);
  }
  return p;
}

}  // namespace

BlendMask build_blend_mask(const RenderOutput& render, const RangeGridMesh& mesh,
                           const GrayImage* matte) {
  const std::size_t n = static_cast<std::size_t>(render.width) * render.height;
  if (render.face_id.size() != n || render.coverage.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "malformed render output");
  }
  if (matte && (matte->width != render.width || matte->height != render.height)) {
    throw Error(ErrorCode::DimensionMismatch, "matte does not match the render", "matte");
  }
  if (mesh.vertex_visible.size() != mesh.vertices.size()) {
    throw Error(ErrorCode::DimensionMismatch, "mesh has no visibility flags");
  }
  BlendMask mask(render.width, render.height, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (!render.coverage[i]) continue;
    const int f = render.face_id[i];
    if (f < 0 || static_cast<std::size_t>(f) >= mesh.faces.size()) {
      throw Error(ErrorCode::DimensionMismatch, "render references a face outside the mesh");
    }
    if (!mesh.face_culled.empty() && mesh.face_culled[f]) continue;
    const Face& t = mesh.faces[f];
    if (mesh.vertex_visible[t[0]] && mesh.vertex_visible[t[1]] && mesh.vertex_visible[t[2]]) {
      mask.weights[i] = 1.0f;
    }
  }
  if (matte) {
    for (std::size_t i = 0; i < n; ++i) {
      mask.weights[i] *= std::clamp(matte->values[i], 0.0f, 1.0f);
    }
  }
  return mask;
}

BlendMask dilate_and_blur(const BlendMask& mask, int erode_px, int blur_px) {
  if (erode_px < 0) throw Error(ErrorCode::BadKernel, "erode radius must be non-negative");
  if (blur_px < 1 || blur_px % 2 == 0) throw Error(ErrorCode::BadKernel, "blur size must be odd and positive");
  const int w = mask.width;
  const int h = mask.height;

  // Separable erosion with a square element: min over rows, then columns.
  std::vector<std::uint8_t> binary(mask.weights.size());
  for (std::size_t i = 0; i < binary.size(); ++i) binary[i] = mask.weights[i] > 0.5f;
  std::vector<std::uint8_t> rows(binary.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (int k = -erode_px; k <= erode_px && v; ++k) v = binary[static_cast<std::size_t>(y) * w + reflect(x + k, w)];
      rows[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  std::vector<double> eroded(binary.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (int k = -erode_px; k <= erode_px && v; ++k) v = rows[static_cast<std::size_t>(reflect(y + k, h)) * w + x];
      eroded[static_cast<std::size_t>(y) * w + x] = v;
    }
  }

  const int r = blur_px / 2;
  std::vector<double> tmp(eroded.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += eroded[static_cast<std::size_t>(y) * w + reflect(x + k, w)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  BlendMask out(w, h);
  const double norm = 1.0 / (static_cast<double>(blur_px) * blur_px);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += tmp[static_cast<std::size_t>(reflect(y + k, h)) * w + x];
      out.at(x, y) = static_cast<float>(std::clamp(acc * norm, 0.0, 1.0));
    }
  }
  return out;
}

Plane pyramid_down(const Plane& p) {
  const Plane blurred = blur_binomial(p, 1.0);
  Plane out((p.width + 1) / 2, (p.height + 1) / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = blurred.at(2 * x, 2 * y);
  }
  return out;
}

Plane pyramid_up(const Plane& p, int width, int height) {
  Plane sparse(width, height, 0.0);
  for (int y = 0; y < p.height && 2 * y < height; ++y) {
    for (int x = 0; x < p.width && 2 * x < width; ++x) sparse.at(2 * x, 2 * y) = p.at(x, y);
  }
  return blur_binomial(sparse, 2.0);
}

std::vector<Plane> gaussian_pyramid(const Plane& p, int levels) {
  std::vector<Plane> pyr;
  pyr.reserve(levels);
  pyr.push_back(p);
  for (int l = 1; l < levels; ++l) pyr.push_back(pyramid_down(pyr.back()));
  return pyr;
}

std::vector<Plane> laplacian_pyramid(const Plane& p, int levels) {
  std::vector<Plane> gauss = gaussian_pyramid(p, levels);
  std::vector<Plane> lap(levels);
  for (int l = 0; l + 1 < levels; ++l) {
    const Plane up = pyramid_up(gauss[l + 1], gauss[l].width, gauss[l].height);
    lap[l] = gauss[l];
    for (std::size_t i = 0; i < up.values.size(); ++i) lap[l].values[i] -= up.values[i];
  }
  lap[levels - 1] = std::move(gauss[levels - 1]);
  return lap;
}

Plane reconstruct_laplacian(const std::vector<Plane>& pyramid) {
  Plane acc = pyramid.back();
  for (int l = static_cast<int>(pyramid.size()) - 2; l >= 0; --l) {
    Plane up = pyramid_up(acc, pyramid[l].width, pyramid[l].height);
    for (std::size_t i = 0; i < up.values.size(); ++i) up.values[i] += pyramid[l].values[i];
    acc = std::move(up);
  }
  return acc;
}

ImageBuffer laplacian_blend(const ImageBuffer& warped, const ImageBuffer& generated,
                            const BlendMask& mask, int levels) {
  if (!generated.same_size(warped.width, warped.height) ||
      mask.width != warped.width || mask.height != warped.height) {
    throw Error(ErrorCode::DimensionMismatch, "blend inputs differ in size");
  }
  if (levels < 1) throw Error(ErrorCode::InvalidArgument, "pyramid needs at least one level");
  const long min_side = 1L << levels;
  if (warped.width < min_side || warped.height < min_side) {
    throw Error(ErrorCode::TooSmall, "image too small for the requested pyramid depth");
  }

  Plane m(mask.width, mask.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = mask.weights[i];
  const std::vector<Plane> mask_pyr = gaussian_pyramid(m, levels);

  ImageBuffer out(warped.width, warped.height);
  for (int c = 0; c < ImageBuffer::channels; ++c) {
    const std::vector<Plane> lw = laplacian_pyramid(channel_plane(warped, c), levels);
    const std::vector<Plane> lg = laplacian_pyramid(channel_plane(generated, c), levels);
    std::vector<Plane> blended(levels);
    for (int l = 0; l < levels; ++l) {
      blended[l] = lw[l];
      for (std::size_t i = 0; i < blended[l].values.size(); ++i) {
        const double a = mask_pyr[l].values[i];
        blended[l].values[i] = lw[l].values[i] * a + lg[l].values[i] * (1.0 - a);
      }
    }
    const Plane result = reconstruct_laplacian(blended);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        out.at(x, y, c) = static_cast<float>(std::clamp(result.at(x, y), 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace persview
