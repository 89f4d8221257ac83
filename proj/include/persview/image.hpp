#pragma once

#include <cstddef>
#include <vector>

namespace persview {

// Interleaved RGB, values in [0,1].
struct ImageBuffer {
  static constexpr int channels = 3;

  int width = 0;
  int height = 0;
  std::vector<float> values;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h * channels, fill) {}

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c) { return values[index(x, y, c)]; }
  float at(int x, int y, int c) const { return values[index(x, y, c)]; }
  bool same_size(int w, int h) const { return width == w && height == h; }
};

// Single channel raster in [0,1]; used for mattes.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Composition weights in [0,1]; 1 selects the warped image.
struct BlendMask {
  int width = 0;
  int height = 0;
  std::vector<float> weights;

  BlendMask() = default;
  BlendMask(int w, int h, float fill = 0.0f)
      : width(w), height(h), weights(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return weights[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return weights[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace persview
