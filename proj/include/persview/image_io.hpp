#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "persview/image.hpp"
#include "persview/mesh_warp.hpp"

namespace persview {

// 8-bit PNG. Code values map linearly to [0,1] (v / 255); writing rounds to
// the nearest code value.
ImageBuffer read_png_rgb(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const BlendMask& mask);

std::vector<unsigned char> encode_png(const ImageBuffer& image);
std::vector<unsigned char> encode_png(const GrayImage& image);

// Portable FloatMap. Rows are stored bottom-to-top; we always write
// little-endian (scale -1.0) and read either byte order.
struct FloatRaster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> values;  // top-to-bottom, interleaved
};

FloatRaster read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const FloatRaster& raster);

DepthMap read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const std::filesystem::path& path, const DepthMap& depth);

// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace persview
