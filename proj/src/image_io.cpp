#include "persview/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "persview/error.hpp"

namespace persview {

namespace {

unsigned char to_byte(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<unsigned char> read_png_raw(const std::filesystem::path& path, png_uint_32 format,
                                        int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::CorruptMember, "cannot read PNG " + path.string() + ": " + msg);
  }
  image.format = format;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::CorruptMember, "cannot decode PNG " + path.string() + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

std::vector<unsigned char> encode_raw(const unsigned char* pixels, int width, int height,
                                      png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, std::string("PNG encoding failed: ") + image.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, std::string("PNG encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

float swap_bytes(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u = ((u & 0xFF) << 24) | ((u & 0xFF00) << 8) | ((u >> 8) & 0xFF00) | (u >> 24);
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

ImageBuffer read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  ImageBuffer img(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) img.values[i] = raw[i] / 255.0f;
  return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  GrayImage img(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) img.values[i] = raw[i] / 255.0f;
  return img;
}

std::vector<unsigned char> encode_png(const ImageBuffer& image) {
  std::vector<unsigned char> bytes(image.values.size());
  std::transform(image.values.begin(), image.values.end(), bytes.begin(), to_byte);
  return encode_raw(bytes.data(), image.width, image.height, PNG_FORMAT_RGB);
}

std::vector<unsigned char> encode_png(const GrayImage& image) {
  std::vector<unsigned char> bytes(image.values.size());
  std::transform(image.values.begin(), image.values.end(), bytes.begin(), to_byte);
  return encode_raw(bytes.data(), image.width, image.height, PNG_FORMAT_GRAY);
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  write_file_atomic(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_file_atomic(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const BlendMask& mask) {
  GrayImage g(mask.width, mask.height);
  g.values = mask.weights;
  write_png(path, g);
}

FloatRaster read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::CorruptMember, "cannot open " + path.string());
  std::string magic;
  FloatRaster r;
  double scale = 0.0;
  in >> magic >> r.width >> r.height >> scale;
  if (!in || (magic != "Pf" && magic != "PF") || r.width <= 0 || r.height <= 0 || scale == 0.0 ||
      !std::isfinite(scale)) {
    throw Error(ErrorCode::CorruptMember, "malformed PFM header in " + path.string());
  }
  in.get();  // single whitespace before the payload
  r.channels = magic == "PF" ? 3 : 1;
  const std::size_t row = static_cast<std::size_t>(r.width) * r.channels;
  r.values.resize(row * r.height);
  const bool file_little = scale < 0.0;
  const bool swap = file_little != (std::endian::native == std::endian::little);
  std::vector<float> line(row);
  for (int y = r.height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(line.data()), static_cast<std::streamsize>(row * sizeof(float)));
    if (!in) throw Error(ErrorCode::CorruptMember, "truncated PFM payload in " + path.string());
    for (std::size_t i = 0; i < row; ++i) {
      r.values[static_cast<std::size_t>(y) * row + i] = swap ? swap_bytes(line[i]) : line[i];
    }
  }
  return r;
}

void write_pfm(const std::filesystem::path& path, const FloatRaster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw Error(ErrorCode::IoFailure, "PFM supports 1 or 3 channels");
  }
  std::ostringstream out(std::ios::binary);
  out << (raster.channels == 3 ? "PF" : "Pf") << '\n'
      << raster.width << ' ' << raster.height << '\n'
      << "-1.0\n";
  const std::size_t row = static_cast<std::size_t>(raster.width) * raster.channels;
  for (int y = raster.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      float v = raster.values[static_cast<std::size_t>(y) * row + i];
      if constexpr (std::endian::native != std::endian::little) v = swap_bytes(v);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  write_file_atomic(path, out.str());
}

DepthMap read_depth_pfm(const std::filesystem::path& path) {
  const FloatRaster r = read_pfm(path);
  if (r.channels != 1) throw Error(ErrorCode::CorruptMember, "depth PFM must be grayscale (Pf)");
  return DepthMap::from_values(r.width, r.height, std::vector<double>(r.values.begin(), r.values.end()));
}

void write_depth_pfm(const std::filesystem::path& path, const DepthMap& depth) {
  FloatRaster r;
  r.width = depth.width;
  r.height = depth.height;
  r.values.resize(depth.values.size());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    r.values[i] = depth.valid[i] ? static_cast<float>(depth.values[i])
                                 : std::numeric_limits<float>::quiet_NaN();
  }
  write_pfm(path, r);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::IoFailure, "cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace persview
