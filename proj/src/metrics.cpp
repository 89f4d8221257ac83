#include "persview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "persview/error.hpp"

namespace persview {

double psnr(const ImageBuffer& a, const ImageBuffer& b, const BlendMask* mask) {
  if (!a.same_size(b.width, b.height) || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "images differ in size");
  }
  if (mask && (mask->width != a.width || mask->height != a.height)) {
    throw Error(ErrorCode::DimensionMismatch, "mask does not match the images", "mask");
  }
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t pixels = static_cast<std::size_t>(a.width) * a.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (mask && !(mask->weights[p] > 0.5f)) continue;
    for (int c = 0; c < ImageBuffer::channels; ++c) {
      const double d = static_cast<double>(a.values[p * 3 + c]) - b.values[p * 3 + c];
      sum += d * d;
    }
    count += ImageBuffer::channels;
  }
  if (count == 0) throw Error(ErrorCode::EmptyMask, "mask selects no pixels", "mask");
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> luma(const ImageBuffer& img) {
  std::vector<double> y(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t p = 0; p < y.size(); ++p) {
    y[p] = 0.299 * img.values[p * 3] + 0.587 * img.values[p * 3 + 1] + 0.114 * img.values[p * 3 + 2];
  }
  return y;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
  if (!a.same_size(b.width, b.height) || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "images differ in size");
  }
  const int win = params.window;
  if (a.width < win || a.height < win) {
    throw Error(ErrorCode::TooSmall, "images smaller than the SSIM window");
  }
  std::vector<double> kernel(win);
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double x = i - (win - 1) / 2.0;
    kernel[i] = std::exp(-x * x / (2.0 * params.sigma * params.sigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const std::vector<double> ya = luma(a);
  const std::vector<double> yb = luma(b);
  const double c1 = (params.k1) * (params.k1);
  const double c2 = (params.k2) * (params.k2);
  const int w = a.width;

  double total = 0.0;
  std::size_t windows = 0;
  for (int y0 = 0; y0 + win <= a.height; ++y0) {
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int j = 0; j < win; ++j) {
        for (int i = 0; i < win; ++i) {
          const double wt = kernel[i] * kernel[j];
          const std::size_t p = static_cast<std::size_t>(y0 + j) * w + (x0 + i);
          mu_a += wt * ya[p];
          mu_b += wt * yb[p];
          aa += wt * ya[p] * ya[p];
          bb += wt * yb[p] * yb[p];
          ab += wt * ya[p] * yb[p];
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double id_score(const FeatureVector& f1, const FeatureVector& f2) {
  if (f1.size() != f2.size()) throw Error(ErrorCode::LengthMismatch, "feature vectors differ in length");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    dot += f1[i] * f2[i];
    n1 += f1[i] * f1[i];
    n2 += f2[i] * f2[i];
  }
  if (!(n1 > 0.0) || !(n2 > 0.0) || !std::isfinite(n1) || !std::isfinite(n2)) {
    throw Error(ErrorCode::ZeroVector, "feature vector has zero norm");
  }
  return dot / (std::sqrt(n1) * std::sqrt(n2));
}

MetricReport aggregate_report(std::vector<MetricRow> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyReport, "no rows to aggregate");
  MetricReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0, lpips_sum = 0.0, id_sum = 0.0;
  for (const MetricRow& r : rows) {
    psnr_sum += r.psnr_db;
    ssim_sum += r.ssim;
    if (r.lpips) {
      lpips_sum += *r.lpips;
      ++report.aggregate.lpips_count;
    }
    if (r.id_score) {
      id_sum += *r.id_score;
      ++report.aggregate.id_count;
    }
  }
  const double n = static_cast<double>(rows.size());
  report.aggregate.psnr_db = psnr_sum / n;
  report.aggregate.ssim = ssim_sum / n;
  if (report.aggregate.lpips_count > 0) report.aggregate.lpips = lpips_sum / report.aggregate.lpips_count;
  if (report.aggregate.id_count > 0) report.aggregate.id_score = id_sum / report.aggregate.id_count;
  report.per_image = std::move(rows);
  return report;
}

namespace {

std::string cell(std::optional<double> v, int precision) {
  if (!v) return "-";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

// Pads by code points so the arrow glyphs do not skew the columns.
std::string pad(const std::string& s, std::size_t width) {
  std::size_t glyphs = 0;
  for (unsigned char ch : s) glyphs += (ch & 0xC0) != 0x80;
  return s + std::string(glyphs < width ? width - glyphs : 0, ' ');
}

}  // namespace

std::string format_report_table(const MetricReport& report, const std::string& method) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Methods", "PSNR↑", "SSIM↑", "LPIPS↓", "ID↑"});
  for (const MetricRow& r : report.per_image) {
    rows.push_back({r.name, cell(r.psnr_db, 2), cell(r.ssim, 3), cell(r.lpips, 3), cell(r.id_score, 3)});
  }
  const MetricAggregate& a = report.aggregate;
  rows.push_back({method, cell(a.psnr_db, 2), cell(a.ssim, 3), cell(a.lpips, 3), cell(a.id_score, 3)});

  std::vector<std::size_t> widths(5, 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::size_t glyphs = 0;
      for (unsigned char ch : row[c]) glyphs += (ch & 0xC0) != 0x80;
      widths[c] = std::max(widths[c], glyphs);
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r + 1 == rows.size()) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 3;
      out << std::string(total - 3, '-') << '\n';
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out << (c ? " | " : "") << (c + 1 < rows[r].size() ? pad(rows[r][c], widths[c]) : rows[r][c]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace persview
