#pragma once

#include <optional>
#include <string>
#include <vector>

#include "persview/image.hpp"

namespace persview {

// Peak is 1.0. Identical (masked) content gives +infinity.
double psnr(const ImageBuffer& a, const ImageBuffer& b, const BlendMask* mask = nullptr);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over all fully contained windows, on Rec.601 luma.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

std::vector<double> luma(const ImageBuffer& img);

using FeatureVector = std::vector<double>;

// Cosine similarity; higher means closer identities.
double id_score(const FeatureVector& f1, const FeatureVector& f2);

struct MetricRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> id_score;
};

struct MetricAggregate {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> id_score;
  int lpips_count = 0;
  int id_count = 0;
};

struct MetricReport {
  std::vector<MetricRow> per_image;
  MetricAggregate aggregate;
};

MetricReport aggregate_report(std::vector<MetricRow> rows);

// Aligned-column table: Methods | PSNR↑ | SSIM↑ | LPIPS↓ | ID↑
std::string format_report_table(const MetricReport& report, const std::string& method = "ours");

}  // namespace persview
