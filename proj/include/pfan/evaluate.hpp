#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pfan/arch.hpp"
#include "pfan/dataset.hpp"

namespace pfan {

struct ImageMetrics {
  std::string name;  // syn path relative to the manifest
  double psnr = 0.0;
  double ssim = 0.0;
  double ciede2000 = 0.0;
};

/// Per-image rows plus their arithmetic means, in the column order
/// PSNR, SSIM, CIEDE2000, parameters.
struct MetricsReport {
  std::vector<ImageMetrics> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_ciede2000 = 0.0;
  Index parameters = 0;
  std::string config_digest;  // 16 hex digits of the model config
  Index skipped = 0;          // pairs that could not be read or decoded

  /// Recomputes the means from rows.
  void finalize();
  /// JSON object; an infinite PSNR is written as the string "inf".
  std::string to_json() const;
  /// Aligned text table, one line per image and a final mean line.
  std::string to_table() const;
};

using ImageModel = std::function<Image(const Image&)>;

/// Runs `model` on every syn image of `split` and scores it against the clean
/// image. Unreadable pairs are skipped with a warning and counted. Throws
/// DatasetError when the split has no rows or no pair could be scored.
MetricsReport evaluate_dataset(const ImageModel& model, const Manifest& manifest, std::string_view split = "test");

/// Same, driven by a generator; fills parameters and config_digest.
MetricsReport evaluate_dataset(const Generator<float>& generator, const Manifest& manifest,
                               std::string_view split = "test");

std::string config_digest(const PfanConfig& cfg);

}  // namespace pfan
