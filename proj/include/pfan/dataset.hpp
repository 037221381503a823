#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pfan/smoke.hpp"

namespace pfan {

enum class DensityTier { light, medium, heavy, random };

DensityTier parse_density_tier(std::string_view name);
std::string_view to_string(DensityTier tier);

struct SplitCounts {
  Index train = 0, val = 0, test = 0;
};

/// Source-image split for an 8:1:2 ratio over n sources:
/// val = floor(n/11), train = max(1, floor(8n/11)), test gets the remainder.
SplitCounts split_counts(Index n_sources);

/// One synthesized pair. Paths are relative to the manifest's directory.
struct ManifestRow {
  std::string split;  // train | val | test
  Index index = 0;    // per-split file number
  std::string source; // source file name inside clean_dir
  std::string clean, smoke, syn;
  SmokeParams params;
};

struct Manifest {
  std::filesystem::path root;  // directory the row paths are relative to
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> rows_in(std::string_view split) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Tab-separated, one row per pair, '#'-prefixed header naming the fields:
/// split index source clean smoke syn density intensity temperature source_x
/// source_y light_x light_y light_intensity seed frame. Reals use 17
/// significant digits so re-rendering reproduces the stored pixels.
void write_manifest(const Manifest& m, const std::filesystem::path& file);
Manifest read_manifest(const std::filesystem::path& file);

struct DatasetOptions {
  std::filesystem::path clean_dir;
  std::filesystem::path out_dir;
  Index n_pairs = 0;
  std::uint64_t seed = 0;
  DensityTier tier = DensityTier::random;
};

/// Draws smoke parameters for one pair from the tier's ranges.
SmokeParams sample_smoke_params(DensityTier tier, std::mt19937_64& rng);

/// Splits the decodable PNGs of clean_dir by source image, renders one smoke
/// frame per pair (pair i uses source i mod n in sorted name order), writes
/// out_dir/{train,val,test}/{clean,smoke,syn}/NNNNN.png and out_dir/manifest.tsv.
Manifest generate_dataset(const DatasetOptions& opt);

/// Recomputes syn from the stored clean image and parameters.
Image rerender_syn(const Manifest& m, const ManifestRow& row);

}  // namespace pfan
