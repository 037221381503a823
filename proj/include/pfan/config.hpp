#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pfan/arch.hpp"
#include "pfan/dataset.hpp"
#include "pfan/train.hpp"

namespace pfan {

/// Everything a CLI run needs: model and training settings, paths and seed.
struct RunConfig {
  std::string preset = "default";  // default | desk
  PfanConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;

  std::filesystem::path out;
  std::filesystem::path clean_dir;
  std::filesystem::path manifest;
  std::filesystem::path weights;
  std::filesystem::path input;
  std::filesystem::path output;

  Index n_pairs = 11;
  DensityTier tier = DensityTier::random;
  std::string split = "test";

  std::vector<std::pair<Index, Index>> bench_sizes{{8, 8}, {16, 16}, {32, 32}, {64, 64}};
  Index bench_channels = 16;
  Index bench_reps = 5;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
Settings parse_config_text(std::string_view text, std::string_view origin = "config");
Settings read_config_file(const std::filesystem::path& file);

/// Parses `value` for `key` into cfg. Unknown keys and malformed values throw
/// ConfigError naming the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Built-in defaults, then the preset (CLI preset wins over the file's), then
/// file settings, then CLI settings. The result is validated.
RunConfig resolve_config(const Settings& file, const Settings& cli);

/// key = value rendering of every key, readable by read_config_file.
std::string dump_config(const RunConfig& cfg);

}  // namespace pfan
