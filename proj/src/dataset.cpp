#include "pfan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "pfan/error.hpp"
#include "pfan/parallel.hpp"

namespace fs = std::filesystem;

namespace pfan {
namespace {

struct Band {
  double lo, hi;
};

Band density_band(DensityTier tier) {
  switch (tier) {
    case DensityTier::light: return {0.15, 0.35};
    case DensityTier::medium: return {0.4, 0.6};
    case DensityTier::heavy: return {0.65, 0.9};
    case DensityTier::random: return {0.15, 0.9};
  }
  return {0.15, 0.9};
}

// Tiers hold the source position and temperature fixed.
constexpr std::array<double, 2> kTierSource{0.5, 0.6};
constexpr double kTierTemperature = 0.5;
constexpr Index kMaxFrame = 24;

std::string file_name(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05lld.png", static_cast<long long>(i));
  return buf;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext == ".png";
}

double parse_real(const std::string& s, const std::string& field, Index line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("manifest line " + std::to_string(line) + ": bad value for " + field + ": '" + s + "'");
}

std::uint64_t parse_u64(const std::string& s, const std::string& field, Index line) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size() && !s.empty() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw FormatError("manifest line " + std::to_string(line) + ": bad value for " + field + ": '" + s + "'");
}

const char* const kFields[] = {"split",       "index",    "source",  "clean",   "smoke",   "syn",
                               "density",     "intensity", "temperature", "source_x", "source_y", "light_x",
                               "light_y",     "light_intensity", "seed", "frame"};
constexpr std::size_t kFieldCount = sizeof kFields / sizeof kFields[0];

}  // namespace

DensityTier parse_density_tier(std::string_view name) {
  if (name == "light") return DensityTier::light;
  if (name == "medium") return DensityTier::medium;
  if (name == "heavy") return DensityTier::heavy;
  if (name == "random") return DensityTier::random;
  throw ValueError("unknown density tier '" + std::string(name) + "' (light|medium|heavy|random)");
}

std::string_view to_string(DensityTier tier) {
  switch (tier) {
    case DensityTier::light: return "light";
    case DensityTier::medium: return "medium";
    case DensityTier::heavy: return "heavy";
    case DensityTier::random: return "random";
  }
  return "random";
}

SplitCounts split_counts(Index n) {
  if (n < 1) throw DatasetError("split: need at least one source image");
  SplitCounts s;
  s.val = n / 11;
  s.train = std::max<Index>(1, 8 * n / 11);
  s.test = n - s.train - s.val;
  return s;
}

std::vector<ManifestRow> Manifest::rows_in(std::string_view split) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r);
  return out;
}

void write_manifest(const Manifest& m, const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write manifest " + file.string());
  os << '#';
  for (std::size_t i = 0; i < kFieldCount; ++i) os << (i ? "\t" : "") << kFields[i];
  os << '\n';
  for (const auto& r : m.rows) {
    const auto& p = r.params;
    os << r.split << '\t' << r.index << '\t' << r.source << '\t' << r.clean << '\t' << r.smoke << '\t' << r.syn
       << '\t' << fmt_real(p.density) << '\t' << fmt_real(p.intensity) << '\t' << fmt_real(p.temperature) << '\t'
       << fmt_real(p.source[0]) << '\t' << fmt_real(p.source[1]) << '\t' << fmt_real(p.light[0]) << '\t'
       << fmt_real(p.light[1]) << '\t' << fmt_real(p.light_intensity) << '\t' << p.seed << '\t' << p.frame << '\n';
  }
  if (!os) throw IoError("failed writing manifest " + file.string());
}

Manifest read_manifest(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open manifest " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  Index line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
    if (f.size() != kFieldCount) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(kFieldCount) +
                        " fields, got " + std::to_string(f.size()));
    }
    ManifestRow r;
    r.split = f[0];
    if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw FormatError("manifest line " + std::to_string(line_no) + ": unknown split '" + r.split + "'");
    }
    r.index = Index(parse_u64(f[1], "index", line_no));
    r.source = f[2];
    r.clean = f[3];
    r.smoke = f[4];
    r.syn = f[5];
    auto& p = r.params;
    p.density = parse_real(f[6], "density", line_no);
    p.intensity = parse_real(f[7], "intensity", line_no);
    p.temperature = parse_real(f[8], "temperature", line_no);
    p.source = {parse_real(f[9], "source_x", line_no), parse_real(f[10], "source_y", line_no)};
    p.light = {parse_real(f[11], "light_x", line_no), parse_real(f[12], "light_y", line_no)};
    p.light_intensity = parse_real(f[13], "light_intensity", line_no);
    p.seed = parse_u64(f[14], "seed", line_no);
    p.frame = Index(parse_u64(f[15], "frame", line_no));
    try {
      p.validate();
    } catch (const ValueError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

SmokeParams sample_smoke_params(DensityTier tier, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Band band = density_band(tier);
  SmokeParams p;
  p.density = band.lo + (band.hi - band.lo) * unit(rng);
  p.intensity = 0.6 + 0.4 * unit(rng);
  if (tier == DensityTier::random) {
    p.temperature = unit(rng);
    p.source = {0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng)};
  } else {
    p.temperature = kTierTemperature;
    p.source = kTierSource;
  }
  p.light = {unit(rng), unit(rng)};
  p.light_intensity = unit(rng);
  p.seed = rng();
  p.frame = std::uniform_int_distribution<Index>(0, kMaxFrame)(rng);
  return p;
}

Manifest generate_dataset(const DatasetOptions& opt) {
  if (opt.n_pairs < 1) throw ValueError("generate_dataset: n_pairs must be >= 1");
  if (!fs::is_directory(opt.clean_dir)) throw IoError("clean_dir is not a directory: " + opt.clean_dir.string());

  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(opt.clean_dir))
    if (e.is_regular_file() && is_png(e.path())) candidates.push_back(e.path());
  std::sort(candidates.begin(), candidates.end());

  std::vector<fs::path> sources;
  std::vector<Image> images;
  for (const auto& p : candidates) {
    try {
      images.push_back(read_png(p));
      sources.push_back(p);
    } catch (const DecodeError& e) {
      std::cerr << "pfan: warning: skipping " << e.what() << '\n';
    }
  }
  if (sources.empty()) throw DatasetError("no decodable PNG images in " + opt.clean_dir.string());
  for (const auto& img : images)
    if (img.height() < 8 || img.width() < 8) throw DatasetError("source images must be at least 8x8");

  const Index n = Index(sources.size());
  const SplitCounts counts = split_counts(n);
  std::mt19937_64 rng(opt.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[std::size_t(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::string> split_of(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const char* s = k < counts.train ? "train" : k < counts.train + counts.val ? "val" : "test";
    split_of[std::size_t(order[std::size_t(k)])] = s;
  }

  try {
    for (const char* split : {"train", "val", "test"})
      for (const char* kind : {"clean", "smoke", "syn"}) fs::create_directories(opt.out_dir / split / kind);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directories under " + opt.out_dir.string() + ": " + e.what());
  }

  Manifest m;
  m.root = opt.out_dir;
  std::map<std::string, Index> next_index;
  for (Index i = 0; i < opt.n_pairs; ++i) {
    const Index src = i % n;
    ManifestRow r;
    r.split = split_of[std::size_t(src)];
    r.index = next_index[r.split]++;
    r.source = sources[std::size_t(src)].filename().string();
    const std::string name = file_name(r.index);
    r.clean = r.split + "/clean/" + name;
    r.smoke = r.split + "/smoke/" + name;
    r.syn = r.split + "/syn/" + name;
    r.params = sample_smoke_params(opt.tier, rng);
    m.rows.push_back(std::move(r));
  }

  parallel_for(Index(m.rows.size()), [&](Index i) {
    const ManifestRow& r = m.rows[std::size_t(i)];
    const Image& clean = images[std::size_t(i % n)];
    const SmokeLayer smoke = render_smoke_frame(r.params, clean.height(), clean.width());
    Image gray(clean.height(), clean.width());
    for (int c = 0; c < 3; ++c) gray.channel(c) = smoke;
    write_png(m.resolve(r.clean), clean);
    write_png(m.resolve(r.smoke), gray);
    write_png(m.resolve(r.syn), composite(clean, smoke));
  });

  write_manifest(m, opt.out_dir / kManifestName);
  return m;
}

Image rerender_syn(const Manifest& m, const ManifestRow& row) {
  const Image clean = read_png(m.resolve(row.clean));
  return quantize8(composite(clean, render_smoke_frame(row.params, clean.height(), clean.width())));
}

}  // namespace pfan
