#include "pfan/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pfan/error.hpp"
#include "pfan/metrics.hpp"

namespace pfan {
namespace {

nlohmann::json real_json(double v) {
  if (std::isinf(v) && v > 0) return kPsnrInfToken;
  return v;
}

std::string fixed(double v, int decimals) {
  if (std::isinf(v) && v > 0) return kPsnrInfToken;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

void MetricsReport::finalize() {
  double p = 0.0, s = 0.0, e = 0.0;
  for (const auto& r : rows) {
    p += r.psnr;
    s += r.ssim;
    e += r.ciede2000;
  }
  const double n = rows.empty() ? 1.0 : double(rows.size());
  mean_psnr = p / n;
  mean_ssim = s / n;
  mean_ciede2000 = e / n;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["parameters"] = parameters;
  j["config_digest"] = config_digest;
  j["skipped"] = skipped;
  j["mean"] = {{"psnr", real_json(mean_psnr)}, {"ssim", mean_ssim}, {"ciede2000", mean_ciede2000}};
  auto& arr = j["images"] = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"name", r.name}, {"psnr", real_json(r.psnr)}, {"ssim", r.ssim}, {"ciede2000", r.ciede2000}});
  }
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  auto line = [&](const std::string& name, const std::string& p, const std::string& s, const std::string& e) {
    os << name << std::string(width - name.size() + 2, ' ');
    os << std::string(p.size() < 10 ? 10 - p.size() : 0, ' ') << p;
    os << std::string(s.size() < 10 ? 10 - s.size() : 0, ' ') << s;
    os << std::string(e.size() < 12 ? 12 - e.size() : 0, ' ') << e << '\n';
  };
  line("image", "PSNR", "SSIM", "CIEDE2000");
  for (const auto& r : rows) line(r.name, fixed(r.psnr, 4), fixed(r.ssim, 4), fixed(r.ciede2000, 4));
  line("mean", fixed(mean_psnr, 4), fixed(mean_ssim, 4), fixed(mean_ciede2000, 4));
  os << "parameters " << parameters << "  config " << config_digest << "  skipped " << skipped << '\n';
  return os.str();
}

MetricsReport evaluate_dataset(const ImageModel& model, const Manifest& manifest, std::string_view split) {
  const auto rows = manifest.rows_in(split);
  if (rows.empty()) throw DatasetError("manifest has no '" + std::string(split) + "' pairs to evaluate");
  MetricsReport report;
  for (const auto& row : rows) {
    Image syn, clean;
    try {
      syn = read_png(manifest.resolve(row.syn));
      clean = read_png(manifest.resolve(row.clean));
    } catch (const Error& e) {
      std::cerr << "pfan: warning: skipping pair " << row.syn << ": " << e.what() << '\n';
      ++report.skipped;
      continue;
    }
    if (!syn.same_extent(clean)) {
      std::cerr << "pfan: warning: skipping pair " << row.syn << ": syn and clean extents differ\n";
      ++report.skipped;
      continue;
    }
    const Image out = model(syn);
    report.rows.push_back({row.syn, psnr(out, clean), ssim(out, clean), image_ciede2000(out, clean)});
  }
  if (report.rows.empty()) throw DatasetError("no '" + std::string(split) + "' pair could be evaluated");
  report.finalize();
  return report;
}

MetricsReport evaluate_dataset(const Generator<float>& generator, const Manifest& manifest, std::string_view split) {
  MetricsReport report =
      evaluate_dataset([&](const Image& img) { return desmoke(generator, img); }, manifest, split);
  report.parameters = count_params(generator.params());
  report.config_digest = config_digest(generator.config());
  return report;
}

std::string config_digest(const PfanConfig& cfg) {
  const std::string text = cfg.canonical();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

}  // namespace pfan
