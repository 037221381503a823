#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <json.hpp>

#include "pfan/evaluate.hpp"
#include "pfan/metrics.hpp"
#include "support.hpp"

using namespace pfan;
namespace fs = std::filesystem;

namespace {

Manifest dataset(const test::TempDir& dir, Index sources = 11, Index pairs = 22) {
  test::write_scenes(dir / "clean", sources, 16, 7);
  return generate_dataset({dir / "clean", dir / "data", pairs, 1, DensityTier::medium});
}

}  // namespace

TEST_CASE("identity generator reproduces the input baseline") {
  test::TempDir dir("eval");
  const Manifest m = dataset(dir);
  Generator<float> g(PfanConfig::desk(), 1);
  g.params().fill(0.0f);
  const MetricsReport r = evaluate_dataset(g, m, "test");
  const auto rows = m.rows_in("test");
  REQUIRE(r.rows.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Image syn = read_png(m.resolve(rows[i].syn)), clean = read_png(m.resolve(rows[i].clean));
    CHECK(r.rows[i].name == rows[i].syn);
    CHECK(r.rows[i].psnr == psnr(syn, clean));
    CHECK(r.rows[i].ssim == ssim(syn, clean));
    CHECK(r.rows[i].ciede2000 == image_ciede2000(syn, clean));
  }
  CHECK(r.parameters == count_params(g.params()));
  CHECK(r.config_digest == config_digest(PfanConfig::desk()));
  CHECK(r.skipped == 0);
}

TEST_CASE("means recompute from rows") {
  test::TempDir dir("eval");
  const Manifest m = dataset(dir);
  const MetricsReport r = evaluate_dataset([](const Image& x) { return quantize8(x); }, m, "train");
  double p = 0, s = 0, e = 0;
  for (const auto& row : r.rows) p += row.psnr, s += row.ssim, e += row.ciede2000;
  const double n = double(r.rows.size());
  CHECK(r.mean_psnr == p / n);
  CHECK(r.mean_ssim == s / n);
  CHECK(r.mean_ciede2000 == e / n);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["images"].size() == r.rows.size());
  CHECK(j["mean"]["psnr"].get<double>() == r.mean_psnr);
  CHECK(j["mean"]["ssim"].get<double>() == r.mean_ssim);
  const std::string table = r.to_table();
  CHECK(table.find("PSNR") < table.find("SSIM"));
  CHECK(table.find("SSIM") < table.find("CIEDE2000"));
  CHECK(table.find("mean") != std::string::npos);
}

TEST_CASE("perfect output serializes the inf token") {
  test::TempDir dir("eval");
  const Manifest m = dataset(dir);
  const auto by_name = [&](const Image& syn) {
    for (const auto& row : m.rows)
      if (read_png(m.resolve(row.syn)) == syn) return read_png(m.resolve(row.clean));
    return syn;
  };
  const MetricsReport r = evaluate_dataset(by_name, m, "test");
  CHECK(r.mean_psnr == kPsnrInf);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["mean"]["psnr"] == kPsnrInfToken);
  CHECK(j["images"][0]["psnr"] == "inf");
  CHECK(j["mean"]["ciede2000"].get<double>() == 0.0);
  CHECK(r.to_table().find("inf") != std::string::npos);
}

TEST_CASE("empty split and unreadable pairs") {
  test::TempDir dir("eval");
  const Manifest m = dataset(dir, 10, 10);  // 7/0/3: no val rows
  const ImageModel id = [](const Image& x) { return x; };
  CHECK_THROWS_AS(evaluate_dataset(id, m, "val"), DatasetError);
  CHECK_THROWS_AS(evaluate_dataset(id, Manifest{}, "test"), DatasetError);

  const auto test_rows = m.rows_in("test");
  fs::remove(m.resolve(test_rows[0].syn));
  { std::ofstream(m.resolve(test_rows[1].clean)) << "garbage"; }
  const MetricsReport r = evaluate_dataset(id, m, "test");
  CHECK(r.skipped == 2);
  CHECK(r.rows.size() == test_rows.size() - 2);

  for (const auto& row : test_rows) fs::remove(m.resolve(row.syn));
  CHECK_THROWS_AS(evaluate_dataset(id, m, "test"), DatasetError);
}

TEST_CASE("config digest") {
  const std::string d = config_digest(PfanConfig{});
  CHECK(d.size() == 16);
  CHECK(d == config_digest(PfanConfig{}));
  CHECK(d != config_digest(PfanConfig::desk()));
}
