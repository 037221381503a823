#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pfan/dataset.hpp"
#include "support.hpp"

using namespace pfan;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Manifest make(const test::TempDir& dir, Index sources, Index pairs, std::uint64_t seed,
              DensityTier tier = DensityTier::random, const std::string& out = "data") {
  test::write_scenes(dir / "clean", sources, 16, 100);
  return generate_dataset({dir / "clean", dir / out, pairs, seed, tier});
}

}  // namespace

TEST_CASE("split rule") {
  auto c = split_counts(11);
  CHECK(c.train == 8);
  CHECK(c.val == 1);
  CHECK(c.test == 2);
  c = split_counts(10);
  CHECK(c.train == 7);
  CHECK(c.val == 0);
  CHECK(c.test == 3);
  c = split_counts(22);
  CHECK(c.train == 16);
  CHECK(c.val == 2);
  CHECK(c.test == 4);
  c = split_counts(1);
  CHECK(c.train == 1);
  CHECK(c.test == 0);
  for (Index n = 1; n <= 300; ++n) {
    const auto s = split_counts(n);
    CHECK(s.train + s.val + s.test == n);
    CHECK(s.train >= 1);
    CHECK(s.val == n / 11);
    CHECK(s.test >= 0);
    if (n >= 3) CHECK(s.test >= 1);
  }
  CHECK_THROWS_AS(split_counts(0), DatasetError);
}

TEST_CASE("tiers") {
  CHECK(parse_density_tier("heavy") == DensityTier::heavy);
  CHECK(to_string(DensityTier::light) == "light");
  CHECK_THROWS_AS(parse_density_tier("thick"), ValueError);
  std::mt19937_64 rng(1);
  const std::map<DensityTier, std::pair<double, double>> bands{{DensityTier::light, {0.15, 0.35}},
                                                               {DensityTier::medium, {0.4, 0.6}},
                                                               {DensityTier::heavy, {0.65, 0.9}},
                                                               {DensityTier::random, {0.15, 0.9}}};
  for (const auto& [tier, band] : bands)
    for (int i = 0; i < 200; ++i) {
      const SmokeParams p = sample_smoke_params(tier, rng);
      CHECK(p.density >= band.first);
      CHECK(p.density <= band.second);
      CHECK_NOTHROW(p.validate());
      if (tier != DensityTier::random) {
        CHECK(p.source[0] == 0.5);
        CHECK(p.source[1] == 0.6);
        CHECK(p.temperature == 0.5);
      }
      CHECK(p.frame >= 0);
      CHECK(p.frame <= 24);
    }
}

TEST_CASE("generated layout and manifest") {
  test::TempDir dir("ds");
  const Manifest m = make(dir, 11, 22, 5);
  CHECK(m.rows.size() == 22);
  CHECK(m.rows_in("train").size() == 16);
  CHECK(m.rows_in("val").size() == 2);
  CHECK(m.rows_in("test").size() == 4);
  for (const auto& r : m.rows) {
    CHECK(fs::exists(m.resolve(r.clean)));
    CHECK(fs::exists(m.resolve(r.smoke)));
    CHECK(fs::exists(m.resolve(r.syn)));
    CHECK(r.syn.rfind(r.split + "/syn/", 0) == 0);
  }
  CHECK(fs::exists(dir / "data/train/clean/00000.png"));

  const Manifest back = read_manifest(dir / "data" / kManifestName);
  REQUIRE(back.rows.size() == m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto &a = m.rows[i], &b = back.rows[i];
    CHECK(a.split == b.split);
    CHECK(a.index == b.index);
    CHECK(a.source == b.source);
    CHECK(a.syn == b.syn);
    CHECK(a.params.density == b.params.density);
    CHECK(a.params.source == b.params.source);
    CHECK(a.params.light_intensity == b.params.light_intensity);
    CHECK(a.params.seed == b.params.seed);
    CHECK(a.params.frame == b.params.frame);
  }
}

TEST_CASE("re-rendered pairs equal the stored files") {
  test::TempDir dir("ds");
  make(dir, 11, 11, 3, DensityTier::heavy);
  const Manifest m = read_manifest(dir / "data" / kManifestName);
  for (const auto& r : m.rows) {
    INFO(r.syn);
    CHECK(rerender_syn(m, r) == read_png(m.resolve(r.syn)));
    const Image clean = read_png(m.resolve(r.clean));
    const Image smoke = read_png(m.resolve(r.smoke));
    const SmokeLayer layer = render_smoke_frame(r.params, clean.height(), clean.width());
    CHECK((smoke.channel(0) == (layer * 255.0f).round() / 255.0f).all());
  }
}

TEST_CASE("same seed gives identical output") {
  test::TempDir dir("ds");
  make(dir, 5, 9, 42, DensityTier::random, "a");
  generate_dataset({dir / "clean", dir / "b", 9, 42, DensityTier::random});
  generate_dataset({dir / "clean", dir / "c", 9, 43, DensityTier::random});
  CHECK(slurp(dir / "a" / kManifestName) == slurp(dir / "b" / kManifestName));
  CHECK(slurp(dir / "a" / kManifestName) != slurp(dir / "c" / kManifestName));
  for (const auto& e : fs::recursive_directory_iterator(dir / "a"))
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(dir / "b" / fs::relative(e.path(), dir / "a")));
}

TEST_CASE("splits are disjoint over source images") {
  for (Index n : {3, 4, 7, 10, 11, 12, 23}) {
    test::TempDir dir("ds");
    const Manifest m = make(dir, n, 2 * n + 1, std::uint64_t(n));
    std::map<std::string, std::set<std::string>> split_of;
    for (const auto& r : m.rows) split_of[r.source].insert(r.split);
    CHECK(Index(split_of.size()) == n);
    for (const auto& [source, splits] : split_of) CHECK(splits.size() == 1);
    const auto counts = split_counts(n);
    std::map<std::string, Index> per;
    for (const auto& [source, splits] : split_of) ++per[*splits.begin()];
    CHECK(per["train"] == counts.train);
    CHECK(per["val"] == counts.val);
    CHECK(per["test"] == counts.test);
  }
}

TEST_CASE("errors") {
  test::TempDir dir("ds");
  fs::create_directories(dir / "empty");
  CHECK_THROWS_AS(generate_dataset({dir / "empty", dir / "o", 3, 1, DensityTier::random}), DatasetError);
  CHECK_THROWS_AS(generate_dataset({dir / "missing", dir / "o", 3, 1, DensityTier::random}), IoError);

  fs::create_directories(dir / "mixed");
  write_png(dir / "mixed/a.png", test::procedural_scene(12, 12, 1));
  std::ofstream(dir / "mixed/b.png") << "not a png";
  const Manifest m = generate_dataset({dir / "mixed", dir / "o", 2, 1, DensityTier::random});
  for (const auto& r : m.rows) CHECK(r.source == "a.png");

  fs::create_directories(dir / "small");
  write_png(dir / "small/a.png", test::procedural_scene(6, 12, 1));
  CHECK_THROWS_AS(generate_dataset({dir / "small", dir / "o2", 1, 1, DensityTier::random}), DatasetError);

  std::ofstream(dir / "bad.tsv") << "# header\ntrain\t0\ta.png\n";
  CHECK_THROWS_WITH_AS(read_manifest(dir / "bad.tsv"), doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_AS(read_manifest(dir / "nope.tsv"), IoError);
}
