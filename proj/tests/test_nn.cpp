#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "pfan/arch.hpp"
#include "pfan/nn.hpp"
#include "support.hpp"

using namespace pfan;

TEST_CASE("init is deterministic and seed dependent") {
  const auto spec = LayerSpec::conv(8, 16, 3);
  const auto a = init_params<float>(spec, 7), b = init_params<float>(spec, 7), c = init_params<float>(spec, 8);
  REQUIRE(a.size() == 2);
  CHECK(a[0].name == "weight");
  CHECK(a[1].name == "bias");
  CHECK((a[0].tensor.data() == b[0].tensor.data()).all());
  CHECK_FALSE((a[0].tensor.data() == c[0].tensor.data()).all());
  CHECK((a[1].tensor.data() == 0.0f).all());
}

TEST_CASE("init statistics") {
  // 1000·100 = 1e5 weights.
  const auto p = init_params<double>(LayerSpec::linear(100, 1000, false), 3);
  const auto& w = p[0].tensor.data();
  REQUIRE(w.size() == 100000);
  const double mu = w.mean();
  const double sd = std::sqrt((w - mu).square().sum() / double(w.size() - 1));
  CHECK(std::abs(mu) < 0.02 * 0.05);
  CHECK(std::abs(sd - 0.02) < 0.02 * 0.05);

  const auto n = init_params<double>(LayerSpec::norm(5), 1);
  CHECK(n[0].name == "gamma");
  CHECK((n[0].tensor.data() == 1.0).all());
  CHECK((n[1].tensor.data() == 0.0).all());
}

TEST_CASE("parameter counts") {
  CHECK(LayerSpec::linear(64, 64).param_count() == 4160);
  CHECK(LayerSpec::conv(3, 64, 3).param_count() == 1792);
  const auto grouped = LayerSpec::conv(64, 64, 3, 64), dense = LayerSpec::conv(64, 64, 3, 1);
  CHECK(shape_numel(grouped.weight_shape()) == 576);
  CHECK(shape_numel(dense.weight_shape()) == 36864);
  CHECK(shape_numel(dense.weight_shape()) == 64 * shape_numel(grouped.weight_shape()));
  CHECK(grouped.param_count() == 576 + 64);
  for (Index g : {1, 2, 4, 8, 16, 32, 64})
    CHECK(shape_numel(LayerSpec::conv(64, 64, 7, g).weight_shape()) * g ==
          shape_numel(LayerSpec::conv(64, 64, 7, 1).weight_shape()));
  CHECK(LayerSpec::depthwise(32, 3).param_count() == 32 * 9 + 32);
  CHECK(LayerSpec::norm(16).param_count() == 32);

  ParamStore<float> empty;
  CHECK(count_params(empty) == 0);
  ParamStore<float> one;
  make_conv(one, "c", LayerSpec::conv(3, 64, 3), 1);
  CHECK(count_params(one) == 1792);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(LayerSpec::conv(6, 8, 3, 4).validate(), ValueError);
  CHECK_THROWS_AS(LayerSpec::conv(4, 4, 2).validate(), ValueError);
  CHECK_THROWS_AS(LayerSpec::conv(0, 4, 3).validate(), ValueError);
  CHECK_NOTHROW(LayerSpec::conv(8, 8, 3, 8).validate());
}

TEST_CASE("store bookkeeping") {
  ParamStore<float> s;
  make_linear(s, "a", LayerSpec::linear(3, 2), 1);
  make_norm(s, "n", 4);
  CHECK(s.size() == 4);
  CHECK(s.entries()[0].first == "a.weight");
  CHECK(s.entries()[3].first == "n.beta");
  CHECK(s.contains("n.gamma"));
  CHECK_THROWS_AS(s.add("a.weight", Tensor<float>({1})), ValueError);
  CHECK_THROWS_AS(s.at("missing"), ValueError);
  const auto before = s.checksum();
  s.at("a.bias").mutable_data()[0] += 1.0f;
  CHECK(s.checksum() != before);
}

TEST_CASE("weights round trip is bit exact") {
  test::TempDir dir("nn");
  const Generator<float> g(PfanConfig::desk(), 11);
  save_weights(g.params(), dir / "g.pfw");
  const auto loaded = load_weights<float>(dir / "g.pfw");
  CHECK(loaded.equals(g.params()));
  CHECK(loaded.checksum() == g.params().checksum());
  CHECK(count_params(loaded) == count_params(g.params()));

  const Generator<float> other(PfanConfig::desk(), 12);
  CHECK_FALSE(other.params().equals(g.params()));
  load_weights_into(other.params(), dir / "g.pfw");
  CHECK(other.params().equals(g.params()));

  // Double stores keep their width.
  ParamStore<double> d;
  make_linear(d, "l", LayerSpec::linear(3, 3), 5);
  save_weights(d, dir / "d.pfw");
  CHECK(load_weights<double>(dir / "d.pfw").equals(d));
  CHECK_THROWS_AS(load_weights<float>(dir / "d.pfw"), FormatError);
}

TEST_CASE("header layout") {
  test::TempDir dir("nn");
  ParamStore<float> s;
  s.add("w", Tensor<float>({2}, {1.0f, -2.0f}));
  save_weights(s, dir / "s.pfw");
  std::ifstream f(dir / "s.pfw", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  // magic 8, version 4, width 4, count 8, name len 4 + 1, rank 4, extent 8, data 8
  CHECK(bytes.size() == 8 + 4 + 4 + 8 + 4 + 1 + 4 + 8 + 8);
  CHECK(bytes.substr(0, 7) == "PFANWGT");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 4);
}

TEST_CASE("corrupt files are rejected without partial state") {
  test::TempDir dir("nn");
  const Generator<float> g(PfanConfig::desk(), 1);
  save_weights(g.params(), dir / "g.pfw");
  const auto full = std::filesystem::file_size(dir / "g.pfw");
  for (auto cut : {std::uintmax_t(3), std::uintmax_t(30), full / 2, full - 1}) {
    std::filesystem::copy_file(dir / "g.pfw", dir / "t.pfw", std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir / "t.pfw", cut);
    CHECK_THROWS_AS(load_weights<float>(dir / "t.pfw"), FormatError);
    const Generator<float> target(PfanConfig::desk(), 2);
    const auto sum = target.params().checksum();
    CHECK_THROWS_AS(load_weights_into(target.params(), dir / "t.pfw"), FormatError);
    CHECK(target.params().checksum() == sum);
  }
  {
    std::fstream f(dir / "g.pfw", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    const char v = 9;
    f.write(&v, 1);
  }
  CHECK_THROWS_WITH_AS(load_weights<float>(dir / "g.pfw"), doctest::Contains("version"), FormatError);
  CHECK_THROWS_AS(load_weights<float>(dir / "absent.pfw"), IoError);
}

TEST_CASE("topology mismatch names the parameter") {
  test::TempDir dir("nn");
  const Generator<float> small(PfanConfig::desk(), 1);
  save_weights(small.params(), dir / "g.pfw");
  PfanConfig wide = PfanConfig::desk();
  wide.base_channels = 32;
  wide.mbi_groups = 32;
  const Generator<float> big(wide, 1);
  const auto sum = big.params().checksum();
  CHECK_THROWS_WITH_AS(load_weights_into(big.params(), dir / "g.pfw"), doctest::Contains("'stem.weight'"),
                       ShapeError);
  CHECK(big.params().checksum() == sum);

  PfanConfig deeper = PfanConfig::desk();
  deeper.n_mbi = 3;
  const Generator<float> more(deeper, 1);
  CHECK_THROWS_WITH_AS(load_weights_into(more.params(), dir / "g.pfw"), doctest::Contains("mbi2"), ShapeError);
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}
