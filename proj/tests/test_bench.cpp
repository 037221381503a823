#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include <json.hpp>

#include "pfan/bench.hpp"

using namespace pfan;

TEST_CASE("measured multiplies equal the analytic counts") {
  const auto recs = run_attention_bench({{8, 8}, {16, 16}, {12, 20}}, 16, 5, 1);
  REQUIRE(recs.size() == 6);
  for (const auto& r : recs) {
    CHECK(r.measured_multiplies == r.analytic_flops);
    CHECK(r.reps == 5);
    CHECK(r.min_ms <= r.median_ms);
    CHECK(r.median_ms <= r.max_ms);
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["analytic_flops"].get<std::int64_t>() == r.analytic_flops);
    CHECK(j["kind"] == (r.kind == AttentionKind::sea ? "sea" : "full"));
  }
  CHECK(recs[0].kind == AttentionKind::sea);
  CHECK(recs[1].kind == AttentionKind::full);
  CHECK(recs[4].height == 12);
  CHECK(recs[4].width == 20);
  const std::string table = bench_table(recs);
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);
}

TEST_CASE("scaling") {
  const auto s = attention_scaling({8, 16, 32, 64}, 16);
  CHECK(std::abs(s.full_slope - 4.0) <= 0.1);
  CHECK(s.sea_slope <= 3.1);
  CHECK(s.ratio_strictly_decreasing);
  for (std::size_t i = 1; i < s.ratio.size(); ++i) CHECK(s.ratio[i] < s.ratio[i - 1]);
  for (std::size_t i = 0; i < s.sides.size(); ++i) {
    CHECK(s.full_flops[i] == double(flop_count(AttentionKind::full, 16, 8, 8, s.sides[i], s.sides[i])));
    CHECK(s.ratio[i] == s.sea_flops[i] / s.full_flops[i]);
  }
}

TEST_CASE("loglog slope") {
  CHECK(loglog_slope({1, 2, 4, 8}, {3, 24, 192, 1536}) == doctest::Approx(3.0));
  CHECK(loglog_slope({2, 4}, {5, 5}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), ValueError);
  CHECK_THROWS_AS(loglog_slope({1, 2}, {0, 1}), ValueError);
}

TEST_CASE("guards") {
  CHECK_THROWS_AS(run_attention_bench({}, 16), ValueError);
  CHECK_THROWS_AS(run_attention_bench({{8, 8}}, 16, 4), ValueError);
  CHECK_THROWS_AS(run_attention_bench({{8, 8}}, 1), ValueError);
  CHECK_THROWS_AS(run_attention_bench({{8, 8}, {129, 128}}, 16), ResourceError);
}
