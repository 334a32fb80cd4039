#include <doctest.h>

#include "helpers.hpp"
#include "oracle.hpp"
#include "taxoexpan/metrics.hpp"

using namespace taxoexpan;
using testing::MakeTaxonomy;

TEST_CASE("mean rank examples") {
  const std::vector<GoldRanks> a{{2, 4}};
  CHECK(MeanRank(a) == 3.0);
  const std::vector<GoldRanks> b{{3}, {1, 5}};
  CHECK(MeanRank(b) == 3.0);
  const std::vector<GoldRanks> c{{1}, {1, 1}, {1}};
  CHECK(MeanRank(c) == 1.0);
  CHECK_THROWS_AS(MeanRank(std::vector<GoldRanks>{}), DataError);
  CHECK_THROWS_AS(MeanRank(std::vector<GoldRanks>{{0}}), DataError);
}

TEST_CASE("hit@k examples") {
  const std::vector<GoldRanks> a{{2}, {7}};
  CHECK(HitAtK(a, 3) == 0.5);
  CHECK(HitAtK(a, 7) == 1.0);
  const std::vector<GoldRanks> multi{{9, 2}};
  CHECK(HitAtK(multi, 3) == 1.0);
  CHECK(HitAtK(multi, 1) == 0.0);
  CHECK_THROWS_AS(HitAtK(a, 0), ConfigError);
}

TEST_CASE("scaled MRR examples") {
  CHECK(ScaledMrr(std::vector<GoldRanks>{{1}}) == 1.0);
  CHECK(ScaledMrr(std::vector<GoldRanks>{{1, 15}}) == 0.75);
  CHECK(ScaledMrr(std::vector<GoldRanks>{{10}}) == 1.0);
  CHECK(ScaledMrr(std::vector<GoldRanks>{{11}}) == 0.5);
  CHECK_THROWS_AS(ScaledMrr(std::vector<GoldRanks>{{}}), DataError);
}

TEST_CASE("metrics agree with brute-force oracles on 100 random fixtures") {
  RandomStream rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GoldRanks> ranks(1 + rng.Below(20));
    for (auto& q : ranks) {
      q.resize(1 + rng.Below(3));
      for (int& r : q) r = 1 + static_cast<int>(rng.Below(60));
    }
    CHECK(MeanRank(ranks) == doctest::Approx(oracle::MeanRank(ranks)).epsilon(1e-14));
    for (int k : {1, 3, 10}) CHECK(HitAtK(ranks, k) == doctest::Approx(oracle::HitAtK(ranks, k)));
    CHECK(ScaledMrr(ranks) == doctest::Approx(oracle::ScaledMrr(ranks)).epsilon(1e-14));
    const MetricsReport m = ComputeRankMetrics(ranks);
    CHECK(m.queries == ranks.size());
    CHECK(m.mean_rank >= 1.0);
    CHECK(m.mrr > 0.0);
    CHECK(m.mrr <= 1.0);
    CHECK(m.hit1 <= m.hit3);
    CHECK(m.hit3 <= m.hit10);
  }
}

TEST_CASE("report JSON") {
  const MetricsReport m = ComputeRankMetrics(std::vector<GoldRanks>{{1}, {4}});
  const auto j = m.ToJson();
  CHECK(j["MR"] == 2.5);
  CHECK(j["Hit@1"] == 0.5);
  CHECK(j["Hit@3"] == 0.5);
  CHECK(j["MRR"] == 1.0);
  CHECK_FALSE(j.contains("Wu&P"));
}

TEST_CASE("Wu & Palmer examples") {
  // chain 0 -> 1 -> 2 -> 3 -> 4, plus a side branch 1 -> 5
  const Taxonomy t = MakeTaxonomy(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 5}});
  CHECK(WuPalmer(t, 4, 4) == 1.0);
  CHECK(t.Depth(4) == 5);
  CHECK(WuPalmer(t, 2, 3) == doctest::Approx(6.0 / 7.0));
  CHECK(WuPalmer(t, 0, 4) == doctest::Approx(2.0 / 6.0));
  CHECK(WuPalmer(t, 5, 3) == doctest::Approx(4.0 / 7.0));
  CHECK(WuPalmer(t, 5, 3) == WuPalmer(t, 3, 5));
  CHECK_THROWS(WuPalmer(t, 9, 1));
}

TEST_CASE("Wu & Palmer under a virtual root") {
  const Taxonomy t = MakeTaxonomy(4, {{0, 1}, {2, 3}});
  const double w = WuPalmer(t, 1, 3);
  CHECK(w > 0.0);
  CHECK(w < 1.0);
}

TEST_CASE("recall and F1") {
  const RecallF1 a = RecallAndF1(10, 10, 0.543);
  CHECK(a.recall == 1.0);
  CHECK(a.f1 == doctest::Approx(0.704).epsilon(5e-4));
  CHECK(RecallAndF1(0, 10, 0.5).f1 == 0.0);
  CHECK(RecallAndF1(5, 10, 0.5).f1 == doctest::Approx(0.5));
  CHECK_THROWS_AS(RecallAndF1(0, 0, 0.5), DataError);
  CHECK_THROWS_AS(RecallAndF1(3, 2, 0.5), DataError);
}
