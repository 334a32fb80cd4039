#include "taxoexpan/metrics.hpp"

namespace taxoexpan {

double MeanRank(std::span<const GoldRanks> ranks) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& q : ranks) {
    for (int r : q) {
      if (r < 1) throw DataError("ranks must be >= 1");
      total += r;
      ++count;
    }
  }
  if (count == 0) throw DataError("mean rank of an empty result set");
  return total / static_cast<double>(count);
}

double HitAtK(std::span<const GoldRanks> ranks, int k) {
  if (k < 1) throw ConfigError("hit@k needs k >= 1");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : ranks) {
    for (int r : q) {
      if (r <= k) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ScaledMrr(std::span<const GoldRanks> ranks) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : ranks) {
    if (q.empty()) throw DataError("query without gold parents");
    double per_query = 0.0;
    for (int r : q) {
      if (r < 1) throw DataError("ranks must be >= 1");
      per_query += 1.0 / static_cast<double>((r + 9) / 10);
    }
    total += per_query / static_cast<double>(q.size());
  }
  return total / static_cast<double>(ranks.size());
}

double WuPalmer(const Taxonomy& taxonomy, ConceptId predicted, ConceptId gold) {
  const ConceptId lca = taxonomy.Lca(predicted, gold);
  return 2.0 * taxonomy.DepthOrVirtual(lca) /
         static_cast<double>(taxonomy.Depth(predicted) + taxonomy.Depth(gold));
}

RecallF1 RecallAndF1(std::size_t placed, std::size_t total, double mean_wup) {
  if (total == 0) throw DataError("recall over zero concepts");
  if (placed > total) throw DataError("placed exceeds total");
  const double recall = static_cast<double>(placed) / static_cast<double>(total);
  const double denom = mean_wup + recall;
  return {recall, denom > 0.0 ? 2.0 * mean_wup * recall / denom : 0.0};
}

MetricsReport ComputeRankMetrics(std::span<const GoldRanks> ranks) {
  MetricsReport m;
  m.queries = ranks.size();
  m.mean_rank = MeanRank(ranks);
  m.hit1 = HitAtK(ranks, 1);
  m.hit3 = HitAtK(ranks, 3);
  m.hit10 = HitAtK(ranks, 10);
  m.mrr = ScaledMrr(ranks);
  return m;
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json j{{"queries", queries}, {"MR", mean_rank}, {"Hit@1", hit1},
                   {"Hit@3", hit3},      {"Hit@10", hit10},  {"MRR", mrr}};
  if (has_wup) {
    j["Wu&P"] = wup;
    j["Recall"] = recall;
    j["F1"] = f1;
  }
  return j;
}

}  // namespace taxoexpan
