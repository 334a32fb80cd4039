#pragma once

#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoexpan/taxonomy.hpp"

namespace taxoexpan {

// Each element holds the 1-based ranks of one query's gold parents.
using GoldRanks = std::vector<int>;

// Average over all (query, gold parent) pairs pooled together.
double MeanRank(std::span<const GoldRanks> ranks);
// Fraction of queries with at least one gold parent ranked <= k.
double HitAtK(std::span<const GoldRanks> ranks, int k);
// (1/|C|) sum_c (1/|parent(c)|) sum_i 1 / ceil(R_ic / 10).
double ScaledMrr(std::span<const GoldRanks> ranks);

// 2 depth(LCA) / (depth(predicted) + depth(gold)), root depth 1.
double WuPalmer(const Taxonomy& taxonomy, ConceptId predicted, ConceptId gold);

struct RecallF1 {
  double recall;
  double f1;
};
RecallF1 RecallAndF1(std::size_t placed, std::size_t total, double mean_wup);

struct MetricsReport {
  double mean_rank = 0.0;
  double hit1 = 0.0;
  double hit3 = 0.0;
  double hit10 = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
  // Filled only in Wu&P mode.
  bool has_wup = false;
  double wup = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  nlohmann::json ToJson() const;
};

MetricsReport ComputeRankMetrics(std::span<const GoldRanks> ranks);

}  // namespace taxoexpan
