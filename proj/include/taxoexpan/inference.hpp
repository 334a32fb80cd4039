#pragma once

#include <span>
#include <string>
#include <vector>

#include "taxoexpan/egonet.hpp"
#include "taxoexpan/metrics.hpp"
#include "taxoexpan/model.hpp"

namespace taxoexpan {

// Query-independent anchor representations for every node of a taxonomy,
// computed once with dropout off.
struct AnchorCache {
  Matrix representations;  // row i = anchor i
  std::uint64_t model_fingerprint = 0;
  std::size_t taxonomy_size = 0;

  std::size_t size() const { return static_cast<std::size_t>(representations.rows()); }
};

// Hash of every parameter value; a cache is stale once this changes.
std::uint64_t ModelFingerprint(const Model& model);

AnchorCache BuildAnchorCache(const Taxonomy& taxonomy, const Model& model,
                             const EgonetOptions& egonet_options = {}, int threads = 1);

struct RankedAnchor {
  ConceptId anchor;
  double score;  // matcher output f(a, n)
  double logit;  // ordering key; monotone in score
};

struct RankResult {
  std::vector<RankedAnchor> ranking;  // best first, ties by ascending id
  std::vector<int> gold_ranks;        // 1-based, aligned with the gold list

  std::vector<ConceptId> Top(std::size_t k) const;
};

// Scores all cached anchors against one query. Throws DataError when the
// cache does not match the model, or a gold id is not a candidate.
RankResult RankAnchors(const Eigen::Ref<const Eigen::RowVectorXd>& query, const AnchorCache& cache,
                       const Model& model, std::span<const ConceptId> gold = {});

// Same ranking, recomputing every anchor egonet for this query.
RankResult RankAnchorsUncached(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                               const Taxonomy& taxonomy, const Model& model,
                               std::span<const ConceptId> gold = {},
                               const EgonetOptions& egonet_options = {});

std::vector<RankResult> RankQueries(std::span<const QueryConcept> queries, const AnchorCache& cache,
                                    const Model& model, int threads = 1);

std::vector<GoldRanks> CollectGoldRanks(std::span<const RankResult> results);

// Rule-based baselines over initial embeddings. Lower distance ranks first;
// RankedAnchor::score holds the negated distance.
double CosineDistance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      const Eigen::Ref<const Eigen::RowVectorXd>& b);
RankResult ClosestParent(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                         const Taxonomy& taxonomy, std::span<const ConceptId> gold = {});
RankResult ClosestNeighbor(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                           const Taxonomy& taxonomy, std::span<const ConceptId> gold = {});

struct NewConcept {
  std::string name;
  Vector embedding;
};

struct Placement {
  std::string query;
  std::vector<ConceptId> candidates;  // top-k anchors, best first
};

struct Expansion {
  Taxonomy taxonomy;  // existing edges plus one new edge per query
  std::vector<Placement> placements;
};

// Attaches every query under its top-1 anchor among the original nodes;
// new concepts are never candidates for each other.
Expansion Expand(const Taxonomy& taxonomy, std::span<const NewConcept> queries,
                 const AnchorCache& cache, const Model& model, std::size_t top_k = 1,
                 int threads = 1);

}  // namespace taxoexpan
