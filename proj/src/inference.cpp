#include "taxoexpan/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_set>

#include "taxoexpan/parallel.hpp"

namespace taxoexpan {

namespace {

constexpr std::size_t kCacheChunk = 1024;

// Sort best-first by key, ties by ascending id, then resolve gold ranks.
RankResult Finish(std::vector<RankedAnchor> ranking, std::span<const ConceptId> gold) {
  std::sort(ranking.begin(), ranking.end(), [](const RankedAnchor& a, const RankedAnchor& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    return a.anchor < b.anchor;
  });
  RankResult result;
  result.gold_ranks.reserve(gold.size());
  if (!gold.empty()) {
    std::vector<int> position(ranking.size(), 0);
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (ranking[i].anchor >= 0 && static_cast<std::size_t>(ranking[i].anchor) < position.size()) {
        position[ranking[i].anchor] = static_cast<int>(i) + 1;
      }
    }
    for (ConceptId g : gold) {
      if (g < 0 || static_cast<std::size_t>(g) >= position.size() || position[g] == 0) {
        throw DataError("gold parent " + std::to_string(g) + " is not among the candidates");
      }
      result.gold_ranks.push_back(position[g]);
    }
  }
  result.ranking = std::move(ranking);
  return result;
}

void CheckNaN(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (!logits.allFinite()) throw NumericalError("non-finite matching score");
}

// Logits of every row of `anchors` against one query, using plain Eigen.
Eigen::VectorXd BatchLogits(const Matrix& anchors, const Eigen::Ref<const Eigen::RowVectorXd>& query,
                            const Model& model) {
  const ModelConfig& cfg = model.config();
  if (query.size() != model.feature_dim()) throw DataError("query dimension does not match model");
  if (cfg.matcher == MatcherKind::kLbm) {
    const Eigen::VectorXd projected = model.param("match.weight").value * query.transpose();
    return anchors * projected;
  }
  const Matrix& w1 = model.param("match.hidden.weight").value;
  const Eigen::Index d2 = anchors.cols();
  const Eigen::RowVectorXd query_part =
      query * w1.bottomRows(w1.rows() - d2) + model.param("match.hidden.bias").value.row(0);
  Matrix hidden = (anchors * w1.topRows(d2)).rowwise() + query_part;
  const double slope = cfg.leaky_slope;
  hidden = hidden.unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
  const Eigen::VectorXd out = hidden * model.param("match.out.weight").value.col(0);
  return out.array() + model.param("match.out.bias").value(0, 0);
}

double ScoreFromLogit(const Model& model, double logit) {
  return model.config().matcher == MatcherKind::kLbm ? std::exp(logit)
                                                     : diff::StableSigmoid(logit);
}

}  // namespace

std::vector<ConceptId> RankResult::Top(std::size_t k) const {
  std::vector<ConceptId> out;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) out.push_back(ranking[i].anchor);
  return out;
}

std::uint64_t ModelFingerprint(const Model& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, p] : model.params()) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, p.value.data() + i, sizeof bits);
      h ^= bits;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

AnchorCache BuildAnchorCache(const Taxonomy& taxonomy, const Model& model,
                             const EgonetOptions& egonet_options, int threads) {
  AnchorCache cache;
  cache.taxonomy_size = taxonomy.size();
  cache.model_fingerprint = ModelFingerprint(model);
  cache.representations.resize(static_cast<Eigen::Index>(taxonomy.size()),
                               model.config().GraphDim());
  const std::size_t chunks = (taxonomy.size() + kCacheChunk - 1) / kCacheChunk;
  ParallelFor(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kCacheChunk;
    const std::size_t end = std::min(taxonomy.size(), begin + kCacheChunk);
    std::vector<ConceptId> anchors(end - begin);
    std::iota(anchors.begin(), anchors.end(), static_cast<ConceptId>(begin));
    const EgonetBatch batch = BatchAnchors(taxonomy, anchors, egonet_options);
    cache.representations.middleRows(static_cast<Eigen::Index>(begin),
                                     static_cast<Eigen::Index>(end - begin)) =
        model.EncodeAnchorsValue(batch);
  });
  return cache;
}

RankResult RankAnchors(const Eigen::Ref<const Eigen::RowVectorXd>& query, const AnchorCache& cache,
                       const Model& model, std::span<const ConceptId> gold) {
  if (cache.model_fingerprint != ModelFingerprint(model)) {
    throw DataError("stale anchor cache: model parameters changed");
  }
  const Eigen::VectorXd logits = BatchLogits(cache.representations, query, model);
  CheckNaN(logits);
  std::vector<RankedAnchor> ranking(cache.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const double l = logits[static_cast<Eigen::Index>(i)];
    ranking[i] = {static_cast<ConceptId>(i), ScoreFromLogit(model, l), l};
  }
  return Finish(std::move(ranking), gold);
}

RankResult RankAnchorsUncached(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                               const Taxonomy& taxonomy, const Model& model,
                               std::span<const ConceptId> gold,
                               const EgonetOptions& egonet_options) {
  std::vector<RankedAnchor> ranking;
  ranking.reserve(taxonomy.size());
  for (std::size_t begin = 0; begin < taxonomy.size(); begin += kCacheChunk) {
    const std::size_t end = std::min(taxonomy.size(), begin + kCacheChunk);
    std::vector<ConceptId> anchors(end - begin);
    std::iota(anchors.begin(), anchors.end(), static_cast<ConceptId>(begin));
    const EgonetBatch batch = BatchAnchors(taxonomy, anchors, egonet_options);
    diff::Tape tape;
    const diff::Var reps = model.EncodeAnchors(tape, batch, false, nullptr);
    Matrix queries = query.replicate(static_cast<Eigen::Index>(anchors.size()), 1);
    const diff::Var logits =
        model.MatchLogits(tape, reps, tape.Constant(std::move(queries)), false);
    const Matrix& values = tape.value(logits);
    CheckNaN(values.col(0));
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const double l = values(static_cast<Eigen::Index>(i), 0);
      ranking.push_back({anchors[i], ScoreFromLogit(model, l), l});
    }
  }
  return Finish(std::move(ranking), gold);
}

std::vector<RankResult> RankQueries(std::span<const QueryConcept> queries, const AnchorCache& cache,
                                    const Model& model, int threads) {
  if (cache.model_fingerprint != ModelFingerprint(model)) {
    throw DataError("stale anchor cache: model parameters changed");
  }
  std::vector<RankResult> results(queries.size());
  ParallelFor(queries.size(), threads, [&](std::size_t i) {
    const Eigen::VectorXd logits =
        BatchLogits(cache.representations, queries[i].embedding.transpose(), model);
    CheckNaN(logits);
    std::vector<RankedAnchor> ranking(cache.size());
    for (std::size_t a = 0; a < ranking.size(); ++a) {
      const double l = logits[static_cast<Eigen::Index>(a)];
      ranking[a] = {static_cast<ConceptId>(a), ScoreFromLogit(model, l), l};
    }
    results[i] = Finish(std::move(ranking), queries[i].gold_parents);
  });
  return results;
}

std::vector<GoldRanks> CollectGoldRanks(std::span<const RankResult> results) {
  std::vector<GoldRanks> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.gold_ranks);
  return out;
}

// ---------------------------------------------------------------- baselines

double CosineDistance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

RankResult ClosestParent(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                         const Taxonomy& taxonomy, std::span<const ConceptId> gold) {
  std::vector<RankedAnchor> ranking(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const auto id = static_cast<ConceptId>(i);
    const double d = CosineDistance(taxonomy.embedding(id), query);
    ranking[i] = {id, -d, -d};
  }
  return Finish(std::move(ranking), gold);
}

RankResult ClosestNeighbor(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                           const Taxonomy& taxonomy, std::span<const ConceptId> gold) {
  std::vector<double> own(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    own[i] = CosineDistance(taxonomy.embedding(static_cast<ConceptId>(i)), query);
  }
  std::vector<RankedAnchor> ranking(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const auto id = static_cast<ConceptId>(i);
    double children_term = 0.0;
    const auto children = taxonomy.children(id);
    if (!children.empty()) {
      for (ConceptId c : children) children_term += own[c];
      children_term /= static_cast<double>(children.size());
    }
    const double d = own[i] + children_term;
    ranking[i] = {id, -d, -d};
  }
  return Finish(std::move(ranking), gold);
}

// ------------------------------------------------------------------- expand

Expansion Expand(const Taxonomy& taxonomy, std::span<const NewConcept> queries,
                 const AnchorCache& cache, const Model& model, std::size_t top_k, int threads) {
  if (top_k == 0) throw ConfigError("top_k must be at least 1");
  if (cache.taxonomy_size != taxonomy.size()) {
    throw DataError("stale anchor cache: taxonomy changed");
  }
  if (taxonomy.size() == 0 && !queries.empty()) {
    throw DataError("cannot place concepts into an empty taxonomy");
  }
  std::unordered_set<std::string> seen;
  for (const auto& q : queries) {
    if (taxonomy.find(q.name)) throw DataError("new concept '" + q.name + "' already exists");
    if (!seen.insert(q.name).second) throw DataError("duplicate new concept '" + q.name + "'");
  }
  std::vector<Placement> placements(queries.size());
  std::vector<QueryConcept> as_queries;
  as_queries.reserve(queries.size());
  for (const auto& q : queries) as_queries.push_back({q.name, q.embedding, {}});
  const auto results = RankQueries(as_queries, cache, model, threads);

  std::vector<std::string> names;
  Matrix embeddings(static_cast<Eigen::Index>(queries.size()), taxonomy.dimension());
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    placements[i] = {queries[i].name, results[i].Top(top_k)};
    names.push_back(queries[i].name);
    embeddings.row(static_cast<Eigen::Index>(i)) = queries[i].embedding.transpose();
    edges.push_back({placements[i].candidates.front(),
                     static_cast<ConceptId>(taxonomy.size() + i)});
  }
  return {taxonomy.Extend(std::move(names), embeddings, std::move(edges)), std::move(placements)};
}

}  // namespace taxoexpan
