#include "taxoexpan/egonet.hpp"

#include <algorithm>
#include <cmath>

#include "taxoexpan/random.hpp"

namespace taxoexpan {

Egonet ExtractEgonet(const Taxonomy& taxonomy, ConceptId anchor, const EgonetOptions& options,
                     ConceptId exclude) {
  Egonet ego;
  ego.anchor = anchor;
  const auto parents = taxonomy.parents(anchor);  // validates the id
  std::vector<ConceptId> children;
  for (ConceptId c : taxonomy.children(anchor)) {
    if (c != exclude) children.push_back(c);
  }
  ego.nodes.push_back({anchor, Position::kAnchor});
  for (ConceptId p : parents) ego.nodes.push_back({p, Position::kGrandParent});

  if (children.size() <= options.max_siblings) {
    for (ConceptId c : children) ego.nodes.push_back({c, Position::kSibling});
  } else {
    // Partial Fisher-Yates on a stream keyed by the anchor so that an anchor
    // always gets the same sample within a run.
    std::vector<ConceptId> pool = std::move(children);
    RandomStream rng = RandomStream(options.seed).Split("siblings").Split(
        static_cast<std::uint64_t>(anchor));
    for (std::size_t i = 0; i < options.max_siblings; ++i) {
      std::swap(pool[i], pool[i + rng.Below(pool.size() - i)]);
    }
    pool.resize(options.max_siblings);
    std::sort(pool.begin(), pool.end());
    for (ConceptId c : pool) ego.nodes.push_back({c, Position::kSibling});
  }
  for (int i = 1; i < static_cast<int>(ego.nodes.size()); ++i) ego.edges.emplace_back(0, i);
  return ego;
}

EgonetBatch BatchEgonets(const Taxonomy& taxonomy, std::span<const Egonet> egonets) {
  EgonetBatch batch;
  batch.num_graphs = static_cast<int>(egonets.size());
  std::size_t total = 0;
  for (const Egonet& e : egonets) total += e.nodes.size();

  batch.features.resize(static_cast<Eigen::Index>(total), taxonomy.dimension());
  batch.positions.reserve(total);
  batch.graph_of_node.reserve(total);
  batch.concepts.reserve(total);
  batch.graph_size.reserve(egonets.size());
  batch.position_count.assign(egonets.size() * kNumPositions, 0);

  std::vector<int> degree(total, 1);  // self-loop
  std::vector<std::pair<int, int>> undirected;
  int offset = 0;
  for (int g = 0; g < batch.num_graphs; ++g) {
    const Egonet& e = egonets[g];
    for (const EgonetNode& n : e.nodes) {
      const auto row = static_cast<Eigen::Index>(batch.positions.size());
      batch.features.row(row) = taxonomy.embedding(n.concept_id);
      batch.positions.push_back(static_cast<int>(n.position));
      batch.graph_of_node.push_back(g);
      batch.concepts.push_back(n.concept_id);
      ++batch.position_count[static_cast<std::size_t>(g) * kNumPositions +
                             static_cast<int>(n.position)];
    }
    for (auto [a, b] : e.edges) {
      undirected.emplace_back(offset + a, offset + b);
      ++degree[offset + a];
      ++degree[offset + b];
    }
    batch.graph_size.push_back(static_cast<int>(e.nodes.size()));
    offset += static_cast<int>(e.nodes.size());
  }

  const std::size_t messages = total + 2 * undirected.size();
  batch.message_src.reserve(messages);
  batch.message_dst.reserve(messages);
  for (std::size_t u = 0; u < total; ++u) {
    batch.message_src.push_back(static_cast<int>(u));
    batch.message_dst.push_back(static_cast<int>(u));
  }
  for (auto [a, b] : undirected) {
    batch.message_src.push_back(a);
    batch.message_dst.push_back(b);
    batch.message_src.push_back(b);
    batch.message_dst.push_back(a);
  }
  batch.gcn_norm.resize(static_cast<Eigen::Index>(messages), 1);
  for (std::size_t m = 0; m < messages; ++m) {
    batch.gcn_norm(static_cast<Eigen::Index>(m), 0) =
        1.0 / std::sqrt(static_cast<double>(degree[batch.message_dst[m]]) *
                        static_cast<double>(degree[batch.message_src[m]]));
  }
  return batch;
}

EgonetBatch BatchAnchors(const Taxonomy& taxonomy, std::span<const ConceptId> anchors,
                         const EgonetOptions& options) {
  std::vector<Egonet> egonets;
  egonets.reserve(anchors.size());
  for (ConceptId a : anchors) egonets.push_back(ExtractEgonet(taxonomy, a, options));
  return BatchEgonets(taxonomy, egonets);
}

EgonetBatch BatchAnchors(const Taxonomy& taxonomy, std::span<const ConceptId> anchors,
                         std::span<const ConceptId> excluded, const EgonetOptions& options) {
  if (excluded.size() != anchors.size()) throw ConfigError("one excluded id per anchor required");
  std::vector<Egonet> egonets;
  egonets.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    egonets.push_back(ExtractEgonet(taxonomy, anchors[i], options, excluded[i]));
  }
  return BatchEgonets(taxonomy, egonets);
}

}  // namespace taxoexpan
