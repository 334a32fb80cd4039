#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "taxoexpan/diff.hpp"
#include "taxoexpan/taxonomy.hpp"

namespace taxoexpan {

// Relative position of an egonet node with respect to a query placed under
// the anchor.
enum class Position : std::uint8_t { kGrandParent = 0, kAnchor = 1, kSibling = 2 };
inline constexpr int kNumPositions = 3;

struct EgonetNode {
  ConceptId concept_id;
  Position position;
};

// One-hop neighbourhood of an anchor: the anchor, its parents (the query's
// grand-parents) and its children (the query's siblings). Edges join the
// anchor to every other node; self-loops are implicit.
struct Egonet {
  ConceptId anchor = 0;
  std::vector<EgonetNode> nodes;  // anchor first, then parents, then children
  // Local node indices of undirected edges (excluding self-loops).
  std::vector<std::pair<int, int>> edges;
};

struct EgonetOptions {
  // Anchors with more children keep a uniform subsample of this many.
  std::size_t max_siblings = 1000;
  std::uint64_t seed = 0;
};

// `exclude` (if a child of the anchor) is left out of the sibling set; used
// during training so a query never appears in its own positive egonet.
Egonet ExtractEgonet(const Taxonomy& taxonomy, ConceptId anchor, const EgonetOptions& options = {},
                     ConceptId exclude = -1);

// Disjoint union of egonets, flattened for message passing.
struct EgonetBatch {
  int num_graphs = 0;
  Matrix features;                   // node x D initial features
  std::vector<int> positions;        // node -> Position as int
  diff::Segments graph_of_node;      // node -> egonet index
  std::vector<ConceptId> concepts;   // node -> concept id
  // Directed messages src -> dst covering every neighbour pair both ways and
  // one self-loop per node.
  std::vector<int> message_src;
  diff::Segments message_dst;
  Matrix gcn_norm;                   // messages x 1: 1/sqrt(|N~(dst)| |N~(src)|)
  std::vector<int> graph_size;       // nodes per egonet
  // Nodes per (egonet, position), row-major num_graphs x kNumPositions.
  std::vector<int> position_count;

  std::size_t num_nodes() const { return positions.size(); }
};

// Features are read from the taxonomy's embedding rows.
EgonetBatch BatchEgonets(const Taxonomy& taxonomy, std::span<const Egonet> egonets);
// Convenience: extract then batch.
EgonetBatch BatchAnchors(const Taxonomy& taxonomy, std::span<const ConceptId> anchors,
                         const EgonetOptions& options = {});
// Same with a per-anchor excluded child (-1 for none).
EgonetBatch BatchAnchors(const Taxonomy& taxonomy, std::span<const ConceptId> anchors,
                         std::span<const ConceptId> excluded, const EgonetOptions& options = {});

}  // namespace taxoexpan
