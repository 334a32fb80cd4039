#pragma once

#include <cstdint>
#include <vector>

#include "taxoexpan/taxonomy.hpp"

namespace taxoexpan {

// Tree-shaped benchmark where a leaf's embedding sits near a latent topic of
// its parent while internal nodes are embedded through a fixed random
// rotation of their topic. A leaf therefore resembles its siblings rather
// than its parent, so placement has to be read off an anchor's children.
struct SyntheticOptions {
  std::size_t num_nodes = 500;
  int dim = 64;
  std::size_t top_level = 8;     // children of the root
  std::size_t second_level = 40;  // internal nodes under the top level
  double topic_noise = 0.6;       // spread of child topics around the parent
  double leaf_noise = 0.35;       // spread of leaves around the parent topic
  std::uint64_t seed = 0;
};

Taxonomy MakeSyntheticTaxonomy(const SyntheticOptions& options);

struct PlantedEdge {
  ConceptId leaf;
  ConceptId true_parent;
  ConceptId planted_parent;
};

// Rewires `count` distinct leaves to a random internal node other than their
// parent; ids are unchanged.
Taxonomy PlantCorruptions(const Taxonomy& taxonomy, std::size_t count, std::uint64_t seed,
                          std::vector<PlantedEdge>* planted);

// Label noise: re-points round(fraction * |E|) random edges to a random new
// parent that keeps the graph acyclic and does not duplicate an edge.
Taxonomy InjectEdgeNoise(const Taxonomy& taxonomy, double fraction, std::uint64_t seed);

}  // namespace taxoexpan
