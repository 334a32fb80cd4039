#include "taxoexpan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>

#include "taxoexpan/random.hpp"

namespace taxoexpan {

namespace {

Vector Gaussian(RandomStream& rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.Normal();
  return v;
}

Vector Unit(const Vector& v) {
  const double n = v.norm();
  return n > 0.0 ? Vector(v / n) : v;
}

}  // namespace

Taxonomy MakeSyntheticTaxonomy(const SyntheticOptions& options) {
  const std::size_t internal = 1 + options.top_level + options.second_level;
  if (options.dim < 2 || options.top_level == 0 || options.num_nodes <= internal) {
    throw ConfigError("synthetic taxonomy needs dim >= 2, a top level, and room for leaves");
  }
  RandomStream rng = RandomStream(options.seed).Split("synthetic");
  RandomStream topic_rng = rng.Split("topics");
  RandomStream shape_rng = rng.Split("shape");
  RandomStream leaf_rng = rng.Split("leaves");

  Matrix gaussian(options.dim, options.dim);
  RandomStream rot_rng = rng.Split("rotation");
  for (int r = 0; r < options.dim; ++r) {
    for (int c = 0; c < options.dim; ++c) gaussian(r, c) = rot_rng.Normal();
  }
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(gaussian).householderQ();

  const std::size_t n = options.num_nodes;
  std::vector<Vector> topic(n);
  std::vector<Edge> edges;
  std::vector<ConceptId> internals;
  topic[0] = Unit(Gaussian(topic_rng, options.dim));
  internals.push_back(0);
  std::size_t next = 1;
  auto add_child = [&](ConceptId parent) {
    const auto id = static_cast<ConceptId>(next++);
    topic[id] = Unit(topic[parent] + options.topic_noise * Unit(Gaussian(topic_rng, options.dim)));
    edges.push_back({parent, id});
    return id;
  };
  std::vector<ConceptId> level1;
  for (std::size_t i = 0; i < options.top_level; ++i) level1.push_back(add_child(0));
  internals.insert(internals.end(), level1.begin(), level1.end());
  std::vector<ConceptId> level2;
  for (std::size_t i = 0; i < options.second_level; ++i) {
    level2.push_back(add_child(level1[i % level1.size()]));
  }
  internals.insert(internals.end(), level2.begin(), level2.end());
  const std::vector<ConceptId>& leaf_parents = level2.empty() ? level1 : level2;

  Matrix embeddings(static_cast<Eigen::Index>(n), options.dim);
  for (ConceptId id : internals) embeddings.row(id) = (rotation * topic[id]).transpose();
  std::size_t k = 0;
  while (next < n) {
    // Every leaf parent gets at least one leaf, the rest are spread randomly.
    const ConceptId parent =
        k < leaf_parents.size() ? leaf_parents[k] : leaf_parents[shape_rng.Below(leaf_parents.size())];
    ++k;
    const auto id = static_cast<ConceptId>(next++);
    edges.push_back({parent, id});
    embeddings.row(id) =
        Unit(topic[parent] + options.leaf_noise * Unit(Gaussian(leaf_rng, options.dim))).transpose();
  }

  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = "c" + std::to_string(i);
  return Taxonomy(std::move(names), std::move(embeddings), std::move(edges));
}

Taxonomy PlantCorruptions(const Taxonomy& taxonomy, std::size_t count, std::uint64_t seed,
                          std::vector<PlantedEdge>* planted) {
  std::vector<ConceptId> leaves;
  for (ConceptId l : taxonomy.leaves()) {
    if (taxonomy.parents(l).size() == 1) leaves.push_back(l);
  }
  std::vector<ConceptId> internals;
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    if (!taxonomy.is_leaf(static_cast<ConceptId>(i))) internals.push_back(static_cast<ConceptId>(i));
  }
  if (leaves.size() < count || internals.size() < 2) {
    throw DataError("not enough single-parent leaves to plant corruptions");
  }
  RandomStream rng = RandomStream(seed).Split("plant");
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(leaves[i], leaves[i + rng.Below(leaves.size() - i)]);
  }
  std::vector<PlantedEdge> out;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < count; ++i) {
    const ConceptId leaf = leaves[i];
    const ConceptId parent = taxonomy.parents(leaf).front();
    ConceptId fake = parent;
    while (fake == parent) fake = internals[rng.Below(internals.size())];
    out.push_back({leaf, parent, fake});
  }
  for (const Edge& e : taxonomy.edges()) {
    auto it = std::find_if(out.begin(), out.end(), [&](const PlantedEdge& p) { return p.leaf == e.child; });
    edges.push_back(it == out.end() ? e : Edge{it->planted_parent, e.child});
  }
  if (planted) *planted = out;
  return Taxonomy(taxonomy.names(), taxonomy.embeddings(), std::move(edges));
}

Taxonomy InjectEdgeNoise(const Taxonomy& taxonomy, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("noise fraction must lie in [0,1]");
  std::vector<Edge> edges = taxonomy.edges();
  const auto count = static_cast<std::size_t>(std::floor(fraction * edges.size() + 0.5));
  RandomStream rng = RandomStream(seed).Split("edge_noise");
  std::vector<std::size_t> order(edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(order[i], order[i + rng.Below(order.size() - i)]);
  for (std::size_t i = 0; i < count; ++i) {
    Edge& e = edges[order[i]];
    // Earlier rewires can add paths below e.child, so check the current graph.
    const Taxonomy current(taxonomy.names(), taxonomy.embeddings(), edges);
    const auto below = current.Descendants(e.child);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto p = static_cast<ConceptId>(rng.Below(taxonomy.size()));
      if (p == e.child || p == e.parent || current.has_edge(p, e.child) ||
          std::binary_search(below.begin(), below.end(), p)) {
        continue;
      }
      e.parent = p;
      break;
    }
  }
  return Taxonomy(taxonomy.names(), taxonomy.embeddings(), std::move(edges));
}

}  // namespace taxoexpan
