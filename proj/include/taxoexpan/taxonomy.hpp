#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taxoexpan/types.hpp"

namespace taxoexpan {

// Returned by Lca() when two nodes of a multi-root taxonomy only meet at the
// implicit virtual root.
inline constexpr ConceptId kVirtualRoot = -1;

struct Edge {
  ConceptId parent;
  ConceptId child;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Word-vector table keyed by concept surface name.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dimension = 0) : dimension_(dimension) {}

  int dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& name) const { return vectors_.contains(name); }
  const Vector& at(const std::string& name) const;
  void Insert(std::string name, Vector vec);

 private:
  int dimension_;
  std::unordered_map<std::string, Vector> vectors_;
};

// Reads word2vec text format: a "count dim" header, then "name v1 ... vD".
// Names may contain spaces; the last D tokens of a line are the values.
EmbeddingTable LoadEmbeddings(const std::filesystem::path& path);
void WriteEmbeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     std::span<const std::string> order);

// Immutable DAG of concepts. Ids are dense in [0, size()). Edges point from
// parent (hypernym) to child (hyponym).
class Taxonomy {
 public:
  Taxonomy() = default;

  // Validates and builds. Throws DataError on a cycle, a dangling endpoint,
  // duplicate names, or an embedding row count that does not match names.
  Taxonomy(std::vector<std::string> names, Matrix embeddings, std::vector<Edge> edges);

  std::size_t size() const { return names_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  int dimension() const { return static_cast<int>(embeddings_.cols()); }

  const std::string& name(ConceptId id) const;
  std::optional<ConceptId> find(const std::string& name) const;
  auto embedding(ConceptId id) const { return embeddings_.row(CheckId(id)); }
  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const ConceptId> parents(ConceptId id) const { return parents_[CheckId(id)]; }
  std::span<const ConceptId> children(ConceptId id) const { return children_[CheckId(id)]; }
  bool is_leaf(ConceptId id) const { return children(id).empty(); }
  bool has_edge(ConceptId parent, ConceptId child) const;

  std::vector<ConceptId> leaves() const;
  std::vector<ConceptId> roots() const;

  // All nodes reachable from id, excluding id, sorted ascending.
  std::vector<ConceptId> Descendants(ConceptId id) const;
  // All nodes from which id is reachable, excluding id, sorted ascending.
  std::vector<ConceptId> Ancestors(ConceptId id) const;

  // Shortest root-to-node path length with the root at depth 1. With several
  // parentless nodes an implicit virtual root sits at depth 1 above them.
  int Depth(ConceptId id) const;
  bool has_virtual_root() const { return roots_count_ > 1; }

  // Deepest common ancestor-or-self, ties by smallest id. May return
  // kVirtualRoot for multi-root taxonomies.
  ConceptId Lca(ConceptId a, ConceptId b) const;
  int DepthOrVirtual(ConceptId id) const { return id == kVirtualRoot ? 1 : Depth(id); }

  // Copy-and-extend: appends new concepts and edges (which may reference both
  // old and new ids; new ids start at size()).
  Taxonomy Extend(std::vector<std::string> new_names, const Matrix& new_embeddings,
                  std::vector<Edge> new_edges) const;

 private:
  std::size_t CheckId(ConceptId id) const;

  std::vector<std::string> names_;
  std::unordered_map<std::string, ConceptId> index_;
  Matrix embeddings_;
  std::vector<Edge> edges_;
  std::vector<std::vector<ConceptId>> parents_;
  std::vector<std::vector<ConceptId>> children_;
  std::vector<int> depth_;
  std::size_t roots_count_ = 0;
};

// Builds a taxonomy from a parent<TAB>child edge file; every named concept
// must have an embedding.
Taxonomy LoadTaxonomy(const std::filesystem::path& edge_file, const EmbeddingTable& embeddings);
Taxonomy LoadTaxonomy(const std::filesystem::path& edge_file,
                      const std::filesystem::path& embedding_file);
Taxonomy BuildTaxonomy(const std::vector<std::pair<std::string, std::string>>& named_edges,
                       const EmbeddingTable& embeddings,
                       const std::vector<std::string>& isolated = {});
void WriteEdges(const std::filesystem::path& path, const Taxonomy& taxonomy);

struct QueryConcept {
  std::string name;
  Vector embedding;
  std::vector<ConceptId> gold_parents;  // ids in the existing taxonomy
};

struct TaxonomySplit {
  Taxonomy existing;
  std::vector<QueryConcept> validation;
  std::vector<QueryConcept> test;
};

// Masks round(ratio * #leaves) leaves for validation and test, removing them
// and their incident edges. Deterministic for a fixed seed.
TaxonomySplit MaskLeaves(const Taxonomy& taxonomy, double val_ratio, double test_ratio,
                         std::uint64_t seed);

// Removes the given leaves, returning the remaining taxonomy and one query per
// removed leaf (gold = its original parents).
TaxonomySplit MaskGivenLeaves(const Taxonomy& taxonomy, std::span<const ConceptId> validation,
                              std::span<const ConceptId> test);

// Split file: "#existing" section of parent<TAB>child lines (an isolated node
// is a line with a single name), then "#validation" and "#test" sections of
// query<TAB>gold1|gold2 lines.
void WriteSplit(const std::filesystem::path& path, const TaxonomySplit& split);
TaxonomySplit LoadSplit(const std::filesystem::path& path, const EmbeddingTable& embeddings);

}  // namespace taxoexpan
