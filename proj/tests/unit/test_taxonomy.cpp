#include <doctest.h>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "taxoexpan/taxonomy.hpp"

using namespace taxoexpan;
using testing::MakeTaxonomy;
using testing::TempDir;
using testing::WriteFile;

namespace {

void WriteToyFiles(const TempDir& dir, const std::string& edges, const std::string& embeddings) {
  WriteFile(dir / "edges.tsv", edges);
  WriteFile(dir / "emb.txt", embeddings);
}

const char* kToyEmbeddings =
    "3 3\n"
    "A 1 0 0\n"
    "B 0 1 0\n"
    "C 0 0 1\n";

}  // namespace

TEST_CASE("load_taxonomy builds nodes and edges") {
  TempDir dir;
  WriteToyFiles(dir, "A\tB\nA\tC\n", kToyEmbeddings);
  const Taxonomy t = LoadTaxonomy(dir / "edges.tsv", dir / "emb.txt");
  CHECK(t.size() == 3);
  CHECK(t.edge_count() == 2);
  CHECK(t.dimension() == 3);
  const ConceptId a = *t.find("A");
  const ConceptId b = *t.find("B");
  CHECK(t.has_edge(a, b));
  CHECK(t.embedding(b)(1) == 1.0);
  CHECK(t.roots() == std::vector<ConceptId>{a});
}

TEST_CASE("load_taxonomy rejects a two-cycle") {
  TempDir dir;
  WriteToyFiles(dir, "A\tB\nB\tA\n", kToyEmbeddings);
  CHECK_THROWS_AS(LoadTaxonomy(dir / "edges.tsv", dir / "emb.txt"), DataError);
}

TEST_CASE("load_taxonomy names the concept with a missing embedding") {
  TempDir dir;
  WriteToyFiles(dir, "A\tB\nA\tZebra\n", kToyEmbeddings);
  try {
    LoadTaxonomy(dir / "edges.tsv", dir / "emb.txt");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("Zebra") != std::string::npos);
  }
}

TEST_CASE("embedding loader validates the header and dimensions") {
  TempDir dir;
  WriteFile(dir / "bad_dim.txt", "2 3\nA 1 2 3\nB 1 2\n");
  CHECK_THROWS_AS(LoadEmbeddings(dir / "bad_dim.txt"), DataError);
  WriteFile(dir / "bad_count.txt", "3 2\nA 1 2\nB 1 2\n");
  CHECK_THROWS_AS(LoadEmbeddings(dir / "bad_count.txt"), DataError);
  WriteFile(dir / "bad_header.txt", "A 1 2\n");
  CHECK_THROWS_AS(LoadEmbeddings(dir / "bad_header.txt"), DataError);
  CHECK_THROWS_AS(LoadEmbeddings(dir / "missing.txt"), DataError);
}

TEST_CASE("embedding names may contain spaces and round-trip") {
  TempDir dir;
  WriteFile(dir / "emb.txt", "2 2\nhospital room 0.5 -1\nunit 1e-3 2\n");
  const EmbeddingTable table = LoadEmbeddings(dir / "emb.txt");
  CHECK(table.size() == 2);
  CHECK(table.at("hospital room")(0) == 0.5);
  const std::vector<std::string> order{"unit", "hospital room"};
  WriteEmbeddings(dir / "out.txt", table, order);
  const EmbeddingTable again = LoadEmbeddings(dir / "out.txt");
  CHECK(again.at("unit")(0) == table.at("unit")(0));
  CHECK(again.at("hospital room")(1) == -1.0);
}

TEST_CASE("embedding table rejects mismatched insertions") {
  EmbeddingTable table(2);
  table.Insert("a", Vector::Zero(2));
  CHECK_THROWS_AS(table.Insert("b", Vector::Zero(3)), DataError);
  CHECK_THROWS_AS(table.Insert("a", Vector::Zero(2)), DataError);
  CHECK_THROWS_AS(table.at("nope"), DataError);
}

TEST_CASE("taxonomy constructor validation") {
  CHECK_THROWS_AS(MakeTaxonomy(2, {{0, 0}}), DataError);
  CHECK_THROWS_AS(MakeTaxonomy(2, {{0, 5}}), DataError);
  CHECK_THROWS_AS(MakeTaxonomy(3, {{0, 1}, {1, 2}, {2, 0}}), DataError);
  CHECK_THROWS_AS(Taxonomy({"a", "a"}, Matrix::Zero(2, 2), {}), DataError);
  CHECK_THROWS_AS(Taxonomy({"a", "b"}, Matrix::Zero(3, 2), {}), DataError);
  // Duplicate edges collapse.
  const Taxonomy t = MakeTaxonomy(2, {{0, 1}, {0, 1}});
  CHECK(t.edge_count() == 1);
}

TEST_CASE("parents and children indexes agree with the edge set") {
  testing::TempDir unused;
  RandomStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Taxonomy t = testing::RandomDag(rng, 15, 2);
    std::set<std::pair<int, int>> from_index;
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (ConceptId c : t.children(static_cast<ConceptId>(i))) {
        from_index.emplace(static_cast<int>(i), c);
        const auto ps = t.parents(c);
        CHECK(std::find(ps.begin(), ps.end(), static_cast<ConceptId>(i)) != ps.end());
      }
    }
    std::set<std::pair<int, int>> from_edges;
    for (const Edge& e : t.edges()) from_edges.emplace(e.parent, e.child);
    CHECK(from_index == from_edges);
  }
}

TEST_CASE("descendants and ancestors") {
  // 0 -> 1 -> 3, 0 -> 2 -> 3, 3 -> 4
  const Taxonomy t = MakeTaxonomy(5, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}});
  CHECK(t.Descendants(0) == std::vector<ConceptId>{1, 2, 3, 4});
  CHECK(t.Descendants(1) == std::vector<ConceptId>{3, 4});
  CHECK(t.Descendants(4).empty());
  CHECK(t.Ancestors(4) == std::vector<ConceptId>{0, 1, 2, 3});
  CHECK(t.Ancestors(0).empty());
  CHECK_THROWS_AS(t.Descendants(9), DataError);
}

TEST_CASE("descendants match a transitive-closure oracle") {
  RandomStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Taxonomy t = testing::RandomDag(rng, 20, 2);
    const std::size_t n = t.size();
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (const Edge& e : t.edges()) reach[e.parent][e.child] = 1;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (reach[i][k] && reach[k][j]) reach[i][j] = 1;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<ConceptId> expected;
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[i][j]) expected.push_back(static_cast<ConceptId>(j));
      }
      CHECK(t.Descendants(static_cast<ConceptId>(i)) == expected);
    }
  }
}

TEST_CASE("depth uses the shortest root path with the root at depth 1") {
  // 0 -> 1 -> 2 -> 3 and a shortcut 0 -> 3
  const Taxonomy t = MakeTaxonomy(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  CHECK(t.Depth(0) == 1);
  CHECK(t.Depth(2) == 3);
  CHECK(t.Depth(3) == 2);
  CHECK_FALSE(t.has_virtual_root());
}

TEST_CASE("multi-root taxonomies hang under a virtual root") {
  const Taxonomy t = MakeTaxonomy(4, {{0, 1}, {2, 3}});
  CHECK(t.has_virtual_root());
  CHECK(t.Depth(0) == 2);
  CHECK(t.Depth(3) == 3);
  CHECK(t.Lca(1, 3) == kVirtualRoot);
  CHECK(t.DepthOrVirtual(kVirtualRoot) == 1);
}

TEST_CASE("lca picks the deepest common ancestor-or-self") {
  // 0 -> 1 -> 3, 0 -> 2 -> 4, 1 -> 5
  const Taxonomy t = MakeTaxonomy(6, {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {1, 5}});
  CHECK(t.Lca(3, 5) == 1);
  CHECK(t.Lca(3, 4) == 0);
  CHECK(t.Lca(1, 3) == 1);
  CHECK(t.Lca(4, 4) == 4);
}

TEST_CASE("lca ties go to the smallest id") {
  // Two incomparable common ancestors 1 and 2 at equal depth.
  const Taxonomy t = MakeTaxonomy(5, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {1, 4}, {2, 4}});
  CHECK(t.Lca(3, 4) == 1);
}

TEST_CASE("mask_leaves masks only leaves and keeps gold parents") {
  RandomStream rng(3);
  const Taxonomy t = testing::RandomDag(rng, 60, 3);
  const std::size_t leaves = t.leaves().size();
  const TaxonomySplit split = MaskLeaves(t, 0.1, 0.1, 42);
  const auto expected = static_cast<std::size_t>(std::floor(0.1 * leaves + 0.5));
  CHECK(split.validation.size() == expected);
  CHECK(split.test.size() == expected);
  CHECK(split.existing.size() == t.size() - 2 * expected);
  for (const auto* group : {&split.validation, &split.test}) {
    for (const QueryConcept& q : *group) {
      const ConceptId original = *t.find(q.name);
      CHECK(t.is_leaf(original));
      CHECK_FALSE(split.existing.find(q.name).has_value());
      CHECK(q.gold_parents.size() == t.parents(original).size());
      for (ConceptId g : q.gold_parents) {
        const std::string& gname = split.existing.name(g);
        const auto ps = t.parents(original);
        CHECK(std::find(ps.begin(), ps.end(), *t.find(gname)) != ps.end());
      }
      CHECK(q.embedding.isApprox(t.embedding(original).transpose()));
    }
  }
}

TEST_CASE("mask_leaves is deterministic and seed-sensitive") {
  RandomStream rng(4);
  const Taxonomy t = testing::RandomDag(rng, 80, 3);
  auto names = [](const TaxonomySplit& s) {
    std::vector<std::string> out;
    for (const auto& q : s.test) out.push_back(q.name);
    return out;
  };
  CHECK(names(MaskLeaves(t, 0.2, 0.2, 7)) == names(MaskLeaves(t, 0.2, 0.2, 7)));
  CHECK(names(MaskLeaves(t, 0.2, 0.2, 7)) != names(MaskLeaves(t, 0.2, 0.2, 8)));
}

TEST_CASE("mask_leaves rejects bad ratios") {
  const Taxonomy t = MakeTaxonomy(3, {{0, 1}, {0, 2}});
  CHECK_THROWS_AS(MaskLeaves(t, 0.6, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(MaskLeaves(t, -0.1, 0.1, 0), ConfigError);
  CHECK_THROWS_AS(MaskGivenLeaves(t, std::vector<ConceptId>{0}, {}), DataError);
}

TEST_CASE("split files round-trip") {
  TempDir dir;
  RandomStream rng(9);
  const Taxonomy t = testing::RandomDag(rng, 30, 3);
  EmbeddingTable table(3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    table.Insert(t.name(static_cast<ConceptId>(i)), t.embedding(static_cast<ConceptId>(i)).transpose());
  }
  const TaxonomySplit split = MaskLeaves(t, 0.2, 0.2, 1);
  WriteSplit(dir / "split.tsv", split);
  const TaxonomySplit again = LoadSplit(dir / "split.tsv", table);
  CHECK(again.existing.size() == split.existing.size());
  CHECK(again.existing.edge_count() == split.existing.edge_count());
  REQUIRE(again.test.size() == split.test.size());
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    CHECK(again.test[i].name == split.test[i].name);
    std::vector<std::string> a, b;
    for (ConceptId g : again.test[i].gold_parents) a.push_back(again.existing.name(g));
    for (ConceptId g : split.test[i].gold_parents) b.push_back(split.existing.name(g));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  auto named_edges = [](const Taxonomy& tax) {
    std::set<std::pair<std::string, std::string>> out;
    for (const Edge& e : tax.edges()) out.emplace(tax.name(e.parent), tax.name(e.child));
    return out;
  };
  CHECK(named_edges(again.existing) == named_edges(split.existing));
}

TEST_CASE("split loader rejects inconsistent queries") {
  TempDir dir;
  EmbeddingTable table(3);
  for (const char* n : {"A", "B", "C"}) table.Insert(n, Vector::Ones(3));
  WriteFile(dir / "s1.tsv", "#existing\nA\tB\n#validation\n#test\nC\tZ\n");
  CHECK_THROWS_AS(LoadSplit(dir / "s1.tsv", table), DataError);
  WriteFile(dir / "s2.tsv", "#existing\nA\tB\n#validation\n#test\nB\tA\n");
  CHECK_THROWS_AS(LoadSplit(dir / "s2.tsv", table), DataError);
  WriteFile(dir / "s3.tsv", "#existing\nA\tB\nC\n#validation\n#test\n");
  const TaxonomySplit ok = LoadSplit(dir / "s3.tsv", table);
  CHECK(ok.existing.size() == 3);
}

TEST_CASE("extend appends concepts without touching existing edges") {
  const Taxonomy t = MakeTaxonomy(3, {{0, 1}, {0, 2}});
  Matrix extra = Matrix::Ones(1, t.dimension());
  const Taxonomy bigger = t.Extend({"new"}, extra, {{1, 3}});
  CHECK(bigger.size() == 4);
  CHECK(bigger.edge_count() == 3);
  for (const Edge& e : t.edges()) CHECK(bigger.has_edge(e.parent, e.child));
  CHECK(bigger.has_edge(1, 3));
  CHECK_THROWS_AS(t.Extend({"n0"}, extra, {}), DataError);
}
