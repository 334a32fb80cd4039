#include "taxoexpan/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "taxoexpan/random.hpp"

namespace taxoexpan {

namespace {

std::string_view TrimCr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

double ParseDouble(std::string_view token, const std::string& where) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw DataError(where + ": cannot parse number '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string> SplitOn(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- embeddings

const Vector& EmbeddingTable::at(const std::string& name) const {
  auto it = vectors_.find(name);
  if (it == vectors_.end()) throw DataError("missing embedding for concept '" + name + "'");
  return it->second;
}

void EmbeddingTable::Insert(std::string name, Vector vec) {
  if (dimension_ == 0) dimension_ = static_cast<int>(vec.size());
  if (vec.size() != dimension_) {
    throw DataError("embedding for '" + name + "' has dimension " + std::to_string(vec.size()) +
                    ", expected " + std::to_string(dimension_));
  }
  if (!vectors_.emplace(std::move(name), std::move(vec)).second) {
    throw DataError("duplicate embedding name");
  }
}

EmbeddingTable LoadEmbeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty embedding file");
  const auto header = SplitWhitespace(TrimCr(line));
  if (header.size() != 2) throw DataError(path.string() + ": header must be 'count dim'");
  const auto count = static_cast<std::size_t>(ParseDouble(header[0], path.string()));
  const int dim = static_cast<int>(ParseDouble(header[1], path.string()));
  if (dim <= 0) throw DataError(path.string() + ": dimension must be positive");

  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = TrimCr(line);
    if (view.empty()) continue;
    const auto tokens = SplitWhitespace(view);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tokens.size() < static_cast<std::size_t>(dim) + 1) {
      throw DataError(where + ": dimension mismatch, expected " + std::to_string(dim) +
                      " values");
    }
    const std::size_t name_tokens = tokens.size() - dim;
    std::string name(tokens[0]);
    for (std::size_t i = 1; i < name_tokens; ++i) {
      name += ' ';
      name += tokens[i];
    }
    Vector vec(dim);
    for (int d = 0; d < dim; ++d) vec[d] = ParseDouble(tokens[name_tokens + d], where);
    if (table.contains(name)) throw DataError(where + ": duplicate concept name '" + name + "'");
    table.Insert(std::move(name), std::move(vec));
  }
  if (table.size() != count) {
    throw DataError(path.string() + ": header declares " + std::to_string(count) +
                    " vectors, found " + std::to_string(table.size()));
  }
  return table;
}

void WriteEmbeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     std::span<const std::string> order) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << order.size() << ' ' << table.dimension() << '\n';
  out << std::setprecision(17);
  for (const auto& name : order) {
    out << name;
    for (double v : table.at(name)) out << ' ' << v;
    out << '\n';
  }
}

// ------------------------------------------------------------------ taxonomy

Taxonomy::Taxonomy(std::vector<std::string> names, Matrix embeddings, std::vector<Edge> edges)
    : names_(std::move(names)), embeddings_(std::move(embeddings)), edges_(std::move(edges)) {
  const auto n = names_.size();
  if (static_cast<std::size_t>(embeddings_.rows()) != n) {
    throw DataError("embedding rows do not match concept count");
  }
  index_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!index_.emplace(names_[i], static_cast<ConceptId>(i)).second) {
      throw DataError("duplicate concept name '" + names_[i] + "'");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  parents_.assign(n, {});
  children_.assign(n, {});
  for (const Edge& e : edges_) {
    if (e.parent < 0 || e.child < 0 || static_cast<std::size_t>(e.parent) >= n ||
        static_cast<std::size_t>(e.child) >= n) {
      throw DataError("edge endpoint does not exist");
    }
    if (e.parent == e.child) throw DataError("cycle detected at '" + names_[e.parent] + "'");
    children_[e.parent].push_back(e.child);
    parents_[e.child].push_back(e.parent);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());

  // Kahn's algorithm doubles as the BFS that assigns shortest depths.
  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = parents_[i].size();
  std::deque<ConceptId> frontier;
  depth_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) {
      frontier.push_back(static_cast<ConceptId>(i));
      ++roots_count_;
    }
  }
  const int root_depth = roots_count_ > 1 ? 2 : 1;
  for (ConceptId r : frontier) depth_[r] = root_depth;
  std::size_t visited = 0;
  while (!frontier.empty()) {
    const ConceptId u = frontier.front();
    frontier.pop_front();
    ++visited;
    for (ConceptId c : children_[u]) {
      if (depth_[c] == 0 || depth_[u] + 1 < depth_[c]) depth_[c] = depth_[u] + 1;
      if (--indegree[c] == 0) frontier.push_back(c);
    }
  }
  if (visited != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] > 0) throw DataError("cycle detected involving '" + names_[i] + "'");
    }
  }
}

std::size_t Taxonomy::CheckId(ConceptId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw DataError("unknown concept id " + std::to_string(id));
  }
  return static_cast<std::size_t>(id);
}

const std::string& Taxonomy::name(ConceptId id) const { return names_[CheckId(id)]; }

std::optional<ConceptId> Taxonomy::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Taxonomy::has_edge(ConceptId parent, ConceptId child) const {
  const auto p = parents(child);
  return std::binary_search(p.begin(), p.end(), parent);
}

std::vector<ConceptId> Taxonomy::leaves() const {
  std::vector<ConceptId> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (children_[i].empty()) out.push_back(static_cast<ConceptId>(i));
  }
  return out;
}

std::vector<ConceptId> Taxonomy::roots() const {
  std::vector<ConceptId> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (parents_[i].empty()) out.push_back(static_cast<ConceptId>(i));
  }
  return out;
}

namespace {

std::vector<ConceptId> Reachable(ConceptId start, const std::vector<std::vector<ConceptId>>& adj) {
  std::vector<char> seen(adj.size(), 0);
  std::vector<ConceptId> stack{start};
  std::vector<ConceptId> out;
  seen[start] = 1;
  while (!stack.empty()) {
    const ConceptId u = stack.back();
    stack.pop_back();
    for (ConceptId v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        out.push_back(v);
        stack.push_back(v);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<ConceptId> Taxonomy::Descendants(ConceptId id) const {
  return Reachable(static_cast<ConceptId>(CheckId(id)), children_);
}

std::vector<ConceptId> Taxonomy::Ancestors(ConceptId id) const {
  return Reachable(static_cast<ConceptId>(CheckId(id)), parents_);
}

int Taxonomy::Depth(ConceptId id) const { return depth_[CheckId(id)]; }

ConceptId Taxonomy::Lca(ConceptId a, ConceptId b) const {
  CheckId(a);
  CheckId(b);
  if (a == b) return a;
  auto up_a = Ancestors(a);
  up_a.push_back(a);
  std::sort(up_a.begin(), up_a.end());
  auto up_b = Ancestors(b);
  up_b.push_back(b);
  std::sort(up_b.begin(), up_b.end());
  std::vector<ConceptId> common;
  std::set_intersection(up_a.begin(), up_a.end(), up_b.begin(), up_b.end(),
                        std::back_inserter(common));
  ConceptId best = kVirtualRoot;
  for (ConceptId c : common) {  // ascending, so strict > keeps the smallest id on ties
    if (best == kVirtualRoot || depth_[c] > depth_[best]) best = c;
  }
  return best;
}

Taxonomy Taxonomy::Extend(std::vector<std::string> new_names, const Matrix& new_embeddings,
                          std::vector<Edge> new_edges) const {
  if (new_embeddings.rows() != static_cast<Eigen::Index>(new_names.size()) ||
      (new_embeddings.rows() > 0 && new_embeddings.cols() != embeddings_.cols())) {
    throw DataError("new concept embeddings have the wrong shape");
  }
  std::vector<std::string> names = names_;
  names.insert(names.end(), std::make_move_iterator(new_names.begin()),
               std::make_move_iterator(new_names.end()));
  Matrix emb(names.size(), embeddings_.cols());
  emb.topRows(embeddings_.rows()) = embeddings_;
  if (new_embeddings.rows() > 0) emb.bottomRows(new_embeddings.rows()) = new_embeddings;
  std::vector<Edge> edges = edges_;
  edges.insert(edges.end(), new_edges.begin(), new_edges.end());
  return Taxonomy(std::move(names), std::move(emb), std::move(edges));
}

// ----------------------------------------------------------------------- I/O

Taxonomy BuildTaxonomy(const std::vector<std::pair<std::string, std::string>>& named_edges,
                       const EmbeddingTable& embeddings,
                       const std::vector<std::string>& isolated) {
  std::vector<std::string> names;
  std::unordered_map<std::string, ConceptId> ids;
  auto intern = [&](const std::string& name) {
    auto [it, inserted] = ids.emplace(name, static_cast<ConceptId>(names.size()));
    if (inserted) names.push_back(name);
    return it->second;
  };
  std::vector<Edge> edges;
  edges.reserve(named_edges.size());
  for (const auto& [parent, child] : named_edges) {
    const ConceptId p = intern(parent);
    const ConceptId c = intern(child);
    edges.push_back({p, c});
  }
  for (const auto& name : isolated) intern(name);

  Matrix emb(names.size(), embeddings.dimension());
  for (std::size_t i = 0; i < names.size(); ++i) {
    emb.row(static_cast<Eigen::Index>(i)) = embeddings.at(names[i]).transpose();
  }
  return Taxonomy(std::move(names), std::move(emb), std::move(edges));
}

Taxonomy LoadTaxonomy(const std::filesystem::path& edge_file, const EmbeddingTable& embeddings) {
  std::ifstream in(edge_file);
  if (!in) throw DataError("cannot open edge file " + edge_file.string());
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = TrimCr(line);
    if (view.empty()) continue;
    const auto fields = SplitOn(view, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError(edge_file.string() + ":" + std::to_string(line_no) +
                      ": expected 'parent<TAB>child'");
    }
    edges.emplace_back(fields[0], fields[1]);
  }
  return BuildTaxonomy(edges, embeddings);
}

Taxonomy LoadTaxonomy(const std::filesystem::path& edge_file,
                      const std::filesystem::path& embedding_file) {
  return LoadTaxonomy(edge_file, LoadEmbeddings(embedding_file));
}

void WriteEdges(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Edge& e : taxonomy.edges()) {
    out << taxonomy.name(e.parent) << '\t' << taxonomy.name(e.child) << '\n';
  }
}

// --------------------------------------------------------------------- split

TaxonomySplit MaskGivenLeaves(const Taxonomy& taxonomy, std::span<const ConceptId> validation,
                              std::span<const ConceptId> test) {
  const std::size_t n = taxonomy.size();
  std::vector<char> masked(n, 0);
  for (auto group : {validation, test}) {
    for (ConceptId q : group) {
      if (!taxonomy.is_leaf(q)) throw DataError("only leaves can be masked: " + taxonomy.name(q));
      if (masked[q]) throw DataError("leaf masked twice: " + taxonomy.name(q));
      masked[q] = 1;
    }
  }
  std::vector<ConceptId> remap(n, -1);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    if (!masked[i]) {
      remap[i] = static_cast<ConceptId>(names.size());
      names.push_back(taxonomy.name(static_cast<ConceptId>(i)));
    }
  }
  Matrix emb(names.size(), taxonomy.dimension());
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[i] >= 0) emb.row(remap[i]) = taxonomy.embedding(static_cast<ConceptId>(i));
  }
  std::vector<Edge> edges;
  for (const Edge& e : taxonomy.edges()) {
    if (!masked[e.parent] && !masked[e.child]) edges.push_back({remap[e.parent], remap[e.child]});
  }

  TaxonomySplit split;
  split.existing = Taxonomy(std::move(names), std::move(emb), std::move(edges));
  auto make_queries = [&](std::span<const ConceptId> group) {
    std::vector<QueryConcept> out;
    for (ConceptId q : group) {
      QueryConcept query{taxonomy.name(q), taxonomy.embedding(q).transpose(), {}};
      for (ConceptId p : taxonomy.parents(q)) query.gold_parents.push_back(remap[p]);
      out.push_back(std::move(query));
    }
    return out;
  };
  split.validation = make_queries(validation);
  split.test = make_queries(test);
  return split;
}

TaxonomySplit MaskLeaves(const Taxonomy& taxonomy, double val_ratio, double test_ratio,
                         std::uint64_t seed) {
  if (!(val_ratio >= 0.0 && val_ratio < 1.0) || !(test_ratio >= 0.0 && test_ratio < 1.0) ||
      val_ratio + test_ratio >= 1.0) {
    throw ConfigError("mask ratios must lie in [0,1) and sum to less than 1");
  }
  std::vector<ConceptId> leaves = taxonomy.leaves();
  if (leaves.empty()) throw DataError("taxonomy has no leaves");
  RandomStream rng = RandomStream(seed).Split("mask_leaves");
  for (std::size_t i = leaves.size(); i > 1; --i) {
    std::swap(leaves[i - 1], leaves[rng.Below(i)]);
  }
  const auto count = [&](double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(leaves.size()) + 0.5));
  };
  const std::size_t n_val = count(val_ratio);
  const std::size_t n_test = std::min(count(test_ratio), leaves.size() - n_val);
  std::vector<ConceptId> val(leaves.begin(), leaves.begin() + n_val);
  std::vector<ConceptId> test(leaves.begin() + n_val, leaves.begin() + n_val + n_test);
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  return MaskGivenLeaves(taxonomy, val, test);
}

void WriteSplit(const std::filesystem::path& path, const TaxonomySplit& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const Taxonomy& t = split.existing;
  out << "#existing\n";
  for (const Edge& e : t.edges()) out << t.name(e.parent) << '\t' << t.name(e.child) << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto id = static_cast<ConceptId>(i);
    if (t.parents(id).empty() && t.children(id).empty()) out << t.name(id) << '\n';
  }
  auto write_queries = [&](const char* header, const std::vector<QueryConcept>& queries) {
    out << header << '\n';
    for (const auto& q : queries) {
      out << q.name << '\t';
      for (std::size_t i = 0; i < q.gold_parents.size(); ++i) {
        if (i) out << '|';
        out << t.name(q.gold_parents[i]);
      }
      out << '\n';
    }
  };
  write_queries("#validation", split.validation);
  write_queries("#test", split.test);
}

TaxonomySplit LoadSplit(const std::filesystem::path& path, const EmbeddingTable& embeddings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  enum class Section { kNone, kExisting, kValidation, kTest } section = Section::kNone;
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> isolated;
  std::vector<std::pair<std::string, std::vector<std::string>>> val, test;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = TrimCr(line);
    if (view.empty()) continue;
    if (view == "#existing") { section = Section::kExisting; continue; }
    if (view == "#validation") { section = Section::kValidation; continue; }
    if (view == "#test") { section = Section::kTest; continue; }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = SplitOn(view, '\t');
    switch (section) {
      case Section::kNone:
        throw DataError(where + ": content before '#existing'");
      case Section::kExisting:
        if (fields.size() == 1) {
          isolated.push_back(fields[0]);
        } else if (fields.size() == 2) {
          edges.emplace_back(fields[0], fields[1]);
        } else {
          throw DataError(where + ": expected 'parent<TAB>child'");
        }
        break;
      case Section::kValidation:
      case Section::kTest: {
        if (fields.size() != 2 || fields[1].empty()) {
          throw DataError(where + ": expected 'query<TAB>gold1|gold2'");
        }
        auto& dst = section == Section::kValidation ? val : test;
        dst.emplace_back(fields[0], SplitOn(fields[1], '|'));
        break;
      }
    }
  }
  TaxonomySplit split;
  split.existing = BuildTaxonomy(edges, embeddings, isolated);
  auto resolve = [&](const auto& rows) {
    std::vector<QueryConcept> out;
    for (const auto& [name, golds] : rows) {
      QueryConcept q{name, embeddings.at(name), {}};
      if (split.existing.find(name)) {
        throw DataError("query '" + name + "' also appears in the existing taxonomy");
      }
      for (const auto& g : golds) {
        auto id = split.existing.find(g);
        if (!id) throw DataError("gold parent '" + g + "' of '" + name + "' is not in the taxonomy");
        q.gold_parents.push_back(*id);
      }
      out.push_back(std::move(q));
    }
    return out;
  };
  split.validation = resolve(val);
  split.test = resolve(test);
  return split;
}

}  // namespace taxoexpan
