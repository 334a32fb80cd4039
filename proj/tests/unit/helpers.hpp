#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "taxoexpan/random.hpp"
#include "taxoexpan/taxonomy.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("taxoexpan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline taxoexpan::Matrix RandomMatrix(taxoexpan::RandomStream& rng, Eigen::Index rows,
                                      Eigen::Index cols) {
  taxoexpan::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

// Taxonomy over names n0..n{count-1} with the given (parent, child) index
// pairs and Gaussian embeddings.
inline taxoexpan::Taxonomy MakeTaxonomy(int count, const std::vector<std::pair<int, int>>& edges,
                                        int dim = 4, std::uint64_t seed = 1) {
  taxoexpan::RandomStream rng(seed);
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) names.push_back("n" + std::to_string(i));
  std::vector<taxoexpan::Edge> e;
  for (auto [p, c] : edges) e.push_back({p, c});
  return taxoexpan::Taxonomy(std::move(names), RandomMatrix(rng, count, dim), std::move(e));
}

// Random DAG: each node i > 0 gets one parent below it and sometimes a second.
inline taxoexpan::Taxonomy RandomDag(taxoexpan::RandomStream& rng, int count, int dim) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < count; ++i) {
    const int p = static_cast<int>(rng.Below(static_cast<std::uint64_t>(i)));
    edges.emplace_back(p, i);
    if (i > 2 && rng.Uniform() < 0.2) {
      const int q = static_cast<int>(rng.Below(static_cast<std::uint64_t>(i)));
      if (q != p) edges.emplace_back(q, i);
    }
  }
  return MakeTaxonomy(count, edges, dim, rng.NextU64());
}

}  // namespace testing
