#pragma once

#include <limits>
#include <vector>

#include "taxoexpan/train.hpp"

namespace taxoexpan {

struct CleanOptions {
  int folds = 5;
  // Edges whose existing parent ranks strictly worse than this are flagged.
  double threshold_rank = 1000;
  std::size_t top_suggestions = 5;
  // Keep only the most suspicious entries (0 = keep all).
  std::size_t max_report = 0;
  std::uint64_t seed = 0;
};

struct CleanEntry {
  ConceptId leaf;
  ConceptId parent;
  int rank;  // rank of `parent` among all nodes of the fold's taxonomy
  std::vector<ConceptId> suggestions;  // ids in the original taxonomy
};

struct CleanReport {
  std::vector<CleanEntry> entries;  // most suspicious (largest rank) first
  std::size_t leaves_evaluated = 0;
};

// k-fold re-ranking of existing leaves: each fold's leaves are masked, a
// model is trained on the remainder, and every (leaf, existing parent) edge
// is scored by the parent's rank. Throws DataError when a fold leaves too
// little to train on, ConfigError when folds < 2.
CleanReport SelfClean(const Taxonomy& taxonomy, const ModelConfig& model_config,
                      const TrainConfig& train_config, const CleanOptions& options);

}  // namespace taxoexpan
