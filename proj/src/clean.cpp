#include "taxoexpan/clean.hpp"

#include <algorithm>

namespace taxoexpan {

CleanReport SelfClean(const Taxonomy& taxonomy, const ModelConfig& model_config,
                      const TrainConfig& train_config, const CleanOptions& options) {
  if (options.folds < 2) throw ConfigError("self-cleaning needs at least 2 folds");
  std::vector<ConceptId> leaves;
  for (ConceptId leaf : taxonomy.leaves()) {
    if (!taxonomy.parents(leaf).empty()) leaves.push_back(leaf);
  }
  if (leaves.size() < static_cast<std::size_t>(options.folds)) {
    throw DataError("too few leaves (" + std::to_string(leaves.size()) + ") for " +
                    std::to_string(options.folds) + " folds");
  }
  RandomStream rng = RandomStream(options.seed).Split("self_clean");
  for (std::size_t i = leaves.size(); i > 1; --i) std::swap(leaves[i - 1], leaves[rng.Below(i)]);

  CleanReport report;
  for (int fold = 0; fold < options.folds; ++fold) {
    std::vector<ConceptId> masked;
    for (std::size_t i = static_cast<std::size_t>(fold); i < leaves.size(); i += options.folds) {
      masked.push_back(leaves[i]);
    }
    std::sort(masked.begin(), masked.end());
    const TaxonomySplit split = MaskGivenLeaves(taxonomy, {}, masked);
    if (split.existing.edge_count() == 0) {
      throw DataError("fold " + std::to_string(fold) + " leaves no edges to train on");
    }
    TrainConfig fold_config = train_config;
    fold_config.seed = RandomStream(train_config.seed).Split("fold").Split(fold).NextU64();
    const FitResult fit = Fit(split, model_config, fold_config);
    const EgonetOptions egonet_options{fold_config.max_siblings, fold_config.seed};
    const AnchorCache cache =
        BuildAnchorCache(split.existing, fit.model, egonet_options, fold_config.threads);
    const auto results = RankQueries(split.test, cache, fit.model, fold_config.threads);

    std::vector<ConceptId> to_original(split.existing.size());
    for (std::size_t i = 0; i < to_original.size(); ++i) {
      to_original[i] = *taxonomy.find(split.existing.name(static_cast<ConceptId>(i)));
    }
    for (std::size_t q = 0; q < masked.size(); ++q) {
      ++report.leaves_evaluated;
      std::vector<ConceptId> suggestions;
      for (ConceptId a : results[q].Top(options.top_suggestions)) {
        suggestions.push_back(to_original[a]);
      }
      const auto& gold = split.test[q].gold_parents;
      for (std::size_t g = 0; g < gold.size(); ++g) {
        const int rank = results[q].gold_ranks[g];
        if (static_cast<double>(rank) > options.threshold_rank) {
          report.entries.push_back({masked[q], to_original[gold[g]], rank, suggestions});
        }
      }
    }
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const CleanEntry& a, const CleanEntry& b) {
              if (a.rank != b.rank) return a.rank > b.rank;
              if (a.leaf != b.leaf) return a.leaf < b.leaf;
              return a.parent < b.parent;
            });
  if (options.max_report > 0 && report.entries.size() > options.max_report) {
    report.entries.resize(options.max_report);
  }
  return report;
}

}  // namespace taxoexpan
