#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoexpan/inference.hpp"
#include "taxoexpan/model.hpp"

namespace taxoexpan {

enum class LossKind { kInfoNce, kBce };
std::string ToString(LossKind kind);
LossKind ParseLoss(const std::string& text);

struct TrainConfig {
  int negatives = 31;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int scheduler_patience = 3;
  double lr_factor = 0.1;
  int max_epochs = 100;
  int early_stop_patience = 10;
  LossKind loss = LossKind::kInfoNce;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t max_siblings = 1000;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

// One positive <anchor, query> edge grouped with N negatives for the query.
struct TrainInstance {
  ConceptId query;
  ConceptId positive;
  std::vector<ConceptId> negatives;
};

// Uniform negatives: nodes that are neither a parent nor a descendant of the
// query (nor the query itself).
class NegativeSampler {
 public:
  explicit NegativeSampler(const Taxonomy& taxonomy);

  std::size_t EligibleCount(ConceptId query) const;
  // N distinct eligible ids, uniform without replacement. Throws DataError
  // when fewer than N are eligible.
  std::vector<ConceptId> Sample(ConceptId query, int count, RandomStream& rng) const;

 private:
  const std::vector<ConceptId>& Excluded(ConceptId query) const;

  const Taxonomy* taxonomy_;
  std::vector<std::vector<ConceptId>> excluded_;  // sorted, per query node
};

// One instance per edge of the taxonomy, in edge order, with fresh negatives
// drawn from `rng`.
std::vector<TrainInstance> GenerateInstances(const Taxonomy& taxonomy,
                                             const NegativeSampler& sampler, int negatives,
                                             RandomStream& rng);

// -log(f_pos / sum_j f_j) for one instance; every score must be > 0.
double InfoNceLoss(std::span<const double> scores, std::size_t positive);
// Same from log f values, evaluated with log-sum-exp.
double InfoNceLossFromLogScores(std::span<const double> log_scores, std::size_t positive);
// Mean binary cross entropy of probabilities against 0/1 labels.
double BceLoss(std::span<const double> probabilities, std::span<const int> labels);

// Tape versions. `instance_of_row` maps each pair row to its instance;
// `positive_rows` lists the positive row of every instance.
diff::Var InfoNceTape(diff::Tape& tape, diff::Var log_scores, const diff::Segments& instance_of_row,
                      int num_instances, std::span<const int> positive_rows);
// BCE on matcher logits (logistic link) averaged over all rows.
diff::Var BceTape(diff::Tape& tape, diff::Var logits, std::span<const int> labels);

class Adam {
 public:
  Adam() = default;
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void Step(ParamMap& params);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return steps_; }

  nlohmann::json ToJson() const;
  static Adam FromJson(const nlohmann::json& j);

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// Multiplies the learning rate by `factor` after `patience` epochs without
// improvement of a maximized metric.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau() = default;
  ReduceLrOnPlateau(double factor, int patience) : factor_(factor), patience_(patience) {}

  // Returns true when the metric improved on the best so far.
  bool Step(double metric, Adam& optimizer);

  nlohmann::json ToJson() const;
  static ReduceLrOnPlateau FromJson(const nlohmann::json& j);

 private:
  double factor_ = 0.1;
  int patience_ = 3;
  std::optional<double> best_;
  int bad_epochs_ = 0;
};

// One gradient step over a batch of instances; returns the batch loss.
// Anchor egonets are encoded once per distinct anchor in the batch.
double TrainStep(Model& model, Adam& optimizer, const Taxonomy& taxonomy,
                 std::span<const TrainInstance> batch, LossKind loss, RandomStream* dropout_rng,
                 const EgonetOptions& egonet_options = {});

// Batch objective without updating anything (used by gradient checks).
diff::Var BatchObjective(diff::Tape& tape, const Model& model, const Taxonomy& taxonomy,
                         std::span<const TrainInstance> batch, LossKind loss,
                         RandomStream* dropout_rng, const EgonetOptions& egonet_options = {});

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<MetricsReport> validation;
  double learning_rate = 0.0;
  double seconds = 0.0;

  // One JSON object per epoch; timing is omitted so logs are reproducible.
  nlohmann::json ToJson() const;
};

struct TrainingState {
  Model model;
  Adam optimizer;
  ReduceLrOnPlateau scheduler;
  int epochs_done = 0;
  double best_metric = 0.0;

  nlohmann::json ToJson() const;  // everything except the model
  static TrainingState FromJson(Model model, const nlohmann::json& j);
};

struct FitOptions {
  std::function<void(const EpochLog&)> on_epoch;
  // Continue from a previous run: parameters, optimizer, epoch numbering.
  // max_epochs stays the total, so a resumed run stops where an uninterrupted
  // one would.
  std::optional<TrainingState> resume;
};

struct FitResult {
  Model model;  // best-validation (or lowest training loss) parameters
  TrainingState state;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

// Self-supervised training on the existing taxonomy of a split. Validation
// queries (if any) are ranked against every existing node each epoch and
// their scaled MRR drives LR scheduling, early stopping and model selection;
// without validation queries the negated training loss is used instead.
// Throws NumericalError if the loss becomes NaN.
FitResult Fit(const TaxonomySplit& split, const ModelConfig& model_config,
              const TrainConfig& train_config, const FitOptions& options = {});

}  // namespace taxoexpan
