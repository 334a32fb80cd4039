#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoexpan/diff.hpp"
#include "taxoexpan/egonet.hpp"

namespace taxoexpan {

enum class Arch { kGcn, kGat, kPgcn, kPgat };
enum class ReadoutKind { kMean, kWeightedMean, kConcat };
enum class MatcherKind { kMlp, kLbm };

std::string ToString(Arch arch);
std::string ToString(ReadoutKind kind);
std::string ToString(MatcherKind kind);
Arch ParseArch(const std::string& text);
ReadoutKind ParseReadout(const std::string& text);
MatcherKind ParseMatcher(const std::string& text);

inline bool IsPositionEnhanced(Arch arch) { return arch == Arch::kPgcn || arch == Arch::kPgat; }
inline bool IsAttention(Arch arch) { return arch == Arch::kGat || arch == Arch::kPgat; }

struct ModelConfig {
  Arch arch = Arch::kPgat;
  std::vector<int> heads{4, 1};       // attention heads per layer (GAT family)
  std::vector<int> hidden{250, 500};  // per-head output size per layer
  int position_dim = 50;              // must be 0 for GCN/GAT
  ReadoutKind readout = ReadoutKind::kWeightedMean;
  MatcherKind matcher = MatcherKind::kLbm;
  int mlp_hidden = 500;
  double dropout = 0.1;
  double leaky_slope = 0.2;

  int layers() const { return static_cast<int>(hidden.size()); }
  // Width of layer k's output (heads concatenated for attention archs).
  int LayerWidth(int k) const;
  // Dimension of the anchor (graph) representation.
  int GraphDim() const;
  void Validate() const;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; for GCN/GAT an absent position_dim is 0.
  static ModelConfig FromJson(const nlohmann::json& j);
};

using ParamMap = std::map<std::string, diff::Parameter>;

// Position-enhanced GNN anchor encoder plus query-anchor matcher. The
// parameter map is owned by the model; its iteration order (by name) fixes the
// checkpoint layout and optimizer bookkeeping.
class Model {
 public:
  Model() = default;
  // Random initialization: Glorot-uniform matrices, zero biases and readout
  // weights, N(0, 0.1^2) position embeddings.
  Model(ModelConfig config, int feature_dim, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  diff::Parameter& param(const std::string& name);
  const diff::Parameter& param(const std::string& name) const;
  std::size_t ParameterCount() const;

  // When `trainable` is set, parameters are read with gradient tracking.
  // `dropout_rng` enables dropout on the input features.
  diff::Var EncodeAnchors(diff::Tape& tape, const EgonetBatch& batch, bool trainable,
                          RandomStream* dropout_rng) const;
  // Node embeddings after the last propagation layer.
  diff::Var Propagate(diff::Tape& tape, const EgonetBatch& batch, bool trainable,
                      RandomStream* dropout_rng) const;
  diff::Var Readout(diff::Tape& tape, diff::Var nodes, const EgonetBatch& batch,
                    bool trainable) const;
  // Pre-activation matcher output, one row per (anchor, query) row pair:
  // a^T W n for LBM, the pre-sigmoid scalar for MLP.
  diff::Var MatchLogits(diff::Tape& tape, diff::Var anchors, diff::Var queries,
                        bool trainable) const;
  // log f(a, n) from logits: identity for LBM, log-sigmoid for MLP.
  diff::Var LogScore(diff::Tape& tape, diff::Var logits) const;

  // Plain-value scoring of one anchor representation against one query.
  double Logit(const Eigen::Ref<const Eigen::RowVectorXd>& anchor,
               const Eigen::Ref<const Eigen::RowVectorXd>& query) const;
  double Score(const Eigen::Ref<const Eigen::RowVectorXd>& anchor,
               const Eigen::Ref<const Eigen::RowVectorXd>& query) const;
  double LogScoreValue(double logit) const;
  // Anchor representations with dropout off.
  Matrix EncodeAnchorsValue(const EgonetBatch& batch) const;

  void ZeroGrad();

  nlohmann::json ToJson() const;
  static Model FromJson(const nlohmann::json& j);

 private:
  diff::Var Read(diff::Tape& tape, const std::string& name, bool trainable) const;
  diff::Var GcnLayer(diff::Tape& tape, diff::Var input, const EgonetBatch& batch, int layer,
                     bool trainable) const;
  diff::Var GatLayer(diff::Tape& tape, diff::Var input, const EgonetBatch& batch, int layer,
                     bool trainable) const;

  ModelConfig config_;
  int feature_dim_ = 0;
  // mutable: Tape::Param needs a writable gradient slot even from const
  // forward code; values are never modified through it.
  mutable ParamMap params_;
};

// Checkpoint: JSON object with "config", "feature_dim" and "params" (name ->
// {"shape": [r, c], "values": row-major}). Extra top-level keys are preserved
// for the caller (training state, manifest).
void SaveCheckpoint(const std::filesystem::path& path, const Model& model,
                    const nlohmann::json& extra = nlohmann::json::object());
Model LoadCheckpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace taxoexpan
