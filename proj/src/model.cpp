#include "taxoexpan/model.hpp"

#include <cmath>
#include <fstream>

namespace taxoexpan {

using diff::Parameter;
using diff::Tape;
using diff::Var;
using nlohmann::json;

// ------------------------------------------------------------------- enums

std::string ToString(Arch arch) {
  switch (arch) {
    case Arch::kGcn: return "GCN";
    case Arch::kGat: return "GAT";
    case Arch::kPgcn: return "PGCN";
    case Arch::kPgat: return "PGAT";
  }
  return "?";
}

std::string ToString(ReadoutKind kind) {
  switch (kind) {
    case ReadoutKind::kMean: return "Mean";
    case ReadoutKind::kWeightedMean: return "WMR";
    case ReadoutKind::kConcat: return "CR";
  }
  return "?";
}

std::string ToString(MatcherKind kind) { return kind == MatcherKind::kMlp ? "MLP" : "LBM"; }

namespace {

std::string Upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Arch ParseArch(const std::string& text) {
  const std::string s = Upper(text);
  if (s == "GCN") return Arch::kGcn;
  if (s == "GAT") return Arch::kGat;
  if (s == "PGCN") return Arch::kPgcn;
  if (s == "PGAT") return Arch::kPgat;
  throw ConfigError("unknown architecture '" + text + "' (GCN, GAT, PGCN, PGAT)");
}

ReadoutKind ParseReadout(const std::string& text) {
  const std::string s = Upper(text);
  if (s == "MEAN") return ReadoutKind::kMean;
  if (s == "WMR") return ReadoutKind::kWeightedMean;
  if (s == "CR") return ReadoutKind::kConcat;
  throw ConfigError("unknown readout '" + text + "' (Mean, WMR, CR)");
}

MatcherKind ParseMatcher(const std::string& text) {
  const std::string s = Upper(text);
  if (s == "MLP") return MatcherKind::kMlp;
  if (s == "LBM") return MatcherKind::kLbm;
  throw ConfigError("unknown matcher '" + text + "' (MLP, LBM)");
}

// ------------------------------------------------------------------ config

int ModelConfig::LayerWidth(int k) const {
  return IsAttention(arch) ? heads.at(k) * hidden.at(k) : hidden.at(k);
}

int ModelConfig::GraphDim() const {
  const int node_dim = LayerWidth(layers() - 1);
  return readout == ReadoutKind::kConcat ? kNumPositions * node_dim : node_dim;
}

void ModelConfig::Validate() const {
  if (hidden.empty()) throw ConfigError("model needs at least one layer");
  if (heads.size() != hidden.size()) throw ConfigError("heads and hidden must have one entry per layer");
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    if (hidden[k] <= 0 || heads[k] <= 0) throw ConfigError("layer sizes and heads must be positive");
  }
  if (IsPositionEnhanced(arch) && position_dim <= 0) {
    throw ConfigError(ToString(arch) + " requires position_dim > 0");
  }
  if (!IsPositionEnhanced(arch) && position_dim != 0) {
    throw ConfigError(ToString(arch) + " is not position-enhanced; position_dim must be 0");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0,1)");
  if (matcher == MatcherKind::kMlp && mlp_hidden <= 0) throw ConfigError("mlp_hidden must be positive");
}

json ModelConfig::ToJson() const {
  return json{{"arch", ToString(arch)},         {"heads", heads},
              {"hidden", hidden},               {"position_dim", position_dim},
              {"readout", ToString(readout)},   {"matcher", ToString(matcher)},
              {"mlp_hidden", mlp_hidden},       {"dropout", dropout},
              {"leaky_slope", leaky_slope}};
}

ModelConfig ModelConfig::FromJson(const json& j) {
  ModelConfig c;
  if (j.contains("arch")) c.arch = ParseArch(j.at("arch").get<std::string>());
  if (j.contains("heads")) c.heads = j.at("heads").get<std::vector<int>>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("position_dim")) {
    c.position_dim = j.at("position_dim").get<int>();
  } else if (!IsPositionEnhanced(c.arch)) {
    c.position_dim = 0;
  }
  if (j.contains("readout")) c.readout = ParseReadout(j.at("readout").get<std::string>());
  if (j.contains("matcher")) c.matcher = ParseMatcher(j.at("matcher").get<std::string>());
  if (j.contains("mlp_hidden")) c.mlp_hidden = j.at("mlp_hidden").get<int>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  if (j.contains("leaky_slope")) c.leaky_slope = j.at("leaky_slope").get<double>();
  return c;
}

// ------------------------------------------------------------------- model

namespace {

Parameter Glorot(int rows, int cols, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Parameter p;
  p.value.resize(rows, cols);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = (2.0 * rng.Uniform() - 1.0) * limit;
  }
  return p;
}

Parameter Zeros(int rows, int cols) {
  Parameter p;
  p.value.setZero(rows, cols);
  return p;
}

std::string LayerKey(int k) { return "gnn." + std::to_string(k); }
std::string HeadKey(int k, int m) { return LayerKey(k) + ".head" + std::to_string(m); }

}  // namespace

Model::Model(ModelConfig config, int feature_dim, std::uint64_t seed)
    : config_(std::move(config)), feature_dim_(feature_dim) {
  config_.Validate();
  if (feature_dim <= 0) throw ConfigError("feature dimension must be positive");
  RandomStream root = RandomStream(seed).Split("init");
  const int pd = config_.position_dim;
  int in = feature_dim;
  for (int k = 0; k < config_.layers(); ++k) {
    RandomStream rng = root.Split(LayerKey(k));
    if (pd > 0) {
      Parameter pos = Zeros(kNumPositions, pd);
      for (Eigen::Index i = 0; i < pos.value.size(); ++i) pos.value.data()[i] = 0.1 * rng.Normal();
      params_.emplace(LayerKey(k) + ".position", std::move(pos));
    }
    const int h = config_.hidden[k];
    if (IsAttention(config_.arch)) {
      for (int m = 0; m < config_.heads[k]; ++m) {
        params_.emplace(HeadKey(k, m) + ".weight", Glorot(in + pd, h, rng));
        params_.emplace(HeadKey(k, m) + ".attn_self", Glorot(h, 1, rng));
        params_.emplace(HeadKey(k, m) + ".attn_neighbor", Glorot(h, 1, rng));
      }
    } else {
      params_.emplace(LayerKey(k) + ".weight", Glorot(in + pd, h, rng));
    }
    in = config_.LayerWidth(k);
  }
  if (config_.readout == ReadoutKind::kWeightedMean) {
    params_.emplace("readout.position_weight", Zeros(kNumPositions, 1));
  }
  RandomStream rng = root.Split("match");
  const int d2 = config_.GraphDim();
  if (config_.matcher == MatcherKind::kLbm) {
    params_.emplace("match.weight", Glorot(d2, feature_dim, rng));
  } else {
    params_.emplace("match.hidden.weight", Glorot(d2 + feature_dim, config_.mlp_hidden, rng));
    params_.emplace("match.hidden.bias", Zeros(1, config_.mlp_hidden));
    params_.emplace("match.out.weight", Glorot(config_.mlp_hidden, 1, rng));
    params_.emplace("match.out.bias", Zeros(1, 1));
  }
  ZeroGrad();
}

Parameter& Model::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

const Parameter& Model::param(const std::string& name) const {
  return const_cast<Model*>(this)->param(name);
}

std::size_t Model::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Model::ZeroGrad() {
  for (auto& [_, p] : params_) p.ZeroGrad();
}

Var Model::Read(Tape& tape, const std::string& name, bool trainable) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named '" + name + "'");
  return trainable ? tape.Param(it->second) : tape.Frozen(it->second);
}

namespace {

// h || p_u for every node.
Var WithPositions(Tape& tape, Var h, Var position_table, const EgonetBatch& batch) {
  const Var pos = diff::RowGather(tape, position_table, batch.positions);
  const Var parts[] = {h, pos};
  return diff::ConcatCols(tape, parts);
}

}  // namespace

Var Model::GcnLayer(Tape& tape, Var input, const EgonetBatch& batch, int layer,
                    bool trainable) const {
  const Var weight = Read(tape, LayerKey(layer) + ".weight", trainable);
  const Var transformed = diff::MatMul(tape, input, weight);
  const Var messages = diff::RowGather(tape, transformed, batch.message_src);
  const Var norm = tape.Constant(batch.gcn_norm);
  const Var agg = diff::SegmentWeightedSum(tape, messages, norm, batch.message_dst,
                                           static_cast<int>(batch.num_nodes()));
  return diff::Relu(tape, agg);
}

Var Model::GatLayer(Tape& tape, Var input, const EgonetBatch& batch, int layer,
                    bool trainable) const {
  const int nodes = static_cast<int>(batch.num_nodes());
  std::vector<Var> heads;
  for (int m = 0; m < config_.heads[layer]; ++m) {
    const std::string key = HeadKey(layer, m);
    const Var transformed = diff::MatMul(tape, input, Read(tape, key + ".weight", trainable));
    // z . [W h_u || W h_v] splits into a per-target and a per-source term.
    const Var self_term = diff::MatMul(tape, transformed, Read(tape, key + ".attn_self", trainable));
    const Var nbr_term =
        diff::MatMul(tape, transformed, Read(tape, key + ".attn_neighbor", trainable));
    const Var logits = diff::Add(tape, diff::RowGather(tape, self_term, batch.message_dst),
                                 diff::RowGather(tape, nbr_term, batch.message_src));
    const Var attention = diff::SegmentSoftmax(
        tape, diff::LeakyRelu(tape, logits, config_.leaky_slope), batch.message_dst, nodes);
    const Var messages = diff::RowGather(tape, transformed, batch.message_src);
    const Var agg = diff::SegmentWeightedSum(tape, messages, attention, batch.message_dst, nodes);
    heads.push_back(diff::Relu(tape, agg));
  }
  return heads.size() == 1 ? heads.front() : diff::ConcatCols(tape, heads);
}

Var Model::Propagate(Tape& tape, const EgonetBatch& batch, bool trainable,
                     RandomStream* dropout_rng) const {
  if (batch.features.cols() != feature_dim_) {
    throw ConfigError("egonet features have dimension " + std::to_string(batch.features.cols()) +
                      ", model expects " + std::to_string(feature_dim_));
  }
  Var h = tape.Constant(batch.features);
  if (dropout_rng != nullptr) h = diff::Dropout(tape, h, config_.dropout, true, *dropout_rng);
  for (int k = 0; k < config_.layers(); ++k) {
    Var input = h;
    if (config_.position_dim > 0) {
      input = WithPositions(tape, h, Read(tape, LayerKey(k) + ".position", trainable), batch);
    }
    h = IsAttention(config_.arch) ? GatLayer(tape, input, batch, k, trainable)
                                  : GcnLayer(tape, input, batch, k, trainable);
  }
  return h;
}

Var Model::Readout(Tape& tape, Var nodes, const EgonetBatch& batch, bool trainable) const {
  const auto n = static_cast<Eigen::Index>(batch.num_nodes());
  if (n == 0 || batch.num_graphs == 0) throw ConfigError("readout: empty node set");
  switch (config_.readout) {
    case ReadoutKind::kMean: {
      Matrix w(n, 1);
      for (Eigen::Index u = 0; u < n; ++u) w(u, 0) = 1.0 / batch.graph_size[batch.graph_of_node[u]];
      return diff::SegmentWeightedSum(tape, nodes, tape.Constant(std::move(w)), batch.graph_of_node,
                                      batch.num_graphs);
    }
    case ReadoutKind::kWeightedMean: {
      // softplus(a_p) / sum softplus(a_p') == segment softmax of log softplus(a_p).
      const Var alpha = Read(tape, "readout.position_weight", trainable);
      const Var per_node = diff::RowGather(tape, alpha, batch.positions);
      const Var log_weight = diff::Log(tape, diff::Softplus(tape, per_node));
      const Var w =
          diff::SegmentSoftmax(tape, log_weight, batch.graph_of_node, batch.num_graphs);
      return diff::SegmentWeightedSum(tape, nodes, w, batch.graph_of_node, batch.num_graphs);
    }
    case ReadoutKind::kConcat: {
      std::vector<Var> parts;
      for (int p = 0; p < kNumPositions; ++p) {
        Matrix w(n, 1);
        for (Eigen::Index u = 0; u < n; ++u) {
          const int g = batch.graph_of_node[u];
          w(u, 0) = batch.positions[u] == p
                        ? 1.0 / batch.position_count[static_cast<std::size_t>(g) * kNumPositions + p]
                        : 0.0;
        }
        parts.push_back(diff::SegmentWeightedSum(tape, nodes, tape.Constant(std::move(w)),
                                                 batch.graph_of_node, batch.num_graphs));
      }
      return diff::ConcatCols(tape, parts);
    }
  }
  throw ConfigError("unknown readout");
}

Var Model::EncodeAnchors(Tape& tape, const EgonetBatch& batch, bool trainable,
                         RandomStream* dropout_rng) const {
  return Readout(tape, Propagate(tape, batch, trainable, dropout_rng), batch, trainable);
}

Var Model::MatchLogits(Tape& tape, Var anchors, Var queries, bool trainable) const {
  const Matrix& a = tape.value(anchors);
  const Matrix& q = tape.value(queries);
  if (a.rows() != q.rows()) throw ConfigError("match: anchor and query row counts differ");
  if (a.cols() != config_.GraphDim() || q.cols() != feature_dim_) {
    throw ConfigError("match: dimension mismatch");
  }
  if (config_.matcher == MatcherKind::kLbm) {
    const Var aw = diff::MatMul(tape, anchors, Read(tape, "match.weight", trainable));
    return diff::RowSum(tape, diff::Mul(tape, aw, queries));
  }
  const Var parts[] = {anchors, queries};
  const Var joint = diff::ConcatCols(tape, parts);
  const Var hidden = diff::LeakyRelu(
      tape,
      diff::AddBias(tape, diff::MatMul(tape, joint, Read(tape, "match.hidden.weight", trainable)),
                    Read(tape, "match.hidden.bias", trainable)),
      config_.leaky_slope);
  return diff::AddBias(tape, diff::MatMul(tape, hidden, Read(tape, "match.out.weight", trainable)),
                       Read(tape, "match.out.bias", trainable));
}

Var Model::LogScore(Tape& tape, Var logits) const {
  if (config_.matcher == MatcherKind::kLbm) return logits;
  // log sigmoid(x) = -softplus(-x)
  return diff::Scale(tape, diff::Softplus(tape, diff::Scale(tape, logits, -1.0)), -1.0);
}

double Model::Logit(const Eigen::Ref<const Eigen::RowVectorXd>& anchor,
                    const Eigen::Ref<const Eigen::RowVectorXd>& query) const {
  if (anchor.size() != config_.GraphDim() || query.size() != feature_dim_) {
    throw ConfigError("match: dimension mismatch");
  }
  if (config_.matcher == MatcherKind::kLbm) {
    return (anchor * params_.at("match.weight").value).dot(query);
  }
  Eigen::RowVectorXd joint(anchor.size() + query.size());
  joint << anchor, query;
  Eigen::RowVectorXd hidden =
      joint * params_.at("match.hidden.weight").value + params_.at("match.hidden.bias").value;
  const double slope = config_.leaky_slope;
  hidden = hidden.unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
  return (hidden * params_.at("match.out.weight").value)(0, 0) +
         params_.at("match.out.bias").value(0, 0);
}

double Model::LogScoreValue(double logit) const {
  return config_.matcher == MatcherKind::kLbm ? logit : -diff::StableSoftplus(-logit);
}

double Model::Score(const Eigen::Ref<const Eigen::RowVectorXd>& anchor,
                    const Eigen::Ref<const Eigen::RowVectorXd>& query) const {
  const double logit = Logit(anchor, query);
  return config_.matcher == MatcherKind::kLbm ? std::exp(logit) : diff::StableSigmoid(logit);
}

Matrix Model::EncodeAnchorsValue(const EgonetBatch& batch) const {
  Tape tape;
  return tape.value(EncodeAnchors(tape, batch, false, nullptr));
}

// --------------------------------------------------------------- checkpoint

json Model::ToJson() const {
  json params = json::object();
  for (const auto& [name, p] : params_) {
    std::vector<double> values(p.value.data(), p.value.data() + p.value.size());
    params[name] = json{{"shape", {p.value.rows(), p.value.cols()}}, {"values", values}};
  }
  return json{{"config", config_.ToJson()}, {"feature_dim", feature_dim_}, {"params", params}};
}

Model Model::FromJson(const json& j) {
  const ModelConfig config = ModelConfig::FromJson(j.at("config"));
  Model model(config, j.at("feature_dim").get<int>(), 0);
  const json& stored = j.at("params");
  if (stored.size() != model.params_.size()) {
    throw DataError("checkpoint has " + std::to_string(stored.size()) + " parameters, config implies " +
                    std::to_string(model.params_.size()));
  }
  for (auto& [name, p] : model.params_) {
    if (!stored.contains(name)) throw DataError("checkpoint is missing parameter '" + name + "'");
    const json& entry = stored.at(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw DataError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    const auto values = entry.at("values").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != p.value.size()) {
      throw DataError("checkpoint parameter '" + name + "' has the wrong value count");
    }
    std::copy(values.begin(), values.end(), p.value.data());
  }
  model.ZeroGrad();
  return model;
}

void SaveCheckpoint(const std::filesystem::path& path, const Model& model, const json& extra) {
  json j = model.ToJson();
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Model LoadCheckpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (extra) {
    *extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "config" && it.key() != "feature_dim" && it.key() != "params") {
        (*extra)[it.key()] = it.value();
      }
    }
  }
  try {
    return Model::FromJson(j);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace taxoexpan
