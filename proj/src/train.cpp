#include "taxoexpan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace taxoexpan {

using diff::Tape;
using diff::Var;
using nlohmann::json;

std::string ToString(LossKind kind) { return kind == LossKind::kInfoNce ? "infonce" : "bce"; }

LossKind ParseLoss(const std::string& text) {
  std::string s = text;
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "infonce") return LossKind::kInfoNce;
  if (s == "bce") return LossKind::kBce;
  throw ConfigError("unknown loss '" + text + "' (infonce, bce)");
}

// ------------------------------------------------------------------ config

void TrainConfig::Validate() const {
  if (negatives < 1) throw ConfigError("negatives must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (scheduler_patience < 0 || early_stop_patience < 1) throw ConfigError("patience out of range");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw ConfigError("lr_factor must lie in (0,1]");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

json TrainConfig::ToJson() const {
  return json{{"negatives", negatives},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"scheduler_patience", scheduler_patience},
              {"lr_factor", lr_factor},
              {"max_epochs", max_epochs},
              {"early_stop_patience", early_stop_patience},
              {"loss", ToString(loss)},
              {"seed", seed},
              {"max_siblings", max_siblings}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  if (j.contains("negatives")) c.negatives = j.at("negatives").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("scheduler_patience")) c.scheduler_patience = j.at("scheduler_patience").get<int>();
  if (j.contains("lr_factor")) c.lr_factor = j.at("lr_factor").get<double>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("early_stop_patience")) c.early_stop_patience = j.at("early_stop_patience").get<int>();
  if (j.contains("loss")) c.loss = ParseLoss(j.at("loss").get<std::string>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  if (j.contains("max_siblings")) c.max_siblings = j.at("max_siblings").get<std::size_t>();
  return c;
}

// -------------------------------------------------------------- negatives

NegativeSampler::NegativeSampler(const Taxonomy& taxonomy)
    : taxonomy_(&taxonomy), excluded_(taxonomy.size()) {
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const auto id = static_cast<ConceptId>(i);
    auto ex = taxonomy.Descendants(id);
    ex.insert(ex.end(), taxonomy.parents(id).begin(), taxonomy.parents(id).end());
    ex.push_back(id);
    std::sort(ex.begin(), ex.end());
    excluded_[i] = std::move(ex);
  }
}

const std::vector<ConceptId>& NegativeSampler::Excluded(ConceptId query) const {
  if (query < 0 || static_cast<std::size_t>(query) >= excluded_.size()) {
    throw DataError("unknown concept id " + std::to_string(query));
  }
  return excluded_[query];
}

std::size_t NegativeSampler::EligibleCount(ConceptId query) const {
  return taxonomy_->size() - Excluded(query).size();
}

std::vector<ConceptId> NegativeSampler::Sample(ConceptId query, int count, RandomStream& rng) const {
  const auto& ex = Excluded(query);
  const std::size_t n = taxonomy_->size();
  const std::size_t eligible = n - ex.size();
  if (count < 0 || eligible < static_cast<std::size_t>(count)) {
    throw DataError("query '" + taxonomy_->name(query) + "' has only " + std::to_string(eligible) +
                    " eligible negatives, " + std::to_string(count) + " requested");
  }
  std::vector<ConceptId> out;
  out.reserve(static_cast<std::size_t>(count));
  if (static_cast<std::size_t>(count) * 4 <= eligible) {
    // Rejection sampling: each accepted draw is uniform over the remaining
    // eligible ids, so the sample is uniform without replacement.
    while (out.size() < static_cast<std::size_t>(count)) {
      const auto c = static_cast<ConceptId>(rng.Below(n));
      if (std::binary_search(ex.begin(), ex.end(), c)) continue;
      if (std::find(out.begin(), out.end(), c) != out.end()) continue;
      out.push_back(c);
    }
    return out;
  }
  std::vector<ConceptId> pool;
  pool.reserve(eligible);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<ConceptId>(i);
    if (!std::binary_search(ex.begin(), ex.end(), c)) pool.push_back(c);
  }
  for (int i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.Below(pool.size() - i)]);
    out.push_back(pool[i]);
  }
  return out;
}

std::vector<TrainInstance> GenerateInstances(const Taxonomy& taxonomy,
                                             const NegativeSampler& sampler, int negatives,
                                             RandomStream& rng) {
  std::vector<TrainInstance> out;
  out.reserve(taxonomy.edge_count());
  for (const Edge& e : taxonomy.edges()) {
    out.push_back({e.child, e.parent, sampler.Sample(e.child, negatives, rng)});
  }
  return out;
}

// ------------------------------------------------------------------ losses

double InfoNceLoss(std::span<const double> scores, std::size_t positive) {
  if (positive >= scores.size()) throw ConfigError("positive index out of range");
  std::vector<double> logs;
  logs.reserve(scores.size());
  for (double s : scores) {
    if (!(s > 0.0)) throw DataError("InfoNCE scores must be positive");
    logs.push_back(std::log(s));
  }
  return InfoNceLossFromLogScores(logs, positive);
}

double InfoNceLossFromLogScores(std::span<const double> log_scores, std::size_t positive) {
  if (positive >= log_scores.size()) throw ConfigError("positive index out of range");
  const double mx = *std::max_element(log_scores.begin(), log_scores.end());
  double sum = 0.0;
  for (double l : log_scores) sum += std::exp(l - mx);
  return mx + std::log(sum) - log_scores[positive];
}

double BceLoss(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw ConfigError("bce: probabilities and labels must be non-empty and aligned");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities[i];
    // 0 * log(0) is taken as 0.
    if (labels[i]) {
      total -= p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    } else {
      total -= p < 1.0 ? std::log1p(-p) : -std::numeric_limits<double>::infinity();
    }
  }
  return total / static_cast<double>(labels.size());
}

Var InfoNceTape(Tape& tape, Var log_scores, const diff::Segments& instance_of_row,
                int num_instances, std::span<const int> positive_rows) {
  const Var log_probs = diff::SegmentLogSoftmax(tape, log_scores, instance_of_row, num_instances);
  const Var positives = diff::RowGather(tape, log_probs, positive_rows);
  return diff::Scale(tape, diff::Mean(tape, positives), -1.0);
}

Var BceTape(Tape& tape, Var logits, std::span<const int> labels) {
  const Matrix& x = tape.value(logits);
  if (x.rows() != static_cast<Eigen::Index>(labels.size()) || x.cols() != 1) {
    throw ConfigError("bce: one label per logit row required");
  }
  // -log sigmoid(x) = softplus(-x) for positives, softplus(x) for negatives.
  Matrix sign(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) sign(i, 0) = labels[i] ? -1.0 : 1.0;
  return diff::Mean(tape, diff::Softplus(tape, diff::Mul(tape, logits, tape.Constant(sign))));
}

// ---------------------------------------------------------------- optimizer

void Adam::Step(ParamMap& params) {
  ++steps_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& [name, p] : params) {
    if (p.grad.size() != p.value.size()) continue;
    auto [it, inserted] = moments_.try_emplace(name);
    Moments& m = it->second;
    if (inserted) {
      m.first.setZero(p.value.rows(), p.value.cols());
      m.second.setZero(p.value.rows(), p.value.cols());
    }
    m.first = beta1_ * m.first + (1.0 - beta1_) * p.grad;
    m.second = beta2_ * m.second + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const double step = lr_ / bias1;
    const double inv_sqrt_bias2 = 1.0 / std::sqrt(bias2);
    p.value.array() -=
        step * m.first.array() / ((m.second.array().sqrt() * inv_sqrt_bias2) + eps_);
  }
}

namespace {

json MatrixToJson(const Matrix& m) {
  return json{{"shape", {m.rows(), m.cols()}},
              {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix MatrixFromJson(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(values.size())) {
    throw DataError("malformed matrix in training state");
  }
  Matrix m(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

}  // namespace

json Adam::ToJson() const {
  json moments = json::object();
  for (const auto& [name, m] : moments_) {
    moments[name] = json{{"first", MatrixToJson(m.first)}, {"second", MatrixToJson(m.second)}};
  }
  return json{{"lr", lr_},       {"beta1", beta1_}, {"beta2", beta2_},
              {"eps", eps_},     {"steps", steps_}, {"moments", moments}};
}

Adam Adam::FromJson(const json& j) {
  Adam a(j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
         j.at("eps").get<double>());
  a.steps_ = j.at("steps").get<long>();
  for (auto it = j.at("moments").begin(); it != j.at("moments").end(); ++it) {
    a.moments_[it.key()] = {MatrixFromJson(it.value().at("first")),
                            MatrixFromJson(it.value().at("second"))};
  }
  return a;
}

bool ReduceLrOnPlateau::Step(double metric, Adam& optimizer) {
  // Relative threshold 1e-4, as in the common ReduceLROnPlateau default.
  if (!best_ || metric > *best_ + 1e-4 * std::abs(*best_)) {
    best_ = metric;
    bad_epochs_ = 0;
    return true;
  }
  if (++bad_epochs_ > patience_) {
    optimizer.set_learning_rate(optimizer.learning_rate() * factor_);
    bad_epochs_ = 0;
  }
  return false;
}

json ReduceLrOnPlateau::ToJson() const {
  json j{{"factor", factor_}, {"patience", patience_}, {"bad_epochs", bad_epochs_}};
  j["best"] = best_ ? json(*best_) : json(nullptr);
  return j;
}

ReduceLrOnPlateau ReduceLrOnPlateau::FromJson(const json& j) {
  ReduceLrOnPlateau s(j.at("factor").get<double>(), j.at("patience").get<int>());
  s.bad_epochs_ = j.at("bad_epochs").get<int>();
  if (!j.at("best").is_null()) s.best_ = j.at("best").get<double>();
  return s;
}

// ---------------------------------------------------------------- training

Var BatchObjective(Tape& tape, const Model& model, const Taxonomy& taxonomy,
                   std::span<const TrainInstance> batch, LossKind loss, RandomStream* dropout_rng,
                   const EgonetOptions& egonet_options) {
  if (batch.empty()) throw ConfigError("empty training batch");
  // Distinct egonets in first-seen order. The positive egonet leaves out the
  // query itself, so it is keyed by (anchor, query).
  std::map<std::pair<ConceptId, ConceptId>, int> slot;
  std::vector<ConceptId> anchors;
  std::vector<ConceptId> excluded;
  auto intern = [&](ConceptId a, ConceptId exclude) {
    auto [it, inserted] = slot.emplace(std::make_pair(a, exclude), static_cast<int>(anchors.size()));
    if (inserted) {
      anchors.push_back(a);
      excluded.push_back(exclude);
    }
    return it->second;
  };
  std::vector<int> row_anchor;
  diff::Segments instance_of_row;
  std::vector<int> positive_rows;
  std::vector<int> labels;
  std::vector<ConceptId> row_query;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainInstance& inst = batch[i];
    positive_rows.push_back(static_cast<int>(row_anchor.size()));
    const bool is_child = taxonomy.has_edge(inst.positive, inst.query);
    row_anchor.push_back(intern(inst.positive, is_child ? inst.query : -1));
    instance_of_row.push_back(static_cast<int>(i));
    labels.push_back(1);
    row_query.push_back(inst.query);
    for (ConceptId n : inst.negatives) {
      row_anchor.push_back(intern(n, -1));
      instance_of_row.push_back(static_cast<int>(i));
      labels.push_back(0);
      row_query.push_back(inst.query);
    }
  }
  const EgonetBatch egonets = BatchAnchors(taxonomy, anchors, excluded, egonet_options);
  const Var reps = model.EncodeAnchors(tape, egonets, true, dropout_rng);
  const Var pair_reps = diff::RowGather(tape, reps, row_anchor);
  Matrix queries(static_cast<Eigen::Index>(row_query.size()), taxonomy.dimension());
  for (std::size_t r = 0; r < row_query.size(); ++r) {
    queries.row(static_cast<Eigen::Index>(r)) = taxonomy.embedding(row_query[r]);
  }
  const Var logits = model.MatchLogits(tape, pair_reps, tape.Constant(std::move(queries)), true);
  if (loss == LossKind::kInfoNce) {
    return InfoNceTape(tape, model.LogScore(tape, logits), instance_of_row,
                       static_cast<int>(batch.size()), positive_rows);
  }
  return BceTape(tape, logits, labels);
}

double TrainStep(Model& model, Adam& optimizer, const Taxonomy& taxonomy,
                 std::span<const TrainInstance> batch, LossKind loss, RandomStream* dropout_rng,
                 const EgonetOptions& egonet_options) {
  Tape tape;
  model.ZeroGrad();
  const Var objective =
      BatchObjective(tape, model, taxonomy, batch, loss, dropout_rng, egonet_options);
  const double value = tape.value(objective)(0, 0);
  if (!std::isfinite(value)) throw NumericalError("training loss diverged (non-finite)");
  tape.Backward(objective);
  optimizer.Step(model.params());
  return value;
}

json EpochLog::ToJson() const {
  json j{{"epoch", epoch}, {"train_loss", train_loss}};
  if (validation) {
    j["val_MR"] = validation->mean_rank;
    j["val_Hit@1"] = validation->hit1;
    j["val_Hit@3"] = validation->hit3;
    j["val_MRR"] = validation->mrr;
  } else {
    j["val_MR"] = nullptr;
    j["val_Hit@1"] = nullptr;
    j["val_Hit@3"] = nullptr;
    j["val_MRR"] = nullptr;
  }
  j["lr"] = learning_rate;
  return j;
}

json TrainingState::ToJson() const {
  return json{{"optimizer", optimizer.ToJson()},
              {"scheduler", scheduler.ToJson()},
              {"epochs_done", epochs_done},
              {"best_metric", best_metric}};
}

TrainingState TrainingState::FromJson(Model model, const json& j) {
  TrainingState s;
  s.model = std::move(model);
  s.optimizer = Adam::FromJson(j.at("optimizer"));
  s.scheduler = ReduceLrOnPlateau::FromJson(j.at("scheduler"));
  s.epochs_done = j.at("epochs_done").get<int>();
  s.best_metric = j.at("best_metric").get<double>();
  return s;
}

FitResult Fit(const TaxonomySplit& split, const ModelConfig& model_config,
              const TrainConfig& cfg, const FitOptions& options) {
  cfg.Validate();
  model_config.Validate();
  const Taxonomy& existing = split.existing;
  if (existing.size() == 0) throw DataError("cannot train on an empty taxonomy");

  if (existing.edge_count() == 0) throw DataError("taxonomy has no edges to learn from");
  const NegativeSampler sampler(existing);
  const EgonetOptions egonet_options{cfg.max_siblings, cfg.seed};

  TrainingState state;
  if (options.resume) {
    state = *options.resume;
    if (state.model.feature_dim() != existing.dimension()) {
      throw DataError("resumed model expects a different feature dimension");
    }
  } else {
    state.model = Model(model_config, existing.dimension(), cfg.seed);
    state.optimizer = Adam(cfg.learning_rate);
    state.scheduler = ReduceLrOnPlateau(cfg.lr_factor, cfg.scheduler_patience);
    state.best_metric = -std::numeric_limits<double>::infinity();
  }

  FitResult result;
  result.model = state.model;
  result.state = state;
  result.best_epoch = state.epochs_done;
  const RandomStream root(cfg.seed);
  int stale_epochs = 0;
  const int first_epoch = state.epochs_done + 1;
  for (int epoch = first_epoch; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    RandomStream epoch_rng = root.Split("epoch").Split(static_cast<std::uint64_t>(epoch));
    RandomStream sample_rng = epoch_rng.Split("negatives");
    RandomStream order_rng = epoch_rng.Split("order");
    RandomStream dropout_rng = epoch_rng.Split("dropout");
    std::vector<TrainInstance> instances =
        GenerateInstances(existing, sampler, cfg.negatives, sample_rng);
    for (std::size_t i = instances.size(); i > 1; --i) {
      std::swap(instances[i - 1], instances[order_rng.Below(i)]);
    }

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < instances.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(instances.size(), begin + cfg.batch_size);
      const std::span<const TrainInstance> batch(instances.data() + begin, end - begin);
      RandomStream* dropout = model_config.dropout > 0.0 ? &dropout_rng : nullptr;
      loss_sum += TrainStep(state.model, state.optimizer, existing, batch, cfg.loss, dropout,
                            egonet_options) *
                  static_cast<double>(batch.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(instances.size());
    if (!std::isfinite(entry.train_loss)) throw NumericalError("training loss diverged (non-finite)");
    double metric = -entry.train_loss;
    if (!split.validation.empty()) {
      const AnchorCache cache = BuildAnchorCache(existing, state.model, egonet_options, cfg.threads);
      const auto ranks = CollectGoldRanks(RankQueries(split.validation, cache, state.model, cfg.threads));
      entry.validation = ComputeRankMetrics(ranks);
      metric = entry.validation->mrr;
    }
    entry.learning_rate = state.optimizer.learning_rate();
    const bool improved_on_plateau = metric > state.best_metric;
    state.scheduler.Step(metric, state.optimizer);
    state.epochs_done = epoch;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);

    if (improved_on_plateau) {
      state.best_metric = metric;
      result.model = state.model;
      result.state = state;
      result.best_epoch = epoch;
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.early_stop_patience) {
      break;
    }
  }
  result.state.epochs_done = state.epochs_done;
  return result;
}

}  // namespace taxoexpan
