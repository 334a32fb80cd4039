#include "taxoexpan/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "taxoexpan/clean.hpp"
#include "taxoexpan/gradcheck.hpp"
#include "taxoexpan/inference.hpp"
#include "taxoexpan/parallel.hpp"
#include "taxoexpan/train.hpp"

namespace taxoexpan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json Versions() {
  return json{{"taxoexpan", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void WriteManifest(const fs::path& path, const std::string& command, const json& config,
                   std::uint64_t seed, const json& inputs) {
  json m{{"command", command},
         {"config", config},
         {"seed", seed},
         {"inputs", inputs},
         {"versions", Versions()}};
  WriteText(path, m.dump(2) + "\n");
}

// Flags shared by every command that builds or trains a model. Unset flags
// leave the config-file (or default) value in place.
struct ModelFlags {
  std::optional<std::string> arch, readout, matcher, loss;
  std::vector<int> heads, hidden;
  std::optional<int> position_dim, mlp_hidden;
  std::optional<double> dropout;
  std::optional<int> negatives, batch_size, epochs, scheduler_patience, early_stop;
  std::optional<double> lr, lr_factor;
  std::optional<std::size_t> max_siblings;

  void Register(CLI::App* app) {
    app->add_option("--arch", arch, "gcn, gat, pgcn or pgat");
    app->add_option("--heads", heads, "attention heads per layer");
    app->add_option("--hidden", hidden, "hidden size per layer (per head)");
    app->add_option("--position-dim", position_dim, "position embedding size (0 for gcn/gat)");
    app->add_option("--readout", readout, "mean, wmr or cr");
    app->add_option("--matcher", matcher, "lbm or mlp");
    app->add_option("--mlp-hidden", mlp_hidden, "MLP matcher hidden size");
    app->add_option("--dropout", dropout, "input feature dropout rate");
    app->add_option("--loss", loss, "infonce or bce");
    app->add_option("--negatives", negatives, "negatives per instance");
    app->add_option("--batch-size", batch_size, "edges per batch");
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--lr-factor", lr_factor, "plateau decay factor");
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--scheduler-patience", scheduler_patience, "plateau patience in epochs");
    app->add_option("--early-stop", early_stop, "early stopping patience in epochs");
    app->add_option("--max-siblings", max_siblings, "children kept per egonet");
  }

  void Apply(ModelConfig& m, TrainConfig& t) const {
    if (arch) {
      const bool was_pe = IsPositionEnhanced(m.arch);
      m.arch = ParseArch(*arch);
      if (!IsPositionEnhanced(m.arch)) {
        m.position_dim = 0;
      } else if (!was_pe && m.position_dim == 0) {
        m.position_dim = ModelConfig{}.position_dim;
      }
    }
    if (!heads.empty()) m.heads = heads;
    if (!hidden.empty()) m.hidden = hidden;
    if (position_dim) m.position_dim = *position_dim;
    if (readout) m.readout = ParseReadout(*readout);
    if (matcher) m.matcher = ParseMatcher(*matcher);
    if (mlp_hidden) m.mlp_hidden = *mlp_hidden;
    if (dropout) m.dropout = *dropout;
    if (loss) t.loss = ParseLoss(*loss);
    if (negatives) t.negatives = *negatives;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.learning_rate = *lr;
    if (lr_factor) t.lr_factor = *lr_factor;
    if (epochs) t.max_epochs = *epochs;
    if (scheduler_patience) t.scheduler_patience = *scheduler_patience;
    if (early_stop) t.early_stop_patience = *early_stop;
    if (max_siblings) t.max_siblings = *max_siblings;
  }
};

struct Common {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  int threads = DefaultThreads();

  void Register(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config with \"model\" and \"train\" objects");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  // Config file first, then flags.
  std::pair<ModelConfig, TrainConfig> Resolve(const ModelFlags& flags) const {
    ModelConfig model;
    TrainConfig train;
    if (config_path) {
      json j;
      try {
        j = ReadJsonFile(*config_path);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      try {
        if (j.contains("model")) model = ModelConfig::FromJson(j.at("model"));
        if (j.contains("train")) train = TrainConfig::FromJson(j.at("train"));
      } catch (const json::exception& e) {
        throw ConfigError("bad config " + *config_path + ": " + e.what());
      }
    }
    flags.Apply(model, train);
    if (seed) train.seed = *seed;
    train.threads = threads;
    model.Validate();
    train.Validate();
    return {model, train};
  }
};

json ConfigJson(const ModelConfig& model, const TrainConfig& train) {
  return json{{"model", model.ToJson()}, {"train", train.ToJson()}};
}

std::string JoinNames(const Taxonomy& t, std::span<const ConceptId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += '|';
    out += t.name(ids[i]);
  }
  return out;
}

std::string RankLine(const Taxonomy& t, const QueryConcept& q, const RankResult& r) {
  std::string ranks;
  for (std::size_t i = 0; i < r.gold_ranks.size(); ++i) {
    if (i) ranks += '|';
    ranks += std::to_string(r.gold_ranks[i]);
  }
  const auto top = r.Top(10);
  return q.name + '\t' + ranks + '\t' + JoinNames(t, top) + '\n';
}

// ------------------------------------------------------------------ split

struct SplitArgs {
  std::string taxonomy, embeddings, out;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
};

int CmdSplit(const SplitArgs& a, const Common& common) {
  const std::uint64_t seed = common.seed.value_or(0);
  const Taxonomy t = LoadTaxonomy(a.taxonomy, a.embeddings);
  const TaxonomySplit split = MaskLeaves(t, a.val_ratio, a.test_ratio, seed);
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  WriteSplit(out, split);
  WriteManifest(out.string() + ".manifest.json", "split",
                json{{"val_ratio", a.val_ratio}, {"test_ratio", a.test_ratio}}, seed,
                json{{"taxonomy", a.taxonomy}, {"embeddings", a.embeddings}});
  std::cout << "existing nodes " << split.existing.size() << ", edges "
            << split.existing.edge_count() << ", validation " << split.validation.size()
            << ", test " << split.test.size() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string split, embeddings, out_dir;
  std::optional<std::string> resume;
};

int CmdTrain(const TrainArgs& a, const Common& common, const ModelFlags& flags) {
  auto [model_config, train_config] = common.Resolve(flags);
  const EmbeddingTable table = LoadEmbeddings(a.embeddings);
  const TaxonomySplit split = LoadSplit(a.split, table);
  FitOptions options;
  if (a.resume) {
    json extra;
    Model model = LoadCheckpoint(*a.resume, &extra);
    if (!extra.contains("training_state")) {
      throw DataError("checkpoint " + *a.resume + " has no training state to resume from");
    }
    // The checkpoint's architecture wins over config and flags.
    model_config = model.config();
    options.resume = TrainingState::FromJson(std::move(model), extra.at("training_state"));
  }
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
  options.on_epoch = [&](const EpochLog& e) {
    log << e.ToJson().dump() << '\n';
    log.flush();
    std::cerr << "epoch " << e.epoch << " loss " << e.train_loss;
    if (e.validation) std::cerr << " val_MRR " << e.validation->mrr;
    std::cerr << " lr " << e.learning_rate << "\n";
  };
  const FitResult result = Fit(split, model_config, train_config, options);
  const json config = ConfigJson(model_config, train_config);
  SaveCheckpoint(dir / "checkpoint.json", result.model,
                 json{{"training_state", result.state.ToJson()},
                      {"best_epoch", result.best_epoch},
                      {"train_config", train_config.ToJson()}});
  WriteManifest(dir / "manifest.json", "train", config, train_config.seed,
                json{{"split", a.split},
                     {"embeddings", a.embeddings},
                     {"resume", a.resume ? json(*a.resume) : json(nullptr)}});
  std::cout << "best epoch " << result.best_epoch << " of " << result.state.epochs_done << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string split, embeddings, checkpoint, out_dir;
  std::string set = "test";
  bool baselines = false;
  bool semeval = false;
};

void AddWup(MetricsReport& report, const Taxonomy& t, std::span<const QueryConcept> queries,
            std::span<const RankResult> results) {
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const ConceptId predicted = results[i].ranking.front().anchor;
    double best = 0.0;
    for (ConceptId g : queries[i].gold_parents) best = std::max(best, WuPalmer(t, predicted, g));
    total += best;
  }
  report.has_wup = true;
  report.wup = total / static_cast<double>(queries.size());
  const RecallF1 rf = RecallAndF1(queries.size(), queries.size(), report.wup);
  report.recall = rf.recall;
  report.f1 = rf.f1;
}

int CmdEval(const EvalArgs& a, const Common& common) {
  const EmbeddingTable table = LoadEmbeddings(a.embeddings);
  const TaxonomySplit split = LoadSplit(a.split, table);
  const std::vector<QueryConcept>& queries = a.set == "validation" ? split.validation : split.test;
  if (queries.empty()) throw DataError("split has no " + a.set + " queries");
  json extra;
  const Model model = LoadCheckpoint(a.checkpoint, &extra);
  TrainConfig train_config;
  if (extra.contains("train_config")) train_config = TrainConfig::FromJson(extra.at("train_config"));
  const EgonetOptions egonet_options{train_config.max_siblings, train_config.seed};
  const Taxonomy& t = split.existing;

  const AnchorCache cache = BuildAnchorCache(t, model, egonet_options, common.threads);
  const auto results = RankQueries(queries, cache, model, common.threads);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  json metrics;
  auto report_for = [&](const std::vector<RankResult>& rs, const std::string& file) {
    MetricsReport r = ComputeRankMetrics(CollectGoldRanks(rs));
    if (a.semeval) AddWup(r, t, queries, rs);
    std::string lines;
    for (std::size_t i = 0; i < queries.size(); ++i) lines += RankLine(t, queries[i], rs[i]);
    WriteText(dir / file, lines);
    return r.ToJson();
  };
  metrics["model"] = report_for(results, "ranks.tsv");
  if (a.baselines) {
    std::vector<RankResult> cp(queries.size());
    std::vector<RankResult> cn(queries.size());
    ParallelFor(queries.size(), common.threads, [&](std::size_t i) {
      cp[i] = ClosestParent(queries[i].embedding.transpose(), t, queries[i].gold_parents);
      cn[i] = ClosestNeighbor(queries[i].embedding.transpose(), t, queries[i].gold_parents);
    });
    metrics["closest_parent"] = report_for(cp, "ranks_closest_parent.tsv");
    metrics["closest_neighbor"] = report_for(cn, "ranks_closest_neighbor.tsv");
  }
  WriteText(dir / "metrics.json", metrics.dump(2) + "\n");
  WriteManifest(dir / "manifest.json", "eval",
                json{{"set", a.set}, {"baselines", a.baselines}, {"semeval", a.semeval},
                     {"model", model.config().ToJson()}},
                train_config.seed,
                json{{"split", a.split}, {"embeddings", a.embeddings}, {"checkpoint", a.checkpoint}});
  std::cout << metrics.dump(2) << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- expand

struct ExpandArgs {
  std::string taxonomy, embeddings, queries, checkpoint, out_dir;
  std::size_t top_k = 1;
};

int CmdExpand(const ExpandArgs& a, const Common& common) {
  const EmbeddingTable table = LoadEmbeddings(a.embeddings);
  const Taxonomy t = LoadTaxonomy(a.taxonomy, table);
  std::ifstream in(a.queries);
  if (!in) throw DataError("cannot open " + a.queries);
  std::vector<NewConcept> queries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    queries.push_back({line, table.at(line)});
  }
  json extra;
  const Model model = LoadCheckpoint(a.checkpoint, &extra);
  TrainConfig train_config;
  if (extra.contains("train_config")) train_config = TrainConfig::FromJson(extra.at("train_config"));
  const EgonetOptions egonet_options{train_config.max_siblings, train_config.seed};
  const AnchorCache cache = BuildAnchorCache(t, model, egonet_options, common.threads);
  const Expansion expansion = Expand(t, queries, cache, model, a.top_k, common.threads);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  WriteEdges(dir / "expanded_edges.tsv", expansion.taxonomy);
  std::string lines;
  for (const Placement& p : expansion.placements) {
    lines += p.query + '\t' + JoinNames(t, p.candidates) + '\n';
  }
  WriteText(dir / "placements.tsv", lines);
  WriteManifest(dir / "manifest.json", "expand",
                json{{"top_k", a.top_k}, {"model", model.config().ToJson()}}, train_config.seed,
                json{{"taxonomy", a.taxonomy},
                     {"embeddings", a.embeddings},
                     {"queries", a.queries},
                     {"checkpoint", a.checkpoint}});
  std::cout << "placed " << queries.size() << " concepts; " << expansion.taxonomy.edge_count()
            << " edges\n";
  return kExitOk;
}

// ------------------------------------------------------------------ clean

struct CleanArgs {
  std::string taxonomy, embeddings, out;
  int folds = 5;
  double threshold = 1000;
  std::size_t top = 5;
  std::size_t max_report = 0;
};

int CmdClean(const CleanArgs& a, const Common& common, const ModelFlags& flags) {
  const auto [model_config, train_config] = common.Resolve(flags);
  const Taxonomy t = LoadTaxonomy(a.taxonomy, a.embeddings);
  CleanOptions options;
  options.folds = a.folds;
  options.threshold_rank = a.threshold;
  options.top_suggestions = a.top;
  options.max_report = a.max_report;
  options.seed = train_config.seed;
  const CleanReport report = SelfClean(t, model_config, train_config, options);
  std::string lines = "leaf\tparent\trank\tsuggestions\n";
  for (const CleanEntry& e : report.entries) {
    lines += t.name(e.leaf) + '\t' + t.name(e.parent) + '\t' + std::to_string(e.rank) + '\t' +
             JoinNames(t, e.suggestions) + '\n';
  }
  WriteText(a.out, lines);
  json config = ConfigJson(model_config, train_config);
  config["clean"] = json{{"folds", a.folds},
                         {"threshold", a.threshold},
                         {"top", a.top},
                         {"max_report", a.max_report}};
  WriteManifest(a.out + ".manifest.json", "clean", config, train_config.seed,
                json{{"taxonomy", a.taxonomy}, {"embeddings", a.embeddings}});
  std::cout << "evaluated " << report.leaves_evaluated << " leaves, flagged "
            << report.entries.size() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int seeds = 10;
  double tolerance = 1e-4;
  bool verbose = false;
};

int CmdGradcheck(const GradcheckArgs& a) {
  GradCheckOptions options;
  options.seeds = a.seeds;
  options.tolerance = a.tolerance;
  const auto results = RunGradientChecks(options);
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    if (!r.passed) ++failed;
    if (a.verbose || !r.passed) {
      std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << " seed " << r.seed << " max_err "
                << r.max_error << " checked " << r.checked << " skipped " << r.skipped << "\n";
    }
  }
  std::cout << results.size() - failed << "/" << results.size()
            << " gradient checks passed, worst relative error " << worst << "\n";
  return failed == 0 ? kExitOk : kExitNumerical;
}

}  // namespace

int RunCli(int argc, char** argv) {
  CLI::App app{"Taxonomy expansion with position-enhanced graph neural networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  ModelFlags flags;

  SplitArgs split_args;
  CLI::App* split = app.add_subcommand("split", "mask leaves into validation/test queries");
  split->add_option("--taxonomy", split_args.taxonomy, "parent<TAB>child edge file")->required();
  split->add_option("--embeddings", split_args.embeddings, "word2vec text embeddings")->required();
  split->add_option("--out", split_args.out, "split file to write")->required();
  split->add_option("--val-ratio", split_args.val_ratio, "fraction of leaves for validation");
  split->add_option("--test-ratio", split_args.test_ratio, "fraction of leaves for test");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "self-supervised training");
  train->add_option("--split", train_args.split, "split file")->required();
  train->add_option("--embeddings", train_args.embeddings, "word2vec text embeddings")->required();
  train->add_option("--out-dir", train_args.out_dir, "checkpoint/log directory")->required();
  train->add_option("--resume", train_args.resume, "checkpoint to continue from");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "rank held-out queries and report metrics");
  eval->add_option("--split", eval_args.split, "split file")->required();
  eval->add_option("--embeddings", eval_args.embeddings, "word2vec text embeddings")->required();
  eval->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
  eval->add_option("--out-dir", eval_args.out_dir, "output directory")->required();
  eval->add_option("--set", eval_args.set, "test or validation")
      ->check(CLI::IsMember({"test", "validation"}));
  eval->add_flag("--baselines", eval_args.baselines, "also run Closest-Parent/Closest-Neighbor");
  eval->add_flag("--semeval", eval_args.semeval, "also report Wu&P, recall and F1");

  ExpandArgs expand_args;
  CLI::App* expand = app.add_subcommand("expand", "attach new concepts to a taxonomy");
  expand->add_option("--taxonomy", expand_args.taxonomy, "existing edge file")->required();
  expand->add_option("--embeddings", expand_args.embeddings,
                     "embeddings for existing and new concepts")->required();
  expand->add_option("--queries", expand_args.queries, "new concept names, one per line")->required();
  expand->add_option("--checkpoint", expand_args.checkpoint, "trained checkpoint")->required();
  expand->add_option("--out-dir", expand_args.out_dir, "output directory")->required();
  expand->add_option("--top-k", expand_args.top_k, "candidate parents reported per query")
      ->check(CLI::PositiveNumber);

  CleanArgs clean_args;
  CLI::App* clean = app.add_subcommand("clean", "flag questionable leaf-parent edges");
  clean->add_option("--taxonomy", clean_args.taxonomy, "edge file")->required();
  clean->add_option("--embeddings", clean_args.embeddings, "word2vec text embeddings")->required();
  clean->add_option("--out", clean_args.out, "report TSV")->required();
  clean->add_option("--folds", clean_args.folds, "number of leaf folds");
  clean->add_option("--threshold", clean_args.threshold, "flag parents ranked worse than this");
  clean->add_option("--top", clean_args.top, "suggested parents per flagged edge");
  clean->add_option("--max-report", clean_args.max_report, "report length (0 = all)");

  GradcheckArgs gradcheck_args;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seeds", gradcheck_args.seeds, "random seeds per check");
  gradcheck->add_option("--tolerance", gradcheck_args.tolerance, "maximum relative error");
  gradcheck->add_flag("-v,--verbose", gradcheck_args.verbose, "print every check");

  for (CLI::App* sub : {split, train, eval, expand, clean}) common.Register(sub);
  for (CLI::App* sub : {train, clean}) flags.Register(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*split) return CmdSplit(split_args, common);
    if (*train) return CmdTrain(train_args, common, flags);
    if (*eval) return CmdEval(eval_args, common);
    if (*expand) return CmdExpand(expand_args, common);
    if (*clean) return CmdClean(clean_args, common, flags);
    if (*gradcheck) return CmdGradcheck(gradcheck_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace taxoexpan
