#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "taxoexpan/gradcheck.hpp"
#include "taxoexpan/inference.hpp"
#include "taxoexpan/synthetic.hpp"
#include "taxoexpan/train.hpp"

namespace py = pybind11;
using namespace taxoexpan;

namespace {

// Configs cross the boundary as JSON text; the Python side wraps dicts.
ModelConfig ModelCfg(const std::string& text) {
  return ModelConfig::FromJson(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

TrainConfig TrainCfg(const std::string& text) {
  return TrainConfig::FromJson(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

std::vector<std::pair<std::string, double>> Named(const Taxonomy& t, const RankResult& r, std::size_t k) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < std::min(k, r.ranking.size()); ++i) {
    out.emplace_back(t.name(r.ranking[i].anchor), r.ranking[i].score);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Taxonomy expansion with position-enhanced graph neural networks";

  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Taxonomy>(m, "Taxonomy")
      .def_property_readonly("size", &Taxonomy::size)
      .def_property_readonly("edge_count", &Taxonomy::edge_count)
      .def_property_readonly("dimension", &Taxonomy::dimension)
      .def_property_readonly("names", &Taxonomy::names)
      .def_property_readonly("embeddings", &Taxonomy::embeddings)
      .def("edges",
           [](const Taxonomy& t) {
             std::vector<std::pair<std::string, std::string>> out;
             for (const Edge& e : t.edges()) out.emplace_back(t.name(e.parent), t.name(e.child));
             return out;
           })
      .def("find", &Taxonomy::find)
      .def("depth", &Taxonomy::Depth)
      .def("parents", [](const Taxonomy& t, ConceptId id) {
        return std::vector<ConceptId>(t.parents(id).begin(), t.parents(id).end());
      })
      .def("children", [](const Taxonomy& t, ConceptId id) {
        return std::vector<ConceptId>(t.children(id).begin(), t.children(id).end());
      })
      .def("leaves", &Taxonomy::leaves)
      .def("__len__", &Taxonomy::size);

  m.def("load_taxonomy",
        py::overload_cast<const std::filesystem::path&, const std::filesystem::path&>(&LoadTaxonomy),
        py::arg("edges"), py::arg("embeddings"));
  m.def(
      "synthetic_taxonomy",
      [](std::size_t num_nodes, int dim, std::size_t top_level, std::size_t second_level, std::uint64_t seed) {
        SyntheticOptions o;
        o.num_nodes = num_nodes;
        o.dim = dim;
        o.top_level = top_level;
        o.second_level = second_level;
        o.seed = seed;
        return MakeSyntheticTaxonomy(o);
      },
      py::arg("num_nodes") = 500, py::arg("dim") = 64, py::arg("top_level") = 8, py::arg("second_level") = 40,
      py::arg("seed") = 0);

  py::class_<QueryConcept>(m, "QueryConcept")
      .def_readonly("name", &QueryConcept::name)
      .def_readonly("embedding", &QueryConcept::embedding)
      .def_readonly("gold_parents", &QueryConcept::gold_parents);

  py::class_<TaxonomySplit>(m, "TaxonomySplit")
      .def_readonly("existing", &TaxonomySplit::existing)
      .def_readonly("validation", &TaxonomySplit::validation)
      .def_readonly("test", &TaxonomySplit::test);

  m.def("mask_leaves", &MaskLeaves, py::arg("taxonomy"), py::arg("val_ratio"), py::arg("test_ratio"),
        py::arg("seed") = 0);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config, int feature_dim, std::uint64_t seed) {
             return Model(ModelCfg(config), feature_dim, seed);
           }),
           py::arg("config"), py::arg("feature_dim"), py::arg("seed") = 0)
      .def_property_readonly("config", [](const Model& mo) { return mo.config().ToJson().dump(); })
      .def_property_readonly("feature_dim", &Model::feature_dim)
      .def("parameter_count", &Model::ParameterCount)
      .def("to_json", [](const Model& mo) { return mo.ToJson().dump(); })
      .def_static("from_json", [](const std::string& text) { return Model::FromJson(nlohmann::json::parse(text)); })
      .def("save", [](const Model& mo, const std::filesystem::path& p) { SaveCheckpoint(p, mo); })
      .def_static("load", [](const std::filesystem::path& p) { return LoadCheckpoint(p); });

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("model", &FitResult::model)
      .def_readonly("best_epoch", &FitResult::best_epoch)
      .def_property_readonly("log", [](const FitResult& r) {
        std::vector<std::string> out;
        for (const auto& e : r.log) out.push_back(e.ToJson().dump());
        return out;
      });

  m.def(
      "fit",
      [](const TaxonomySplit& split, const std::string& model_config, const std::string& train_config) {
        py::gil_scoped_release release;
        return Fit(split, ModelCfg(model_config), TrainCfg(train_config));
      },
      py::arg("split"), py::arg("model_config") = "", py::arg("train_config") = "");

  m.def(
      "rank",
      [](const Taxonomy& t, const Model& model, const Eigen::RowVectorXd& query, std::size_t top_k) {
        return Named(t, RankAnchors(query, BuildAnchorCache(t, model), model), top_k);
      },
      py::arg("taxonomy"), py::arg("model"), py::arg("query"), py::arg("top_k") = 10);

  m.def(
      "evaluate",
      [](const TaxonomySplit& split, const Model& model) {
        py::gil_scoped_release release;
        const AnchorCache cache = BuildAnchorCache(split.existing, model);
        return ComputeRankMetrics(CollectGoldRanks(RankQueries(split.test, cache, model))).ToJson().dump();
      },
      py::arg("split"), py::arg("model"));

  m.def(
      "baseline_metrics",
      [](const TaxonomySplit& split, const std::string& which) {
        std::vector<GoldRanks> ranks;
        for (const auto& q : split.test) {
          const auto row = q.embedding.transpose();
          ranks.push_back(which == "closest_parent" ? ClosestParent(row, split.existing, q.gold_parents).gold_ranks
                          : which == "closest_neighbor"
                              ? ClosestNeighbor(row, split.existing, q.gold_parents).gold_ranks
                              : throw ConfigError("unknown baseline '" + which + "'"));
        }
        return ComputeRankMetrics(ranks).ToJson().dump();
      },
      py::arg("split"), py::arg("which"));

  m.def("mean_rank", [](const std::vector<GoldRanks>& r) { return MeanRank(r); });
  m.def("hit_at_k", [](const std::vector<GoldRanks>& r, int k) { return HitAtK(r, k); });
  m.def("scaled_mrr", [](const std::vector<GoldRanks>& r) { return ScaledMrr(r); });
  m.def("infonce_loss", [](const std::vector<double>& s, std::size_t p) { return InfoNceLoss(s, p); });

  m.def(
      "gradcheck",
      [](int seeds, double tolerance) {
        GradCheckOptions o;
        o.seeds = seeds;
        o.tolerance = tolerance;
        std::vector<std::tuple<std::string, std::uint64_t, double, bool>> out;
        for (const auto& r : RunGradientChecks(o)) out.emplace_back(r.name, r.seed, r.max_error, r.passed);
        return out;
      },
      py::arg("seeds") = 1, py::arg("tolerance") = 1e-4);
}
