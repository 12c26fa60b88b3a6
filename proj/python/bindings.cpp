#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "falcon/cli.hpp"
#include "falcon/design_graph.hpp"
#include "falcon/errors.hpp"
#include "falcon/evaluators.hpp"
#include "falcon/meta_model.hpp"
#include "falcon/search.hpp"

namespace py = pybind11;
using namespace falcon;

namespace {

// JSON crosses the boundary as text through the stdlib json module.
py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

SearchConfig search_config(const std::string& strategy, int budget, std::uint64_t seed, const py::dict& options) {
  nlohmann::json j = from_python(options);
  j["strategy"] = strategy;
  j["budget"] = budget;
  j["seed"] = seed;
  return SearchConfig::from_json(j);
}

// Adapts a Python callable f(design_id, phase, units) returning a score or a
// (score, instance_correct) pair.
EvaluationFn python_evaluation(py::function fn) {
  return [fn](DesignId id, const Budget& budget) {
    py::gil_scoped_acquire gil;
    const py::object out = fn(id, to_string(budget.phase), budget.units);
    EvaluationRecord r;
    r.budget = budget;
    if (py::isinstance<py::tuple>(out)) {
      const auto t = out.cast<py::tuple>();
      if (t.size() != 2) throw EvaluationError("evaluator must return score or (score, instance_correct)");
      r.score = t[0].cast<double>();
      if (!t[1].is_none()) r.instance_correct = t[1].cast<std::vector<std::uint8_t>>();
    } else {
      r.score = out.cast<double>();
    }
    return r;
  };
}

py::dict search_output(const DesignSpace& space, const SearchResult& result) {
  py::dict out = to_python(result_to_json(space, result)).cast<py::dict>();
  py::list trajectory;
  for (const auto& row : result.trajectory) {
    py::dict r;
    r["step"] = row.step;
    r["design_id"] = row.design_id;
    r["warmup_score"] = row.warmup_score;
    r["predicted_score"] = row.predicted_score ? py::cast(*row.predicted_score) : py::none();
    r["candidate_count"] = row.candidate_count;
    trajectory.append(r);
  }
  out["trajectory"] = trajectory;
  out["best_so_far"] = result.best_so_far();
  std::ostringstream csv;
  write_trajectory_csv(csv, space, result);
  out["trajectory_csv"] = csv.str();
  return out;
}

}  // namespace

PYBIND11_MODULE(_falcon, m) {
  m.doc() = "Design-graph guided architecture and hyper-parameter search";

  auto base = py::register_exception<Error>(m, "FalconError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<SearchAborted>(m, "SearchAborted", base.ptr());

  py::class_<DesignSpace>(m, "DesignSpace")
      .def_static("load", &DesignSpace::load, py::arg("path"))
      .def_static("parse", [](const std::string& text) { return DesignSpace::parse(text); }, py::arg("text"))
      .def_static(
          "from_dict", [](const py::dict& d) { return DesignSpace::from_json(from_python(d)); }, py::arg("declaration"))
      .def("to_dict", [](const DesignSpace& s) { return to_python(s.to_json()); })
      .def_property_readonly("name", &DesignSpace::name)
      .def_property_readonly("dimension_names",
                             [](const DesignSpace& s) {
                               std::vector<std::string> names;
                               for (const auto& d : s.dimensions()) names.push_back(d.name);
                               return names;
                             })
      .def_property_readonly("label_count", &DesignSpace::label_count)
      .def("__len__", &DesignSpace::size)
      .def(
          "design",
          [](const DesignSpace& s, DesignId id) { return to_python(s.to_assignment(s.design(id))); }, py::arg("id"))
      .def(
          "id_of",
          [](const DesignSpace& s, const py::dict& assignment) {
            return s.id_of(s.from_assignment(from_python(assignment)));
          },
          py::arg("assignment"))
      .def("distance", py::overload_cast<DesignId, DesignId>(&DesignSpace::distance, py::const_), py::arg("a"),
           py::arg("b"))
      .def(
          "neighbors",
          [](const DesignSpace& s, DesignId id) {
            std::vector<std::pair<DesignId, int>> out;
            for (const auto& n : s.neighbors(id)) out.emplace_back(n.id, n.label);
            return out;
          },
          py::arg("id"), "Neighbors of a design as (id, label) pairs.")
      .def("label_name", &DesignSpace::label_name, py::arg("label"))
      .def("encode", [](const DesignSpace& s, DesignId id) { return s.encode(s.design(id)); }, py::arg("id"));

  m.def(
      "graph_stats",
      [](const DesignSpace& space, const std::string& diameter_method) {
        DiameterMethod method = DiameterMethod::kAuto;
        if (diameter_method == "all-sources") method = DiameterMethod::kAllSources;
        else if (diameter_method == "bounding") method = DiameterMethod::kBounding;
        else if (diameter_method != "auto") throw ConfigError("unknown diameter method '" + diameter_method + "'");
        return to_python(cli::build_graph_report(space, method, std::nullopt));
      },
      py::arg("space"), py::arg("diameter_method") = "auto",
      "Builds the full design graph and returns its statistics.");

  m.def(
      "multi_hop_neighbors",
      [](const DesignSpace& space, const std::vector<DesignId>& seeds, int hops) {
        return multi_hop_neighbors(LazyDesignGraph(space), std::span<const DesignId>(seeds), hops);
      },
      py::arg("space"), py::arg("seeds"), py::arg("hops"));

  m.def(
      "label_propagate",
      [](const std::vector<std::uint32_t>& offsets, const std::vector<std::uint32_t>& adjacency,
         const Eigen::MatrixXd& y0, double alpha, int steps) {
        return label_propagate(offsets, adjacency, y0, alpha, steps);
      },
      py::arg("offsets"), py::arg("adjacency"), py::arg("y0"), py::arg("alpha"), py::arg("steps"),
      "Label propagation over a CSR graph.");

  m.def(
      "ranking_loss",
      [](const std::vector<double>& predictions, const std::vector<double>& targets, double lambda, double tau) {
        return ranking_loss(predictions, targets, lambda, tau);
      },
      py::arg("predictions"), py::arg("targets"), py::arg("lambda_") = 1.0, py::arg("tau") = 0.1);

  m.def(
      "search",
      [](const DesignSpace& space, const std::string& evaluator, const std::string& strategy, int budget,
         std::uint64_t seed, const py::dict& options, const py::dict& model) {
        const auto config = search_config(strategy, budget, seed, options);
        const auto model_config = MetaModelConfig::from_json(from_python(model));
        auto eval = make_evaluator(space, evaluator);
        SearchResult result;
        {
          py::gil_scoped_release release;
          result = run_strategy(space, *eval, config, model_config);
        }
        return search_output(space, result);
      },
      py::arg("space"), py::arg("evaluator"), py::arg("strategy") = "falcon", py::arg("budget") = 30,
      py::arg("seed") = 0, py::arg("options") = py::dict(), py::arg("model") = py::dict(),
      "Runs one strategy against an evaluator spec (tabular:, synthetic: or exec:).");

  m.def(
      "search_callable",
      [](const DesignSpace& space, py::function fn, bool provides_instances, const std::string& strategy,
         int budget, std::uint64_t seed, const py::dict& options, const py::dict& model) {
        const auto config = search_config(strategy, budget, seed, options);
        const auto model_config = MetaModelConfig::from_json(from_python(model));
        CallbackEvaluator eval(python_evaluation(std::move(fn)), provides_instances);
        return search_output(space, run_strategy(space, eval, config, model_config));
      },
      py::arg("space"), py::arg("evaluate"), py::arg("provides_instances") = false, py::arg("strategy") = "falcon",
      py::arg("budget") = 30, py::arg("seed") = 0, py::arg("options") = py::dict(), py::arg("model") = py::dict(),
      "Runs one strategy against a Python callable f(design_id, phase, units).");

  m.def(
      "synthetic_scores",
      [](const DesignSpace& space, std::uint64_t seed, double smoothness) {
        SyntheticEvaluator eval(space, seed, smoothness);
        std::vector<double> warm(space.size());
        for (DesignId id = 0; id < space.size(); ++id) warm[id] = eval.warmup_score(id);
        return py::make_tuple(warm, eval.optimum());
      },
      py::arg("space"), py::arg("seed"), py::arg("smoothness"),
      "Warm-up scores of every design on a synthetic landscape and its optimum.");

  m.def("top_k_size", &top_k_size, py::arg("exploration_size"));
  m.def("default_start_count", &default_start_count, py::arg("exploration_size"));
}
