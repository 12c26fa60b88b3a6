#include "falcon/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "CLI11.hpp"
#include "falcon/errors.hpp"
#include "falcon/evaluators.hpp"
#include "falcon/format.hpp"

namespace falcon::cli {
namespace {

namespace fs = std::filesystem;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

DiameterMethod parse_method(const std::string& name) {
  if (name == "auto") return DiameterMethod::kAuto;
  if (name == "all-sources") return DiameterMethod::kAllSources;
  if (name == "bounding") return DiameterMethod::kBounding;
  throw ConfigError("unknown diameter method '" + name + "'");
}

}  // namespace

nlohmann::json build_graph_report(const DesignSpace& space, DiameterMethod method,
                                  const std::optional<std::string>& edge_csv) {
  const auto start = std::chrono::steady_clock::now();
  const auto graph = DesignGraph::build(space);
  const double build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto stats = graph_stats(graph, method);
  const double total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (edge_csv) {
    std::ofstream out(*edge_csv);
    if (!out) throw ConfigError("cannot write '" + *edge_csv + "'");
    out << "u,v,label\n";
    for (const auto& e : graph.edges()) out << e.u << ',' << e.v << ',' << space.label_name(e.label) << '\n';
  }
  return {{"space", space.name()},
          {"node_count", stats.node_count},
          {"undirected_edge_count", stats.undirected_edge_count},
          {"directed_edge_count", stats.directed_edge_count},
          {"mean_degree", stats.mean_degree},
          {"edges_per_node", stats.edges_per_node},
          {"diameter", stats.diameter ? nlohmann::json(*stats.diameter) : nlohmann::json(nullptr)},
          {"component_count", stats.component_count},
          {"construction_seconds", build_seconds},
          {"total_seconds", total_seconds}};
}

nlohmann::json run_config_json(const RunSpec& spec) {
  const int n = static_cast<int>(DesignSpace::from_json(spec.space_declaration).size());
  const int k = spec.search.exploration_size(static_cast<std::size_t>(n));
  return {{"space", spec.space_declaration},
          {"evaluator", spec.evaluator},
          {"search", spec.search.to_json()},
          {"model", spec.model.to_json()},
          {"resolved",
           {{"start_count", spec.search.resolved_start_count()},
            {"exploration_size", k},
            {"top_k", top_k_size(k)}}}};
}

RunSpec run_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config: expected an object");
  for (const char* key : {"space", "evaluator", "search"}) {
    if (!j.contains(key)) throw ConfigError(std::string("run config: missing '") + key + "'");
  }
  RunSpec spec;
  spec.space_declaration = j["space"];
  if (!j["evaluator"].is_string()) throw ConfigError("run config: 'evaluator' must be a string");
  spec.evaluator = j["evaluator"].get<std::string>();
  spec.search = SearchConfig::from_json(j["search"]);
  spec.model = j.contains("model") ? MetaModelConfig::from_json(j["model"]) : MetaModelConfig{};
  return spec;
}

SearchResult execute_run(const RunSpec& spec, const std::string& out_dir) {
  const auto space = DesignSpace::from_json(spec.space_declaration);
  spec.search.validate(space.size());
  spec.model.validate();
  auto evaluator = make_evaluator(space, spec.evaluator);
  const auto result = run_strategy(space, *evaluator, spec.search, spec.model);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto config = run_config_json(spec);
  write_text_file(dir / "config.json", config.dump(2) + "\n");
  std::ostringstream trajectory;
  write_trajectory_csv(trajectory, space, result);
  write_text_file(dir / "trajectory.csv", trajectory.str());
  auto summary = result_to_json(space, result);
  summary["config"] = {{"search", config["search"]}, {"model", config["model"]}, {"resolved", config["resolved"]}};
  write_text_file(dir / "result.json", summary.dump(2) + "\n");
  return result;
}

std::vector<CurvePoint> compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("compare: no run directories given");
  std::map<std::string, std::vector<std::pair<std::string, std::vector<double>>>> by_strategy;
  std::vector<std::string> unreadable;
  for (const auto& dir : run_dirs) {
    try {
      const auto result = read_json_file((fs::path(dir) / "result.json").string());
      const auto rows = read_trajectory_csv((fs::path(dir) / "trajectory.csv").string());
      if (!result.contains("strategy") || !result["strategy"].is_string()) throw DataError("result.json lacks a strategy");
      SearchResult r;
      r.trajectory = rows;
      by_strategy[result["strategy"].get<std::string>()].emplace_back(dir, r.best_so_far());
    } catch (const Error& e) {
      unreadable.push_back(dir + " (" + e.what() + ")");
    }
  }
  if (!unreadable.empty()) {
    std::string msg = "compare: schema mismatch in";
    for (const auto& u : unreadable) msg += "\n  " + u;
    throw ConfigError(msg);
  }
  std::vector<CurvePoint> points;
  for (const auto& [strategy, runs] : by_strategy) {
    const std::size_t length = runs.front().second.size();
    std::vector<std::string> offending;
    for (const auto& [dir, curve] : runs) {
      if (curve.size() != length) offending.push_back(dir + " (" + std::to_string(curve.size()) + " steps)");
    }
    if (!offending.empty()) {
      std::string msg = "compare: runs of strategy '" + strategy + "' differ in length from " + runs.front().first +
                        " (" + std::to_string(length) + " steps):";
      for (const auto& o : offending) msg += "\n  " + o;
      throw ConfigError(msg);
    }
    for (std::size_t s = 0; s < length; ++s) {
      CurvePoint p;
      p.strategy = strategy;
      p.step = static_cast<int>(s + 1);
      p.runs = runs.size();
      double sum = 0.0;
      for (const auto& run : runs) sum += run.second[s];
      p.mean_best = sum / static_cast<double>(runs.size());
      if (runs.size() > 1) {
        double ss = 0.0;
        for (const auto& run : runs) ss += (run.second[s] - p.mean_best) * (run.second[s] - p.mean_best);
        const double sd = std::sqrt(ss / static_cast<double>(runs.size() - 1));
        p.std_error = sd / std::sqrt(static_cast<double>(runs.size()));
      }
      points.push_back(p);
    }
  }
  return points;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "strategy,step,n_runs,mean_best,stderr\n";
  for (const auto& p : points) {
    out << p.strategy << ',' << p.step << ',' << p.runs << ',' << format_double(p.mean_best) << ','
        << format_double(p.std_error) << '\n';
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string part;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("malformed seed list '" + text + "'");
    return static_cast<std::uint64_t>(v);
  };
  while (std::getline(in, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(number(part));
    } else {
      const auto lo = number(part.substr(0, dash));
      const auto hi = number(part.substr(dash + 1));
      if (hi < lo) throw ConfigError("malformed seed range '" + part + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design-graph guided architecture and hyper-parameter search"};
  app.require_subcommand(1);

  auto* graph_cmd = app.add_subcommand("build-graph", "Build the design graph of a space and report statistics");
  std::string graph_space, graph_out, graph_edges, graph_method = "auto";
  graph_cmd->add_option("--space", graph_space, "Design space JSON file")->required();
  graph_cmd->add_option("--out", graph_out, "Write the statistics JSON here instead of stdout");
  graph_cmd->add_option("--edges", graph_edges, "Also write the edge list as CSV (u,v,label)");
  graph_cmd->add_option("--diameter-method", graph_method, "auto, all-sources or bounding");

  auto* search_cmd = app.add_subcommand("search", "Run one search strategy and write its run directory");
  std::string space_file, evaluator_spec, strategy_name = "falcon", out_dir, config_file, model_file;
  int budget = 30, hops = 3, start_count = 0;
  std::uint64_t seed = 0;
  double temperature = 1.0, fraction = 0.05, warmup_units = 1.0, full_units = 1.0;
  search_cmd->add_option("--space", space_file, "Design space JSON file");
  search_cmd->add_option("--evaluator", evaluator_spec, "tabular:<csv> | synthetic:<seed>:<smoothness> | exec:<command>");
  search_cmd->add_option("--strategy", strategy_name, "falcon, falcon_g, falcon_lp, random, sa or bruteforce");
  search_cmd->add_option("--budget", budget, "Exploration size K");
  search_cmd->add_option("--seed", seed, "Random seed");
  search_cmd->add_option("--hops", hops, "Candidate radius h");
  search_cmd->add_option("--start-count", start_count, "Start designs C (default min(ceil(K/10), 10))");
  search_cmd->add_option("--temperature", temperature, "Softmax temperature over predictions");
  search_cmd->add_option("--fraction", fraction, "Bruteforce sample fraction");
  search_cmd->add_option("--warmup-units", warmup_units, "Warm-up budget passed to the evaluator");
  search_cmd->add_option("--full-units", full_units, "Full budget passed to the evaluator");
  search_cmd->add_option("--model", model_file, "Meta-model config JSON");
  search_cmd->add_option("--config", config_file, "Re-run from a config.json written by an earlier run");
  search_cmd->add_option("--out", out_dir, "Run directory")->required();

  auto* compare_cmd = app.add_subcommand("compare", "Aggregate best-so-far curves across runs");
  std::vector<std::string> run_dirs;
  std::string cmp_space, cmp_evaluator, cmp_strategies = "falcon,random", cmp_seeds, cmp_runs_dir, cmp_out;
  int cmp_budget = 30;
  compare_cmd->add_option("runs", run_dirs, "Completed run directories");
  compare_cmd->add_option("--space", cmp_space, "Design space JSON file (multi-seed mode)");
  compare_cmd->add_option("--evaluator", cmp_evaluator, "Evaluator spec (multi-seed mode)");
  compare_cmd->add_option("--strategies", cmp_strategies, "Comma-separated strategies (multi-seed mode)");
  compare_cmd->add_option("--seeds", cmp_seeds, "Seed list such as 1-20 (multi-seed mode)");
  compare_cmd->add_option("--budget", cmp_budget, "Exploration size K (multi-seed mode)");
  compare_cmd->add_option("--runs-dir", cmp_runs_dir, "Where multi-seed runs are written");
  compare_cmd->add_option("--out", cmp_out, "Write the curve CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  // Errors raised while reading inputs are configuration failures; errors
  // raised while running are runtime failures.
  bool running = false;
  try {
    if (graph_cmd->parsed()) {
      const auto space = DesignSpace::load(graph_space);
      const auto method = parse_method(graph_method);
      running = true;
      const auto report = build_graph_report(space, method, graph_edges.empty() ? std::nullopt
                                                                               : std::optional(graph_edges));
      if (graph_out.empty()) {
        out << report.dump(2) << '\n';
      } else {
        write_text_file(graph_out, report.dump(2) + "\n");
      }
      return kExitOk;
    }

    if (search_cmd->parsed()) {
      RunSpec spec;
      if (!config_file.empty()) spec = run_spec_from_json(read_json_file(config_file));
      if (!space_file.empty()) spec.space_declaration = DesignSpace::load(space_file).to_json();
      if (spec.space_declaration.is_null()) throw ConfigError("search: --space or --config is required");
      if (!evaluator_spec.empty()) spec.evaluator = evaluator_spec;
      if (spec.evaluator.empty()) throw ConfigError("search: --evaluator or --config is required");
      auto given = [&](const char* flag) { return search_cmd->count(flag) > 0; };
      if (given("--strategy") || config_file.empty()) spec.search.strategy = parse_strategy(strategy_name);
      if (given("--budget")) spec.search.budget = budget;
      if (given("--seed")) spec.search.seed = seed;
      if (given("--hops")) spec.search.hops = hops;
      if (given("--start-count")) spec.search.start_count = start_count;
      if (given("--temperature")) spec.search.temperature = temperature;
      if (given("--fraction")) spec.search.bruteforce_fraction = fraction;
      if (given("--warmup-units")) spec.search.warmup_units = warmup_units;
      if (given("--full-units")) spec.search.full_units = full_units;
      if (!model_file.empty()) spec.model = MetaModelConfig::from_json(read_json_file(model_file));
      const auto space = DesignSpace::from_json(spec.space_declaration);
      spec.search.validate(space.size());
      spec.model.validate();
      make_evaluator(space, spec.evaluator);
      running = true;
      const auto result = execute_run(spec, out_dir);
      out << "best design " << result.best_design << " full score " << format_double(result.best_full_score)
          << " (" << result.trajectory.size() << " warm-up evaluations, " << result.finalists.size()
          << " full)\n";
      for (const auto& notice : result.notices) err << "notice: " << notice << '\n';
      return kExitOk;
    }

    if (compare_cmd->parsed()) {
      std::vector<std::string> dirs = run_dirs;
      if (!cmp_seeds.empty()) {
        if (cmp_space.empty() || cmp_evaluator.empty() || cmp_runs_dir.empty()) {
          throw ConfigError("compare: multi-seed mode needs --space, --evaluator, --seeds and --runs-dir");
        }
        const auto declaration = DesignSpace::load(cmp_space).to_json();
        const auto seeds = parse_seed_list(cmp_seeds);
        std::vector<RunSpec> specs;
        std::stringstream names(cmp_strategies);
        std::string name;
        while (std::getline(names, name, ',')) {
          for (auto s : seeds) {
            RunSpec spec;
            spec.space_declaration = declaration;
            spec.evaluator = cmp_evaluator;
            spec.search.strategy = parse_strategy(name);
            spec.search.budget = cmp_budget;
            spec.search.seed = s;
            specs.push_back(spec);
          }
        }
        running = true;
        for (const auto& spec : specs) {
          const auto dir = (fs::path(cmp_runs_dir) / (to_string(spec.search.strategy) + "_seed" +
                                                     std::to_string(spec.search.seed)))
                               .string();
          execute_run(spec, dir);
          dirs.push_back(dir);
        }
        running = false;
      }
      const auto points = compare_runs(dirs);
      running = true;
      if (cmp_out.empty()) {
        write_curve_csv(out, points);
      } else {
        std::ofstream file(cmp_out);
        if (!file) throw Error("cannot write '" + cmp_out + "'");
        write_curve_csv(file, points);
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return running ? kExitRuntime : kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace falcon::cli
