#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "falcon/design_graph.hpp"
#include "falcon/design_space.hpp"
#include "falcon/meta_model.hpp"
#include "falcon/search.hpp"
#include "json.hpp"

namespace falcon::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Graph statistics as emitted by `falcon build-graph`.
nlohmann::json build_graph_report(const DesignSpace& space, DiameterMethod method,
                                  const std::optional<std::string>& edge_csv);

// Everything needed to reproduce one search run.
struct RunSpec {
  nlohmann::json space_declaration;
  std::string evaluator;
  SearchConfig search;
  MetaModelConfig model;
};

nlohmann::json run_config_json(const RunSpec& spec);
// ConfigError on missing or malformed fields.
RunSpec run_spec_from_json(const nlohmann::json& j);

// Runs the search and writes result.json, trajectory.csv and config.json into out_dir.
SearchResult execute_run(const RunSpec& spec, const std::string& out_dir);

struct CurvePoint {
  std::string strategy;
  int step = 0;
  std::size_t runs = 0;
  double mean_best = 0.0;
  double std_error = 0.0;
};

// Best-so-far curves per strategy across run directories.
std::vector<CurvePoint> compare_runs(const std::vector<std::string>& run_dirs);
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

// "1-20", "3,5,8" or a mix of both.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Entry point of the `falcon` executable.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace falcon::cli
