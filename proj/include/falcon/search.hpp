#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "falcon/design_graph.hpp"
#include "falcon/design_space.hpp"
#include "falcon/evaluators.hpp"
#include "falcon/meta_model.hpp"
#include "falcon/random.hpp"
#include "json.hpp"

namespace falcon {

enum class Strategy { kFalcon, kFalconG, kFalconLp, kRandom, kSa, kBruteforce };

std::string to_string(Strategy s);
// ConfigError for unknown names.
Strategy parse_strategy(const std::string& name);
bool is_falcon_variant(Strategy s);

struct SearchConfig {
  Strategy strategy = Strategy::kFalcon;
  int budget = 30;  // K, exploration size
  // Start-node count C; unset means min(ceil(K / 10), 10).
  std::optional<int> start_count;
  int hops = 3;
  double warmup_units = 1.0;
  double full_units = 1.0;
  std::uint64_t seed = 0;
  // Softmax temperature over predicted scores.
  double temperature = 1.0;
  double sa_initial_temperature = 0.05;
  double sa_cooling = 0.9;
  double bruteforce_fraction = 0.05;

  int resolved_start_count() const;
  // Warm-up evaluations for this strategy on a space of `space_size` designs.
  int exploration_size(std::size_t space_size) const;
  void validate(std::size_t space_size) const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json& j);
};

// min(ceil(K / 10), 5)
int top_k_size(int budget);
// min(ceil(K / 10), 10)
int default_start_count(int budget);

struct TrajectoryRow {
  int step = 0;
  DesignId design_id = 0;
  double warmup_score = 0.0;  // -inf for a failed evaluation
  std::optional<double> predicted_score;
  std::size_t candidate_count = 0;
};

struct FullEvaluation {
  DesignId design_id = 0;
  double warmup_score = 0.0;
  double full_score = 0.0;
};

struct SearchResult {
  Strategy strategy = Strategy::kFalcon;
  std::vector<TrajectoryRow> trajectory;
  std::vector<FullEvaluation> finalists;
  DesignId best_design = 0;
  double best_full_score = 0.0;
  std::size_t failures = 0;
  std::vector<std::string> notices;

  // Highest warm-up score among explored designs.
  double best_warmup_score() const;
  // Running maximum of warm-up scores, one entry per trajectory row.
  std::vector<double> best_so_far() const;
};

// Mutable state of one guided search.
class SearchState {
 public:
  explicit SearchState(const DesignSpace& space);

  bool is_explored(DesignId id) const { return status_[id] == kExplored; }
  bool is_candidate(DesignId id) const { return status_[id] == kCandidate; }
  const std::vector<DesignId>& explored() const { return explored_; }
  const std::set<DesignId>& candidates() const { return candidates_; }
  // Moves `id` to the explored set and adds its `hops`-hop neighbors as candidates.
  void explore(DesignId id, LazyDesignGraph& graph, int hops);

 private:
  enum : std::uint8_t { kNone, kCandidate, kExplored };
  std::vector<std::uint8_t> status_;
  std::vector<DesignId> explored_;
  std::set<DesignId> candidates_;
};

// Number of candidate designs at the current step.
std::size_t receptive_field_size(const SearchState& state);

// Softmax of scores / temperature, max-shifted.
std::vector<double> softmax(std::span<const double> scores, double temperature);
// Index drawn with the given probabilities.
std::size_t sample_index(std::span<const double> probabilities, Rng& rng);
// `count` distinct values from [0, n), in draw order.
std::vector<DesignId> sample_distinct(std::size_t n, std::size_t count, Rng& rng);

// FALCON and its ablations, chosen by config.strategy.
SearchResult run_falcon(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                        const MetaModelConfig& model_config);
SearchResult run_variant(Strategy variant, const DesignSpace& space, Evaluator& evaluator, SearchConfig config,
                         const MetaModelConfig& model_config);
// Dispatches on config.strategy to FALCON variants or the baselines.
SearchResult run_strategy(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                          const MetaModelConfig& model_config);

// Scores explored designs at full budget and picks the winner. Shared by all
// strategies so that comparisons spend the same final budget.
void finish_search(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                   SearchResult& result);

// Wraps one warm-up evaluation: failures become -inf and count toward the
// abort threshold of more than half the budget.
class WarmupRunner {
 public:
  WarmupRunner(Evaluator& evaluator, const SearchConfig& config, int budget, SearchResult& result);
  EvaluationRecord evaluate(DesignId id, std::optional<double> predicted, std::size_t candidate_count);

 private:
  Evaluator* evaluator_;
  Budget budget_;
  int limit_;
  SearchResult* result_;
};

void write_trajectory_csv(std::ostream& out, const DesignSpace& space, const SearchResult& result);
std::vector<TrajectoryRow> read_trajectory_csv(const std::string& path);
nlohmann::json result_to_json(const DesignSpace& space, const SearchResult& result);

}  // namespace falcon
