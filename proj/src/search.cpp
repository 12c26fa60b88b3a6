#include "falcon/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "falcon/baselines.hpp"
#include "falcon/errors.hpp"
#include "falcon/format.hpp"

namespace falcon {
namespace {

constexpr double kFailed = -std::numeric_limits<double>::infinity();

struct StrategyName {
  Strategy strategy;
  const char* name;
};

constexpr StrategyName kStrategies[] = {
    {Strategy::kFalcon, "falcon"}, {Strategy::kFalconG, "falcon_g"}, {Strategy::kFalconLp, "falcon_lp"},
    {Strategy::kRandom, "random"}, {Strategy::kSa, "sa"},            {Strategy::kBruteforce, "bruteforce"},
};

nlohmann::json number_or_null(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

std::string csv_quote(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_score(const std::string& text) {
  if (text == "-inf") return kFailed;
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(text);
  return v;
}

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& entry : kStrategies) {
    if (entry.strategy == s) return entry.name;
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  for (const auto& entry : kStrategies) {
    if (name == entry.name) return entry.strategy;
  }
  throw ConfigError("unknown strategy '" + name + "' (expected falcon, falcon_g, falcon_lp, random, sa or bruteforce)");
}

bool is_falcon_variant(Strategy s) {
  return s == Strategy::kFalcon || s == Strategy::kFalconG || s == Strategy::kFalconLp;
}

int top_k_size(int budget) { return std::min((budget + 9) / 10, 5); }
int default_start_count(int budget) { return std::min((budget + 9) / 10, 10); }

int SearchConfig::resolved_start_count() const { return start_count.value_or(default_start_count(budget)); }

int SearchConfig::exploration_size(std::size_t space_size) const {
  if (strategy == Strategy::kBruteforce) {
    return static_cast<int>(std::ceil(bruteforce_fraction * static_cast<double>(space_size) - 1e-9));
  }
  return budget;
}

void SearchConfig::validate(std::size_t space_size) const {
  auto fail = [](const std::string& what) { throw ConfigError("search config: " + what); };
  if (budget < 1) fail("budget must be at least 1");
  if (hops < 1) fail("hops must be at least 1");
  const int c = resolved_start_count();
  if (c < 1 || c > budget) fail("start_count must lie in [1, budget]");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(sa_initial_temperature > 0.0)) fail("sa_initial_temperature must be positive");
  if (!(sa_cooling > 0.0 && sa_cooling < 1.0)) fail("sa_cooling must lie in (0, 1)");
  if (!(bruteforce_fraction > 0.0 && bruteforce_fraction <= 1.0)) fail("bruteforce_fraction must lie in (0, 1]");
  if (strategy != Strategy::kSa && static_cast<std::size_t>(exploration_size(space_size)) > space_size) {
    fail("budget " + std::to_string(budget) + " exceeds the space size " + std::to_string(space_size));
  }
}

nlohmann::json SearchConfig::to_json() const {
  return {{"strategy", to_string(strategy)},
          {"budget", budget},
          {"start_count", start_count ? nlohmann::json(*start_count) : nlohmann::json(nullptr)},
          {"hops", hops},
          {"warmup_units", warmup_units},
          {"full_units", full_units},
          {"seed", seed},
          {"temperature", temperature},
          {"sa_initial_temperature", sa_initial_temperature},
          {"sa_cooling", sa_cooling},
          {"bruteforce_fraction", bruteforce_fraction}};
}

SearchConfig SearchConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("search config: expected an object");
  SearchConfig c;
  try {
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    c.budget = j.value("budget", c.budget);
    if (j.contains("start_count") && !j["start_count"].is_null()) c.start_count = j["start_count"].get<int>();
    c.hops = j.value("hops", c.hops);
    c.warmup_units = j.value("warmup_units", c.warmup_units);
    c.full_units = j.value("full_units", c.full_units);
    c.seed = j.value("seed", c.seed);
    c.temperature = j.value("temperature", c.temperature);
    c.sa_initial_temperature = j.value("sa_initial_temperature", c.sa_initial_temperature);
    c.sa_cooling = j.value("sa_cooling", c.sa_cooling);
    c.bruteforce_fraction = j.value("bruteforce_fraction", c.bruteforce_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search config: ") + e.what());
  }
  return c;
}

double SearchResult::best_warmup_score() const {
  double best = kFailed;
  for (const auto& row : trajectory) best = std::max(best, row.warmup_score);
  return best;
}

std::vector<double> SearchResult::best_so_far() const {
  std::vector<double> out;
  double best = kFailed;
  for (const auto& row : trajectory) {
    best = std::max(best, row.warmup_score);
    out.push_back(best);
  }
  return out;
}

SearchState::SearchState(const DesignSpace& space) : status_(space.size(), kNone) {}

void SearchState::explore(DesignId id, LazyDesignGraph& graph, int hops) {
  if (status_.at(id) == kExplored) throw DomainError("design " + std::to_string(id) + " is already explored");
  if (status_[id] == kCandidate) candidates_.erase(id);
  status_[id] = kExplored;
  explored_.push_back(id);
  for (DesignId v : multi_hop_neighbors(graph, std::span(&id, 1), hops)) {
    if (status_[v] == kNone) {
      status_[v] = kCandidate;
      candidates_.insert(v);
    }
  }
}

std::size_t receptive_field_size(const SearchState& state) { return state.candidates().size(); }

std::vector<double> softmax(std::span<const double> scores, double temperature) {
  if (scores.empty()) return {};
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp((scores[i] - top) / temperature);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

std::size_t sample_index(std::span<const double> probabilities, Rng& rng) {
  if (probabilities.empty()) throw DomainError("sample_index: empty distribution");
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < probabilities.size(); ++i) {
    if (u < probabilities[i]) return i;
    u -= probabilities[i];
  }
  return probabilities.size() - 1;
}

std::vector<DesignId> sample_distinct(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) throw DomainError("cannot sample " + std::to_string(count) + " of " + std::to_string(n));
  std::vector<DesignId> out;
  out.reserve(count);
  if (count * 2 >= n) {
    std::vector<DesignId> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<DesignId>(i);
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.index(n - i)]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<DesignId> seen;
  while (out.size() < count) {
    const auto id = static_cast<DesignId>(rng.index(n));
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

WarmupRunner::WarmupRunner(Evaluator& evaluator, const SearchConfig& config, int budget, SearchResult& result)
    : evaluator_(&evaluator), budget_{BudgetPhase::kWarmup, config.warmup_units}, limit_(budget), result_(&result) {}

EvaluationRecord WarmupRunner::evaluate(DesignId id, std::optional<double> predicted, std::size_t candidate_count) {
  EvaluationRecord record;
  try {
    record = evaluator_->evaluate(id, budget_);
    if (!std::isfinite(record.score)) throw EvaluationError("non-finite score");
  } catch (const EvaluationError& e) {
    record = EvaluationRecord{};
    record.score = kFailed;
    record.budget = budget_;
    ++result_->failures;
    result_->notices.push_back("design " + std::to_string(id) + " failed: " + e.what());
  }
  TrajectoryRow row;
  row.step = static_cast<int>(result_->trajectory.size()) + 1;
  row.design_id = id;
  row.warmup_score = record.score;
  row.predicted_score = predicted;
  row.candidate_count = candidate_count;
  result_->trajectory.push_back(row);
  if (2 * result_->failures > static_cast<std::size_t>(limit_)) {
    throw SearchAborted("more than half of the " + std::to_string(limit_) + " evaluations failed");
  }
  return record;
}

void finish_search(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config, SearchResult& result) {
  std::vector<std::pair<DesignId, double>> ranked;
  std::unordered_set<DesignId> seen;
  for (const auto& row : result.trajectory) {
    if (!std::isfinite(row.warmup_score) || !seen.insert(row.design_id).second) continue;
    ranked.emplace_back(row.design_id, row.warmup_score);
  }
  if (ranked.empty()) throw SearchAborted("no design was evaluated successfully");
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const int k = top_k_size(config.exploration_size(space.size()));
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k)));
  const Budget full{BudgetPhase::kFull, config.full_units};
  bool any = false;
  for (const auto& [id, warm] : ranked) {
    FullEvaluation f{id, warm, kFailed};
    try {
      f.full_score = evaluator.evaluate(id, full).score;
      if (!std::isfinite(f.full_score)) throw EvaluationError("non-finite score");
    } catch (const EvaluationError& e) {
      f.full_score = kFailed;
      ++result.failures;
      result.notices.push_back("full evaluation of design " + std::to_string(id) + " failed: " + e.what());
    }
    if (std::isfinite(f.full_score) && (!any || f.full_score > result.best_full_score)) {
      result.best_design = id;
      result.best_full_score = f.full_score;
      any = true;
    }
    result.finalists.push_back(f);
  }
  if (!any) throw SearchAborted("every full-budget evaluation failed");
}

SearchResult run_falcon(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                        const MetaModelConfig& model_config) {
  if (!is_falcon_variant(config.strategy)) throw ConfigError("run_falcon: strategy must be a FALCON variant");
  config.validate(space.size());
  model_config.validate();
  const int budget = config.budget;
  SearchResult result;
  result.strategy = config.strategy;
  WarmupRunner runner(evaluator, config, budget, result);

  Rng rng(config.seed);
  Rng instance_rng = Rng::derived(config.seed, 1);
  Rng model_rng = Rng::derived(config.seed, 2);

  MetaModelConfig mc = model_config;
  bool use_instances = false;
  std::size_t channel_width = 0;
  switch (config.strategy) {
    case Strategy::kFalconG:
      mc.mp_layers = 0;
      mc.use_task_channel = false;
      break;
    case Strategy::kFalconLp:
      mc.use_task_channel = true;
      channel_width = static_cast<std::size_t>(mc.instance_sample_size);
      break;
    default:
      mc.use_task_channel = true;
      channel_width = static_cast<std::size_t>(mc.instance_sample_size);
      use_instances = evaluator.provides_instances();
      if (!use_instances) {
        result.notices.emplace_back("evaluator provides no instance vectors; using the falcon_lp pathway");
      }
  }

  LazyDesignGraph graph(space);
  SearchState state(space);
  std::vector<double> scores(space.size(), kFailed);
  std::vector<std::vector<std::uint8_t>> instance_rows(space.size());
  auto record = [&](DesignId id, const EvaluationRecord& r) {
    scores[id] = r.score;
    if (use_instances && std::isfinite(r.score)) {
      if (!r.instance_correct) throw DataError("evaluator omitted the instance vector of design " + std::to_string(id));
      instance_rows[id] = *r.instance_correct;
    }
    state.explore(id, graph, config.hops);
  };

  auto starts = sample_distinct(space.size(), static_cast<std::size_t>(config.resolved_start_count()), rng);
  std::sort(starts.begin(), starts.end());
  for (DesignId id : starts) record(id, runner.evaluate(id, std::nullopt, 0));

  std::optional<MetaModelParams> params;
  bool warned_empty = false;
  while (static_cast<int>(state.explored().size()) < budget) {
    const std::vector<DesignId> candidates(state.candidates().begin(), state.candidates().end());
    if (candidates.empty()) {
      // Only reachable when the explored region has no unexplored neighbors left.
      if (!warned_empty) {
        result.notices.emplace_back("candidate set exhausted; sampling uniformly among unexplored designs");
        warned_empty = true;
      }
      DesignId id;
      do {
        id = static_cast<DesignId>(rng.index(space.size()));
      } while (state.is_explored(id));
      record(id, runner.evaluate(id, std::nullopt, 0));
      continue;
    }

    std::vector<DesignId> valid;
    for (DesignId id : state.explored()) {
      if (std::isfinite(scores[id])) valid.push_back(id);
    }
    if (valid.size() < 2) {
      const DesignId id = candidates[rng.index(candidates.size())];
      record(id, runner.evaluate(id, std::nullopt, candidates.size()));
      continue;
    }

    const auto sub = build_subgraph(graph, state.explored(), candidates);
    Eigen::MatrixXd channel;
    if (mc.use_task_channel) {
      channel = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sub.size()), static_cast<Eigen::Index>(channel_width));
      if (use_instances) {
        InstanceMatrix m;
        for (DesignId id : valid) m.add_row(id, instance_rows[id]);
        const auto cols = select_instances(m, channel_width, instance_rng);
        for (std::size_t r = 0; r < m.rows(); ++r) {
          const auto row = static_cast<Eigen::Index>(*sub.index_of(m.anchors[r]));
          for (std::size_t c = 0; c < cols.size(); ++c) channel(row, static_cast<Eigen::Index>(c)) = m.at(r, cols[c]);
        }
        channel = label_propagate(sub, channel, mc.alpha, mc.lp_layers);
      }
    }
    const auto input = GraphInput::from_subgraph(space, sub, std::move(channel));
    if (!params) {
      params = init_params(mc, space.encoding_width(), space.label_count(), channel_width, model_rng);
    }
    std::vector<std::uint32_t> rows;
    std::vector<double> raw;
    for (DesignId id : valid) {
      rows.push_back(static_cast<std::uint32_t>(*sub.index_of(id)));
      raw.push_back(scores[id]);
    }
    const auto targets = min_max_normalize(raw);
    auto outcome = train(*params, mc, input, rows, targets, model_rng);
    if (outcome.restarted) result.notices.push_back("meta-model restarted after divergence at step " +
                                                    std::to_string(state.explored().size() + 1));
    params = std::move(outcome.params);

    const Eigen::VectorXd predictions = forward(*params, input);
    std::vector<double> candidate_scores;
    candidate_scores.reserve(candidates.size());
    for (DesignId id : candidates) candidate_scores.push_back(predictions(static_cast<Eigen::Index>(*sub.index_of(id))));
    const auto probs = softmax(candidate_scores, config.temperature);
    const std::size_t pick = sample_index(probs, rng);
    const DesignId id = candidates[pick];
    record(id, runner.evaluate(id, candidate_scores[pick], candidates.size()));
  }

  finish_search(space, evaluator, config, result);
  return result;
}

SearchResult run_variant(Strategy variant, const DesignSpace& space, Evaluator& evaluator, SearchConfig config,
                         const MetaModelConfig& model_config) {
  config.strategy = variant;
  return run_falcon(space, evaluator, config, model_config);
}

SearchResult run_strategy(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                          const MetaModelConfig& model_config) {
  switch (config.strategy) {
    case Strategy::kRandom:
      return run_random(space, evaluator, config);
    case Strategy::kSa:
      return run_sa(space, evaluator, config);
    case Strategy::kBruteforce:
      return run_bruteforce(space, evaluator, config);
    default:
      return run_falcon(space, evaluator, config, model_config);
  }
}

void write_trajectory_csv(std::ostream& out, const DesignSpace& space, const SearchResult& result) {
  out << "step,design_id,design_json,warmup_score,predicted_score,candidate_count\n";
  for (const auto& row : result.trajectory) {
    out << row.step << ',' << row.design_id << ',' << csv_quote(space.to_assignment(space.design(row.design_id)).dump())
        << ',' << format_double(row.warmup_score) << ','
        << (row.predicted_score ? format_double(*row.predicted_score) : std::string()) << ',' << row.candidate_count
        << '\n';
  }
}

std::vector<TrajectoryRow> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "step,design_id,design_json,warmup_score,predicted_score,candidate_count") {
    throw DataError(path + ": unexpected trajectory header");
  }
  std::vector<TrajectoryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 6) throw DataError(path + ": line " + std::to_string(line_no) + ": expected 6 fields");
    try {
      TrajectoryRow row;
      row.step = std::stoi(f[0]);
      row.design_id = static_cast<DesignId>(std::stoul(f[1]));
      row.warmup_score = parse_score(f[3]);
      if (!f[4].empty()) row.predicted_score = parse_score(f[4]);
      row.candidate_count = std::stoul(f[5]);
      rows.push_back(row);
    } catch (const std::logic_error&) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

nlohmann::json result_to_json(const DesignSpace& space, const SearchResult& result) {
  nlohmann::json finalists = nlohmann::json::array();
  for (const auto& f : result.finalists) {
    finalists.push_back({{"design_id", f.design_id},
                         {"warmup_score", number_or_null(f.warmup_score)},
                         {"full_score", number_or_null(f.full_score)}});
  }
  double best_warm = kFailed;
  for (const auto& f : result.finalists) {
    if (f.design_id == result.best_design) best_warm = f.warmup_score;
  }
  return {{"strategy", to_string(result.strategy)},
          {"best",
           {{"design_id", result.best_design},
            {"design", space.to_assignment(space.design(result.best_design))},
            {"full_score", number_or_null(result.best_full_score)},
            {"warmup_score", number_or_null(best_warm)}}},
          {"best_warmup_score", number_or_null(result.best_warmup_score())},
          {"warmup_evaluations", result.trajectory.size()},
          {"full_evaluations", finalists},
          {"failures", result.failures},
          {"notices", result.notices}};
}

}  // namespace falcon
