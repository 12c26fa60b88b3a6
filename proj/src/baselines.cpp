#include "falcon/baselines.hpp"

#include <cmath>

#include "falcon/errors.hpp"

namespace falcon {
namespace {

SearchResult sample_and_finish(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config,
                               Strategy strategy) {
  SearchConfig c = config;
  c.strategy = strategy;
  c.validate(space.size());
  const int k = c.exploration_size(space.size());
  SearchResult result;
  result.strategy = strategy;
  WarmupRunner runner(evaluator, c, k, result);
  Rng rng(c.seed);
  for (DesignId id : sample_distinct(space.size(), static_cast<std::size_t>(k), rng)) {
    runner.evaluate(id, std::nullopt, 0);
  }
  finish_search(space, evaluator, c, result);
  return result;
}

}  // namespace

SearchResult run_random(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config) {
  return sample_and_finish(space, evaluator, config, Strategy::kRandom);
}

SearchResult run_bruteforce(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config) {
  return sample_and_finish(space, evaluator, config, Strategy::kBruteforce);
}

bool sa_accepts(double delta, double temperature, Rng& rng) {
  const double u = rng.uniform();
  if (delta >= 0.0) return true;
  return u < std::exp(delta / temperature);
}

SearchResult run_sa(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config) {
  SearchConfig c = config;
  c.strategy = Strategy::kSa;
  c.validate(space.size());
  SearchResult result;
  result.strategy = Strategy::kSa;
  WarmupRunner runner(evaluator, c, c.budget, result);
  Rng rng(c.seed);
  LazyDesignGraph graph(space);

  DesignId current = static_cast<DesignId>(rng.index(space.size()));
  double current_score = runner.evaluate(current, std::nullopt, 0).score;
  double temperature = c.sa_initial_temperature;
  for (int step = 1; step < c.budget; ++step) {
    const auto nbrs = graph.neighbors(current);
    if (nbrs.empty()) {
      // Single-design space: nothing to propose, so re-evaluate in place.
      runner.evaluate(current, std::nullopt, 0);
      continue;
    }
    const DesignId proposal = nbrs[rng.index(nbrs.size())].id;
    const double score = runner.evaluate(proposal, std::nullopt, nbrs.size()).score;
    const double delta = std::isfinite(current_score) ? score - current_score
                                                      : (std::isfinite(score) ? 0.0 : -1.0);
    if (std::isfinite(score) && sa_accepts(delta, temperature, rng)) {
      current = proposal;
      current_score = score;
    }
    temperature *= c.sa_cooling;
  }
  finish_search(space, evaluator, c, result);
  return result;
}

}  // namespace falcon
