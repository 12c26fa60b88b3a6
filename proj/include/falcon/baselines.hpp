#pragma once

#include "falcon/search.hpp"

namespace falcon {

// K distinct uniformly drawn designs, evaluated in draw order.
SearchResult run_random(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config);

// Simulated annealing over the design graph. Each step proposes a uniform
// neighbor of the current design and accepts it with probability
// min(1, exp(delta / T)); T is multiplied by sa_cooling after every step.
// Exactly K warm-up evaluations, revisits included.
SearchResult run_sa(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config);

// ceil(fraction * |space|) distinct uniform designs.
SearchResult run_bruteforce(const DesignSpace& space, Evaluator& evaluator, const SearchConfig& config);

// The SA acceptance rule, exposed for tests.
bool sa_accepts(double delta, double temperature, Rng& rng);

}  // namespace falcon
