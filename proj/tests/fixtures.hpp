#pragma once

#include <random>
#include <vector>

#include "cpclean/cp_engine.hpp"
#include "cpclean/dataset.hpp"

namespace cpclean::testing {

// Three rows, two candidates each; rows 0 and 1 carry label 1, row 2 label 0.
// Ascending similarity: x(1,0) x(0,0) x(1,1) x(2,0) x(0,1) x(2,1).
inline ScoredRows worked_scores() {
  return {{{0.2, 0.5}, {0.1, 0.3}, {0.4, 0.6}}, {1, 1, 0}, 2};
}

// The same ordering realized by 1-D features against the query point 0.
inline IncompleteDataset worked_dataset() {
  IncompleteDataset d;
  d.num_labels = 2;
  d.dimension = 1;
  d.rows = {{{{0.8}, {0.5}}, 1}, {{{0.9}, {0.7}}, 1}, {{{0.6}, {0.4}}, 0}};
  return d;
}

inline FeatureVector worked_query() { return {0.0}; }

struct RandomInstance {
  ScoredRows rows;
  std::size_t k = 1;
};

// Small instance for exhaustive cross-checks. With `coarse` the scores come
// from a grid of six values so that cross-row ties are frequent.
inline RandomInstance random_instance(std::mt19937_64& rng, std::size_t max_rows = 7, std::size_t max_cands = 3,
                                      std::size_t max_labels = 4, bool coarse = false) {
  std::uniform_int_distribution<std::size_t> n_dist(1, max_rows), m_dist(1, max_cands), y_dist(2, max_labels);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 5);
  RandomInstance inst;
  const std::size_t n = n_dist(rng);
  inst.rows.num_labels = y_dist(rng);
  std::uniform_int_distribution<std::size_t> label(0, inst.rows.num_labels - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(m_dist(rng));
    for (auto& v : s) v = coarse ? grid(rng) / 5.0 : score(rng);
    inst.rows.scores.push_back(std::move(s));
    inst.rows.labels.push_back(label(rng));
  }
  const std::size_t ks[] = {1, 3, std::min<std::size_t>(5, n)};
  std::vector<std::size_t> valid;
  for (std::size_t k : ks)
    if (k <= n) valid.push_back(k);
  inst.k = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
  return inst;
}

}  // namespace cpclean::testing
