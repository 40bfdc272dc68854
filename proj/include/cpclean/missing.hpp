#pragma once

// Missing-not-at-random injection, feature importance and seeded splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cpclean/error.hpp"
#include "cpclean/knn.hpp"
#include "cpclean/table.hpp"

namespace cpclean {

enum class InjectionMode {
  one_cell,   // each affected row loses exactly one feature
  bernoulli,  // each feature of an affected row goes missing independently
};

// Marks exactly floor(rate * N) rows dirty. The missing feature is drawn with
// probability proportional to its importance.
inline RawTable inject_missing(const RawTable& table, double rate, const std::vector<double>& importances,
                               std::uint64_t seed, InjectionMode mode = InjectionMode::one_cell) {
  if (!(rate > 0.0 && rate < 1.0)) fail(ErrorKind::invalid_argument, "missing rate must lie in (0, 1)");
  const auto features = table.schema.feature_indices();
  if (importances.size() != features.size())
    fail(ErrorKind::invalid_argument, "expected " + std::to_string(features.size()) + " importances, got " +
                                          std::to_string(importances.size()));
  double total = 0;
  for (double w : importances) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::invalid_argument, "importances must be nonnegative");
    total += w;
  }
  if (total <= 0.0) fail(ErrorKind::invalid_argument, "importances are all zero");

  RawTable out = table;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(table.num_rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto dirty = static_cast<std::size_t>(std::floor(rate * static_cast<double>(table.num_rows())));
  std::discrete_distribution<std::size_t> pick(importances.begin(), importances.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < dirty; ++r) {
    auto& row = out.rows[order[r]];
    if (mode == InjectionMode::one_cell) {
      row[features[pick(rng)]] = std::nullopt;
      continue;
    }
    bool any = false;
    while (!any) {
      for (std::size_t f = 0; f < features.size(); ++f) {
        if (unit(rng) < importances[f] / total) {
          row[features[f]] = std::nullopt;
          any = true;
        }
      }
    }
  }
  return out;
}

// importance_f = max(0, acc(all features) - acc(all but f)), K-NN on `val`.
inline std::vector<double> feature_importance(const LabeledData& train, const LabeledData& val, std::size_t k) {
  if (train.features.empty() || train.features.front().size() < 2)
    fail(ErrorKind::invalid_argument, "feature importance needs at least 2 features");
  const std::size_t d = train.features.front().size();
  const double full = accuracy(train, val, k);
  auto drop = [](const LabeledData& data, std::size_t f) {
    LabeledData out = data;
    for (auto& x : out.features) x.erase(x.begin() + static_cast<std::ptrdiff_t>(f));
    return out;
  };
  std::vector<double> out(d);
  for (std::size_t f = 0; f < d; ++f) out[f] = std::max(0.0, full - accuracy(drop(train, f), drop(val, f), k));
  return out;
}

struct TableSplit {
  RawTable train;
  RawTable val;
  RawTable test;
};

// Seeded permutation; the first val_size rows go to validation, the next
// test_size to test and the rest to training, all in permuted order.
inline TableSplit split(const RawTable& table, std::size_t val_size, std::size_t test_size, std::uint64_t seed) {
  if (val_size + test_size >= table.num_rows())
    fail(ErrorKind::invalid_argument, "validation + test size must be smaller than the table (" +
                                          std::to_string(table.num_rows()) + " rows)");
  std::vector<std::size_t> order(table.num_rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  TableSplit out{{table.schema, {}}, {table.schema, {}}, {table.schema, {}}};
  for (std::size_t p = 0; p < order.size(); ++p) {
    auto& dst = p < val_size ? out.val : p < val_size + test_size ? out.test : out.train;
    dst.rows.push_back(table.rows[order[p]]);
  }
  return out;
}

}  // namespace cpclean
