#pragma once

// Candidate repair sets for dirty rows.
//
// Each missing numeric cell may take one of a few column statistics; each
// missing categorical cell one of the most frequent categories or the "other"
// code. A row with several missing cells takes the Cartesian product, in
// row-major order (the last missing cell varies fastest), deduplicated and
// truncated at the policy cap.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "cpclean/dataset.hpp"
#include "cpclean/encoding.hpp"
#include "cpclean/error.hpp"
#include "cpclean/table.hpp"

namespace cpclean {

enum class NumericStatistic { min, p25, mean, p75, max };

inline std::string_view to_string(NumericStatistic s) {
  switch (s) {
    case NumericStatistic::min: return "min";
    case NumericStatistic::p25: return "p25";
    case NumericStatistic::mean: return "mean";
    case NumericStatistic::p75: return "p75";
    case NumericStatistic::max: return "max";
  }
  return "?";
}

inline NumericStatistic parse_numeric_statistic(std::string_view s) {
  for (auto v : {NumericStatistic::min, NumericStatistic::p25, NumericStatistic::mean, NumericStatistic::p75,
                 NumericStatistic::max})
    if (to_string(v) == s) return v;
  fail(ErrorKind::invalid_argument, "unknown numeric statistic '" + std::string(s) + "'");
}

struct CandidatePolicy {
  std::vector<NumericStatistic> numeric_repairs{NumericStatistic::min, NumericStatistic::p25, NumericStatistic::mean,
                                                NumericStatistic::p75, NumericStatistic::max};
  std::size_t categorical_top_k = 4;
  bool categorical_dummy = true;
  std::size_t cap = 32;
};

// Percentile with linear interpolation between closest ranks (inclusive):
// position q * (n - 1) in the sorted sample.
inline double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty sample");
  require(q >= 0.0 && q <= 1.0, "percentile fraction outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double column_statistic(const std::vector<double>& values, NumericStatistic stat) {
  require(!values.empty(), "statistic of an empty column");
  switch (stat) {
    case NumericStatistic::min: return *std::min_element(values.begin(), values.end());
    case NumericStatistic::max: return *std::max_element(values.begin(), values.end());
    case NumericStatistic::mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    case NumericStatistic::p25: return percentile(values, 0.25);
    case NumericStatistic::p75: return percentile(values, 0.75);
  }
  return 0;
}

// Encoded non-missing values of one feature.
inline std::vector<double> observed_values(const RawTable& table, const Encoder& enc, std::size_t feature) {
  std::vector<double> out;
  const auto col = enc.feature_columns()[feature];
  for (const auto& row : table.rows)
    if (row[col]) out.push_back(enc.encode_feature(feature, row[col]));
  return out;
}

// Per-feature repair values (encoded), computed from the observed cells.
inline std::vector<std::vector<double>> repair_values(const RawTable& table, const Encoder& enc,
                                                      const CandidatePolicy& policy) {
  require(!policy.numeric_repairs.empty(), "candidate policy needs at least one numeric repair");
  require(policy.cap >= 1, "candidate cap must be at least 1");
  std::vector<std::vector<double>> out(enc.dimension());
  for (std::size_t f = 0; f < enc.dimension(); ++f) {
    const auto col = enc.feature_columns()[f];
    bool any_missing = false;
    for (const auto& row : table.rows) any_missing = any_missing || !row[col];
    if (!any_missing) continue;
    const auto& name = table.schema.columns[col].name;
    if (enc.feature(f).kind == ColumnKind::numeric) {
      auto values = observed_values(table, enc, f);
      if (values.empty()) fail(ErrorKind::invalid_argument, "column '" + name + "' is entirely missing", name);
      for (auto stat : policy.numeric_repairs) out[f].push_back(column_statistic(values, stat));
    } else {
      const auto cats = categories_by_frequency(table, col);
      if (cats.empty()) fail(ErrorKind::invalid_argument, "column '" + name + "' is entirely missing", name);
      for (std::size_t c = 0; c < std::min(policy.categorical_top_k, cats.size()); ++c)
        out[f].push_back(enc.feature(f).encode(cats[c]));
      if (policy.categorical_dummy) out[f].push_back(enc.feature(f).dummy_code());
    }
  }
  return out;
}

inline void push_unique(std::vector<FeatureVector>& set, const FeatureVector& x) {
  if (std::find(set.begin(), set.end(), x) == set.end()) set.push_back(x);
}

// Candidate set of one raw row given precomputed per-feature repairs.
inline CandidateSet row_candidates(const std::vector<Cell>& row, const Encoder& enc,
                                   const std::vector<std::vector<double>>& repairs, std::size_t cap) {
  CandidateSet cs;
  cs.label = enc.row_label(row);
  FeatureVector base(enc.dimension(), 0.0);
  std::vector<std::size_t> missing;
  for (std::size_t f = 0; f < enc.dimension(); ++f) {
    const auto& cell = row[enc.feature_columns()[f]];
    if (cell) base[f] = enc.encode_feature(f, cell);
    else missing.push_back(f);
  }
  if (missing.empty()) {
    cs.candidates.push_back(std::move(base));
    return cs;
  }
  // Odometer over the missing cells; stops once `cap` distinct vectors exist.
  std::vector<std::size_t> pos(missing.size(), 0);
  for (;;) {
    FeatureVector x = base;
    for (std::size_t m = 0; m < missing.size(); ++m) x[missing[m]] = repairs[missing[m]][pos[m]];
    push_unique(cs.candidates, x);
    if (cs.candidates.size() >= cap) break;
    std::size_t m = missing.size();
    while (m > 0 && ++pos[m - 1] == repairs[missing[m - 1]].size()) pos[--m] = 0;
    if (m == 0) break;
  }
  return cs;
}

inline IncompleteDataset generate_candidates(const RawTable& table, const Encoder& enc,
                                             const CandidatePolicy& policy = {}) {
  validate(table);
  const auto repairs = repair_values(table, enc, policy);
  IncompleteDataset data;
  data.num_labels = enc.num_labels();
  data.dimension = enc.dimension();
  data.rows.reserve(table.rows.size());
  for (const auto& row : table.rows) data.rows.push_back(row_candidates(row, enc, repairs, policy.cap));
  validate(data);
  return data;
}

inline IncompleteDataset generate_candidates(const RawTable& table, const CandidatePolicy& policy = {}) {
  return generate_candidates(table, Encoder::fit(table), policy);
}

}  // namespace cpclean
