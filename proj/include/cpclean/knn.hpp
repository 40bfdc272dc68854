#pragma once

// K-nearest-neighbor classification over complete worlds. Every other module
// (engines, brute-force oracle, cleaning loop) relies on the exact ordering and
// voting rules defined here.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "cpclean/dataset.hpp"
#include "cpclean/error.hpp"

namespace cpclean {

enum class SimilarityKernel { negative_euclidean };

inline std::string_view to_string(SimilarityKernel) { return "negative_euclidean"; }

// Larger is more similar.
inline double similarity(SimilarityKernel kernel, std::span<const double> x, std::span<const double> t) {
  if (x.size() != t.size())
    fail(ErrorKind::invalid_argument,
         "dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(t.size()));
  switch (kernel) {
    case SimilarityKernel::negative_euclidean: {
      double sq = 0;
      for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - t[k]) * (x[k] - t[k]);
      return -std::sqrt(sq);
    }
  }
  return 0;
}

// scores[i][j] = similarity of candidate j of row i to the query point.
using SimilarityTable = std::vector<std::vector<double>>;

inline SimilarityTable similarity_table(const IncompleteDataset& data, std::span<const double> t,
                                        SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  SimilarityTable table(data.rows.size());
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    table[i].reserve(data.rows[i].size());
    for (const auto& x : data.rows[i].candidates) table[i].push_back(similarity(kernel, x, t));
  }
  return table;
}

// Strict total order on (score, row): equal similarity is resolved in favor of
// the smaller row index.
inline bool more_similar(double score_a, std::size_t row_a, double score_b, std::size_t row_b) {
  if (score_a != score_b) return score_a > score_b;
  return row_a < row_b;
}

// Majority vote over a label tally; ties go to the smallest label id.
inline Label vote(std::span<const std::size_t> tally) {
  Label best = 0;
  for (Label l = 1; l < tally.size(); ++l)
    if (tally[l] > tally[best]) best = l;
  return best;
}

// Prediction from one similarity score per row. `order` is scratch space.
inline Label predict_from_scores(std::span<const double> scores, std::span<const Label> labels, std::size_t k,
                                 std::size_t num_labels, std::vector<std::size_t>& order) {
  const std::size_t n = scores.size();
  if (n == 0) fail(ErrorKind::invalid_argument, "cannot predict from an empty world");
  if (k < 1 || k > n) fail(ErrorKind::invalid_argument, "K=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return more_similar(scores[a], a, scores[b], b); });
  std::vector<std::size_t> tally(num_labels, 0);
  for (std::size_t r = 0; r < k; ++r) ++tally.at(labels[order[r]]);
  return vote(tally);
}

inline Label predict_from_scores(std::span<const double> scores, std::span<const Label> labels, std::size_t k,
                                 std::size_t num_labels) {
  std::vector<std::size_t> order;
  return predict_from_scores(scores, labels, k, num_labels, order);
}

// A complete labeled dataset; one possible world.
struct LabeledData {
  std::vector<FeatureVector> features;
  std::vector<Label> labels;
  std::size_t num_labels = 2;

  std::size_t size() const { return features.size(); }
};

inline Label knn_predict(const LabeledData& world, std::span<const double> t, std::size_t k,
                         SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  if (world.features.empty()) fail(ErrorKind::invalid_argument, "cannot predict from an empty world");
  std::vector<double> scores;
  scores.reserve(world.size());
  for (const auto& x : world.features) scores.push_back(similarity(kernel, x, t));
  return predict_from_scores(scores, world.labels, k, world.num_labels);
}

inline double accuracy(const LabeledData& world, const LabeledData& evaluation, std::size_t k,
                       SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  if (evaluation.features.empty()) fail(ErrorKind::invalid_argument, "accuracy needs a nonempty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < evaluation.size(); ++i)
    correct += knn_predict(world, evaluation.features[i], k, kernel) == evaluation.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(evaluation.size());
}

}  // namespace cpclean
