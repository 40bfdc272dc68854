#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "cpclean/knn.hpp"

using namespace cpclean;

TEST(Similarity, NegativeEuclidean) {
  std::vector<double> a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(similarity(SimilarityKernel::negative_euclidean, a, b), -5.0);
  std::vector<double> c{1};
  EXPECT_THROW(similarity(SimilarityKernel::negative_euclidean, a, c), Error);
}

TEST(Vote, TiesGoToSmallestLabel) {
  std::vector<std::size_t> tally{1, 2, 2};
  EXPECT_EQ(vote(tally), 1u);
  std::vector<std::size_t> even{2, 2};
  EXPECT_EQ(vote(even), 0u);
}

TEST(Predict, EqualScoresPreferSmallerRow) {
  std::vector<double> scores{0.5, 0.9, 0.9};
  std::vector<Label> labels{0, 1, 0};
  EXPECT_EQ(predict_from_scores(scores, labels, 1, 2), 1u);
  labels = {0, 0, 1};
  EXPECT_EQ(predict_from_scores(scores, labels, 1, 2), 0u);
}

TEST(Predict, MatchesSortedReference) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> grid(0, 4);
  for (int it = 0; it < 500; ++it) {
    const std::size_t n = 1 + it % 9, k = 1 + it % n, y = 2 + it % 3;
    std::vector<double> s(n);
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = grid(rng);
      labels[i] = rng() % y;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    std::vector<std::size_t> tally(y, 0);
    for (std::size_t r = 0; r < k; ++r) ++tally[labels[idx[r]]];
    const auto best = std::max_element(tally.begin(), tally.end()) - tally.begin();
    ASSERT_EQ(predict_from_scores(s, labels, k, y), static_cast<Label>(best));
  }
}

TEST(Predict, RejectsBadK) {
  std::vector<double> s{1, 2};
  std::vector<Label> l{0, 1};
  EXPECT_THROW(predict_from_scores(s, l, 0, 2), Error);
  EXPECT_THROW(predict_from_scores(s, l, 3, 2), Error);
}

TEST(Accuracy, CountsCorrectPredictions) {
  LabeledData train{{{0.0}, {10.0}}, {0, 1}, 2};
  LabeledData eval{{{1.0}, {9.0}, {2.0}}, {0, 1, 1}, 2};
  EXPECT_DOUBLE_EQ(accuracy(train, eval, 1), 2.0 / 3.0);
  EXPECT_THROW(accuracy(train, LabeledData{}, 1), Error);
}
