#pragma once

// Certain-prediction queries for K-NN over incomplete datasets.
//
//   Q1 (checking): is label l predicted in every possible world?
//   Q2 (counting): in how many possible worlds is label l predicted?
//
// All engines scan the candidates in ascending similarity. At pivot (i, j) the
// similarity tally alpha[n] counts row n's candidates that are no more similar
// than the pivot; the worlds in which the pivot is exactly the K-th neighbor
// factor per label into independent choices, counted by a small DP over rows.
//
// Counts are templated on the arithmetic:
//   BigCount - exact number of worlds (arbitrary precision),
//   double   - fraction of worlds (every factor divided by |C_n|).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "cpclean/dataset.hpp"
#include "cpclean/error.hpp"
#include "cpclean/knn.hpp"

namespace cpclean {

// ---- inputs -----------------------------------------------------------------

// Rows scored against one query point. This is all an engine needs.
struct ScoredRows {
  SimilarityTable scores;
  std::vector<Label> labels;
  std::size_t num_labels = 2;

  std::size_t size() const { return scores.size(); }
  std::size_t candidates(std::size_t row) const { return scores[row].size(); }
};

inline ScoredRows score_rows(const IncompleteDataset& data, std::span<const double> t,
                             SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  return {similarity_table(data, t, kernel), data.labels(), data.num_labels};
}

inline void validate_query(const ScoredRows& rows, std::size_t k) {
  if (rows.size() == 0) fail(ErrorKind::invalid_argument, "query over an empty dataset");
  if (rows.labels.size() != rows.size()) fail(ErrorKind::invalid_argument, "labels and scores differ in length");
  if (k < 1 || k > rows.size())
    fail(ErrorKind::invalid_argument,
         "K=" + std::to_string(k) + " out of range [1, N=" + std::to_string(rows.size()) + "]");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows.scores[i].empty()) fail(ErrorKind::invalid_argument, "row " + std::to_string(i) + " has no candidates");
    if (rows.labels[i] >= rows.num_labels)
      fail(ErrorKind::invalid_argument, "row " + std::to_string(i) + " label out of range");
  }
}

// ---- count arithmetic -------------------------------------------------------

template <class Count>
struct CountTraits;

template <>
struct CountTraits<BigCount> {
  static constexpr std::string_view mode = "exact";
  // Row n is outside the top-K: alpha of its m candidates qualify.
  static BigCount below(std::size_t alpha, std::size_t) { return alpha; }
  // Row n is inside the top-K: the other m - alpha candidates qualify.
  static BigCount above(std::size_t alpha, std::size_t m) { return m - alpha; }
  // The pivot row is pinned to the pivot candidate.
  static BigCount pinned(std::size_t) { return 1; }
  static BigCount worlds(std::size_t m) { return m; }
};

template <>
struct CountTraits<double> {
  static constexpr std::string_view mode = "normalized";
  static double below(std::size_t alpha, std::size_t m) { return static_cast<double>(alpha) / static_cast<double>(m); }
  static double above(std::size_t alpha, std::size_t m) {
    return static_cast<double>(m - alpha) / static_cast<double>(m);
  }
  static double pinned(std::size_t m) { return 1.0 / static_cast<double>(m); }
  static double worlds(std::size_t) { return 1.0; }
};

template <class Count>
struct Q2Answer {
  std::vector<Count> per_label;
  Count total{};

  bool operator==(const Q2Answer&) const = default;
};

using ExactQ2 = Q2Answer<BigCount>;
using NormalizedQ2 = Q2Answer<double>;

template <class Count>
Count total_worlds(const ScoredRows& rows) {
  Count total = 1;
  for (const auto& r : rows.scores) total *= CountTraits<Count>::worlds(r.size());
  return total;
}

inline NormalizedQ2 normalize(const ExactQ2& exact) {
  NormalizedQ2 out;
  out.total = 1.0;
  for (const auto& c : exact.per_label) {
    // Ratio of big integers without overflowing double on either side.
    using boost::multiprecision::cpp_bin_float_100;
    out.per_label.push_back(static_cast<double>(cpp_bin_float_100(c) / cpp_bin_float_100(exact.total)));
  }
  return out;
}

// ---- scan order and similarity tally ---------------------------------------

struct Pivot {
  std::size_t row = 0;
  std::size_t candidate = 0;

  bool operator==(const Pivot&) const = default;
};

// Ascending similarity under the global tie order: among equal scores the
// larger (row, candidate) comes first, i.e. counts as less similar.
inline std::vector<Pivot> scan_order(const SimilarityTable& table) {
  std::vector<Pivot> order;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table[i].size(); ++j) order.push_back({i, j});
  std::sort(order.begin(), order.end(), [&](const Pivot& a, const Pivot& b) {
    const double sa = table[a.row][a.candidate];
    const double sb = table[b.row][b.candidate];
    if (sa != sb) return sa < sb;
    if (a.row != b.row) return a.row > b.row;
    return a.candidate > b.candidate;
  });
  return order;
}

// alpha[n] = number of row-n candidates no more similar than the current pivot.
class SimilarityTally {
 public:
  explicit SimilarityTally(std::vector<std::size_t> row_sizes)
      : sizes_(std::move(row_sizes)), alpha_(sizes_.size(), 0) {}

  // Makes `next` the pivot. Its row gains one candidate at or below the pivot.
  void advance(Pivot next) {
    if (next.row >= alpha_.size() || alpha_[next.row] >= sizes_[next.row])
      fail(ErrorKind::invalid_argument, "tally advanced past the candidates of row " + std::to_string(next.row));
    ++alpha_[next.row];
    pivot_ = next;
  }

  std::size_t operator[](std::size_t n) const { return alpha_[n]; }
  std::span<const std::size_t> alpha() const { return alpha_; }
  std::span<const std::size_t> sizes() const { return sizes_; }
  const std::optional<Pivot>& pivot() const { return pivot_; }
  std::size_t size() const { return alpha_.size(); }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> alpha_;
  std::optional<Pivot> pivot_;
};

inline std::vector<std::size_t> row_sizes(const ScoredRows& rows) {
  std::vector<std::size_t> sizes;
  sizes.reserve(rows.size());
  for (const auto& r : rows.scores) sizes.push_back(r.size());
  return sizes;
}

// Worlds in which the pivot of row `pivot_row` is exactly the K-th most similar
// point, by enumerating every choice S of the K-1 rows ranked above it.
// Exponential in K; a cross-check for the DP, not an engine building block.
inline BigCount boundary_count(std::size_t pivot_row, const SimilarityTally& tally, std::size_t k) {
  const std::size_t n = tally.size();
  if (k < 1 || k > n) fail(ErrorKind::invalid_argument, "boundary count needs 1 <= K <= N");
  std::vector<std::size_t> others;
  for (std::size_t r = 0; r < n; ++r)
    if (r != pivot_row) others.push_back(r);
  std::vector<bool> in_s(n, false);
  BigCount total = 0;
  auto recurse = [&](auto&& self, std::size_t start, std::size_t remaining) -> void {
    if (remaining == 0) {
      BigCount prod = 1;
      for (std::size_t r : others) prod *= in_s[r] ? BigCount(tally.sizes()[r] - tally[r]) : BigCount(tally[r]);
      total += prod;
      return;
    }
    for (std::size_t p = start; p + remaining <= others.size(); ++p) {
      in_s[others[p]] = true;
      self(self, p + 1, remaining - 1);
      in_s[others[p]] = false;
    }
  };
  recurse(recurse, 0, k - 1);
  return total;
}

// ---- label support ----------------------------------------------------------

// C_l(c, N) for c = 0..K: ways for exactly c rows labelled l to sit in the
// top-K given the pivot row is the K-th. Rows with another label are skipped;
// the pivot row consumes a slot; any other row is either above (|C_n| - alpha)
// or below (alpha) the pivot.
template <class Count>
std::vector<Count> label_support_dp(std::size_t pivot_row, const SimilarityTally& tally,
                                    std::span<const Label> labels, Label l, std::size_t k) {
  using T = CountTraits<Count>;
  std::vector<Count> cur(k + 1, Count(0));
  std::vector<Count> next(k + 1, Count(0));
  cur[0] = 1;
  for (std::size_t n = 0; n < tally.size(); ++n) {
    if (labels[n] != l) continue;
    const std::size_t m = tally.sizes()[n];
    if (n == pivot_row) {
      const Count pin = T::pinned(m);
      next[0] = 0;
      for (std::size_t c = 1; c <= k; ++c) next[c] = cur[c - 1] * pin;
    } else {
      const Count below = T::below(tally[n], m);
      const Count above = T::above(tally[n], m);
      next[0] = below * cur[0];
      for (std::size_t c = 1; c <= k; ++c) next[c] = below * cur[c] + above * cur[c - 1];
    }
    std::swap(cur, next);
  }
  return cur;
}

// Support of a label tally: product of per-label supports, zero unless the
// pivot's own label has at least one slot.
template <class Count>
Count support(Label pivot_label, std::span<const std::size_t> gamma, const std::vector<std::vector<Count>>& dp) {
  if (gamma[pivot_label] < 1) return Count(0);
  Count prod = 1;
  for (Label l = 0; l < gamma.size(); ++l) {
    prod *= dp[l][gamma[l]];
    if (prod == 0) break;
  }
  return prod;
}

// Every label tally summing to K with gamma[required] >= 1, lexicographic.
template <class Fn>
void for_each_label_tally(std::size_t k, std::size_t num_labels, Label required, Fn&& fn) {
  std::vector<std::size_t> gamma(num_labels, 0);
  auto recurse = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
    if (pos + 1 == num_labels) {
      gamma[pos] = remaining;
      if (gamma[required] >= 1) fn(std::span<const std::size_t>(gamma));
      return;
    }
    for (std::size_t v = 0; v <= remaining; ++v) {
      gamma[pos] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  recurse(recurse, 0, k);
}

// ---- SS: flat DP per pivot --------------------------------------------------

template <class Count>
Q2Answer<Count> q2_ss(const ScoredRows& rows, std::size_t k) {
  validate_query(rows, k);
  Q2Answer<Count> r;
  r.per_label.assign(rows.num_labels, Count(0));
  r.total = total_worlds<Count>(rows);
  SimilarityTally tally(row_sizes(rows));
  std::vector<std::vector<Count>> dp(rows.num_labels);
  for (const Pivot& p : scan_order(rows.scores)) {
    tally.advance(p);
    for (Label l = 0; l < rows.num_labels; ++l) dp[l] = label_support_dp<Count>(p.row, tally, rows.labels, l, k);
    for_each_label_tally(k, rows.num_labels, rows.labels[p.row], [&](std::span<const std::size_t> gamma) {
      Count s = support<Count>(rows.labels[p.row], gamma, dp);
      if (s != 0) r.per_label[vote(gamma)] += s;
    });
  }
  return r;
}

// ---- SS-DC: segment tree over rows ------------------------------------------

// Bottom-up segment tree whose node (a, b) holds T(c, a, b), c = 0..K: the
// label support restricted to rows a..b. Parents convolve their children,
// truncated at K. Unused padding leaves hold the identity [1, 0, ..., 0].
template <class Count>
class SupportTree {
 public:
  SupportTree(std::size_t n_rows, std::size_t k) : k_(k) {
    leaves_ = 1;
    while (leaves_ < n_rows) leaves_ <<= 1;
    values_.assign(2 * leaves_ * (k_ + 1), Count(0));
    for (std::size_t node = 1; node < 2 * leaves_; ++node) at(node, 0) = 1;
  }

  // Sets a leaf without touching its ancestors; follow with rebuild().
  void assign_leaf(std::size_t row, std::span<const Count> values) { copy_to(leaves_ + row, values); }

  void rebuild() {
    for (std::size_t node = leaves_ - 1; node >= 1; --node) merge(node);
  }

  // Sets a leaf and recomputes its ancestors. Returns the number of nodes written.
  std::size_t update(std::size_t row, std::span<const Count> values) {
    std::size_t node = leaves_ + row;
    copy_to(node, values);
    std::size_t touched = 1;
    for (node >>= 1; node >= 1; node >>= 1) {
      merge(node);
      ++touched;
    }
    return touched;
  }

  std::span<const Count> root() const { return {values_.data() + (k_ + 1), k_ + 1}; }
  std::span<const Count> leaf(std::size_t row) const { return {values_.data() + (leaves_ + row) * (k_ + 1), k_ + 1}; }
  std::size_t height() const {
    std::size_t h = 1;
    for (std::size_t w = leaves_; w > 1; w >>= 1) ++h;
    return h;
  }

 private:
  Count& at(std::size_t node, std::size_t c) { return values_[node * (k_ + 1) + c]; }

  void copy_to(std::size_t node, std::span<const Count> values) {
    for (std::size_t c = 0; c <= k_; ++c) at(node, c) = c < values.size() ? values[c] : Count(0);
  }

  void merge(std::size_t node) {
    const std::size_t left = 2 * node, right = 2 * node + 1;
    for (std::size_t c = 0; c <= k_; ++c) {
      Count sum = 0;
      for (std::size_t a = 0; a <= c; ++a) {
        const Count& lv = values_[left * (k_ + 1) + a];
        if (lv == 0) continue;
        const Count& rv = values_[right * (k_ + 1) + (c - a)];
        if (rv == 0) continue;
        sum += lv * rv;
      }
      at(node, c) = std::move(sum);
    }
  }

  std::size_t k_;
  std::size_t leaves_;
  std::vector<Count> values_;
};

// The incremental scan shared by SS-DC and SS-DC-MC: one SupportTree per label,
// kept equal to the flat DP as the pivot moves. Only the leaves of the previous
// and the new pivot row change per step.
template <class Count>
class SupportScan {
 public:
  SupportScan(const ScoredRows& rows, std::size_t k) : rows_(rows), k_(k), tally_(row_sizes(rows)) {
    trees_.reserve(rows.num_labels);
    for (Label l = 0; l < rows.num_labels; ++l) trees_.emplace_back(rows.size(), k);
    std::vector<Count> leaf(k + 1);
    for (std::size_t n = 0; n < rows.size(); ++n) {
      leaf_values(n, leaf);
      trees_[rows.labels[n]].assign_leaf(n, leaf);
    }
    for (auto& t : trees_) t.rebuild();
  }

  void advance(Pivot next) {
    const std::optional<Pivot> previous = tally_.pivot();
    tally_.advance(next);
    last_touched_ = 0;
    if (previous && previous->row != next.row) last_touched_ += refresh(previous->row);
    last_touched_ += refresh(next.row);
  }

  std::span<const Count> root(Label l) const { return trees_[l].root(); }
  const SimilarityTally& tally() const { return tally_; }
  std::size_t nodes_touched_last_advance() const { return last_touched_; }
  std::size_t tree_height() const { return trees_.front().height(); }

 private:
  // Leaf of row n in the tree of its own label; other trees hold identity there.
  void leaf_values(std::size_t n, std::vector<Count>& out) const {
    using T = CountTraits<Count>;
    std::fill(out.begin(), out.end(), Count(0));
    const std::size_t m = rows_.candidates(n);
    if (tally_.pivot() && tally_.pivot()->row == n) {
      out[1] = T::pinned(m);
    } else {
      out[0] = T::below(tally_[n], m);
      if (k_ >= 1) out[1] = T::above(tally_[n], m);
    }
  }

  std::size_t refresh(std::size_t n) {
    std::vector<Count> leaf(k_ + 1);
    leaf_values(n, leaf);
    return trees_[rows_.labels[n]].update(n, leaf);
  }

  const ScoredRows& rows_;
  std::size_t k_;
  SimilarityTally tally_;
  std::vector<SupportTree<Count>> trees_;
  std::size_t last_touched_ = 0;
};

// Instrumentation for the tree engines.
struct ScanStats {
  std::size_t pivots = 0;
  std::size_t max_nodes_per_pivot = 0;
  std::size_t total_nodes = 0;
  std::size_t tree_height = 0;
};

template <class Count>
Q2Answer<Count> q2_ss_dc(const ScoredRows& rows, std::size_t k, ScanStats* stats = nullptr) {
  validate_query(rows, k);
  Q2Answer<Count> r;
  r.per_label.assign(rows.num_labels, Count(0));
  r.total = total_worlds<Count>(rows);
  SupportScan<Count> scan(rows, k);
  std::vector<std::vector<Count>> roots(rows.num_labels, std::vector<Count>(k + 1));
  for (const Pivot& p : scan_order(rows.scores)) {
    scan.advance(p);
    if (stats) {
      ++stats->pivots;
      stats->total_nodes += scan.nodes_touched_last_advance();
      stats->max_nodes_per_pivot = std::max(stats->max_nodes_per_pivot, scan.nodes_touched_last_advance());
      stats->tree_height = scan.tree_height();
    }
    for (Label l = 0; l < rows.num_labels; ++l) {
      auto root = scan.root(l);
      std::copy(root.begin(), root.end(), roots[l].begin());
    }
#ifndef NDEBUG
    if constexpr (std::is_same_v<Count, BigCount>)
      for (Label l = 0; l < rows.num_labels; ++l)
        if (roots[l] != label_support_dp<Count>(p.row, scan.tally(), rows.labels, l, k))
          fail(ErrorKind::invalid_argument, "support tree diverged from the flat DP");
#endif
    for_each_label_tally(k, rows.num_labels, rows.labels[p.row], [&](std::span<const std::size_t> gamma) {
      Count s = support<Count>(rows.labels[p.row], gamma, roots);
      if (s != 0) r.per_label[vote(gamma)] += s;
    });
  }
  return r;
}

// ---- SS-DC-MC: grouped tallies, polynomial in |Y| ---------------------------

// Instead of enumerating label tallies, count for each label l and each c = 1..K
// the worlds where l has exactly c top-K slots and wins the vote: labels below l
// must stay under c (ties go to the smaller label), labels above l at most c,
// and together they fill the remaining K - c slots.
template <class Count>
Q2Answer<Count> q2_ss_dc_mc(const ScoredRows& rows, std::size_t k) {
  validate_query(rows, k);
  Q2Answer<Count> r;
  r.per_label.assign(rows.num_labels, Count(0));
  r.total = total_worlds<Count>(rows);
  SupportScan<Count> scan(rows, k);
  std::vector<Count> ways(k + 1), next(k + 1);
  for (const Pivot& p : scan_order(rows.scores)) {
    scan.advance(p);
    for (Label l = 0; l < rows.num_labels; ++l) {
      const auto own = scan.root(l);
      for (std::size_t c = 1; c <= k; ++c) {
        if (own[c] == 0) continue;
        const std::size_t rest = k - c;
        std::fill(ways.begin(), ways.end(), Count(0));
        ways[0] = 1;
        for (Label other = 0; other < rows.num_labels; ++other) {
          if (other == l) continue;
          const std::size_t cap = other < l ? c - 1 : c;
          const auto t = scan.root(other);
          for (std::size_t total = 0; total <= rest; ++total) {
            Count sum = 0;
            for (std::size_t take = 0; take <= std::min(cap, total); ++take) {
              if (t[take] == 0 || ways[total - take] == 0) continue;
              sum += t[take] * ways[total - take];
            }
            next[total] = std::move(sum);
          }
          std::swap(ways, next);
        }
        if (ways[rest] != 0) r.per_label[l] += own[c] * ways[rest];
      }
    }
  }
  return r;
}

// ---- MM: extreme worlds for binary Q1 ---------------------------------------

// The l-extreme world: most similar candidate for rows labelled l, least
// similar for the rest. Returns one score per row.
inline std::vector<double> extreme_world_scores(const ScoredRows& rows, Label l) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows.scores[i];
    out.push_back(rows.labels[i] == l ? *std::max_element(s.begin(), s.end()) : *std::min_element(s.begin(), s.end()));
  }
  return out;
}

inline std::vector<bool> q1_mm(const ScoredRows& rows, std::size_t k) {
  if (rows.num_labels != 2) fail(ErrorKind::invalid_argument, "MM requires binary labels");
  validate_query(rows, k);
  std::array<Label, 2> pred{};
  for (Label l = 0; l < 2; ++l) pred[l] = predict_from_scores(extreme_world_scores(rows, l), rows.labels, k, 2);
  std::vector<bool> out(2, false);
  for (Label l = 0; l < 2; ++l) out[l] = pred[l] == l && pred[1 - l] != 1 - l;
  return out;
}

inline std::vector<bool> q1_via_q2(const ExactQ2& q2) {
  std::vector<bool> out;
  for (const auto& c : q2.per_label) out.push_back(c == q2.total);
  return out;
}

// Normalized counts need an explicit tolerance to decide certainty.
inline std::vector<bool> q1_via_q2(const NormalizedQ2& q2, double tolerance) {
  std::vector<bool> out;
  for (double c : q2.per_label) out.push_back(std::abs(c - q2.total) <= tolerance);
  return out;
}
std::vector<bool> q1_via_q2(const NormalizedQ2&) = delete;

// ---- exhaustive oracle ------------------------------------------------------

inline constexpr std::size_t kDefaultBruteForceLimit = 2'000'000;

struct BruteForceResult {
  std::vector<bool> certain;
  ExactQ2 counts;
};

inline BruteForceResult brute_force(const ScoredRows& rows, std::size_t k,
                                    std::size_t limit = kDefaultBruteForceLimit) {
  validate_query(rows, k);
  const BigCount worlds = total_worlds<BigCount>(rows);
  if (worlds > limit)
    fail(ErrorKind::limit, "brute force refused: " + worlds.str() + " possible worlds exceed the limit of " +
                               std::to_string(limit));
  const std::size_t n = rows.size();
  std::vector<std::size_t> per_label(rows.num_labels, 0);
  std::vector<std::size_t> choice(n, 0);
  std::vector<double> world(n);
  std::vector<std::size_t> scratch;
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) world[i] = rows.scores[i][choice[i]];
    ++per_label[predict_from_scores(world, rows.labels, k, rows.num_labels, scratch)];
    std::size_t pos = 0;
    while (pos < n && ++choice[pos] == rows.scores[pos].size()) choice[pos++] = 0;
    if (pos == n) break;
  }
  BruteForceResult out;
  out.counts.total = worlds;
  for (std::size_t c : per_label) {
    out.counts.per_label.emplace_back(c);
    out.certain.push_back(BigCount(c) == worlds);
  }
  return out;
}

// ---- engine selection -------------------------------------------------------

enum class Engine { ss, ss_dc, ss_dc_mc, mm, brute };

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::ss: return "ss";
    case Engine::ss_dc: return "ss-dc";
    case Engine::ss_dc_mc: return "ss-dc-mc";
    case Engine::mm: return "mm";
    case Engine::brute: return "brute";
  }
  return "?";
}

inline Engine parse_engine(std::string_view s) {
  for (Engine e : {Engine::ss, Engine::ss_dc, Engine::ss_dc_mc, Engine::mm, Engine::brute})
    if (to_string(e) == s) return e;
  fail(ErrorKind::invalid_argument, "unknown engine '" + std::string(s) + "' (ss|ss-dc|ss-dc-mc|mm|brute)");
}

template <class Count>
Q2Answer<Count> q2(Engine engine, const ScoredRows& rows, std::size_t k,
                   std::size_t brute_limit = kDefaultBruteForceLimit) {
  switch (engine) {
    case Engine::ss: return q2_ss<Count>(rows, k);
    case Engine::ss_dc: return q2_ss_dc<Count>(rows, k);
    case Engine::ss_dc_mc: return q2_ss_dc_mc<Count>(rows, k);
    case Engine::brute: {
      auto exact = brute_force(rows, k, brute_limit).counts;
      if constexpr (std::is_same_v<Count, BigCount>) return exact;
      else return normalize(exact);
    }
    case Engine::mm: break;
  }
  fail(ErrorKind::invalid_argument, "engine 'mm' answers Q1 only; choose ss, ss-dc, ss-dc-mc or brute for Q2");
}

// Q1 with any engine: MM directly, otherwise through exact Q2 counts.
inline std::vector<bool> q1(Engine engine, const ScoredRows& rows, std::size_t k,
                            std::size_t brute_limit = kDefaultBruteForceLimit) {
  if (engine == Engine::mm) return q1_mm(rows, k);
  if (engine == Engine::brute) return brute_force(rows, k, brute_limit).certain;
  return q1_via_q2(q2<BigCount>(engine, rows, k));
}

// ---- reachability pruning ---------------------------------------------------

// Rows whose every candidate ranks below the K-th most similar row minimum can
// never enter the top-K of any world. Dropping them scales every label count by
// the same factor (their world count) and leaves predictions unchanged.
struct ReachableRows {
  ScoredRows rows;
  std::vector<std::size_t> original_row;
  BigCount dropped_worlds = 1;
};

// `pinned` restricts one row to a single candidate before pruning.
inline ReachableRows restrict_to_reachable(const ScoredRows& base, std::size_t k,
                                           std::optional<Pivot> pinned = std::nullopt) {
  validate_query(base, k);
  if (pinned && (pinned->row >= base.size() || pinned->candidate >= base.candidates(pinned->row)))
    fail(ErrorKind::invalid_argument, "pinned candidate out of range");
  const std::size_t n = base.size();
  auto row_min = [&](std::size_t i) {
    if (pinned && pinned->row == i) return base.scores[i][pinned->candidate];
    return *std::min_element(base.scores[i].begin(), base.scores[i].end());
  };
  auto row_max = [&](std::size_t i) {
    if (pinned && pinned->row == i) return base.scores[i][pinned->candidate];
    return *std::max_element(base.scores[i].begin(), base.scores[i].end());
  };
  std::vector<std::pair<double, std::size_t>> mins;
  mins.reserve(n);
  for (std::size_t i = 0; i < n; ++i) mins.emplace_back(row_min(i), i);
  std::nth_element(mins.begin(), mins.begin() + static_cast<std::ptrdiff_t>(k - 1), mins.end(),
                   [](const auto& a, const auto& b) { return more_similar(a.first, a.second, b.first, b.second); });
  const auto [tau_score, tau_row] = mins[k - 1];

  ReachableRows out;
  out.rows.num_labels = base.num_labels;
  for (std::size_t i = 0; i < n; ++i) {
    if (more_similar(tau_score, tau_row, row_max(i), i)) {
      out.dropped_worlds *= (pinned && pinned->row == i) ? 1 : base.scores[i].size();
      continue;
    }
    out.original_row.push_back(i);
    out.rows.labels.push_back(base.labels[i]);
    if (pinned && pinned->row == i) out.rows.scores.push_back({base.scores[i][pinned->candidate]});
    else out.rows.scores.push_back(base.scores[i]);
  }
  return out;
}

// Q2 over the reachable rows only, rescaled to the full dataset.
template <class Count>
Q2Answer<Count> q2_pruned(Engine engine, const ScoredRows& rows, std::size_t k,
                          std::optional<Pivot> pinned = std::nullopt) {
  auto reduced = restrict_to_reachable(rows, k, pinned);
  auto answer = q2<Count>(engine, reduced.rows, k);
  if constexpr (std::is_same_v<Count, BigCount>) {
    for (auto& c : answer.per_label) c *= reduced.dropped_worlds;
    answer.total *= reduced.dropped_worlds;
  }
  return answer;
}

}  // namespace cpclean
