#pragma once

// Sequential information maximization over an incomplete training set: pick the
// dirty row whose cleaning is expected to leave the least prediction entropy on
// the validation set, ask an oracle for its true value, repeat until every
// validation point is certainly predicted.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpclean/cp_engine.hpp"
#include "cpclean/dataset.hpp"
#include "cpclean/error.hpp"
#include "cpclean/knn.hpp"

namespace cpclean {

// ---- entropy ----------------------------------------------------------------

// Shannon entropy of the prediction distribution, in bits.
inline double entropy_bits(std::span<const double> probabilities) {
  double h = 0;
  for (double p : probabilities)
    if (p > 0) h -= p * std::log2(p);
  return std::max(0.0, h);
}

inline double prediction_entropy(const NormalizedQ2& q2) {
  if (!(q2.total > 0)) fail(ErrorKind::invalid_argument, "prediction entropy needs a positive world total");
  std::vector<double> p;
  for (double c : q2.per_label) p.push_back(c / q2.total);
  return entropy_bits(p);
}

inline double prediction_entropy(const ExactQ2& q2) {
  if (q2.total <= 0) fail(ErrorKind::invalid_argument, "prediction entropy needs a positive world total");
  return prediction_entropy(normalize(q2));
}

// Uniform prior over a row's candidates: average of the per-outcome means.
inline double expected_entropy_from_outcomes(std::span<const double> outcome_means) {
  require(!outcome_means.empty(), "expected entropy needs at least one outcome");
  return std::accumulate(outcome_means.begin(), outcome_means.end(), 0.0) / static_cast<double>(outcome_means.size());
}

struct EntropyProfile {
  std::vector<double> per_point;
  double mean = 0;
};

struct CleaningConfig {
  std::size_t k = 3;
  SimilarityKernel kernel = SimilarityKernel::negative_euclidean;
  // Q2 engine for the entropy loop (normalized counts).
  Engine engine = Engine::ss_dc;
  // Re-score only this many of the best rows after the first step; 0 = off.
  std::size_t frontier = 0;
};

// ---- per-validation-point state --------------------------------------------

// Caches every validation point's similarity table against the current
// partially cleaned dataset, together with CP flags and entropies. Cleaning a
// row collapses that row in each table instead of rescoring.
class EntropyEvaluator {
 public:
  EntropyEvaluator(const IncompleteDataset& data, const std::vector<FeatureVector>& val, CleaningConfig config)
      : config_(config), val_(val) {
    validate(data);
    if (config.k < 1 || config.k > data.size())
      fail(ErrorKind::invalid_argument, "K=" + std::to_string(config.k) + " out of range for N=" + std::to_string(data.size()));
    if (config.engine == Engine::mm)
      fail(ErrorKind::invalid_argument, "engine 'mm' answers Q1 only; the entropy loop needs a Q2 engine");
    points_.reserve(val.size());
    for (const auto& t : val) {
      Point p;
      p.rows = score_rows(data, t, config.kernel);
      points_.push_back(std::move(p));
    }
    for (auto& p : points_) refresh(p);
  }

  std::size_t size() const { return points_.size(); }

  // Collapses `row` to its candidate `candidate` in every cached table.
  void pin(std::size_t row, std::size_t candidate) {
    for (auto& p : points_) {
      const double s = p.rows.scores.at(row).at(candidate);
      p.rows.scores[row] = {s};
      if (!p.certain) refresh(p);
    }
  }

  // Collapses `row` to a value that need not be one of its candidates.
  void pin_value(std::size_t row, const FeatureVector& x) {
    for (std::size_t p = 0; p < points_.size(); ++p) {
      points_[p].rows.scores.at(row) = {similarity(config_.kernel, x, val_[p])};
      if (!points_[p].certain) refresh(points_[p]);
    }
  }

  std::vector<bool> cp_flags() const {
    std::vector<bool> out;
    for (const auto& p : points_) out.push_back(p.certain);
    return out;
  }
  bool all_cp() const {
    return std::all_of(points_.begin(), points_.end(), [](const Point& p) { return p.certain; });
  }
  double pct_cp() const {
    if (points_.empty()) return 1.0;
    std::size_t n = 0;
    for (const auto& p : points_) n += p.certain ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(points_.size());
  }

  EntropyProfile profile() const {
    EntropyProfile prof;
    for (const auto& p : points_) prof.per_point.push_back(p.entropy);
    prof.mean = mean_of(prof.per_point);
    return prof;
  }

  // Mean validation entropy if `row` were cleaned to `candidate`.
  double mean_entropy_if(std::size_t row, std::size_t candidate) const {
    std::vector<double> h;
    h.reserve(points_.size());
    for (const auto& p : points_) h.push_back(entropy_if(p, row, candidate));
    return mean_of(h);
  }

  // Expected mean entropy after cleaning `row`, uniform over its candidates.
  double expected_entropy(std::size_t row) const {
    if (points_.empty()) return 0.0;
    const std::size_t m = points_.front().rows.candidates(row);
    if (m < 2) fail(ErrorKind::invalid_argument, "row " + std::to_string(row) + " is already clean");
    std::vector<double> outcomes;
    outcomes.reserve(m);
    for (std::size_t j = 0; j < m; ++j) outcomes.push_back(mean_entropy_if(row, j));
    return expected_entropy_from_outcomes(outcomes);
  }

 private:
  struct Point {
    ScoredRows rows;
    bool certain = false;
    double entropy = 0;
    // K-th most similar row minimum; rows whose maximum ranks below it are
    // out of reach of the top-K in every world.
    double tau_score = 0;
    std::size_t tau_row = 0;
  };

  static double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }

  void refresh(Point& p) const {
    const auto& rows = p.rows;
    if (rows.num_labels == 2) {
      const auto q1 = q1_mm(rows, config_.k);
      p.certain = q1[0] || q1[1];
    } else {
      const auto q1 = q1_via_q2(q2_pruned<BigCount>(Engine::ss_dc, rows, config_.k));
      p.certain = std::find(q1.begin(), q1.end(), true) != q1.end();
    }
    if (p.certain) {
      p.entropy = 0;
      return;
    }
    p.entropy = prediction_entropy(q2_pruned<double>(config_.engine, rows, config_.k));
    std::vector<std::pair<double, std::size_t>> mins;
    for (std::size_t i = 0; i < rows.size(); ++i)
      mins.emplace_back(*std::min_element(rows.scores[i].begin(), rows.scores[i].end()), i);
    std::nth_element(mins.begin(), mins.begin() + static_cast<std::ptrdiff_t>(config_.k - 1), mins.end(),
                     [](const auto& a, const auto& b) { return more_similar(a.first, a.second, b.first, b.second); });
    p.tau_score = mins[config_.k - 1].first;
    p.tau_row = mins[config_.k - 1].second;
  }

  double entropy_if(const Point& p, std::size_t row, std::size_t candidate) const {
    // A certain point stays certain under any further cleaning.
    if (p.certain) return 0.0;
    const auto& s = p.rows.scores[row];
    const double best = *std::max_element(s.begin(), s.end());
    if (more_similar(p.tau_score, p.tau_row, best, row)) return p.entropy;
    return prediction_entropy(q2_pruned<double>(config_.engine, p.rows, config_.k, Pivot{row, candidate}));
  }

  CleaningConfig config_;
  std::vector<FeatureVector> val_;
  std::vector<Point> points_;
};

// ---- library-level operations ----------------------------------------------

inline EntropyProfile mean_conditional_entropy(const IncompleteDataset& data, const std::vector<FeatureVector>& val,
                                               const CleaningConfig& config = {}) {
  if (val.empty()) fail(ErrorKind::invalid_argument, "validation set is empty");
  return EntropyEvaluator(data, val, config).profile();
}

inline double expected_entropy_after_clean(const IncompleteDataset& data, std::size_t row,
                                           const std::vector<FeatureVector>& val, const CleaningConfig& config = {}) {
  if (row >= data.size()) fail(ErrorKind::invalid_argument, "row index out of range");
  if (data.rows[row].is_clean()) fail(ErrorKind::invalid_argument, "row " + std::to_string(row) + " is already clean");
  return EntropyEvaluator(data, val, config).expected_entropy(row);
}

struct CpStatus {
  bool all = true;
  std::vector<bool> per_point;
  bool empty_validation = false;  // vacuously true
};

inline CpStatus all_cp(const IncompleteDataset& data, const std::vector<FeatureVector>& val, std::size_t k,
                       SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  CpStatus st;
  st.empty_validation = val.empty();
  for (const auto& t : val) {
    const auto rows = score_rows(data, t, kernel);
    const auto q1 = data.num_labels == 2 ? q1_mm(rows, k) : q1_via_q2(q2_pruned<BigCount>(Engine::ss_dc, rows, k));
    const bool cp = std::find(q1.begin(), q1.end(), true) != q1.end();
    st.per_point.push_back(cp);
    st.all = st.all && cp;
  }
  return st;
}

struct Selection {
  std::size_t row = 0;
  double expected_entropy = 0;
};

// Argmin of expected entropy over the given rows; ties keep the earliest row.
inline Selection select_among(const EntropyEvaluator& eval, std::span<const std::size_t> rows) {
  if (rows.empty()) fail(ErrorKind::conflict, "nothing to clean");
  Selection best{rows.front(), std::numeric_limits<double>::infinity()};
  for (std::size_t i : rows) {
    const double h = eval.expected_entropy(i);
    if (h < best.expected_entropy) best = {i, h};
  }
  return best;
}

inline Selection select_next(const IncompleteDataset& data, const std::vector<FeatureVector>& val,
                             const CleaningConfig& config = {}) {
  EntropyEvaluator eval(data, val, config);
  if (eval.all_cp()) fail(ErrorKind::conflict, "nothing to clean: every validation point is certainly predicted");
  const auto dirty = data.dirty_rows();
  return select_among(eval, dirty);
}

// ---- oracles ----------------------------------------------------------------

class CleaningOracle {
 public:
  virtual ~CleaningOracle() = default;
  // Index of the true candidate of `row`.
  virtual std::size_t resolve(std::size_t row, const CandidateSet& candidates) = 0;
};

// Picks the candidate closest to the ground-truth row; ties to the smaller index.
class SimulatedOracle : public CleaningOracle {
 public:
  explicit SimulatedOracle(std::vector<FeatureVector> truth, SimilarityKernel kernel = SimilarityKernel::negative_euclidean)
      : truth_(std::move(truth)), kernel_(kernel) {}

  std::size_t resolve(std::size_t row, const CandidateSet& cs) override {
    if (row >= truth_.size()) fail(ErrorKind::invalid_argument, "ground truth has no row " + std::to_string(row));
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cs.candidates.size(); ++j) {
      const double s = similarity(kernel_, cs.candidates[j], truth_[row]);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    return best;
  }

 private:
  std::vector<FeatureVector> truth_;
  SimilarityKernel kernel_;
};

class ScriptedOracle : public CleaningOracle {
 public:
  explicit ScriptedOracle(std::map<std::size_t, std::size_t> answers) : answers_(std::move(answers)) {}

  std::size_t resolve(std::size_t row, const CandidateSet&) override {
    auto it = answers_.find(row);
    if (it == answers_.end()) fail(ErrorKind::not_found, "scripted oracle has no answer for row " + std::to_string(row));
    return it->second;
  }

 private:
  std::map<std::size_t, std::size_t> answers_;
};

// ---- the cleaning loop ------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;  // 1-based
  std::size_t selected_row = 0;
  std::size_t chosen_candidate = 0;
  std::optional<double> expected_entropy;  // absent for random selection
  double realized_mean_entropy = 0;
  double pct_val_cp = 0;
  std::size_t cleaned_count = 0;
  bool free_form = false;
  std::size_t frontier = 0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"selected_row", r.selected_row},
                   {"chosen_candidate", r.chosen_candidate},
                   {"expected_entropy", nullptr},
                   {"realized_mean_entropy", r.realized_mean_entropy},
                   {"pct_val_cp", r.pct_val_cp},
                   {"cleaned_count", r.cleaned_count}};
  if (r.expected_entropy) j["expected_entropy"] = *r.expected_entropy;
  if (r.free_form) j["free_form"] = true;
  if (r.frontier) j["frontier"] = r.frontier;
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.selected_row = j.at("selected_row").get<std::size_t>();
  r.chosen_candidate = j.value("chosen_candidate", std::size_t{0});
  if (j.contains("expected_entropy") && !j["expected_entropy"].is_null())
    r.expected_entropy = j["expected_entropy"].get<double>();
  r.realized_mean_entropy = j.at("realized_mean_entropy").get<double>();
  r.pct_val_cp = j.at("pct_val_cp").get<double>();
  r.cleaned_count = j.at("cleaned_count").get<std::size_t>();
  r.free_form = j.value("free_form", false);
  r.frontier = j.value("frontier", std::size_t{0});
  return r;
}

enum class StopReason { converged, budget_exhausted, no_dirty_rows };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::no_dirty_rows: return "no_dirty_rows";
  }
  return "?";
}

struct CleaningResult {
  std::vector<std::size_t> strategy;  // cleaned rows in order
  std::vector<StepRecord> trace;
  IncompleteDataset dataset;  // partially cleaned
  bool converged = false;
  StopReason reason = StopReason::converged;
  double initial_pct_cp = 0;
  double initial_mean_entropy = 0;

  // One possible world of the cleaned dataset (first candidate per row).
  std::vector<FeatureVector> any_world() const { return dataset.world(std::vector<std::size_t>(dataset.size(), 0)); }
};

enum class SelectionPolicy { cpclean, random };

struct RunOptions {
  CleaningConfig config;
  std::optional<std::size_t> budget;
  SelectionPolicy policy = SelectionPolicy::cpclean;
  std::uint64_t seed = 0;  // random policy only
  // Called after every committed step with the updated dataset.
  std::function<void(const IncompleteDataset&, const StepRecord&)> on_step;
};

inline CleaningResult run_cleaning(const IncompleteDataset& data, const std::vector<FeatureVector>& val,
                                   CleaningOracle& oracle, const RunOptions& options) {
  CleaningResult result;
  result.dataset = data;
  EntropyEvaluator eval(data, val, options.config);
  result.initial_pct_cp = eval.pct_cp();
  result.initial_mean_entropy = eval.profile().mean;

  std::vector<std::size_t> dirty = data.dirty_rows();
  std::mt19937_64 rng(options.seed);
  if (options.policy == SelectionPolicy::random) std::shuffle(dirty.begin(), dirty.end(), rng);
  std::vector<double> stale(data.size(), std::numeric_limits<double>::infinity());

  for (;;) {
    if (eval.all_cp()) {
      result.converged = true;
      result.reason = StopReason::converged;
      break;
    }
    if (dirty.empty()) {
      result.reason = StopReason::no_dirty_rows;
      break;
    }
    if (options.budget && result.strategy.size() >= *options.budget) {
      result.reason = StopReason::budget_exhausted;
      break;
    }

    StepRecord rec;
    std::size_t pick_pos = 0;
    if (options.policy == SelectionPolicy::random) {
      rec.selected_row = dirty.front();
    } else {
      const std::size_t f = options.config.frontier;
      std::vector<std::size_t> rescore = dirty;
      if (f > 0 && !result.strategy.empty() && f < dirty.size()) {
        std::stable_sort(rescore.begin(), rescore.end(), [&](std::size_t a, std::size_t b) { return stale[a] < stale[b]; });
        rescore.resize(f);
        rec.frontier = f;
      }
      for (std::size_t i : rescore) stale[i] = eval.expected_entropy(i);
      Selection best{dirty.front(), std::numeric_limits<double>::infinity()};
      for (std::size_t i : dirty)
        if (stale[i] < best.expected_entropy) best = {i, stale[i]};
      rec.selected_row = best.row;
      rec.expected_entropy = best.expected_entropy;
    }
    pick_pos = static_cast<std::size_t>(std::find(dirty.begin(), dirty.end(), rec.selected_row) - dirty.begin());

    auto& row = result.dataset.rows[rec.selected_row];
    const std::size_t answer = oracle.resolve(rec.selected_row, row);
    if (answer >= row.size())
      fail(ErrorKind::invalid_argument, "oracle answered candidate " + std::to_string(answer) + " for row " +
                                            std::to_string(rec.selected_row) + " with " +
                                            std::to_string(row.size()) + " candidates");
    row.candidates = {row.candidates[answer]};
    eval.pin(rec.selected_row, answer);
    dirty.erase(dirty.begin() + static_cast<std::ptrdiff_t>(pick_pos));
    result.strategy.push_back(rec.selected_row);

    rec.step = result.strategy.size();
    rec.chosen_candidate = answer;
    rec.cleaned_count = result.strategy.size();
    rec.realized_mean_entropy = eval.profile().mean;
    rec.pct_val_cp = eval.pct_cp();
    result.trace.push_back(rec);
    if (options.on_step) options.on_step(result.dataset, rec);
  }
  return result;
}

inline CleaningResult cpclean_run(const IncompleteDataset& data, const std::vector<FeatureVector>& val,
                                  CleaningOracle& oracle, const CleaningConfig& config = {},
                                  std::optional<std::size_t> budget = std::nullopt) {
  RunOptions opt;
  opt.config = config;
  opt.budget = budget;
  return run_cleaning(data, val, oracle, opt);
}

// Uniformly random cleaning order among the dirty rows.
inline CleaningResult random_clean(const IncompleteDataset& data, const std::vector<FeatureVector>& val,
                                   CleaningOracle& oracle, std::uint64_t seed, const CleaningConfig& config = {},
                                   std::optional<std::size_t> budget = std::nullopt) {
  RunOptions opt;
  opt.config = config;
  opt.budget = budget;
  opt.policy = SelectionPolicy::random;
  opt.seed = seed;
  return run_cleaning(data, val, oracle, opt);
}

}  // namespace cpclean
