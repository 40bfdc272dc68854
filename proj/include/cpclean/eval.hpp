#pragma once

// Baseline cleaners, the gap-closed metric and the experiment harness.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpclean/cleaning.hpp"
#include "cpclean/cp_engine.hpp"
#include "cpclean/dataset.hpp"
#include "cpclean/encoding.hpp"
#include "cpclean/error.hpp"
#include "cpclean/knn.hpp"
#include "cpclean/missing.hpp"
#include "cpclean/repair.hpp"
#include "cpclean/table.hpp"

namespace cpclean {

// ---- repair methods ---------------------------------------------------------

enum class CategoricalRule { mode, other };

// One rule per column kind, applied to every missing cell of the table.
struct RepairMethod {
  std::string id;
  NumericStatistic numeric = NumericStatistic::mean;
  CategoricalRule categorical = CategoricalRule::mode;
};

inline std::vector<RepairMethod> default_repair_methods() {
  std::vector<RepairMethod> out;
  for (auto stat : {NumericStatistic::min, NumericStatistic::p25, NumericStatistic::mean, NumericStatistic::p75,
                    NumericStatistic::max})
    out.push_back({std::string(to_string(stat)) + "/mode", stat, CategoricalRule::mode});
  out.push_back({"mean/other", NumericStatistic::mean, CategoricalRule::other});
  return out;
}

inline RawTable apply_repair(const RawTable& table, const RepairMethod& method) {
  RawTable out = table;
  for (std::size_t c : table.schema.feature_indices()) {
    bool any_missing = false;
    for (const auto& row : table.rows) any_missing = any_missing || !row[c];
    if (!any_missing) continue;
    const auto& col = table.schema.columns[c];
    std::string fill;
    if (col.kind == ColumnKind::numeric) {
      std::vector<double> values;
      for (const auto& row : table.rows)
        if (row[c]) values.push_back(*parse_real(*row[c]));
      if (values.empty()) fail(ErrorKind::invalid_argument, "column '" + col.name + "' is entirely missing", col.name);
      fill = format_real(column_statistic(values, method.numeric));
    } else {
      const auto cats = categories_by_frequency(table, c);
      if (cats.empty()) fail(ErrorKind::invalid_argument, "column '" + col.name + "' is entirely missing", col.name);
      fill = method.categorical == CategoricalRule::mode ? cats.front() : std::string(kOtherCategory);
    }
    for (auto& row : out.rows)
      if (!row[c]) row[c] = fill;
  }
  return out;
}

// Mean for numeric columns, most frequent value for categorical ones.
inline RawTable default_clean(const RawTable& table) {
  return apply_repair(table, {"default", NumericStatistic::mean, CategoricalRule::mode});
}

struct BoostCleanChoice {
  std::size_t method = 0;  // index into the method list
  double val_accuracy = 0;
  RawTable world;
};

// The repair whose fully repaired world scores best on validation; ties keep
// the first listed method.
inline BoostCleanChoice boostclean_select(const RawTable& table, const std::vector<RepairMethod>& methods,
                                          const LabeledData& val, const Encoder& enc, std::size_t k,
                                          SimilarityKernel kernel = SimilarityKernel::negative_euclidean) {
  if (methods.empty()) fail(ErrorKind::invalid_argument, "BoostClean needs at least one repair method");
  if (val.features.empty()) fail(ErrorKind::invalid_argument, "validation set is empty");
  BoostCleanChoice best;
  best.val_accuracy = -1;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    RawTable world = apply_repair(table, methods[m]);
    const double acc = accuracy(enc.encode_complete(world), val, k, kernel);
    if (acc > best.val_accuracy) best = {m, acc, std::move(world)};
  }
  return best;
}

// ---- gap closed -------------------------------------------------------------

// 100 (acc - default) / (truth - default); nullopt when there is no gap.
// The ratio is taken first so that acc == truth gives exactly 100.
inline std::optional<double> gap_closed(double acc, double acc_default, double acc_truth) {
  if (acc_truth == acc_default) return std::nullopt;
  return 100.0 * ((acc - acc_default) / (acc_truth - acc_default));
}

// ---- synthetic data ---------------------------------------------------------

// Gaussian features; the label thresholds a weighted sum, so features matter in
// proportion to their weights. With num_labels > 2 the sum is cut at quantiles
// of the standard normal scaled to the weight norm.
struct SyntheticSpec {
  std::size_t rows = 700;
  std::size_t dimension = 6;
  std::size_t num_labels = 2;
  double label_noise = 0.0;
  std::vector<double> weights;  // empty = 2^-f
  std::uint64_t seed = 0;
};

inline RawTable make_synthetic(const SyntheticSpec& spec) {
  if (spec.rows < 2) fail(ErrorKind::invalid_argument, "synthetic table needs at least 2 rows");
  if (spec.dimension < 1) fail(ErrorKind::invalid_argument, "synthetic table needs at least 1 feature");
  if (spec.num_labels < 2) fail(ErrorKind::invalid_argument, "synthetic table needs at least 2 labels");
  if (spec.label_noise < 0 || spec.label_noise >= 1) fail(ErrorKind::invalid_argument, "label noise must lie in [0, 1)");
  std::vector<double> w = spec.weights;
  if (w.empty())
    for (std::size_t f = 0; f < spec.dimension; ++f) w.push_back(std::ldexp(1.0, -static_cast<int>(f)));
  if (w.size() != spec.dimension) fail(ErrorKind::invalid_argument, "weights must have one entry per feature");
  double norm = 0;
  for (double v : w) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0) fail(ErrorKind::invalid_argument, "weights are all zero");

  RawTable t;
  for (std::size_t f = 0; f < spec.dimension; ++f) t.schema.columns.push_back({"f" + std::to_string(f), ColumnKind::numeric});
  t.schema.columns.push_back({"label", ColumnKind::categorical});
  t.schema.label = "label";
  t.schema.missing_marker = "";

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_label(0, spec.num_labels - 1);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    std::vector<Cell> row;
    double score = 0;
    for (std::size_t f = 0; f < spec.dimension; ++f) {
      // Rounded so the CSV form is short and parses back to the same value.
      const double x = std::round(gauss(rng) * 1e4) / 1e4;
      score += w[f] * x;
      row.emplace_back(format_real(x));
    }
    // Equal-mass bins of N(0, norm^2) via the normal CDF.
    const double u = 0.5 * std::erfc(-score / (norm * std::sqrt(2.0)));
    auto label = std::min(spec.num_labels - 1, static_cast<std::size_t>(u * static_cast<double>(spec.num_labels)));
    if (spec.label_noise > 0 && unit(rng) < spec.label_noise) label = any_label(rng);
    row.emplace_back("c" + std::to_string(label));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---- experiment configuration -----------------------------------------------

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> ids{"ground_truth", "default", "boostclean", "cpclean", "random", "holoclean"};
  return ids;
}

struct ExperimentConfig {
  // Either a CSV + schema pair or a synthetic spec.
  std::string csv_path;
  std::string schema_path;
  std::optional<SyntheticSpec> synthetic;

  std::uint64_t seed = 0;
  double rate = 0.2;
  std::size_t k = 3;
  Engine engine = Engine::ss_dc;
  std::size_t val_size = 100;
  std::size_t test_size = 300;
  std::optional<std::size_t> budget;
  std::vector<std::string> methods = known_methods();
  std::size_t random_seeds = 20;
  double early_stop = 0.2;
  InjectionMode injection = InjectionMode::one_cell;
  CandidatePolicy policy;
  std::vector<std::size_t> val_sweep;
  std::size_t threads = 0;  // 0 = hardware concurrency

  bool wants(const std::string& id) const { return std::find(methods.begin(), methods.end(), id) != methods.end(); }
};

inline void validate(const ExperimentConfig& c) {
  if (c.synthetic && !c.csv_path.empty()) fail(ErrorKind::invalid_argument, "dataset is both synthetic and a CSV file", "dataset");
  if (!c.synthetic && (c.csv_path.empty() || c.schema_path.empty()))
    fail(ErrorKind::invalid_argument, "dataset needs a synthetic spec or csv + schema paths", "dataset");
  if (!(c.rate > 0 && c.rate < 1)) fail(ErrorKind::invalid_argument, "missing rate must lie in (0, 1)", "rate");
  if (c.k < 1) fail(ErrorKind::invalid_argument, "K must be at least 1", "k");
  if (c.engine == Engine::mm) fail(ErrorKind::invalid_argument, "engine 'mm' answers Q1 only; CPClean needs Q2", "engine");
  if (c.val_size < 1) fail(ErrorKind::invalid_argument, "validation size must be positive", "val_size");
  if (c.test_size < 1) fail(ErrorKind::invalid_argument, "test size must be positive", "test_size");
  if (!(c.early_stop > 0 && c.early_stop <= 1))
    fail(ErrorKind::invalid_argument, "early-stop fraction must lie in (0, 1]", "early_stop");
  for (const auto& m : c.methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      fail(ErrorKind::invalid_argument, "unknown method id '" + m + "'", "methods");
  for (std::size_t v : c.val_sweep)
    if (v < 1) fail(ErrorKind::invalid_argument, "validation sweep sizes must be positive", "val_sweep");
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"rows", s.rows}, {"dimension", s.dimension}, {"num_labels", s.num_labels},
          {"label_noise", s.label_noise}, {"weights", s.weights}, {"seed", s.seed}};
}

inline std::string_view to_string(InjectionMode m) { return m == InjectionMode::one_cell ? "one_cell" : "bernoulli"; }

inline InjectionMode parse_injection_mode(std::string_view s) {
  if (s == "one_cell") return InjectionMode::one_cell;
  if (s == "bernoulli") return InjectionMode::bernoulli;
  fail(ErrorKind::invalid_argument, "unknown injection mode '" + std::string(s) + "'", "injection");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json dataset;
  if (c.synthetic) dataset = {{"synthetic", to_json(*c.synthetic)}};
  else dataset = {{"csv", c.csv_path}, {"schema", c.schema_path}};
  nlohmann::json stats = nlohmann::json::array();
  for (auto s : c.policy.numeric_repairs) stats.push_back(to_string(s));
  return {{"dataset", dataset},
          {"seed", c.seed},
          {"rate", c.rate},
          {"k", c.k},
          {"engine", to_string(c.engine)},
          {"val_size", c.val_size},
          {"test_size", c.test_size},
          {"budget", c.budget ? nlohmann::json(*c.budget) : nlohmann::json(nullptr)},
          {"methods", c.methods},
          {"random_seeds", c.random_seeds},
          {"early_stop", c.early_stop},
          {"injection", to_string(c.injection)},
          {"candidates",
           {{"numeric", stats},
            {"categorical_top_k", c.policy.categorical_top_k},
            {"categorical_dummy", c.policy.categorical_dummy},
            {"cap", c.policy.cap}}},
          {"val_sweep", c.val_sweep}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::parse, "experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    const auto& ds = j.at("dataset");
    if (ds.contains("synthetic")) {
      const auto& s = ds["synthetic"];
      SyntheticSpec spec;
      spec.rows = s.value("rows", spec.rows);
      spec.dimension = s.value("dimension", spec.dimension);
      spec.num_labels = s.value("num_labels", spec.num_labels);
      spec.label_noise = s.value("label_noise", spec.label_noise);
      spec.weights = s.value("weights", spec.weights);
      spec.seed = s.value("seed", spec.seed);
      c.synthetic = spec;
    } else {
      c.csv_path = ds.at("csv").get<std::string>();
      c.schema_path = ds.at("schema").get<std::string>();
    }
    c.seed = j.value("seed", c.seed);
    c.rate = j.value("rate", c.rate);
    c.k = j.value("k", c.k);
    if (j.contains("engine")) c.engine = parse_engine(j["engine"].get<std::string>());
    c.val_size = j.value("val_size", c.val_size);
    c.test_size = j.value("test_size", c.test_size);
    if (j.contains("budget") && !j["budget"].is_null()) c.budget = j["budget"].get<std::size_t>();
    c.methods = j.value("methods", c.methods);
    c.random_seeds = j.value("random_seeds", c.random_seeds);
    c.early_stop = j.value("early_stop", c.early_stop);
    if (j.contains("injection")) c.injection = parse_injection_mode(j["injection"].get<std::string>());
    if (j.contains("candidates")) {
      const auto& p = j["candidates"];
      if (p.contains("numeric")) {
        c.policy.numeric_repairs.clear();
        for (const auto& s : p["numeric"]) c.policy.numeric_repairs.push_back(parse_numeric_statistic(s.get<std::string>()));
      }
      c.policy.categorical_top_k = p.value("categorical_top_k", c.policy.categorical_top_k);
      c.policy.categorical_dummy = p.value("categorical_dummy", c.policy.categorical_dummy);
      c.policy.cap = p.value("cap", c.policy.cap);
    }
    c.val_sweep = j.value("val_sweep", c.val_sweep);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("experiment config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---- benchmark preparation --------------------------------------------------

// Everything the cleaning methods share for one configuration.
struct Benchmark {
  RawTable clean_train;
  RawTable dirty_train;
  Encoder encoder;
  IncompleteDataset candidates;      // ground truth force-included
  std::vector<FeatureVector> truth;  // encoded clean training rows
  std::vector<FeatureVector> fallback;  // default-cleaned rows
  std::vector<Label> labels;
  LabeledData val;
  LabeledData test;
  std::vector<double> importances;
  std::size_t dirty_rows = 0;
};

namespace detail {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.kind(), std::string("stage '") + name + "': " + e.what(), e.field());
  }
}

}  // namespace detail

inline RawTable load_experiment_table(const ExperimentConfig& c) {
  return detail::stage("load", [&] {
    if (c.synthetic) return make_synthetic(*c.synthetic);
    return load_csv(c.csv_path, load_schema(c.schema_path));
  });
}

inline Benchmark prepare_benchmark(const RawTable& table, const ExperimentConfig& c) {
  Benchmark b;
  auto parts = detail::stage("split", [&] {
    if (table.count_dirty_rows() != 0) fail(ErrorKind::invalid_argument, "input table must be complete");
    return split(table, c.val_size, c.test_size, c.seed);
  });
  b.clean_train = std::move(parts.train);

  b.importances = detail::stage("importance", [&] {
    const auto enc = Encoder::fit(b.clean_train);
    auto imp = feature_importance(enc.encode_complete(b.clean_train), enc.encode_complete(parts.val), c.k);
    // No feature helps on validation: fall back to uniform missingness.
    if (std::all_of(imp.begin(), imp.end(), [](double v) { return v == 0; })) std::fill(imp.begin(), imp.end(), 1.0);
    return imp;
  });

  b.dirty_train = detail::stage("inject", [&] {
    return inject_missing(b.clean_train, c.rate, b.importances, c.seed + 1, c.injection);
  });

  detail::stage("candidates", [&] {
    b.encoder = Encoder::fit(b.dirty_train);
    b.candidates = generate_candidates(b.dirty_train, b.encoder, c.policy);
    b.val = b.encoder.encode_complete(parts.val);
    b.test = b.encoder.encode_complete(parts.test);
    const auto fallback = default_clean(b.dirty_train);
    for (std::size_t i = 0; i < b.clean_train.num_rows(); ++i) {
      b.truth.push_back(b.encoder.encode_row(b.clean_train.rows[i]));
      b.fallback.push_back(b.encoder.encode_row(fallback.rows[i]));
      auto& cs = b.candidates.rows[i];
      // The true value must be one of the candidates.
      push_unique(cs.candidates, b.truth.back());
      if (std::find(cs.candidates.begin(), cs.candidates.end(), b.truth.back()) == cs.candidates.end())
        fail(ErrorKind::invalid_argument, "ground truth missing from candidate set of row " + std::to_string(i));
    }
    b.labels = b.candidates.labels();
    b.dirty_rows = b.candidates.dirty_rows().size();
    validate(b.candidates);
    return 0;
  });
  return b;
}

// Training world after a (partial) cleaning run: cleaned and never-dirty rows
// keep their single value, every remaining dirty row its default repair.
inline LabeledData completed_world(const Benchmark& b, const IncompleteDataset& state) {
  LabeledData w;
  w.num_labels = b.candidates.num_labels;
  w.labels = b.labels;
  for (std::size_t i = 0; i < state.size(); ++i)
    w.features.push_back(state.rows[i].is_clean() ? state.rows[i].candidates.front() : b.fallback[i]);
  return w;
}

// ---- report -----------------------------------------------------------------

struct CurvePoint {
  std::size_t cleaned = 0;
  double fraction_cleaned = 0;
  double pct_cp = 0;
  double test_accuracy = 0;
  std::optional<double> gap_closed;

  bool operator==(const CurvePoint&) const = default;
};

struct Curve {
  std::string method;
  std::uint64_t seed = 0;
  bool converged = false;
  std::vector<CurvePoint> points;

  std::size_t cleaned() const { return points.empty() ? 0 : points.back().cleaned; }
  bool operator==(const Curve&) const = default;
};

struct MethodResult {
  std::string id;
  std::optional<double> test_accuracy;  // nullopt = not available
  std::optional<double> gap_closed;
  std::string note;

  bool operator==(const MethodResult&) const = default;
};

struct ExperimentReport {
  nlohmann::json config;
  std::string version;
  std::size_t train_rows = 0;
  std::size_t dirty_rows = 0;
  std::size_t val_size = 0;
  std::vector<MethodResult> methods;
  std::vector<Curve> curves;
  // Mean cleanings until every validation point is certain, per method.
  std::optional<double> cpclean_cleaned;
  std::optional<double> random_cleaned_mean;
  std::optional<double> cpclean_early_gap;
  std::optional<double> random_early_gap_mean;

  bool operator==(const ExperimentReport&) const = default;

  const MethodResult* method(const std::string& id) const {
    for (const auto& m : methods)
      if (m.id == id) return &m;
    return nullptr;
  }
};

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : r.methods) {
    nlohmann::json mj{{"id", m.id},
                      {"test_accuracy", m.test_accuracy ? nlohmann::json(*m.test_accuracy) : nlohmann::json("not available")},
                      {"gap_closed", detail::opt(m.gap_closed)}};
    if (!m.note.empty()) mj["note"] = m.note;
    methods.push_back(std::move(mj));
  }
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points)
      pts.push_back({{"cleaned", p.cleaned},
                     {"fraction_cleaned", p.fraction_cleaned},
                     {"pct_cp", p.pct_cp},
                     {"test_accuracy", p.test_accuracy},
                     {"gap_closed", detail::opt(p.gap_closed)}});
    curves.push_back({{"method", c.method}, {"seed", c.seed}, {"converged", c.converged}, {"points", std::move(pts)}});
  }
  return {{"config", r.config},
          {"version", r.version},
          {"train_rows", r.train_rows},
          {"dirty_rows", r.dirty_rows},
          {"val_size", r.val_size},
          {"methods", std::move(methods)},
          {"curves", std::move(curves)},
          {"cleaned_to_all_cp",
           {{"cpclean", detail::opt(r.cpclean_cleaned)}, {"random_mean", detail::opt(r.random_cleaned_mean)}}},
          {"early_stop_gap_closed",
           {{"cpclean", detail::opt(r.cpclean_early_gap)}, {"random_mean", detail::opt(r.random_early_gap_mean)}}}};
}

inline ExperimentReport experiment_report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.config = j.at("config");
    r.version = j.value("version", std::string{});
    r.train_rows = j.at("train_rows").get<std::size_t>();
    r.dirty_rows = j.at("dirty_rows").get<std::size_t>();
    r.val_size = j.at("val_size").get<std::size_t>();
    for (const auto& mj : j.at("methods")) {
      MethodResult m;
      m.id = mj.at("id").get<std::string>();
      if (mj.at("test_accuracy").is_number()) m.test_accuracy = mj["test_accuracy"].get<double>();
      m.gap_closed = detail::opt_double(mj, "gap_closed");
      m.note = mj.value("note", std::string{});
      r.methods.push_back(std::move(m));
    }
    for (const auto& cj : j.at("curves")) {
      Curve c;
      c.method = cj.at("method").get<std::string>();
      c.seed = cj.at("seed").get<std::uint64_t>();
      c.converged = cj.at("converged").get<bool>();
      for (const auto& pj : cj.at("points"))
        c.points.push_back({pj.at("cleaned").get<std::size_t>(), pj.at("fraction_cleaned").get<double>(),
                            pj.at("pct_cp").get<double>(), pj.at("test_accuracy").get<double>(),
                            detail::opt_double(pj, "gap_closed")});
      r.curves.push_back(std::move(c));
    }
    const auto& cleaned = j.at("cleaned_to_all_cp");
    r.cpclean_cleaned = detail::opt_double(cleaned, "cpclean");
    r.random_cleaned_mean = detail::opt_double(cleaned, "random_mean");
    const auto& early = j.at("early_stop_gap_closed");
    r.cpclean_early_gap = detail::opt_double(early, "cpclean");
    r.random_early_gap_mean = detail::opt_double(early, "random_mean");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("experiment report: ") + e.what());
  }
  return r;
}

// fraction_cleaned,pct_cp,gap_closed,method,seed
inline void write_curves_csv(std::ostream& out, const std::vector<Curve>& curves) {
  out << "fraction_cleaned,pct_cp,gap_closed,method,seed\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << format_real(p.fraction_cleaned) << ',' << format_real(p.pct_cp) << ','
          << (p.gap_closed ? format_real(*p.gap_closed) : std::string()) << ',' << c.method << ',' << c.seed << '\n';
}

// ---- running methods --------------------------------------------------------

struct Baselines {
  double truth = 0;
  double fallback = 0;
};

inline Baselines baseline_accuracies(const Benchmark& b, std::size_t k) {
  LabeledData truth{b.truth, b.labels, b.candidates.num_labels};
  LabeledData fallback{b.fallback, b.labels, b.candidates.num_labels};
  return {accuracy(truth, b.test, k), accuracy(fallback, b.test, k)};
}

// Replays a cleaning trace, measuring test accuracy of the default-completed
// world after every step.
inline Curve curve_from_run(const Benchmark& b, const CleaningResult& run, const std::string& method,
                            std::uint64_t seed, std::size_t k, const Baselines& base) {
  Curve c;
  c.method = method;
  c.seed = seed;
  c.converged = run.converged;
  const double denom = b.dirty_rows ? static_cast<double>(b.dirty_rows) : 1.0;
  IncompleteDataset state = b.candidates;
  auto point = [&](std::size_t cleaned, double pct_cp) {
    const double acc = accuracy(completed_world(b, state), b.test, k);
    c.points.push_back({cleaned, static_cast<double>(cleaned) / denom, pct_cp, acc, gap_closed(acc, base.fallback, base.truth)});
  };
  point(0, run.initial_pct_cp);
  for (const auto& rec : run.trace) {
    auto& row = state.rows[rec.selected_row];
    row.candidates = {row.candidates[rec.chosen_candidate]};
    point(rec.cleaned_count, rec.pct_val_cp);
  }
  return c;
}

// Curve value after `fraction` of the dirty rows were cleaned, or the final
// point if the run stopped earlier.
inline const CurvePoint& point_at_fraction(const Curve& c, std::size_t dirty_rows, double fraction) {
  require(!c.points.empty(), "empty curve");
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dirty_rows)));
  for (const auto& p : c.points)
    if (p.cleaned == target) return p;
  return c.points.back();
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < std::min(threads, n); ++w)
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    }));
  for (auto& w : workers) w.get();
}

inline std::uint64_t random_clean_seed(std::uint64_t base, std::size_t r) { return base * 1000 + 101 + r; }

inline ExperimentReport run_experiment_on(const RawTable& table, const ExperimentConfig& config) {
  validate(config);
  const Benchmark b = prepare_benchmark(table, config);
  const std::size_t k = config.k;
  ExperimentReport report;
  report.config = to_json(config);
#ifdef CPCLEAN_VERSION
  report.version = CPCLEAN_VERSION;
#endif
  report.train_rows = b.candidates.size();
  report.dirty_rows = b.dirty_rows;
  report.val_size = b.val.size();

  const auto base = detail::stage("baselines", [&] { return baseline_accuracies(b, k); });
  CleaningConfig cc;
  cc.k = k;
  cc.engine = config.engine;

  for (const auto& id : config.methods) {
    MethodResult m;
    m.id = id;
    if (id == "ground_truth") {
      m.test_accuracy = base.truth;
    } else if (id == "default") {
      m.test_accuracy = base.fallback;
    } else if (id == "boostclean") {
      auto choice = detail::stage("boostclean", [&] {
        return boostclean_select(b.dirty_train, default_repair_methods(), b.val, b.encoder, k);
      });
      m.test_accuracy = accuracy(b.encoder.encode_complete(choice.world), b.test, k);
      m.note = "chose " + default_repair_methods()[choice.method].id;
    } else if (id == "cpclean") {
      auto run = detail::stage("cpclean", [&] {
        SimulatedOracle oracle(b.truth);
        return cpclean_run(b.candidates, b.val.features, oracle, cc, config.budget);
      });
      auto curve = curve_from_run(b, run, "cpclean", config.seed, k, base);
      m.test_accuracy = curve.points.back().test_accuracy;
      if (run.converged) report.cpclean_cleaned = static_cast<double>(run.strategy.size());
      else m.note = "not converged";
      report.cpclean_early_gap = point_at_fraction(curve, b.dirty_rows, config.early_stop).gap_closed;
      report.curves.push_back(std::move(curve));
    } else if (id == "random") {
      std::vector<Curve> curves(config.random_seeds);
      detail::stage("random", [&] {
        parallel_for(config.random_seeds, config.threads, [&](std::size_t r) {
          const auto seed = random_clean_seed(config.seed, r);
          SimulatedOracle oracle(b.truth);
          auto run = random_clean(b.candidates, b.val.features, oracle, seed, cc, config.budget);
          curves[r] = curve_from_run(b, run, "random", seed, k, base);
        });
        return 0;
      });
      if (!curves.empty()) {
        double acc = 0, cleaned = 0, early = 0;
        bool all_converged = true, early_defined = true;
        for (const auto& c : curves) {
          acc += c.points.back().test_accuracy;
          cleaned += static_cast<double>(c.cleaned());
          all_converged = all_converged && c.converged;
          const auto g = point_at_fraction(c, b.dirty_rows, config.early_stop).gap_closed;
          early_defined = early_defined && g.has_value();
          if (g) early += *g;
        }
        const double n = static_cast<double>(curves.size());
        m.test_accuracy = acc / n;
        if (all_converged) report.random_cleaned_mean = cleaned / n;
        else m.note = "not converged";
        if (early_defined) report.random_early_gap_mean = early / n;
        m.note += (m.note.empty() ? "" : "; ") + std::string("mean of ") + std::to_string(curves.size()) + " seeds";
      }
      for (auto& c : curves) report.curves.push_back(std::move(c));
    } else if (id == "holoclean") {
      m.note = "not available";
    }
    if (m.test_accuracy) m.gap_closed = gap_closed(*m.test_accuracy, base.fallback, base.truth);
    if (m.test_accuracy && !m.gap_closed) m.note += (m.note.empty() ? "" : "; ") + std::string("no gap");
    report.methods.push_back(std::move(m));
  }
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  return run_experiment_on(load_experiment_table(config), config);
}

// One report per validation size, everything else fixed.
inline std::vector<ExperimentReport> run_val_sweep(const ExperimentConfig& config) {
  if (config.val_sweep.empty()) fail(ErrorKind::invalid_argument, "validation sweep is empty", "val_sweep");
  const RawTable table = load_experiment_table(config);
  std::vector<ExperimentReport> out;
  for (std::size_t v : config.val_sweep) {
    ExperimentConfig c = config;
    c.val_size = v;
    c.val_sweep.clear();
    out.push_back(run_experiment_on(table, c));
  }
  return out;
}

}  // namespace cpclean
