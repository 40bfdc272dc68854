#include <gtest/gtest.h>

#include <sstream>

#include "cpclean/eval.hpp"

using namespace cpclean;

namespace {

RawTable table_from(const std::string& csv) {
  auto schema = schema_from_json(nlohmann::json::parse(R"({
    "columns": [{"name": "x", "kind": "numeric"},
                {"name": "c", "kind": "categorical"},
                {"name": "y", "kind": "categorical"}],
    "label": "y", "missing_marker": "?"})"));
  std::istringstream in(csv);
  return read_csv(in, schema);
}

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig c;
  SyntheticSpec s;
  s.rows = 200;
  s.seed = seed;
  c.synthetic = s;
  c.seed = seed;
  c.val_size = 30;
  c.test_size = 70;
  c.random_seeds = 3;
  c.threads = 1;
  return c;
}

}  // namespace

TEST(DefaultClean, MeanAndMode) {
  auto t = table_from("x,c,y\n1,a,p\n2,a,p\n3,b,q\n?,?,q\n");
  auto d = default_clean(t);
  EXPECT_EQ(*d.rows[3][0], "2");
  EXPECT_EQ(*d.rows[3][1], "a");
  auto clean = table_from("x,c,y\n1,a,p\n");
  EXPECT_EQ(default_clean(clean), clean);
  EXPECT_THROW(default_clean(table_from("x,c,y\n?,a,p\n")), Error);
}

TEST(GapClosed, Arithmetic) {
  EXPECT_EQ(gap_closed(0.968, 0.877, 0.968), 100.0);
  EXPECT_EQ(gap_closed(0.8, 0.8, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(*gap_closed(0.9, 0.8, 1.0), 50.0);
  EXPECT_LT(*gap_closed(0.7, 0.8, 1.0), 0.0);
  EXPECT_FALSE(gap_closed(0.9, 0.8, 0.8).has_value());
}

TEST(BoostClean, PicksBestAndBreaksTiesByOrder) {
  // Mean imputation drops a p-row into the q cluster's neighborhood; min does not.
  auto t = table_from("x,c,y\n0,a,p\n1,a,p\n10,a,q\n11,a,q\n12,a,q\n?,a,p\n");
  auto enc = Encoder::fit(t);
  LabeledData val{{{7.0, 0}, {0.5, 0}}, {1, 0}, 2};
  std::vector<RepairMethod> methods{{"mean", NumericStatistic::mean, CategoricalRule::mode},
                                    {"min", NumericStatistic::min, CategoricalRule::mode}};
  auto pick = boostclean_select(t, methods, val, enc, 1);
  EXPECT_EQ(pick.method, 1u);
  EXPECT_EQ(boostclean_select(t, {methods[0]}, val, enc, 1).method, 0u);
  std::vector<RepairMethod> same{methods[0], methods[0]};
  EXPECT_EQ(boostclean_select(t, same, val, enc, 1).method, 0u);
  EXPECT_THROW(boostclean_select(t, {}, val, enc, 1), Error);
  EXPECT_THROW(boostclean_select(t, methods, LabeledData{}, enc, 1), Error);
}

TEST(Synthetic, DeterministicAndBalanced) {
  SyntheticSpec s;
  s.seed = 4;
  auto a = make_synthetic(s);
  EXPECT_EQ(a, make_synthetic(s));
  EXPECT_EQ(a.num_rows(), 700u);
  std::size_t ones = 0;
  for (const auto& r : a.rows) ones += *r.back() == "c1";
  EXPECT_GT(ones, 250u);
  EXPECT_LT(ones, 450u);
  s.weights = {1, 2};
  EXPECT_THROW(make_synthetic(s), Error);
}

TEST(Benchmark, GroundTruthIsAlwaysACandidate) {
  auto c = small_config(2);
  auto b = prepare_benchmark(make_synthetic(*c.synthetic), c);
  EXPECT_EQ(b.dirty_rows, static_cast<std::size_t>(0.2 * b.truth.size()));
  for (std::size_t i = 0; i < b.truth.size(); ++i) {
    const auto& cs = b.candidates.rows[i].candidates;
    EXPECT_NE(std::find(cs.begin(), cs.end(), b.truth[i]), cs.end());
  }
}

TEST(Experiment, IdentitiesCurvesAndRoundTrip) {
  auto c = small_config(3);
  auto r = run_experiment(c);
  ASSERT_NE(r.method("ground_truth"), nullptr);
  if (r.method("ground_truth")->gap_closed) {
    EXPECT_EQ(*r.method("ground_truth")->gap_closed, 100.0);
    EXPECT_EQ(*r.method("default")->gap_closed, 0.0);
  }
  EXPECT_FALSE(r.method("holoclean")->test_accuracy.has_value());
  EXPECT_EQ(r.method("holoclean")->note, "not available");
  ASSERT_EQ(r.curves.size(), 4u);
  for (const auto& curve : r.curves) {
    EXPECT_TRUE(curve.converged);
    for (std::size_t p = 1; p < curve.points.size(); ++p)
      EXPECT_GE(curve.points[p].pct_cp, curve.points[p - 1].pct_cp);
    EXPECT_EQ(curve.points.back().pct_cp, 1.0);
    EXPECT_EQ(curve.points.front().gap_closed.value_or(0.0), 0.0);
  }
  EXPECT_EQ(experiment_report_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  EXPECT_EQ(r.config["seed"], 3);
}

TEST(Experiment, FullCleaningRecoversGroundTruth) {
  auto c = small_config(5);
  auto b = prepare_benchmark(make_synthetic(*c.synthetic), c);
  auto base = baseline_accuracies(b, c.k);
  IncompleteDataset all = b.candidates;
  for (std::size_t i = 0; i < all.size(); ++i) all.rows[i].candidates = {b.truth[i]};
  const double acc = accuracy(completed_world(b, all), b.test, c.k);
  EXPECT_EQ(acc, base.truth);
  if (auto g = gap_closed(acc, base.fallback, base.truth)) {
    EXPECT_EQ(*g, 100.0);
  }
}

TEST(Experiment, ConfigValidation) {
  auto j = nlohmann::json::parse(R"({"dataset": {"synthetic": {"rows": 100}}, "methods": ["cpclean", "magic"]})");
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j["methods"] = {"cpclean"};
  j["engine"] = "mm";
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j["engine"] = "ss";
  j["rate"] = 1.0;
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j["rate"] = 0.3;
  auto c = experiment_config_from_json(j);
  EXPECT_EQ(c.engine, Engine::ss);
  EXPECT_EQ(experiment_config_from_json(to_json(c)).rate, 0.3);
}

TEST(Experiment, StageNameInErrors) {
  auto c = small_config(1);
  c.val_size = 150;
  c.test_size = 60;
  try {
    run_experiment(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'split'"), std::string::npos);
  }
}

TEST(Experiment, ValSweepProducesOneReportPerSize) {
  auto c = small_config(6);
  c.methods = {"ground_truth", "default", "cpclean"};
  c.val_sweep = {10, 20};
  auto reports = run_val_sweep(c);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].val_size, 10u);
  EXPECT_EQ(reports[1].val_size, 20u);
}

TEST(Curves, CsvColumns) {
  Curve c{"cpclean", 7, true, {{0, 0.0, 0.5, 0.8, 0.0}, {1, 0.5, 1.0, 0.9, std::nullopt}}};
  std::ostringstream out;
  write_curves_csv(out, {c});
  EXPECT_EQ(out.str(), "fraction_cleaned,pct_cp,gap_closed,method,seed\n0,0.5,0,cpclean,7\n0.5,1,,cpclean,7\n");
}
