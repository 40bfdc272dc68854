// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpclean/cleaning.hpp"
#include "cpclean/cp_engine.hpp"
#include "cpclean/eval.hpp"
#include "cpclean/session.hpp"
#include "fixtures.hpp"
#include "session_client.hpp"

using namespace cpclean;
using cpclean::testing::worked_dataset;
using cpclean::testing::worked_query;
using cpclean::testing::worked_scores;
using cpclean::testing::random_instance;
using cpclean::testing::RandomInstance;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed check without stopping the criterion.
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  failed: " << what << "\n";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Shared by the three instance-based criteria.
std::vector<RandomInstance> oracle_instances() {
  std::mt19937_64 rng(20240501);
  std::vector<RandomInstance> out;
  for (int it = 0; it < 600; ++it) out.push_back(random_instance(rng, 7, 3, 4, it % 2 == 0));
  // Extra binary instances so Q1 agreement covers plenty of them.
  for (int it = 0; it < 300; ++it) out.push_back(random_instance(rng, 7, 3, 2, it % 3 == 0));
  return out;
}

void oracle_equivalence(Outcome& o) {
  const auto t0 = Clock::now();
  const auto instances = oracle_instances();
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& [rows, k] = instances[i];
    const auto oracle = brute_force(rows, k).counts;
    const bool ok = q2_ss<BigCount>(rows, k) == oracle && q2_ss_dc<BigCount>(rows, k) == oracle &&
                    q2_ss_dc_mc<BigCount>(rows, k) == oracle;
    if (!ok && mismatches++ < 5) o.check(false, "instance " + std::to_string(i) + " disagrees with brute force");
  }
  const double secs = seconds_since(t0);
  o.check(instances.size() >= 500, "fewer than 500 instances");
  o.check(mismatches == 0, std::to_string(mismatches) + " mismatching instances");
  o.check(secs <= 120.0, "runtime over 2 min");
  o.detail << "  " << instances.size() << " instances, 3 engines, " << mismatches << " mismatches, " << secs << " s\n";
}

void conservation(Outcome& o) {
  std::size_t bad = 0;
  double worst = 0;
  for (const auto& [rows, k] : oracle_instances()) {
    const auto worlds = total_worlds<BigCount>(rows);
    for (const auto& q : {q2_ss<BigCount>(rows, k), q2_ss_dc<BigCount>(rows, k), q2_ss_dc_mc<BigCount>(rows, k)}) {
      BigCount sum = 0;
      for (const auto& c : q.per_label) sum += c;
      if (sum != worlds || q.total != worlds) ++bad;
    }
    for (const auto& q : {q2_ss<double>(rows, k), q2_ss_dc<double>(rows, k), q2_ss_dc_mc<double>(rows, k)}) {
      double sum = 0;
      for (double c : q.per_label) sum += c;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  o.check(bad == 0, std::to_string(bad) + " exact sums differ from the world count");
  o.check(worst <= 1e-9, "normalized sum off by more than 1e-9");
  o.detail << "  exact violations " << bad << ", max normalized deviation " << worst << "\n";
}

void q1_agreement(Outcome& o) {
  std::size_t binary = 0, bad = 0;
  for (const auto& [rows, k] : oracle_instances()) {
    if (rows.num_labels != 2) continue;
    ++binary;
    const auto via = q1_via_q2(q2_ss_dc<BigCount>(rows, k));
    const auto mm = q1_mm(rows, k);
    const auto brute = brute_force(rows, k).certain;
    if (mm != via || brute != via || std::count(via.begin(), via.end(), true) > 1) ++bad;
  }
  o.check(binary > 0, "no binary instances");
  o.check(bad == 0, std::to_string(bad) + " disagreements");
  o.detail << "  " << binary << " binary instances, " << bad << " disagreements\n";
}

SimilarityTally tally_at(const ScoredRows& rows, Pivot target) {
  SimilarityTally tally(row_sizes(rows));
  for (const Pivot& p : scan_order(rows.scores)) {
    tally.advance(p);
    if (p == target) return tally;
  }
  fail(ErrorKind::invalid_argument, "pivot not in scan order");
}

void worked_example_anchor(Outcome& o) {
  const auto rows = worked_scores();
  const std::vector<BigCount> expected{6, 2};
  o.check(q2_ss<BigCount>(rows, 1).per_label == expected, "ss counts");
  o.check(q2_ss_dc<BigCount>(rows, 1).per_label == expected, "ss-dc counts");
  o.check(q2_ss_dc_mc<BigCount>(rows, 1).per_label == expected, "ss-dc-mc counts");
  o.check(brute_force(rows, 1).counts.per_label == expected, "brute-force counts");
  // x(3,1) and x(2,2) in one-based notation.
  o.check(boundary_count(2, tally_at(rows, {2, 0}), 1) == 2, "boundary count of x(3,1)");
  o.check(boundary_count(1, tally_at(rows, {1, 1}), 1) == 0, "boundary count of x(2,2)");
  const auto tally = tally_at(rows, {2, 0});
  o.check(label_support_dp<BigCount>(2, tally, rows.labels, 0, 1)[1] == 1, "C_0(1, N)");
  o.check(label_support_dp<BigCount>(2, tally, rows.labels, 1, 1)[0] == 2, "C_1(0, N)");
  o.detail << "  K=1 counts [6, 2], boundary 2/0, DP 1/2 checked on 4 engines\n";
}

void mm_lemma(Outcome& o) {
  std::mt19937_64 rng(77);
  std::size_t pairs = 0, premise = 0, counterexamples = 0;
  while (pairs < 400) {
    const auto inst = random_instance(rng, 7, 4, 2, pairs % 2 == 0);
    const auto& rows = inst.rows;
    const Label l = rng() % 2;
    std::vector<double> w1, w2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& s = rows.scores[i];
      const double a = s[rng() % s.size()];
      // Candidates the second world may take while keeping the relation.
      std::vector<double> allowed;
      for (double b : s)
        if (rows.labels[i] == l ? b >= a : b <= a) allowed.push_back(b);
      w1.push_back(a);
      w2.push_back(allowed[rng() % allowed.size()]);
    }
    ++pairs;
    if (predict_from_scores(w1, rows.labels, inst.k, 2) != l) continue;
    ++premise;
    if (predict_from_scores(w2, rows.labels, inst.k, 2) != l) ++counterexamples;
  }
  o.check(pairs >= 200, "fewer than 200 pairs");
  o.check(premise > 0, "no pair with the first world predicting l");
  o.check(counterexamples == 0, std::to_string(counterexamples) + " counterexamples");
  o.detail << "  " << pairs << " world pairs, " << premise << " with premise, " << counterexamples
           << " counterexamples\n";
}

void entropy_arithmetic(Outcome& o) {
  const ExactQ2 even{{4, 4}, 8};
  const ExactQ2 certain{{8, 0}, 8};
  o.check(prediction_entropy(even) == 1.0, "[4,4] is not 1 bit");
  o.check(prediction_entropy(certain) == 0.0, "[8,0] is not 0 bits");
  const std::vector<double> outcomes{0.0, 0.17};
  const double avg = expected_entropy_from_outcomes(outcomes);
  o.check(std::round(avg * 100) / 100 == 0.09, "average of 0 and 0.17 does not round to 0.09");
  o.detail << "  H[4,4]=" << prediction_entropy(even) << " H[8,0]=" << prediction_entropy(certain)
           << " avg(0,0.17)=" << avg << "\n";
}

ExperimentConfig synthetic_config(std::uint64_t seed) {
  ExperimentConfig c;
  SyntheticSpec s;  // 700 rows: 100 val, 300 test, 300 train; d = 6
  s.seed = seed;
  c.synthetic = s;
  c.seed = seed;
  c.rate = 0.2;
  c.k = 3;
  c.val_size = 100;
  c.test_size = 300;
  c.random_seeds = 10;
  c.threads = 0;
  return c;
}

constexpr std::uint64_t kDatasetSeeds[] = {1, 2, 3, 4, 5};

void termination(Outcome& o) {
  for (auto seed : kDatasetSeeds) {
    const auto config = synthetic_config(seed);
    const auto b = prepare_benchmark(load_experiment_table(config), config);
    std::vector<bool> cp = all_cp(b.candidates, b.val.features, config.k).per_point;
    std::size_t reverts = 0;
    RunOptions opt;
    opt.config.k = config.k;
    opt.on_step = [&](const IncompleteDataset& state, const StepRecord&) {
      const auto now = all_cp(state, b.val.features, config.k).per_point;
      for (std::size_t v = 0; v < now.size(); ++v) reverts += cp[v] && !now[v];
      cp = now;
    };
    SimulatedOracle oracle(b.truth);
    const auto t0 = Clock::now();
    const auto run = run_cleaning(b.candidates, b.val.features, oracle, opt);
    const double secs = seconds_since(t0);
    const std::string tag = "seed " + std::to_string(seed);
    o.check(run.converged, tag + " did not reach 100% CP");
    o.check(run.trace.size() <= b.dirty_rows, tag + " needed more cleanings than dirty rows");
    o.check(reverts == 0, tag + " had " + std::to_string(reverts) + " CP reversions");
    o.check(secs <= 600.0, tag + " ran over 10 min");
    bool five = true;
    for (const auto& r : b.candidates.rows) five = five && (r.candidates.size() == 1 || r.candidates.size() >= 5);
    o.check(five, tag + " has a dirty row with fewer than 5 candidates");
    o.detail << "  " << tag << ": " << run.trace.size() << "/" << b.dirty_rows << " cleaned, " << reverts
             << " reversions, " << secs << " s\n";
  }
}

void beats_random(Outcome& o) {
  double cp_sum = 0, random_sum = 0, dirty_fraction = 0;
  std::size_t early_wins = 0;
  for (auto seed : kDatasetSeeds) {
    const auto r = run_experiment(synthetic_config(seed));
    const std::string tag = "seed " + std::to_string(seed);
    if (!r.cpclean_cleaned || !r.random_cleaned_mean) {
      o.check(false, tag + " has a run that did not converge");
      continue;
    }
    cp_sum += *r.cpclean_cleaned;
    random_sum += *r.random_cleaned_mean;
    dirty_fraction += *r.cpclean_cleaned / static_cast<double>(r.dirty_rows);
    const bool early = r.cpclean_early_gap && r.random_early_gap_mean && *r.cpclean_early_gap >= *r.random_early_gap_mean;
    early_wins += early;
    o.detail << "  " << tag << ": cpclean " << *r.cpclean_cleaned << " vs random " << *r.random_cleaned_mean
             << " cleanings; early gap " << (r.cpclean_early_gap ? std::to_string(*r.cpclean_early_gap) : "n/a")
             << " vs " << (r.random_early_gap_mean ? std::to_string(*r.random_early_gap_mean) : "n/a") << "\n";
  }
  const double n = std::size(kDatasetSeeds);
  o.check(cp_sum / n <= 0.8 * random_sum / n, "CPClean mean cleanings above 0.8x RandomClean");
  o.check(early_wins >= 4, "early-stop gap won on only " + std::to_string(early_wins) + " of 5 seeds");
  o.detail << "  mean " << cp_sum / n << " vs " << random_sum / n << " (ratio " << cp_sum / random_sum << "), early wins "
           << early_wins << "/5, cpclean cleaned " << 100 * dirty_fraction / n << "% of dirty rows\n";
}

void gap_identities(Outcome& o) {
  o.check(gap_closed(0.968, 0.877, 0.968) == 100.0, "(0.968, 0.877, 0.968) is not 100");
  o.check(gap_closed(0.8, 0.8, 0.9) == 0.0, "default accuracy is not 0");
  o.check(gap_closed(0.9, 0.8, 1.0).has_value() && std::abs(*gap_closed(0.9, 0.8, 1.0) - 50.0) < 1e-9, "half gap");
  // The report identities on a real run.
  auto c = synthetic_config(1);
  c.methods = {"ground_truth", "default"};
  const auto r = run_experiment(c);
  const auto* gt = r.method("ground_truth");
  const auto* def = r.method("default");
  o.check(gt && gt->gap_closed == 100.0, "ground truth row is not 100");
  o.check(def && def->gap_closed == 0.0, "default row is not 0");
  o.detail << "  report: ground truth " << *gt->test_accuracy << ", default " << *def->test_accuracy << "\n";
}

void ssdc_efficiency(Outcome& o) {
  std::mt19937_64 rng(2048);
  std::uniform_real_distribution<double> u(-1, 1);
  auto make = [&](std::size_t n, std::size_t m) {
    ScoredRows rows;
    rows.num_labels = 2;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(m);
      for (auto& v : s) v = u(rng);
      rows.scores.push_back(std::move(s));
      rows.labels.push_back(i % 2);
    }
    return rows;
  };
  ScanStats stats;
  q2_ss_dc<BigCount>(make(2048, 2), 3, &stats);
  const std::size_t bound = 2 * (11 + 1);
  o.check(stats.max_nodes_per_pivot <= bound, "node bound exceeded");
  const auto rows = make(2000, 5);
  const auto t0 = Clock::now();
  const auto q = q2_ss_dc<BigCount>(rows, 3);
  const double secs = seconds_since(t0);
  o.check(secs <= 5.0, "N=2000 query over 5 s");
  o.check(q.per_label[0] + q.per_label[1] == q.total, "N=2000 counts do not sum to the world count");
  o.detail << "  max nodes per pivot " << stats.max_nodes_per_pivot << " (bound " << bound << "), N=2000 M=5 K=3 in "
           << secs << " s\n";
}

void session_contract(Outcome& o) {
  SessionManager mgr;
  SessionApi api(mgr);
  const std::vector<FeatureVector> truth{{0.8}, {0.9}, {0.6}};
  const std::vector<FeatureVector> val{worked_query()};
  auto created = api.handle("POST", "/sessions", cpclean::testing::create_body(worked_dataset(), val, 1).dump());
  o.check(created.status == 201, "create did not return 201");
  const std::string id = created.body.value("id", "");
  std::size_t steps = 0, replays_ok = 0;
  for (; steps < 10; ++steps) {
    auto sug = cpclean::testing::poll_suggestion(api, id);
    if (sug.status == 409) break;
    if (sug.status != 200) {
      o.check(false, "suggestion returned " + std::to_string(sug.status));
      return;
    }
    const auto state = mgr.get(id)->dataset();
    const auto expected = select_next(state, val, {.k = 1});
    o.check(sug.body["row"] == expected.row && sug.body["expected_entropy"] == expected.expected_entropy,
            "server selection differs from select_next at step " + std::to_string(steps));
    const std::size_t row = expected.row;
    const auto& cands = state.rows[row].candidates;
    const auto idx = std::find(cands.begin(), cands.end(), truth[row]) - cands.begin();
    const nlohmann::json ans{{"row", row}, {"step", sug.body["step"]}, {"candidate", idx}};
    const auto path = "/sessions/" + id + "/answer";
    const auto first = api.handle("POST", path, ans.dump());
    o.check(first.status == 200, "answer rejected");
    const auto history = api.handle("GET", "/sessions/" + id + "/status", "").body["history"].size();
    const auto again = api.handle("POST", path, ans.dump());
    const bool noop = again.status == 200 && again.body == first.body &&
                      api.handle("GET", "/sessions/" + id + "/status", "").body["history"].size() == history;
    replays_ok += noop;
    o.check(noop, "replayed answer changed state");
  }
  const auto status = api.handle("GET", "/sessions/" + id + "/status", "").body;
  o.check(status["status"] == "converged", "session did not converge");
  o.detail << "  " << steps << " answers to convergence, " << replays_ok << " replays were no-ops\n";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"conservation", conservation},
      {"Q1 agreement", q1_agreement},
      {"worked example anchor", worked_example_anchor},
      {"MM extreme-world lemma", mm_lemma},
      {"entropy arithmetic", entropy_arithmetic},
      {"CPClean termination and monotone CP", termination},
      {"CPClean beats RandomClean", beats_random},
      {"gap-closed identities", gap_identities},
      {"SS-DC efficiency", ssdc_efficiency},
      {"session protocol contract", session_contract},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "\n" << o.detail.str() << std::flush;
    failed += !o.pass;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
