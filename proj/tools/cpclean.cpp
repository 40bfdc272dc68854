// cpclean command-line tool. Exit codes: 0 ok, 1 runtime failure, 2 usage.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpclean/cleaning.hpp"
#include "cpclean/cp_engine.hpp"
#include "cpclean/dataset.hpp"
#include "cpclean/eval.hpp"
#include "cpclean/missing.hpp"
#include "cpclean/session.hpp"
#include "cpclean/session_server.hpp"
#include "cpclean/table.hpp"

#ifndef CPCLEAN_VERSION
#define CPCLEAN_VERSION "dev"
#endif

using namespace cpclean;

namespace {

const std::vector<std::string> kEngineNames{"ss", "ss-dc", "ss-dc-mc", "mm", "brute"};

struct InjectArgs {
  std::string input, schema, output;
  double rate = 0.2;
  std::uint64_t seed = 0;
  std::size_t k = 3;
  std::string mode = "one_cell";
  double holdout = 0.2;
  std::vector<double> importances;
};

int cmd_inject(const InjectArgs& a) {
  const auto schema = load_schema(a.schema);
  const auto table = load_csv(a.input, schema);
  std::vector<double> importances = a.importances;
  if (importances.empty()) {
    // Importance from a seeded holdout of the (complete) input table.
    const auto holdout = static_cast<std::size_t>(a.holdout * static_cast<double>(table.num_rows()));
    if (holdout < 1) fail(ErrorKind::invalid_argument, "holdout too small to estimate feature importance");
    auto parts = split(table, holdout, 0, a.seed);
    const auto enc = Encoder::fit(parts.train);
    importances = feature_importance(enc.encode_complete(parts.train), enc.encode_complete(parts.val), a.k);
    if (std::all_of(importances.begin(), importances.end(), [](double v) { return v == 0; }))
      std::fill(importances.begin(), importances.end(), 1.0);
  }
  const auto out = inject_missing(table, a.rate, importances, a.seed, parse_injection_mode(a.mode));
  save_csv(a.output, out);
  std::clog << "inject: " << out.count_dirty_rows() << " of " << out.num_rows() << " rows dirty\n";
  return 0;
}

struct QueryArgs {
  std::string dataset, points;
  std::string engine = "ss-dc";
  std::size_t k = 3;
  std::string mode = "exact";
  std::size_t limit = kDefaultBruteForceLimit;
};

int cmd_query(const QueryArgs& a) {
  const auto data = dataset_from_json(read_json_file(a.dataset));
  const auto points = points_from_json(read_json_file(a.points));
  const Engine engine = parse_engine(a.engine);
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (points[p].size() != data.dimension)
      fail(ErrorKind::invalid_argument, "point " + std::to_string(p) + " has the wrong dimension");
    const auto rows = score_rows(data, points[p]);
    nlohmann::json out{{"point", p}, {"engine", to_string(engine)}, {"k", a.k}};
    if (engine == Engine::mm) {
      out["certain"] = q1_mm(rows, a.k);
    } else if (a.mode == "normalized") {
      const auto q = q2<double>(engine, rows, a.k, a.limit);
      out["mode"] = "normalized";
      out["counts"] = q.per_label;
      out["total"] = q.total;
      out["certain"] = q1_via_q2(q, 1e-12);
      out["entropy"] = prediction_entropy(q);
    } else {
      const auto q = q2<BigCount>(engine, rows, a.k, a.limit);
      out["mode"] = "exact";
      // Exact counts are decimal strings: they routinely exceed 64 bits.
      std::vector<std::string> counts;
      for (const auto& c : q.per_label) counts.push_back(c.str());
      out["counts"] = counts;
      out["total"] = q.total.str();
      out["certain"] = q1_via_q2(q);
      out["entropy"] = prediction_entropy(q);
    }
    std::cout << out.dump() << '\n';
  }
  return 0;
}

struct CleanArgs {
  std::string dataset, val, truth;
  std::string engine = "ss-dc";
  std::size_t k = 3;
  long long budget = -1;
  std::string strategy = "cpclean";
  std::uint64_t seed = 0;
  std::size_t frontier = 0;
  std::string trace, output;
};

int cmd_clean(const CleanArgs& a) {
  const auto data = dataset_from_json(read_json_file(a.dataset));
  const auto val = points_from_json(read_json_file(a.val));
  const auto truth = points_from_json(read_json_file(a.truth));
  if (truth.size() != data.size())
    fail(ErrorKind::invalid_argument, "ground truth has " + std::to_string(truth.size()) + " rows, dataset has " +
                                          std::to_string(data.size()));
  RunOptions opt;
  opt.config.k = a.k;
  opt.config.engine = parse_engine(a.engine);
  opt.config.frontier = a.frontier;
  if (a.budget >= 0) opt.budget = static_cast<std::size_t>(a.budget);
  opt.policy = a.strategy == "random" ? SelectionPolicy::random : SelectionPolicy::cpclean;
  opt.seed = a.seed;
  SimulatedOracle oracle(truth);
  const auto result = run_cleaning(data, val, oracle, opt);

  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    if (!out) fail(ErrorKind::io, "cannot write trace '" + a.trace + "'");
    for (const auto& r : result.trace) out << to_json(r).dump() << '\n';
  }
  if (!a.output.empty()) {
    nlohmann::json j{{"dataset", to_json(result.dataset)}, {"converged", result.converged}};
    if (result.converged) j["world"] = result.any_world();
    write_json_file(a.output, j);
  }
  nlohmann::json summary{{"strategy", a.strategy},
                         {"cleaned", result.strategy.size()},
                         {"dirty_rows", data.dirty_rows().size()},
                         {"converged", result.converged},
                         {"stop_reason", to_string(result.reason)},
                         {"initial_pct_cp", result.initial_pct_cp},
                         {"pct_cp", result.trace.empty() ? result.initial_pct_cp : result.trace.back().pct_val_cp},
                         {"order", result.strategy}};
  std::cout << summary.dump() << '\n';
  return 0;
}

struct ExperimentArgs {
  std::string config, output, curves;
  std::vector<std::size_t> sweep;
  long long random_seeds = -1;
  long long threads = -1;
};

int cmd_experiment(const ExperimentArgs& a) {
  auto config = experiment_config_from_json(read_json_file(a.config));
  if (!a.sweep.empty()) config.val_sweep = a.sweep;
  if (a.random_seeds >= 0) config.random_seeds = static_cast<std::size_t>(a.random_seeds);
  if (a.threads >= 0) config.threads = static_cast<std::size_t>(a.threads);
  validate(config);

  std::vector<ExperimentReport> reports;
  if (config.val_sweep.empty()) reports.push_back(run_experiment(config));
  else reports = run_val_sweep(config);

  nlohmann::json out;
  if (reports.size() == 1) {
    out = to_json(reports.front());
  } else {
    out = {{"config", to_json(config)}, {"version", CPCLEAN_VERSION}, {"sweep", nlohmann::json::array()}};
    for (const auto& r : reports) out["sweep"].push_back(to_json(r));
  }
  if (a.output.empty()) std::cout << out.dump(2) << '\n';
  else write_json_file(a.output, out);
  if (!a.curves.empty()) {
    std::ofstream csv(a.curves);
    if (!csv) fail(ErrorKind::io, "cannot write curves '" + a.curves + "'");
    if (reports.size() == 1) {
      write_curves_csv(csv, reports.front().curves);
    } else {
      // One curve set per validation size, tagged in the method column.
      std::vector<Curve> all;
      for (const auto& r : reports)
        for (auto c : r.curves) {
          c.method += "@val=" + std::to_string(r.val_size);
          all.push_back(std::move(c));
        }
      write_curves_csv(csv, all);
    }
  }
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string journal_dir = "sessions";
  int wait_ms = 2000;
};

std::atomic<SessionServer*> g_server{nullptr};

extern "C" void handle_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const ServeArgs& a) {
  SessionManager manager(a.journal_dir);
  const auto recovered = manager.recover();
  SessionServer server(manager, std::chrono::milliseconds(a.wait_ms));
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::clog << "serve: listening on http://" << a.host << ':' << port << " (" << recovered
            << " sessions recovered from " << a.journal_dir << ")\n";
  server.run();
  g_server = nullptr;
  // Journals are written per event; only running selections remain to settle.
  manager.wait_idle();
  std::clog << "serve: stopped\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certain-prediction queries and CPClean for K-NN over incomplete data"};
  app.set_version_flag("--version", std::string("cpclean ") + CPCLEAN_VERSION);
  app.require_subcommand(1);

  InjectArgs inject;
  auto* inj = app.add_subcommand("inject", "Inject missing values, MNAR by feature importance");
  inj->add_option("input", inject.input, "Complete input CSV")->required()->check(CLI::ExistingFile);
  inj->add_option("schema", inject.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  inj->add_option("output", inject.output, "Output CSV")->required();
  inj->add_option("--rate", inject.rate, "Fraction of rows made dirty, in (0, 1)")->check(CLI::Range(0.0, 1.0));
  inj->add_option("--seed", inject.seed, "Random seed");
  inj->add_option("--k", inject.k, "K for the importance classifier")->check(CLI::PositiveNumber);
  inj->add_option("--mode", inject.mode, "one_cell or bernoulli")->check(CLI::IsMember({"one_cell", "bernoulli"}));
  inj->add_option("--holdout", inject.holdout, "Validation fraction for feature importance")
      ->check(CLI::Range(0.0, 1.0));
  inj->add_option("--importances", inject.importances, "Explicit per-feature weights")->delimiter(',');

  QueryArgs query;
  auto* qry = app.add_subcommand("query", "Answer Q1/Q2 for test points; one JSON line per point");
  qry->add_option("dataset", query.dataset, "Incomplete dataset JSON")->required()->check(CLI::ExistingFile);
  qry->add_option("points", query.points, "Point or array of points (JSON)")->required()->check(CLI::ExistingFile);
  qry->add_option("--engine", query.engine, "ss|ss-dc|ss-dc-mc|mm|brute")->check(CLI::IsMember(kEngineNames));
  qry->add_option("--k", query.k, "Number of neighbors")->check(CLI::PositiveNumber);
  qry->add_option("--mode", query.mode, "exact or normalized counts")->check(CLI::IsMember({"exact", "normalized"}));
  qry->add_option("--limit", query.limit, "World limit for the brute-force engine");

  CleanArgs clean;
  auto* cln = app.add_subcommand("clean", "Run CPClean or RandomClean with a simulated oracle");
  cln->add_option("dataset", clean.dataset, "Incomplete dataset JSON")->required()->check(CLI::ExistingFile);
  cln->add_option("val", clean.val, "Validation points JSON")->required()->check(CLI::ExistingFile);
  cln->add_option("truth", clean.truth, "Ground-truth vector per row (JSON)")->required()->check(CLI::ExistingFile);
  cln->add_option("--engine", clean.engine, "Q2 engine: ss|ss-dc|ss-dc-mc|brute")
      ->check(CLI::IsMember({"ss", "ss-dc", "ss-dc-mc", "brute"}));
  cln->add_option("--k", clean.k, "Number of neighbors")->check(CLI::PositiveNumber);
  cln->add_option("--budget", clean.budget, "Maximum number of cleanings")->check(CLI::NonNegativeNumber);
  cln->add_option("--strategy", clean.strategy, "cpclean or random")->check(CLI::IsMember({"cpclean", "random"}));
  cln->add_option("--seed", clean.seed, "Seed for the random strategy");
  cln->add_option("--frontier", clean.frontier, "Rescore only this many best rows per step (0 = all)");
  cln->add_option("--trace", clean.trace, "Write the step trace here (JSON lines)");
  cln->add_option("--out", clean.output, "Write the cleaned dataset here");

  ExperimentArgs exp;
  auto* ex = app.add_subcommand("experiment", "Run the benchmark harness");
  ex->add_option("config", exp.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", exp.output, "Report JSON (default stdout)");
  ex->add_option("--curves", exp.curves, "Curve CSV");
  ex->add_option("--sweep-val", exp.sweep, "Validation sizes to sweep")->delimiter(',');
  ex->add_option("--random-seeds", exp.random_seeds, "RandomClean repetitions")->check(CLI::NonNegativeNumber);
  ex->add_option("--threads", exp.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  ServeArgs serve;
  auto* srv = app.add_subcommand("serve", "Serve cleaning sessions over HTTP");
  srv->footer(
      "Endpoints:\n"
      "  POST /sessions                 create {dataset, val, params}\n"
      "  GET  /sessions/{id}/suggestion next row to clean (202 while selecting)\n"
      "  POST /sessions/{id}/answer     {row, step, candidate | value}\n"
      "  GET  /sessions/{id}/status     CP flags, entropy, history\n"
      "  GET  /sessions/{id}/export     current dataset and chosen world");
  srv->add_option("--host", serve.host, "Bind address");
  srv->add_option("--port", serve.port, "Port (0 = any free port)")->check(CLI::Range(0, 65535));
  srv->add_option("--journal-dir", serve.journal_dir, "Directory for session journals");
  srv->add_option("--wait-ms", serve.wait_ms, "How long a suggestion request waits for a running selection")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*inj) return cmd_inject(inject);
    if (*qry) return cmd_query(query);
    if (*cln) return cmd_clean(clean);
    if (*ex) return cmd_experiment(exp);
    if (*srv) return cmd_serve(serve);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (!e.field().empty()) std::cerr << " (at " << e.field() << ")";
    std::cerr << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
