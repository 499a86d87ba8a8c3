// Command-line front end: run scenarios under a chosen consistency model,
// check operation libraries for serializability violations, drive the two
// replicated-store simulators (with conformance checking), export dependency
// graphs in dot format, and verify the anomaly fixture matrix.
//
// Exit codes: 0 expected outcome, 1 property violated / target missed,
// 2 usage or input error.

#include <atomic>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "kvsem/anomalies.hpp"
#include "kvsem/clocksi.hpp"
#include "kvsem/cops.hpp"
#include "kvsem/dependencies.hpp"
#include "kvsem/engine.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/program.hpp"
#include "kvsem/robustness.hpp"
#include "kvsem/store_io.hpp"

namespace {

using namespace kvsem;

int cmd_run(const std::string& model_arg, const std::string& program_path, int max_steps,
            bool list_finals, const std::string& find_path) {
  Model m = parse_model(model_arg);
  Program p = load_program(program_path);
  ReachResult res = reachable_stores(m, p, max_steps);
  std::cout << "model " << model_name(m) << ": " << res.stores.size() << " final store(s)";
  if (res.partial) {
    std::cout << " — exploration truncated at " << max_steps
              << " steps, late-terminating runs may be missing\n";
  } else {
    std::cout << " (every run terminated within " << max_steps << " steps)\n";
  }
  if (list_finals) {
    std::size_t i = 0;
    for (const KvStore& s : res.stores) {
      std::cout << "--- final " << i++ << " ---\n" << s.str();
    }
  }
  if (!find_path.empty()) {
    KvStore target = load_store(find_path);
    if (res.stores.count(target)) {
      std::cout << "target store is reachable\n";
      return 0;
    }
    std::cout << "target store is not reachable within the bound\n";
    return 1;
  }
  return 0;
}

int cmd_check_robust(const std::string& model_arg, const std::string& lib_arg, int ops,
                     int clients, const std::string& witness_path) {
  Model m = parse_model(model_arg);
  Library lib = [&] {
    if (lib_arg == "counter") return library_counter("k");
    if (lib_arg == "counters") return library_counters({"k1", "k2"});
    if (lib_arg == "bank") return library_bank();
    throw std::invalid_argument("unknown library: " + lib_arg +
                                " (expected counter, counters, or bank)");
  }();
  RobustnessReport rep = check_robust(m, lib, ops, clients);
  std::cout << "model " << model_name(m) << ", library " << lib.name << ", " << ops
            << " operation(s), " << clients << " client(s): ";
  if (rep.verdict == Verdict::RobustWithinBound) {
    std::cout << "robust within bound (" << rep.stores.size() << " reachable stores)\n";
    return 0;
  }
  std::cout << "counterexample found\n";
  if (rep.cycle) {
    std::cout << "dependency cycle:";
    for (const TxId& t : *rep.cycle) std::cout << " " << t.str();
    std::cout << "\n";
  }
  if (rep.witness && !rep.witness->steps.empty()) {
    std::cout << "offending store:\n" << rep.witness->steps.back().after.store.str();
    if (!witness_path.empty()) {
      save_trace(*rep.witness, witness_path);
      std::cout << "witness trace written to " << witness_path << "\n";
    }
  }
  return 1;
}

// Shared batch driver: run `runs` consecutive seeds through `one`, which
// returns true when the seeded run conforms, in parallel over `jobs` workers.
int batch_conformance(const std::string& label, unsigned long long first_seed, int runs, int jobs,
                      const std::function<bool(unsigned long long)>& one) {
  std::atomic<int> failures{0};
  std::atomic<unsigned long long> next{first_seed};
  const unsigned long long end = first_seed + static_cast<unsigned long long>(runs);
  std::atomic<unsigned long long> first_bad{end};
  auto worker = [&] {
    for (unsigned long long seed = next.fetch_add(1); seed < end; seed = next.fetch_add(1)) {
      if (!one(seed)) {
        failures.fetch_add(1);
        unsigned long long cur = first_bad.load();
        while (seed < cur && !first_bad.compare_exchange_weak(cur, seed)) {
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  std::cout << label << ": " << runs << " seeded run(s) from seed " << first_seed << ", "
            << failures.load() << " nonconformant";
  if (failures.load() > 0) std::cout << " (first failing seed " << first_bad.load() << ")";
  std::cout << "\n";
  return failures.load() > 0 ? 1 : 0;
}

void dump_schedule(const std::vector<std::string>& schedule, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  for (const auto& line : schedule) out << line << "\n";
  std::cout << schedule.size() << " scheduler events written to " << path << "\n";
}

int cmd_simulate_cops(CopsParams p, int runs, int jobs, bool check, const std::string& dump,
                      const std::string& fault) {
  if (fault == "unchecked-delivery") {
    p.deliver_without_deps = true;
  } else if (!fault.empty() && fault != "none") {
    throw std::invalid_argument("unknown fault: " + fault + " (expected unchecked-delivery)");
  }
  if (runs > 1) {
    return batch_conformance("cops", p.seed, runs, jobs, [&](unsigned long long seed) {
      CopsParams q = p;
      q.seed = seed;
      return check_cops_run(simulate_cops(q)).ok();
    });
  }
  CopsState st = simulate_cops(p);
  std::cout << "cops: " << p.clients << " client(s), " << p.replicas << " replica(s), " << p.ops
            << " op(s)/client, seed " << p.seed << "\n"
            << "events " << st.schedule.size() << ", commits " << st.log.size() << ", converged "
            << (cops_converged(st) ? "yes" : "no") << (st.livelock ? ", livelock" : "") << "\n";
  if (!dump.empty()) dump_schedule(st.schedule, dump);
  if (check) {
    ConformanceReport rep = check_cops_run(st);
    std::cout << rep.str() << "\n";
    return rep.ok() ? 0 : 1;
  }
  return st.livelock ? 1 : 0;
}

int cmd_simulate_clocksi(ClockSiParams p, int runs, int jobs, bool check, const std::string& dump,
                         const std::string& fault) {
  if (fault == "min-commit") {
    p.commit_time_min = true;
  } else if (!fault.empty() && fault != "none") {
    throw std::invalid_argument("unknown fault: " + fault + " (expected min-commit)");
  }
  if (runs > 1) {
    return batch_conformance("clocksi", p.seed, runs, jobs, [&](unsigned long long seed) {
      ClockSiParams q = p;
      q.seed = seed;
      return check_clocksi_run(simulate_clocksi(q)).ok();
    });
  }
  ClockSiState st = simulate_clocksi(p);
  std::cout << "clocksi: " << p.clients << " client(s), " << p.shards << " shard(s), " << p.ops
            << " txn(s)/client, seed " << p.seed << ", skew " << p.skew << "\n"
            << "events " << st.schedule.size() << ", commits " << st.log.size() << ", aborts "
            << st.aborts << (st.livelock ? ", livelock" : "") << "\n";
  if (!dump.empty()) dump_schedule(st.schedule, dump);
  if (check) {
    ConformanceReport rep = check_clocksi_run(st);
    std::cout << rep.str() << "\n";
    return rep.ok() ? 0 : 1;
  }
  return st.livelock ? 1 : 0;
}

int cmd_graph(const std::string& store_path, const std::string& out_path) {
  KvStore store = load_store(store_path);
  DependencyGraph g = graph_of(store);
  StoreRelations rels = store_relations(store);
  std::ostringstream dot;
  dot << "digraph dependencies {\n  node [shape=box, fontname=\"monospace\"];\n";
  for (const auto& [t, fp] : g.txns) {
    dot << "  \"" << t.str() << "\" [label=\"" << t.str() << ": " << fp.str() << "\"];\n";
  }
  for (const Relation* r : {&rels.so, &rels.wr, &rels.ww, &rels.rw}) {
    for (const auto& [a, b] : r->pairs) {
      dot << "  \"" << a.str() << "\" -> \"" << b.str() << "\" [label=\"" << r->name << "\"];\n";
    }
  }
  dot << "}\n";
  if (out_path.empty()) {
    std::cout << dot.str();
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write dot file: " + out_path);
    out << dot.str();
    std::cout << "dependency graph written to " << out_path << "\n";
  }
  return 0;
}

int cmd_anomalies(const std::string& fixtures_dir) {
  // Fixture file name (what separates the models) -> catalogued store name.
  const std::vector<std::pair<std::string, std::string>> fixture_files = {
      {"mr-disallowed", "nonmonotonic-read"},
      {"ryw-disallowed", "forgotten-write"},
      {"wr-wfr-allowed-but-cc", "causal-gap"},
      {"ua-disallowed", "lost-update"},
      {"cc-ua-allowed-but-psi", "fractured-read"},
      {"cp-disallowed", "long-fork"},
      {"si-disallowed", "conflict-fork"},
      {"ser-disallowed", "write-skew"},
  };
  const AnomalyMatrix expected = expected_anomaly_matrix();

  std::cout << std::left << std::setw(24) << "fixture";
  for (Model m : all_models()) std::cout << std::right << std::setw(4) << model_name(m);
  std::cout << "\n";

  bool all_match = true;
  for (const auto& [file, catalogued] : fixture_files) {
    KvStore store = load_store(fixtures_dir + "/" + file + ".store");
    std::cout << std::left << std::setw(24) << file;
    for (Model m : all_models()) {
      bool reachable = store_reachable(m, store);
      std::cout << std::right << std::setw(4) << (reachable ? "+" : "-");
      if (reachable != expected.at(catalogued).at(m)) {
        all_match = false;
        std::cout << "!";
      }
    }
    std::cout << "\n";
  }
  std::cout << "(+ reachable under the model, - rejected)\n";
  if (!all_match) {
    std::cout << "anomaly matrix DIFFERS from the expected table (deviations marked '!')\n";
    return 1;
  }
  std::cout << "anomaly matrix matches the expected table\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-versioned key-value store semantics workbench"};
  app.require_subcommand(1);
  int rc = 0;

  // --- run ---
  std::string run_model, run_program, run_find;
  int run_steps = 32;
  bool run_list = false;
  auto* run = app.add_subcommand("run", "Explore a scenario under a consistency model");
  run->add_option("--model", run_model, "consistency model (case-insensitive)")->required();
  run->add_option("--program", run_program, "scenario file")->required();
  run->add_option("--max-steps", run_steps, "exploration step bound (default 32)");
  run->add_flag("--list-finals", run_list, "print every final store");
  run->add_option("--find-store", run_find, "exit 0 iff this store file is reachable");
  run->callback([&] { rc = cmd_run(run_model, run_program, run_steps, run_list, run_find); });

  // --- check-robust ---
  std::string rob_model, rob_lib, rob_witness;
  int rob_ops = 3, rob_clients = 2;
  auto* rob = app.add_subcommand("check-robust",
                                 "Search an operation library for serializability violations");
  rob->add_option("--model", rob_model, "consistency model the operations run under")->required();
  rob->add_option("--library", rob_lib, "counter | counters | bank")->required();
  rob->add_option("--ops", rob_ops, "operation invocation budget")->required();
  rob->add_option("--clients", rob_clients, "number of clients (default 2)");
  rob->add_option("--witness", rob_witness, "write the counterexample trace to this file");
  rob->callback([&] { rc = cmd_check_robust(rob_model, rob_lib, rob_ops, rob_clients, rob_witness); });

  // --- simulate-cops ---
  CopsParams cops;
  int cops_runs = 1, cops_jobs = 1;
  bool cops_check = false;
  std::string cops_dump, cops_fault;
  auto* sc = app.add_subcommand("simulate-cops", "Run the replicated causal store simulator");
  sc->add_option("--clients", cops.clients, "clients (default 2)");
  sc->add_option("--replicas", cops.replicas, "replicas (default 2)");
  sc->add_option("--ops", cops.ops, "operations per client (default 4)");
  sc->add_option("--seed", cops.seed, "scheduler seed (default 0)");
  sc->add_option("--keys", cops.num_keys, "number of keys (default 3)");
  sc->add_flag("--check", cops_check, "replay the run against the causal execution test");
  sc->add_option("--dump-trace", cops_dump, "write one line per scheduler event to this file");
  sc->add_option("--runs", cops_runs, "check this many consecutive seeds (implies --check)");
  sc->add_option("--jobs", cops_jobs, "parallel workers for --runs (default 1)");
  sc->add_option("--fault", cops_fault, "inject a protocol fault: unchecked-delivery");
  sc->callback([&] {
    rc = cmd_simulate_cops(cops, cops_runs, cops_jobs, cops_check, cops_dump, cops_fault);
  });

  // --- simulate-clocksi ---
  ClockSiParams csi;
  int csi_runs = 1, csi_jobs = 1;
  bool csi_check = false;
  std::string csi_dump, csi_fault;
  auto* ss = app.add_subcommand("simulate-clocksi", "Run the sharded snapshot store simulator");
  ss->add_option("--clients", csi.clients, "clients (default 2)");
  ss->add_option("--shards", csi.shards, "shards (default 2)");
  ss->add_option("--ops", csi.ops, "transactions per client (default 4)");
  ss->add_option("--seed", csi.seed, "scheduler seed (default 0)");
  ss->add_option("--skew", csi.skew, "clock skew bound (default 5)");
  ss->add_option("--keys", csi.num_keys, "number of keys (default 3)");
  ss->add_flag("--check", csi_check, "replay the run against the snapshot isolation test");
  ss->add_option("--dump-trace", csi_dump, "write one line per scheduler event to this file");
  ss->add_option("--runs", csi_runs, "check this many consecutive seeds (implies --check)");
  ss->add_option("--jobs", csi_jobs, "parallel workers for --runs (default 1)");
  ss->add_option("--fault", csi_fault, "inject a protocol fault: min-commit");
  ss->callback([&] {
    rc = cmd_simulate_clocksi(csi, csi_runs, csi_jobs, csi_check, csi_dump, csi_fault);
  });

  // --- graph ---
  std::string graph_store, graph_out;
  auto* gr = app.add_subcommand("graph", "Export a store's dependency graph as dot");
  gr->add_option("--store", graph_store, "store file")->required();
  gr->add_option("-o,--output", graph_out, "output file (default stdout)");
  gr->callback([&] { rc = cmd_graph(graph_store, graph_out); });

  // --- anomalies ---
  std::string fixtures_dir = "fixtures";
  auto* an = app.add_subcommand("anomalies",
                                "Check the fixture stores against the expected anomaly matrix");
  an->add_option("--fixtures", fixtures_dir, "fixture directory (default ./fixtures)");
  an->callback([&] { rc = cmd_anomalies(fixtures_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0, any parse problem is a usage error
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
