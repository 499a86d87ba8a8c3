#pragma once

// Robustness analysis: serialisability membership of individual stores via
// dependency-cycle detection, the structural write-snapshot safety check,
// example operation libraries (single counter, multiple counters, banking),
// and a bounded exhaustive driver that searches a library's reachable stores
// under a weak model for non-serialisable states.  Also a targeted checker
// that decides whether one specific store is reachable under a model, used by
// the anomaly matrix.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kvsem/dependencies.hpp"
#include "kvsem/engine.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/program.hpp"
#include "kvsem/store.hpp"
#include "kvsem/store_io.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

// A store belongs to the serialisable model iff its dependency relations are
// acyclic.
inline bool ser_member(const KvStore& store) {
  return !find_cycle(store).has_value();
}

// Structural safety for write-snapshot isolation: every transaction is either
// read-only or touches keys symmetrically — it reads every key it writes
// (strictly no blind writes) and writes every key it reads.
inline bool wsi_safe(const KvStore& store) {
  std::map<TxId, std::set<Key>> reads, writes;
  for (const auto& [k, list] : store.data()) {
    for (const Version& ver : list) {
      if (!ver.writer.is_initial()) writes[ver.writer].insert(k);
      for (const TxId& r : ver.readers) {
        if (!r.is_initial()) reads[r].insert(k);
      }
    }
  }
  for (const auto& [t, w] : writes) {
    const std::set<Key>& r = reads[t];  // may be empty
    if (!std::includes(r.begin(), r.end(), w.begin(), w.end())) {
      return false;  // writes a key it never read
    }
    if (!std::includes(w.begin(), w.end(), r.begin(), r.end())) {
      return false;  // reads a key it leaves unwritten while writing others
    }
  }
  return true;
}

// The staircase shape of reachable single-counter stores: version i holds
// value i, each increment reads the version immediately below the one it
// writes, and every other reader never writes anything.
inline bool canonical_counter_shape(const KvStore& store, const Key& k) {
  std::set<TxId> writers;
  for (const auto& [k2, list] : store.data()) {
    for (const Version& ver : list) {
      if (!ver.writer.is_initial()) writers.insert(ver.writer);
    }
  }
  const auto& list = store.versions(k);
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].value != static_cast<Value>(i)) return false;
    if (i + 1 < list.size() && !list[i].readers.count(list[i + 1].writer)) {
      return false;  // an increment that skipped its predecessor
    }
    for (const TxId& r : list[i].readers) {
      const bool next_writer =
          i + 1 < list.size() && r == list[i + 1].writer;
      if (!next_writer && writers.count(r)) return false;
    }
  }
  return true;
}

// --- operation libraries ------------------------------------------------------

// A finite menu of transaction bodies clients may invoke, instantiated over
// their parameter domains up front.
struct Library {
  std::string name;
  std::vector<std::pair<std::string, TxnPtr>> operations;  // label, body
};

namespace detail {

inline ExprPtr lnot(ExprPtr g) { return Expr::eq(std::move(g), Expr::literal(0)); }

inline ExprPtr ge(ExprPtr a, ExprPtr b) {
  return lnot(Expr::lt(std::move(a), std::move(b)));
}

// if g then yes else no, as a guarded choice
inline TxnPtr branch(ExprPtr g, TxnPtr yes, TxnPtr no) {
  return TxnCmd::choice(TxnCmd::seq(TxnCmd::assume(g), std::move(yes)),
                        TxnCmd::seq(TxnCmd::assume(lnot(g)), std::move(no)));
}

}  // namespace detail

inline Library library_counter(const Key& k) {
  TxnPtr inc = TxnCmd::seq(
      TxnCmd::lookup("x", KeyExpr::lit(k)),
      TxnCmd::mutate(KeyExpr::lit(k),
                     Expr::add(Expr::variable("x"), Expr::literal(1))));
  TxnPtr read = TxnCmd::lookup("x", KeyExpr::lit(k));
  return Library{"counter(" + k + ")",
                 {{"inc(" + k + ")", inc}, {"read(" + k + ")", read}}};
}

inline Library library_counters(const std::set<Key>& keys) {
  Library lib{"counters(", {}};
  std::string sep;
  for (const Key& k : keys) {
    Library one = library_counter(k);
    lib.operations.insert(lib.operations.end(), one.operations.begin(),
                          one.operations.end());
    lib.name += sep + k;
    sep = ",";
  }
  lib.name += ")";
  return lib;
}

// The banking schema keeps customer n's checking balance under key 2n and the
// saving balance under key 2n+1.
inline Key bank_checking_key(int n) { return std::to_string(2 * n); }
inline Key bank_saving_key(int n) { return std::to_string(2 * n + 1); }

inline std::set<Key> bank_keys(int customers) {
  std::set<Key> out;
  for (int n = 0; n < customers; ++n) {
    out.insert(bank_checking_key(n));
    out.insert(bank_saving_key(n));
  }
  return out;
}

// Five banking operations over `customers` account holders and the given
// amounts.  writeCheck deducts one extra pound on insufficient funds and
// writes the saving balance back unchanged; deposits and withdrawals that
// fail their guard leave the store untouched.
inline Library library_bank(int customers = 2,
                            std::vector<Value> amounts = {-1, 0, 1, 100}) {
  using detail::branch;
  using detail::ge;
  auto var = [](const char* v) { return Expr::variable(v); };
  Library lib{"bank", {}};
  for (int n = 0; n < customers; ++n) {
    const KeyExpr nc = KeyExpr::lit(bank_checking_key(n));
    const KeyExpr ns = KeyExpr::lit(bank_saving_key(n));
    const std::string ntxt = std::to_string(n);

    lib.operations.push_back(
        {"balance(" + ntxt + ")",
         TxnCmd::seq(TxnCmd::lookup("x", nc),
                     TxnCmd::seq(TxnCmd::lookup("y", ns),
                                 TxnCmd::assign("ret", Expr::add(var("x"),
                                                                 var("y")))))});
    for (Value v : amounts) {
      const ExprPtr amount = Expr::literal(v);
      const std::string vtxt = std::to_string(v);
      lib.operations.push_back(
          {"depositChecking(" + ntxt + "," + vtxt + ")",
           branch(ge(amount, Expr::literal(0)),
                  TxnCmd::seq(TxnCmd::lookup("x", nc),
                              TxnCmd::mutate(nc, Expr::add(var("x"), amount))),
                  TxnCmd::skip())});
      lib.operations.push_back(
          {"transactSaving(" + ntxt + "," + vtxt + ")",
           TxnCmd::seq(
               TxnCmd::lookup("x", ns),
               branch(ge(Expr::add(amount, var("x")), Expr::literal(0)),
                      TxnCmd::mutate(ns, Expr::add(var("x"), amount)),
                      TxnCmd::skip()))});
      lib.operations.push_back(
          {"writeCheck(" + ntxt + "," + vtxt + ")",
           TxnCmd::seq(
               TxnCmd::lookup("x", ns),
               TxnCmd::seq(
                   TxnCmd::lookup("y", nc),
                   TxnCmd::seq(
                       branch(Expr::lt(Expr::add(var("x"), var("y")), amount),
                              TxnCmd::mutate(
                                  nc, Expr::sub(Expr::sub(var("y"), amount),
                                                Expr::literal(1))),
                              TxnCmd::mutate(nc, Expr::sub(var("y"), amount))),
                       TxnCmd::mutate(ns, var("x")))))});
    }
    for (int n2 = 0; n2 < customers; ++n2) {
      if (n2 == n) continue;
      const KeyExpr nc2 = KeyExpr::lit(bank_checking_key(n2));
      lib.operations.push_back(
          {"amalgamate(" + ntxt + "," + std::to_string(n2) + ")",
           TxnCmd::seq(
               TxnCmd::lookup("x", ns),
               TxnCmd::seq(
                   TxnCmd::lookup("y", nc),
                   TxnCmd::seq(
                       TxnCmd::lookup("z", nc2),
                       TxnCmd::seq(
                           TxnCmd::mutate(ns, Expr::literal(0)),
                           TxnCmd::seq(TxnCmd::mutate(nc, Expr::literal(0)),
                                       TxnCmd::mutate(
                                           nc2, Expr::add(Expr::add(var("x"),
                                                                    var("y")),
                                                          var("z"))))))))});
    }
  }
  return lib;
}

inline std::set<Key> library_keys(const Library& lib) {
  std::set<Key> keys;
  for (const auto& [label, body] : lib.operations) {
    collect_literal_keys(body, keys);
  }
  return keys;
}

// --- bounded robustness search -------------------------------------------------

enum class Verdict { RobustWithinBound, Counterexample };

struct RobustnessReport {
  Model model = Model::SER;
  std::string library;
  int bound = 0;    // committed operation invocations explored
  int clients = 0;
  Verdict verdict = Verdict::RobustWithinBound;
  std::optional<Trace> witness;            // run reaching the offending store
  std::optional<std::vector<TxId>> cycle;  // dependency cycle in that store
  std::set<KvStore> stores;                // every store seen within the bound
};

namespace detail {

inline std::string state_key(const Configuration& conf) {
  std::string key = canonical_store_str(conf.store);
  for (const auto& [cl, u] : conf.views) {
    key += "|" + cl + u.str();
  }
  return key;
}

}  // namespace detail

// Breadth-first enumeration of everything `clients` sessions can reach with
// at most op_budget invocations of the library's operations, flagging the
// first non-serialisable store together with a replayable witness.
inline RobustnessReport check_robust(Model m, const Library& lib,
                                     int op_budget, int clients = 2) {
  if (op_budget < 1) {
    throw std::invalid_argument("op budget too small to commit any operation");
  }
  RobustnessReport report;
  report.model = m;
  report.library = lib.name;
  report.bound = op_budget;
  report.clients = clients;

  std::set<ClientId> ids;
  for (int c = 1; c <= clients; ++c) ids.insert("cl" + std::to_string(c));
  const Configuration init = initial_config(ids, library_keys(lib));

  struct SearchNode {
    Configuration conf;
    int parent = -1;
    ClientId client;
    View pre;
    Fingerprint fp;
    View post;
    int depth = 0;
  };
  std::vector<SearchNode> arena;
  arena.push_back({init, -1, {}, {}, {}, {}, 0});
  std::set<std::string> seen{detail::state_key(init)};
  report.stores.insert(init.store);

  auto witness_of = [&](int node) {
    Trace tr;
    tr.initial = init;
    std::vector<int> chain;
    for (int i = node; i > 0; i = arena[i].parent) chain.push_back(i);
    std::reverse(chain.begin(), chain.end());
    for (int i : chain) {
      trace_append_commit(tr, arena[i].client, arena[i].pre, arena[i].fp,
                          arena[i].post);
    }
    return tr;
  };

  for (std::size_t head = 0; head < arena.size(); ++head) {
    const SearchNode node = arena[head];  // copy: arena reallocates below
    if (node.depth >= op_budget) continue;
    const KvStore& store = node.conf.store;
    const StoreRelations rels = store_relations(store);
    for (const ClientId& cl : ids) {
      const TxId t = next_txid(cl, store);
      for (const View& pre : views_geq(store, node.conf.views.at(cl))) {
        const Snapshot snap = snapshot(store, pre);
        for (const auto& [label, body] : lib.operations) {
          FingerprintSet fps = final_fingerprints(body, {}, snap);
          if (fps.partial) {
            throw std::runtime_error("iteration bound exceeded");
          }
          for (const auto& [stack, fp] : fps.results) {
            if (!can_commit(m, store, rels, pre, fp)) continue;
            const KvStore updated = update_kv(store, pre, fp, t);
            const View post = detail::minimal_post_view(m, updated, pre, cl);
            Configuration next = node.conf;
            next.store = updated;
            next.views[cl] = post;
            if (!seen.insert(detail::state_key(next)).second) continue;
            arena.push_back({std::move(next), static_cast<int>(head), cl, pre,
                             fp, post, node.depth + 1});
            report.stores.insert(updated);
            if (!ser_member(updated)) {
              report.verdict = Verdict::Counterexample;
              report.witness = witness_of(static_cast<int>(arena.size()) - 1);
              report.cycle = find_cycle(updated);
              return report;
            }
          }
        }
      }
    }
  }
  report.verdict = Verdict::RobustWithinBound;
  return report;
}

// --- targeted reachability ------------------------------------------------------

namespace detail {

struct TargetTxn {
  Fingerprint fp;
  std::map<Key, std::size_t> read_index;   // version whose readers contain it
  std::map<Key, std::size_t> write_index;  // version it wrote
};

// All views u with base ⊑ u over the current store, restricted so that for
// each key the target transaction reads, the view's maximum is exactly the
// version it read in the target.  Views are enumerated through their writer
// sets, which keeps every writer's versions together.
inline std::vector<View> constrained_views(const KvStore& store,
                                           const View& base,
                                           const TargetTxn& txn) {
  std::set<TxId> required = tx_of(store, base);
  required.erase(TxId::initial());
  std::set<TxId> forbidden;
  for (const auto& [k, i] : txn.read_index) {
    const auto& list = store.versions(k);
    if (i > 0) required.insert(list[i].writer);
    for (std::size_t j = i + 1; j < list.size(); ++j) {
      forbidden.insert(list[j].writer);  // would move the view past the read
    }
  }
  for (const TxId& w : required) {
    if (forbidden.count(w)) return {};
  }
  std::vector<TxId> free;
  for (const TxId& w : store.writer_ids()) {
    if (!required.count(w) && !forbidden.count(w)) free.push_back(w);
  }
  std::vector<View> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << free.size()); ++mask) {
    std::set<TxId> chosen = required;
    for (std::size_t b = 0; b < free.size(); ++b) {
      if (mask & (std::size_t{1} << b)) chosen.insert(free[b]);
    }
    out.push_back(view_of_writers(store, chosen));
  }
  return out;
}

}  // namespace detail

// Whether the machine can reach exactly `target` under model m: search over
// commit orders consistent with sessions and version orders, with pre-views
// pinned to the reads each transaction performed in the target.
inline bool store_reachable(Model m, const KvStore& target) {
  if (!wellformed(target)) {
    throw std::invalid_argument("target store is not wellformed");
  }
  std::map<TxId, detail::TargetTxn> txns;
  std::set<ClientId> clients;
  for (const auto& [k, list] : target.data()) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Version& ver = list[i];
      if (!ver.writer.is_initial()) {
        txns[ver.writer].fp.add_write(k, ver.value);
        txns[ver.writer].write_index[k] = i;
        clients.insert(ver.writer.client());
      }
      for (const TxId& r : ver.readers) {
        txns[r].fp.add_read(k, ver.value);
        txns[r].read_index[k] = i;
        clients.insert(r.client());
      }
    }
  }
  if (clients.empty()) return true;  // the initial store

  const Configuration init = initial_config(clients, target.keys());
  std::set<std::string> visited;

  std::function<bool(const Configuration&, std::size_t)> dfs =
      [&](const Configuration& conf, std::size_t committed) {
        if (committed == txns.size()) return conf.store == target;
        if (!visited.insert(detail::state_key(conf)).second) return false;
        const StoreRelations rels = store_relations(conf.store);
        for (const auto& [id, txn] : txns) {
          const ClientId& cl = id.client();
          if (next_txid(cl, conf.store) != id) continue;  // session order
          bool eligible = true;
          for (const auto& [k, j] : txn.write_index) {
            if (conf.store.versions(k).size() != j) eligible = false;
          }
          for (const auto& [k, i] : txn.read_index) {
            if (conf.store.versions(k).size() <= i) eligible = false;
          }
          if (!eligible) continue;
          for (const View& pre : detail::constrained_views(
                   conf.store, conf.views.at(cl), txn)) {
            if (!can_commit(m, conf.store, rels, pre, txn.fp)) continue;
            Configuration next = conf;
            next.store = update_kv(conf.store, pre, txn.fp, id);
            next.views[cl] =
                detail::minimal_post_view(m, next.store, pre, cl);
            if (dfs(next, committed + 1)) return true;
          }
        }
        return false;
      };
  return dfs(init, 0);
}

}  // namespace kvsem
