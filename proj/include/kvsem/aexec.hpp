#pragma once

// Abstract executions: a set of transactions with their fingerprints, a
// visibility relation (what each transaction saw) and an arbitration relation
// (a strict total order resolving write conflicts). The initial transaction
// writes 0 to every key in scope, is arbitration-minimal, and is visible to
// everyone. Reads follow last-writer-wins: each read returns the value
// written by the arbitration-maximal visible writer.
//
// Executions project onto dependency graphs (and so onto stores), and
// declarative consistency models are sets of axioms requiring derived
// relations to be contained in visibility. Small programs can be checked both
// ways: the interleaved machine's final stores against the stores of all
// axiom-satisfying executions.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvsem/dependencies.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/program.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

struct AbstractExecution {
  std::map<TxId, Fingerprint> txns;  // includes the initial transaction
  Relation vis{"VIS", {}};
  Relation ar{"AR", {}};
};

inline bool operator==(const AbstractExecution& a, const AbstractExecution& b) {
  return a.txns == b.txns && a.vis.pairs == b.vis.pairs &&
         a.ar.pairs == b.ar.pairs;
}

// The key universe is whatever the initial transaction initialised.
inline std::set<Key> aexec_keys(const AbstractExecution& a) {
  auto it = a.txns.find(TxId::initial());
  if (it == a.txns.end()) {
    throw std::invalid_argument("execution has no initial transaction");
  }
  std::set<Key> keys;
  for (const auto& [k, v] : it->second.writes()) keys.insert(k);
  return keys;
}

inline AbstractExecution initial_aexec(const std::set<Key>& keys) {
  if (keys.empty()) throw std::invalid_argument("no keys");
  AbstractExecution a;
  Fingerprint init;
  for (const Key& k : keys) init.add_write(k, 0);
  a.txns[TxId::initial()] = init;
  return a;
}

// All transactions sorted by arbitration, initial first. Throws when the
// relation is not a strict total order over exactly the execution's
// transactions.
inline std::vector<TxId> ar_order(const AbstractExecution& a) {
  std::map<TxId, std::size_t> preds;
  for (const auto& [t, fp] : a.txns) preds[t] = 0;
  for (const auto& [x, y] : a.ar.pairs) {
    if (!a.txns.count(x) || !a.txns.count(y)) {
      throw std::invalid_argument("arbitration order mentions unknown transaction");
    }
    preds[y] += 1;
  }
  std::vector<TxId> order(a.txns.size());
  std::vector<bool> used(order.size(), false);
  for (const auto& [t, n] : preds) {
    if (n >= order.size() || used[n]) {
      throw std::invalid_argument("arbitration order is not total");
    }
    order[n] = t;
    used[n] = true;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (!a.ar.contains(order[i], order[j])) {
        throw std::invalid_argument("arbitration order is not total");
      }
    }
  }
  return order;
}

// Session order among the execution's transactions (transitive, initial
// transaction excluded).
inline Relation so_of_aexec(const AbstractExecution& a) {
  Relation r{"SO", {}};
  for (const auto& [x, fx] : a.txns) {
    for (const auto& [y, fy] : a.txns) {
      if (session_ordered(x, y)) r.add(x, y);
    }
  }
  return r;
}

// Appends t arbitration-maximal, seeing t_vis (the initial transaction is
// always added). t must be fresh and later in its session than everything
// already present.
inline AbstractExecution extend(const AbstractExecution& a, const TxId& t,
                                const std::set<TxId>& t_vis,
                                const Fingerprint& fp) {
  if (t.is_initial() || a.txns.count(t)) {
    throw std::invalid_argument("stale transaction id");
  }
  for (const auto& [t2, fp2] : a.txns) {
    if (!t2.is_initial() && t2.client() == t.client() && t2.seq() >= t.seq()) {
      throw std::invalid_argument("stale transaction id");
    }
  }
  for (const TxId& v : t_vis) {
    if (!a.txns.count(v)) throw std::invalid_argument("bad visible set");
  }
  AbstractExecution out = a;
  for (const auto& [t2, fp2] : a.txns) out.ar.add(t2, t);
  for (const TxId& v : t_vis) out.vis.add(v, t);
  out.vis.add(TxId::initial(), t);
  out.txns[t] = fp;
  return out;
}

// The prefix with the first i non-initial transactions in arbitration order,
// relations restricted.
inline AbstractExecution cut(const AbstractExecution& a, std::size_t i) {
  const std::vector<TxId> order = ar_order(a);
  if (i + 1 > order.size()) {
    throw std::invalid_argument("cut index out of range");
  }
  const std::set<TxId> keep(order.begin(), order.begin() + i + 1);
  AbstractExecution out;
  for (const TxId& t : keep) out.txns[t] = a.txns.at(t);
  for (const auto& p : a.vis.pairs) {
    if (keep.count(p.first) && keep.count(p.second)) out.vis.pairs.insert(p);
  }
  for (const auto& p : a.ar.pairs) {
    if (keep.count(p.first) && keep.count(p.second)) out.ar.pairs.insert(p);
  }
  return out;
}

// Projects the execution onto a dependency graph: write-read edges from the
// arbitration-maximal visible writer of each read, write-write per key from
// arbitration among its writers, read-write derived.
inline DependencyGraph graph_of_aexec(const AbstractExecution& a) {
  const std::vector<TxId> order = ar_order(a);
  DependencyGraph g;
  g.txns = a.txns;
  for (const Key& k : aexec_keys(a)) {
    std::vector<TxId> writers;
    for (const TxId& t : order) {
      if (a.txns.at(t).write_of(k)) writers.push_back(t);
    }
    Relation wrk{"WR(" + k + ")", {}};
    Relation wwk{"WW(" + k + ")", {}};
    Relation rwk{"RW(" + k + ")", {}};
    for (std::size_t i = 0; i < writers.size(); ++i) {
      for (std::size_t j = i + 1; j < writers.size(); ++j) {
        wwk.add(writers[i], writers[j]);
      }
    }
    for (const auto& [t, fp] : a.txns) {
      if (!fp.read_of(k)) continue;
      const TxId* source = nullptr;  // writers is in arbitration order
      for (const TxId& w : writers) {
        if (w.is_initial() || a.vis.contains(w, t)) source = &w;
      }
      if (source) wrk.add(*source, t);
    }
    for (const auto& [w, t] : wrk.pairs) {
      for (const TxId& w2 : writers) {
        if (wwk.contains(w, w2) && t != w2) rwk.add(t, w2);
      }
    }
    g.wr[k] = std::move(wrk);
    g.ww[k] = std::move(wwk);
    g.rw[k] = std::move(rwk);
  }
  return g;
}

// The store the execution determines. Throws a named dependency-graph
// violation when reads are inconsistent with last-writer-wins.
inline KvStore mkvs_of(const AbstractExecution& a) {
  return kv_of(graph_of_aexec(a));
}

// The view of mkvs_of(a) containing index 0 everywhere plus every version
// whose writer is in T. Read-only members of T leave no trace.
inline View get_view(const AbstractExecution& a, const std::set<TxId>& T) {
  std::set<TxId> writers;
  for (const TxId& t : T) {
    if (!a.txns.count(t)) throw std::invalid_argument("bad visible set");
    if (!t.is_initial()) writers.insert(t);
  }
  return view_of_writers(mkvs_of(a), writers);
}

inline bool aexec_wellformed(const AbstractExecution& a) {
  auto it = a.txns.find(TxId::initial());
  if (it == a.txns.end()) return false;
  if (!it->second.reads().empty() || it->second.writes().empty()) return false;
  for (const auto& [k, v] : it->second.writes()) {
    if (v != 0) return false;
  }
  for (const auto& p : a.vis.pairs) {
    if (!a.ar.pairs.count(p)) return false;  // visibility within arbitration
  }
  std::vector<TxId> order;
  try {
    order = ar_order(a);
  } catch (const std::invalid_argument&) {
    return false;
  }
  if (!order.front().is_initial()) return false;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      // arbitration must respect sessions
      if (session_ordered(order[j], order[i])) return false;
    }
  }
  for (const auto& [t, fp] : a.txns) {
    if (!t.is_initial() && !a.vis.contains(TxId::initial(), t)) return false;
  }
  try {
    mkvs_of(a);  // last-writer-wins and graph sanity
  } catch (const std::invalid_argument&) {
    return false;
  }
  return true;
}

// --- axioms -----------------------------------------------------------------

// An axiom derives a relation from an execution; the execution satisfies it
// when that relation is contained in visibility.
struct Axiom {
  std::string name;
  std::function<Relation(const AbstractExecution&)> relation;
};

inline bool check_axioms(const AbstractExecution& a,
                         const std::vector<Axiom>& axioms) {
  for (const Axiom& ax : axioms) {
    for (const auto& p : ax.relation(a).pairs) {
      if (!a.vis.pairs.count(p)) return false;
    }
  }
  return true;
}

namespace detail {

struct AexecRelations {
  Relation so, wr, ww, rw;
};

inline AexecRelations aexec_relations(const AbstractExecution& a) {
  DependencyGraph g = graph_of_aexec(a);
  AexecRelations r{so_of_aexec(a), {"WR", {}}, {"WW", {}}, {"RW", {}}};
  for (const auto& [k, rel] : g.wr) r.wr.pairs.insert(rel.pairs.begin(), rel.pairs.end());
  for (const auto& [k, rel] : g.ww) r.ww.pairs.insert(rel.pairs.begin(), rel.pairs.end());
  for (const auto& [k, rel] : g.rw) r.rw.pairs.insert(rel.pairs.begin(), rel.pairs.end());
  return r;
}

// x ; r^?  =  x ∪ x;r
inline Relation with_optional(const Relation& x, const Relation& r) {
  return rel_union(x, rel_compose(x, r));
}

}  // namespace detail

// The declarative counterpart of each commit test, phrased as required
// visibility. The broken-atomic-visibility models have none here.
inline std::vector<Axiom> axioms_for(Model m) {
  using detail::aexec_relations;
  using detail::with_optional;
  switch (m) {
    case Model::TOP:
      return {};
    case Model::MR:
      return {{"monotonic-reads", [](const AbstractExecution& a) {
                 return rel_compose(a.vis, so_of_aexec(a));
               }}};
    case Model::RYW:
      return {{"read-your-writes",
               [](const AbstractExecution& a) { return so_of_aexec(a); }}};
    case Model::MW:
      return {{"monotonic-writes", [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_compose(rel_intersect(r.so, r.ww), a.vis);
               }}};
    case Model::WFR:
      return {{"write-follows-read", [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_compose(
                     with_optional(r.wr, rel_intersect(r.so, r.rw)), a.vis);
               }}};
    case Model::CC:
      return {{"causal-visibility",
               [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_compose(rel_tclosure(rel_union(r.so, r.wr)), a.vis);
               }},
              {"session-visibility",
               [](const AbstractExecution& a) { return so_of_aexec(a); }}};
    case Model::UA:
      return {{"write-conflict-visibility", [](const AbstractExecution& a) {
                 return aexec_relations(a).ww;
               }}};
    case Model::CP:
      return {{"prefix-visibility",
               [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_compose(
                     rel_union(with_optional(rel_union(r.so, r.wr), r.rw), r.ww),
                     a.vis);
               }},
              {"session-visibility",
               [](const AbstractExecution& a) { return so_of_aexec(a); }}};
    case Model::SI:
      return {{"snapshot-visibility",
               [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_compose(
                     with_optional(rel_union(rel_union(r.so, r.ww), r.wr), r.rw),
                     a.vis);
               }},
              {"session-and-conflict-visibility",
               [](const AbstractExecution& a) {
                 auto r = aexec_relations(a);
                 return rel_union(r.ww, r.so);
               }}};
    case Model::SER:
      return {{"total-visibility",
               [](const AbstractExecution& a) { return a.ar; }}};
    case Model::PSI:
    case Model::WSI:
      throw std::invalid_argument("no axiomatic specification for model: " +
                                  std::string(model_name(m)));
  }
  throw std::logic_error("unreachable model");
}

// --- cross-validation enumerator ---------------------------------------------

namespace detail {

inline bool flatten_atomics(const CmdPtr& c, std::vector<TxnPtr>& out) {
  switch (c->kind) {
    case Cmd::Kind::Skip:
      return true;
    case Cmd::Kind::Atomic:
      out.push_back(c->txn);
      return true;
    case Cmd::Kind::Seq:
      return flatten_atomics(c->left, out) && flatten_atomics(c->right, out);
    default:
      return false;
  }
}

}  // namespace detail

// Every final store of an axiom-satisfying execution of p: enumerate all
// interleavings of the clients' transaction sequences (arbitration orders
// consistent with sessions) and all visibility choices per transaction,
// running each body against the last-writer-wins snapshot of what it sees.
// Programs must be sequences of atomic transactions per client.
inline std::set<KvStore> axiomatic_final_stores(Model m, const Program& p) {
  const std::vector<Axiom> axioms = axioms_for(m);
  std::map<ClientId, std::vector<TxnPtr>> bodies;
  for (const auto& [cl, c] : p.threads) {
    if (!detail::flatten_atomics(c, bodies[cl])) {
      throw std::invalid_argument(
          "axiomatic enumeration needs sequences of atomic transactions");
    }
  }
  std::set<KvStore> out;
  std::map<ClientId, Stack> stacks;
  std::map<ClientId, std::size_t> done;
  for (const auto& [cl, list] : bodies) {
    stacks[cl] = {};
    done[cl] = 0;
  }

  std::function<void(const AbstractExecution&)> go =
      [&](const AbstractExecution& a) {
        bool finished = true;
        for (const auto& [cl, list] : bodies) {
          if (done[cl] < list.size()) finished = false;
        }
        if (finished) {
          if (check_axioms(a, axioms)) out.insert(mkvs_of(a));
          return;
        }
        for (const auto& [cl, list] : bodies) {
          if (done[cl] >= list.size()) continue;
          const TxId t(cl, static_cast<int>(done[cl]) + 1);
          std::vector<TxId> others;
          for (const auto& [t2, fp2] : a.txns) {
            if (!t2.is_initial()) others.push_back(t2);
          }
          for (std::uint64_t mask = 0; mask < (1ull << others.size()); ++mask) {
            std::set<TxId> t_vis{TxId::initial()};
            for (std::size_t b = 0; b < others.size(); ++b) {
              if (mask & (1ull << b)) t_vis.insert(others[b]);
            }
            const Snapshot snap = snapshot(mkvs_of(a), get_view(a, t_vis));
            FingerprintSet fps =
                final_fingerprints(list[done[cl]], stacks[cl], snap);
            if (fps.partial) {
              throw std::runtime_error("iteration bound exceeded");
            }
            for (const auto& [stack2, fp] : fps.results) {
              const Stack saved = stacks[cl];
              stacks[cl] = stack2;
              done[cl] += 1;
              go(extend(a, t, t_vis, fp));
              done[cl] -= 1;
              stacks[cl] = saved;
            }
          }
        }
      };
  go(initial_aexec(program_keys(p)));
  return out;
}

}  // namespace kvsem
