// Dependency analysis over kv-stores: the session-order, write-read,
// write-write, and read-write relations, the dependency graph with its
// two-way correspondence to stores, cycle detection with a minimal witness,
// and the predecessor-closure used by commit tests.
#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"

namespace kvsem {

// A named finite relation over transaction ids.
struct Relation {
  std::string name;
  std::set<std::pair<TxId, TxId>> pairs;

  void add(const TxId& a, const TxId& b) { pairs.emplace(a, b); }
  bool contains(const TxId& a, const TxId& b) const {
    return pairs.count({a, b}) > 0;
  }
  bool empty() const { return pairs.empty(); }
};

inline Relation rel_union(const Relation& a, const Relation& b) {
  Relation r{"(" + a.name + "|" + b.name + ")", a.pairs};
  r.pairs.insert(b.pairs.begin(), b.pairs.end());
  return r;
}

inline Relation rel_intersect(const Relation& a, const Relation& b) {
  Relation r{"(" + a.name + "&" + b.name + ")", {}};
  for (const auto& p : a.pairs) {
    if (b.pairs.count(p)) r.pairs.insert(p);
  }
  return r;
}

// Left-to-right composition a;b = {(x,z) | (x,y) in a, (y,z) in b}.
inline Relation rel_compose(const Relation& a, const Relation& b) {
  std::map<TxId, std::vector<TxId>> succ;
  for (const auto& [y, z] : b.pairs) succ[y].push_back(z);
  Relation r{"(" + a.name + ";" + b.name + ")", {}};
  for (const auto& [x, y] : a.pairs) {
    auto it = succ.find(y);
    if (it == succ.end()) continue;
    for (const TxId& z : it->second) r.pairs.emplace(x, z);
  }
  return r;
}

inline Relation rel_tclosure(const Relation& a) {
  Relation r{"(" + a.name + ")+", a.pairs};
  bool grew = true;
  while (grew) {
    grew = false;
    Relation step = rel_compose(r, a);
    for (const auto& p : step.pairs) {
      if (r.pairs.insert(p).second) grew = true;
    }
  }
  return r;
}

namespace detail {

inline void require_wellformed(const KvStore& store) {
  auto violations = check_wellformed(store);
  if (!violations.empty()) {
    throw std::invalid_argument("store is not well-formed: " +
                                violations.front().message);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The four dependency relations of a well-formed store.

// Session order: same-client ids in increasing sequence order.
inline Relation so(const KvStore& store) {
  detail::require_wellformed(store);
  Relation r{"SO", {}};
  const std::set<TxId> ids = store.all_ids();
  for (const TxId& a : ids) {
    for (const TxId& b : ids) {
      if (session_ordered(a, b)) r.add(a, b);
    }
  }
  return r;
}

// Write-read: the writer of a version precedes each of its readers.
inline Relation wr(const KvStore& store) {
  detail::require_wellformed(store);
  Relation r{"WR", {}};
  for (const Key& k : store.keys()) {
    for (const Version& ver : store.versions(k)) {
      for (const TxId& t : ver.readers) r.add(ver.writer, t);
    }
  }
  return r;
}

// Write-write: writers of the same key in version order.
inline Relation ww(const KvStore& store) {
  detail::require_wellformed(store);
  Relation r{"WW", {}};
  for (const Key& k : store.keys()) {
    const auto& vers = store.versions(k);
    for (std::size_t i = 0; i < vers.size(); ++i) {
      for (std::size_t j = i + 1; j < vers.size(); ++j) {
        r.add(vers[i].writer, vers[j].writer);
      }
    }
  }
  return r;
}

// Read-write: a reader of a version precedes writers of later versions of
// the same key, except when the reader is that later writer itself.
inline Relation rw(const KvStore& store) {
  detail::require_wellformed(store);
  Relation r{"RW", {}};
  for (const Key& k : store.keys()) {
    const auto& vers = store.versions(k);
    for (std::size_t i = 0; i < vers.size(); ++i) {
      for (const TxId& t : vers[i].readers) {
        for (std::size_t j = i + 1; j < vers.size(); ++j) {
          if (t != vers[j].writer) r.add(t, vers[j].writer);
        }
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dependency graphs: per-transaction fingerprints plus per-key WR/WW/RW.

struct DependencyGraph {
  std::map<TxId, Fingerprint> txns;
  std::map<Key, Relation> wr, ww, rw;
};

// Reads each transaction's fingerprint and the per-key relations off a
// well-formed store.
inline DependencyGraph graph_of(const KvStore& store) {
  detail::require_wellformed(store);
  DependencyGraph g;
  for (const Key& k : store.keys()) {
    const auto& vers = store.versions(k);
    for (std::size_t i = 0; i < vers.size(); ++i) {
      g.txns[vers[i].writer].add_write(k, vers[i].value);
      for (const TxId& t : vers[i].readers) g.txns[t].add_read(k, vers[i].value);
    }
    Relation wrk{"WR(" + k + ")", {}};
    Relation wwk{"WW(" + k + ")", {}};
    Relation rwk{"RW(" + k + ")", {}};
    for (std::size_t i = 0; i < vers.size(); ++i) {
      for (const TxId& t : vers[i].readers) wrk.add(vers[i].writer, t);
      for (std::size_t j = i + 1; j < vers.size(); ++j) {
        wwk.add(vers[i].writer, vers[j].writer);
        for (const TxId& t : vers[i].readers) {
          if (t != vers[j].writer) rwk.add(t, vers[j].writer);
        }
      }
    }
    g.wr[k] = std::move(wrk);
    g.ww[k] = std::move(wwk);
    g.rw[k] = std::move(rwk);
  }
  return g;
}

// Rebuilds the store a dependency graph denotes.  Throws invalid_argument
// naming the violated graph condition when the input is not a dependency
// graph.
inline KvStore kv_of(const DependencyGraph& g) {
  auto fail = [](const std::string& cond, const std::string& what) {
    throw std::invalid_argument("dependency graph violation (" + cond +
                                "): " + what);
  };

  auto t0_it = g.txns.find(TxId::initial());
  if (t0_it == g.txns.end()) fail("init", "initial transaction missing");
  if (!t0_it->second.reads().empty()) {
    fail("init", "initial transaction must not read");
  }
  const auto& initial_writes = t0_it->second.writes();
  if (initial_writes.empty()) fail("init", "initial transaction writes no keys");

  std::set<Key> keys;
  for (const auto& [k, v] : initial_writes) keys.insert(k);
  for (const auto& [t, fp] : g.txns) {
    for (const auto& [k, v] : fp.reads()) {
      if (!keys.count(k)) fail("unknown-key", "read of " + k + " by " + t.str());
    }
    for (const auto& [k, v] : fp.writes()) {
      if (!keys.count(k)) fail("unknown-key", "write of " + k + " by " + t.str());
    }
  }

  KvStore store;
  for (const Key& k : keys) {
    std::vector<TxId> writers;
    for (const auto& [t, fp] : g.txns) {
      if (fp.write_of(k)) writers.push_back(t);
    }

    // WW(k) must order the writers of k strictly and totally, t0 first.
    Relation wwk;
    if (auto it = g.ww.find(k); it != g.ww.end()) wwk = it->second;
    std::set<TxId> writer_set(writers.begin(), writers.end());
    for (const auto& [a, b] : wwk.pairs) {
      if (!writer_set.count(a) || !writer_set.count(b)) {
        fail("ww-order", "WW(" + k + ") mentions a non-writer");
      }
    }
    if (wwk.pairs.size() != writers.size() * (writers.size() - 1) / 2) {
      fail("ww-order", "WW(" + k + ") is not a strict total order");
    }
    std::sort(writers.begin(), writers.end(),
              [&](const TxId& a, const TxId& b) { return wwk.contains(a, b); });
    for (std::size_t i = 0; i < writers.size(); ++i) {
      for (std::size_t j = i + 1; j < writers.size(); ++j) {
        if (!wwk.contains(writers[i], writers[j])) {
          fail("ww-order", "WW(" + k + ") is not a strict total order");
        }
      }
    }
    if (writers.empty() || !writers.front().is_initial()) {
      fail("ww-order", "initial transaction is not WW-minimal on " + k);
    }

    std::map<TxId, std::size_t> index_of;
    std::vector<Version> vers;
    for (std::size_t i = 0; i < writers.size(); ++i) {
      index_of[writers[i]] = i;
      vers.push_back(Version{*g.txns.at(writers[i]).write_of(k), writers[i], {}});
    }

    // WR(k): each edge adds a reader; each read of k needs exactly one
    // source, and the value read must be the value written.
    Relation wrk;
    if (auto it = g.wr.find(k); it != g.wr.end()) wrk = it->second;
    std::map<TxId, int> sources;
    for (const auto& [w, t] : wrk.pairs) {
      auto wi = index_of.find(w);
      if (wi == index_of.end()) {
        fail("wr-source", "WR(" + k + ") source " + w.str() + " is not a writer");
      }
      auto reader = g.txns.find(t);
      if (reader == g.txns.end() || !reader->second.read_of(k)) {
        fail("wr-source", t.str() + " has a WR(" + k + ") edge but no read");
      }
      if (*reader->second.read_of(k) != vers[wi->second].value) {
        fail("read-value", t.str() + " reads a value " + k + " was never given");
      }
      vers[wi->second].readers.insert(t);
      sources[t] += 1;
    }
    for (const auto& [t, fp] : g.txns) {
      if (fp.read_of(k) && sources[t] != 1) {
        fail("wr-source", "read of " + k + " by " + t.str() + " has " +
                              std::to_string(sources[t]) + " WR sources");
      }
    }

    // RW(k) must be exactly the derived anti-dependency relation.
    Relation expected{"RW(" + k + ")", {}};
    for (std::size_t i = 0; i < vers.size(); ++i) {
      for (const TxId& t : vers[i].readers) {
        for (std::size_t j = i + 1; j < vers.size(); ++j) {
          if (t != vers[j].writer) expected.add(t, vers[j].writer);
        }
      }
    }
    Relation rwk;
    if (auto it = g.rw.find(k); it != g.rw.end()) rwk = it->second;
    if (rwk.pairs != expected.pairs) {
      fail("rw-derived", "RW(" + k + ") is not the derived anti-dependency");
    }

    store.data()[k] = std::move(vers);
  }
  return store;
}

// ---------------------------------------------------------------------------
// Cycle detection over SO | WR | WW | RW.

// Shortest dependency cycle, as [t1,...,tn] meaning t1 -> ... -> tn -> t1,
// rotated to start at its least id; among equally short cycles the
// lexicographically least found wins.  nullopt when the store is acyclic.
inline std::optional<std::vector<TxId>> find_cycle(const KvStore& store) {
  Relation all = rel_union(rel_union(so(store), wr(store)),
                           rel_union(ww(store), rw(store)));
  std::map<TxId, std::set<TxId>> succ;
  for (const auto& [a, b] : all.pairs) succ[a].insert(b);

  auto canonical = [](std::vector<TxId> cycle) {
    auto least = std::min_element(cycle.begin(), cycle.end());
    std::rotate(cycle.begin(), least, cycle.end());
    return cycle;
  };

  std::optional<std::vector<TxId>> best;
  // The initial transaction has no incoming edges in a well-formed store
  // (it never reads and nothing precedes it), so no cycle passes through it
  // and the non-initial ids are enough as search roots.
  for (const TxId& start : store.all_ids()) {
    // BFS from start; the first path back to start is a shortest cycle
    // through it.
    std::map<TxId, TxId> parent;
    std::deque<TxId> queue{start};
    std::set<TxId> seen{start};
    std::optional<std::vector<TxId>> found;
    while (!queue.empty() && !found) {
      TxId cur = queue.front();
      queue.pop_front();
      auto it = succ.find(cur);
      if (it == succ.end()) continue;
      for (const TxId& next : it->second) {
        if (next == start) {
          std::vector<TxId> cycle{cur};
          while (cycle.back() != start) cycle.push_back(parent.at(cycle.back()));
          std::reverse(cycle.begin(), cycle.end());
          found = canonical(std::move(cycle));
          break;
        }
        if (seen.insert(next).second) {
          parent.emplace(next, cur);
          queue.push_back(next);
        }
      }
    }
    if (!found) continue;
    if (!best || found->size() < best->size() ||
        (found->size() == best->size() && *found < *best)) {
      best = std::move(found);
    }
  }
  return best;
}

inline bool acyclic(const KvStore& store) { return !find_cycle(store); }

// ---------------------------------------------------------------------------
// Least fixpoint of a transaction set under r-predecessors: whenever
// t' -r-> t and t is in the set, t' is too.

inline std::set<TxId> closure_txids(const KvStore& store, std::set<TxId> base,
                                    const Relation& r) {
  (void)store;  // ids are drawn from the store under analysis
  std::map<TxId, std::vector<TxId>> preds;
  for (const auto& [a, b] : r.pairs) preds[b].push_back(a);
  std::vector<TxId> work(base.begin(), base.end());
  while (!work.empty()) {
    TxId t = std::move(work.back());
    work.pop_back();
    auto it = preds.find(t);
    if (it == preds.end()) continue;
    for (const TxId& p : it->second) {
      if (base.insert(p).second) work.push_back(p);
    }
  }
  return base;
}

// ---------------------------------------------------------------------------
// Graphviz rendering: nodes labelled "id: fingerprint", one edge per
// relation membership.

inline std::string dependency_dot(const KvStore& store) {
  DependencyGraph g = graph_of(store);
  std::string out = "digraph dependencies {\n";
  for (const auto& [t, fp] : g.txns) {
    out += "  \"" + t.str() + "\" [label=\"" + t.str() + ": " + fp.str() +
           "\"];\n";
  }
  const std::pair<std::string, Relation> labelled[] = {
      {"SO", so(store)}, {"WR", wr(store)}, {"WW", ww(store)},
      {"RW", rw(store)}};
  for (const auto& [label, rel] : labelled) {
    for (const auto& [a, b] : rel.pairs) {
      out += "  \"" + a.str() + "\" -> \"" + b.str() + "\" [label=\"" + label +
             "\"];\n";
    }
  }
  out += "}\n";
  return out;
}

}  // namespace kvsem
