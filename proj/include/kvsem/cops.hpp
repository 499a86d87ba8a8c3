// A causally consistent replicated key-value store in the style of COPS.
// Every replica keeps a full copy of the store; each version carries a stamp
// (local Lamport time, replica id) and the set of versions its writer had
// already observed. Writes commit locally and are broadcast asynchronously;
// a replica applies a remote version only once all of the version's
// dependencies are present, which keeps every replica dependency-closed.
// Multi-key reads run in two rounds: the first round optimistically fetches
// the latest local version of each key, the second round re-fetches any key
// for which another fetched version carries a newer dependency.
//
// The simulator is deterministic for a given seed. check_cops_run replays
// the committed transactions of a finished run through the causal execution
// test and reports every commit the test rejects, so protocol faults (such
// as the one enabled by deliver_without_deps) surface as concrete
// violations.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "kvsem/config.hpp"
#include "kvsem/conformance.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

// ---------------------------------------------------------------------------
// Stamps, versions, replicas

// Total order on versions: local time first, replica id as tie break.
// The initial version of every key carries the sentinel stamp (0, -1),
// which sorts below every real stamp (local times start at 1).
struct CopsStamp {
  long long time = 0;
  int replica = -1;

  auto operator<=>(const CopsStamp&) const = default;
  bool initial() const { return replica < 0; }

  std::string str() const {
    std::ostringstream out;
    out << "(" << time << ",r" << replica << ")";
    return out.str();
  }
};

using CopsDeps = std::set<std::pair<Key, CopsStamp>>;

struct CopsVersion {
  Value value = 0;
  CopsStamp stamp;
  CopsDeps deps;  // everything the writing client had observed
};

struct CopsReplica {
  // Versions per key, sorted by stamp; index 0 is the initial version.
  std::map<Key, std::vector<CopsVersion>> kv;
  long long local_time = 0;

  const CopsVersion* find(const Key& k, const CopsStamp& s) const {
    auto it = kv.find(k);
    if (it == kv.end()) return nullptr;
    for (const auto& v : it->second) {
      if (v.stamp == s) return &v;
    }
    return nullptr;
  }

  bool has(const Key& k, const CopsStamp& s) const { return find(k, s) != nullptr; }

  const CopsVersion& latest(const Key& k) const { return kv.at(k).back(); }

  void insert(const Key& k, const CopsVersion& v) {
    auto& list = kv.at(k);
    auto pos = std::upper_bound(
        list.begin(), list.end(), v,
        [](const CopsVersion& a, const CopsVersion& b) { return a.stamp < b.stamp; });
    list.insert(pos, v);
  }
};

struct CopsMessage {
  int target = 0;  // replica index the version still has to reach
  Key key;
  CopsVersion version;
};

// ---------------------------------------------------------------------------
// Clients and the commit log

struct CopsOp {
  bool is_put = false;
  Key key;                // put
  Value value = 0;        // put
  std::vector<Key> keys;  // get: distinct keys read together
};

// One committed transaction in real-time order. Gets record the versions
// returned after the second round together with the dependencies those
// versions carry (both are needed to rebuild the client's observations).
struct CopsCommit {
  ClientId client;
  int seq = 0;  // 1-based position in the client's session
  bool is_put = false;
  Key key;
  Value value = 0;
  CopsStamp stamp;
  CopsDeps deps;
  std::vector<std::tuple<Key, CopsStamp, Value>> reads;
  CopsDeps read_deps;
};

struct CopsClientState {
  int home = 0;       // replica this client talks to
  CopsDeps context;   // every (key, stamp) observed so far; dependency-closed
  int committed = 0;  // session sequence counter

  std::vector<CopsOp> script;
  std::size_t next_op = 0;

  // In-progress multi-key read: first-round results fetched so far.
  std::vector<std::pair<Key, CopsVersion>> round1;

  bool reading() const { return !round1.empty(); }
  bool done() const { return next_op >= script.size() && !reading(); }
};

struct CopsState {
  std::set<Key> keys;
  std::vector<CopsReplica> replicas;
  std::vector<CopsMessage> inflight;
  std::map<ClientId, CopsClientState> clients;
  std::vector<CopsCommit> log;
  std::vector<std::string> schedule;  // one line per scheduler event
  bool deliver_without_deps = false;  // fault switch: skip the dependency check
  bool livelock = false;
};

// ---------------------------------------------------------------------------
// Protocol steps

inline CopsState cops_initial(const std::set<Key>& keys, int replicas, int clients) {
  if (replicas < 1 || clients < 1) throw std::invalid_argument("cops: need at least one replica and client");
  CopsState st;
  st.keys = keys;
  st.replicas.resize(static_cast<std::size_t>(replicas));
  for (auto& r : st.replicas) {
    for (const auto& k : keys) r.kv[k] = {CopsVersion{0, CopsStamp{}, {}}};
  }
  for (int c = 1; c <= clients; ++c) {
    CopsClientState cs;
    cs.home = (c - 1) % replicas;
    st.clients["cl" + std::to_string(c)] = cs;
  }
  return st;
}

// Write k := v at the client's home replica and broadcast the new version.
// The version's dependency set is a copy of the client's context, which is
// dependency-closed by construction, so the closure property is preserved.
inline CopsStamp cops_put(CopsState& st, const ClientId& cl, const Key& k, Value v) {
  auto& client = st.clients.at(cl);
  auto& home = st.replicas[static_cast<std::size_t>(client.home)];
  home.local_time += 1;
  CopsVersion ver{v, CopsStamp{home.local_time, client.home}, client.context};
  home.insert(k, ver);
  for (int r = 0; r < static_cast<int>(st.replicas.size()); ++r) {
    if (r != client.home) st.inflight.push_back(CopsMessage{r, k, ver});
  }
  client.context.emplace(k, ver.stamp);
  client.committed += 1;
  CopsCommit c;
  c.client = cl;
  c.seq = client.committed;
  c.is_put = true;
  c.key = k;
  c.value = v;
  c.stamp = ver.stamp;
  c.deps = ver.deps;
  st.log.push_back(c);
  std::ostringstream line;
  line << "put " << cl << " " << k << "=" << v << "@" << ver.stamp.str();
  st.schedule.push_back(line.str());
  return ver.stamp;
}

// One first-round fetch of an in-progress multi-key read: grab the latest
// local version of the next key. Kept as a separate scheduler step so
// deliveries can land between the fetches of one read.
inline void cops_fetch(CopsState& st, const ClientId& cl) {
  auto& client = st.clients.at(cl);
  const CopsOp& op = client.script.at(client.next_op);
  if (op.is_put) throw std::logic_error("cops_fetch: current operation is a put");
  const Key& k = op.keys.at(client.round1.size());
  const auto& home = st.replicas[static_cast<std::size_t>(client.home)];
  client.round1.emplace_back(k, home.latest(k));
  std::ostringstream line;
  line << "fetch " << cl << " " << k << "@" << client.round1.back().second.stamp.str();
  st.schedule.push_back(line.str());
}

// Second round of a multi-key read: compute, per key, the newest stamp any
// fetched version depends on, and re-fetch keys whose first-round result is
// older. With dependency-checked delivery the newer version is guaranteed to
// be present at the home replica; without it the stale first-round result is
// kept, which is exactly the fault the conformance check exposes.
inline void cops_finish_get(CopsState& st, const ClientId& cl) {
  auto& client = st.clients.at(cl);
  const CopsOp& op = client.script.at(client.next_op);
  if (op.is_put || client.round1.size() != op.keys.size()) {
    throw std::logic_error("cops_finish_get: read not ready");
  }
  const auto& home = st.replicas[static_cast<std::size_t>(client.home)];

  std::map<Key, CopsStamp> ccv;
  for (const auto& [k, ver] : client.round1) {
    ccv[k] = std::max(ccv[k], ver.stamp);
    for (const auto& [dk, ds] : ver.deps) {
      auto it = ccv.find(dk);
      if (it != ccv.end()) {
        it->second = std::max(it->second, ds);
      } else if (std::find(op.keys.begin(), op.keys.end(), dk) != op.keys.end()) {
        ccv[dk] = ds;
      }
    }
  }

  CopsCommit c;
  c.client = cl;
  c.is_put = false;
  for (auto& [k, ver] : client.round1) {
    const CopsVersion* final_ver = &ver;
    if (ccv.at(k) > ver.stamp) {
      if (const CopsVersion* fresh = home.find(k, ccv.at(k))) final_ver = fresh;
    }
    c.reads.emplace_back(k, final_ver->stamp, final_ver->value);
    for (const auto& d : final_ver->deps) c.read_deps.insert(d);
  }

  for (const auto& [k, s, v] : c.reads) client.context.emplace(k, s);
  for (const auto& d : c.read_deps) client.context.insert(d);

  client.committed += 1;
  c.seq = client.committed;
  st.log.push_back(c);
  client.round1.clear();
  client.next_op += 1;

  std::ostringstream line;
  line << "get " << cl;
  for (const auto& [k, s, v] : c.reads) line << " " << k << "=" << v << "@" << s.str();
  st.schedule.push_back(line.str());
}

// Atomic multi-key read (all fetches back to back). The simulator drives the
// individual steps instead so that deliveries may interleave.
inline std::map<Key, Value> cops_get_trans(CopsState& st, const ClientId& cl,
                                           const std::vector<Key>& keys) {
  auto& client = st.clients.at(cl);
  if (client.reading()) throw std::logic_error("cops_get_trans: read already in progress");
  CopsOp op;
  op.is_put = false;
  op.keys = keys;
  client.script.insert(client.script.begin() + static_cast<long>(client.next_op), op);
  for (std::size_t i = 0; i < keys.size(); ++i) cops_fetch(st, cl);
  cops_finish_get(st, cl);
  std::map<Key, Value> out;
  for (const auto& [k, s, v] : st.log.back().reads) out[k] = v;
  return out;
}

inline bool cops_deliverable(const CopsState& st, const CopsMessage& m) {
  if (st.deliver_without_deps) return true;
  const auto& target = st.replicas[static_cast<std::size_t>(m.target)];
  for (const auto& [k, s] : m.version.deps) {
    if (!target.has(k, s)) return false;
  }
  return true;
}

// Apply one in-flight version at its target replica (index into inflight).
inline void cops_deliver(CopsState& st, std::size_t msg_index) {
  CopsMessage m = st.inflight.at(msg_index);
  if (!cops_deliverable(st, m)) throw std::logic_error("cops_deliver: dependencies missing");
  st.inflight.erase(st.inflight.begin() + static_cast<long>(msg_index));
  auto& target = st.replicas[static_cast<std::size_t>(m.target)];
  target.insert(m.key, m.version);
  target.local_time = std::max(target.local_time, m.version.stamp.time);
  std::ostringstream line;
  line << "deliver r" << m.target << " " << m.key << "@" << m.version.stamp.str();
  st.schedule.push_back(line.str());
}

// Every replica contains all dependencies of every version it stores.
inline bool cops_replicas_closed(const CopsState& st) {
  for (const auto& r : st.replicas) {
    for (const auto& [k, list] : r.kv) {
      for (const auto& v : list) {
        for (const auto& [dk, ds] : v.deps) {
          if (!r.has(dk, ds)) return false;
        }
      }
    }
  }
  return true;
}

inline bool cops_converged(const CopsState& st) {
  for (std::size_t r = 1; r < st.replicas.size(); ++r) {
    for (const auto& [k, list] : st.replicas[0].kv) {
      const auto& other = st.replicas[r].kv.at(k);
      if (list.size() != other.size()) return false;
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].stamp != other[i].stamp || list[i].value != other[i].value) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Encoding a run into a multi-versioned store

// The union of all replicas, keyed by stamp, as one kv-store: writers come
// from the commit log (reads get synthetic session ids as well), readers are
// marked per read, and each client's context becomes its view. Conflicting
// values for a single stamp mean the protocol itself corrupted a version.
struct CopsEncoded {
  Configuration config;
  std::map<Key, std::vector<CopsStamp>> stamps;  // aligned with the store's version lists
};

inline CopsEncoded cops_encode(const CopsState& st) {
  // Collect the union of all replicas per key, deduplicated by stamp.
  std::map<Key, std::map<CopsStamp, CopsVersion>> merged;
  for (const auto& r : st.replicas) {
    for (const auto& [k, list] : r.kv) {
      for (const auto& v : list) {
        auto [it, fresh] = merged[k].emplace(v.stamp, v);
        if (!fresh && it->second.value != v.value) {
          throw std::runtime_error("protocol bug: replicas disagree on " + k + "@" + v.stamp.str());
        }
      }
    }
  }

  std::map<CopsStamp, TxId> writer;   // stamp of a put -> session id
  std::map<Key, std::map<CopsStamp, std::set<TxId>>> readers;
  for (const auto& c : st.log) {
    TxId t(c.client, c.seq);
    if (c.is_put) {
      writer.emplace(c.stamp, t);
    } else {
      for (const auto& [k, s, v] : c.reads) readers[k][s].insert(t);
    }
  }

  CopsEncoded enc;
  enc.config.store = KvStore::initial(st.keys);
  for (auto& [k, by_stamp] : merged) {
    auto& list = enc.config.store.data()[k];
    auto& stamps = enc.stamps[k];
    stamps.push_back(CopsStamp{});  // the initial version
    for (auto& [s, v] : by_stamp) {
      if (s.initial()) continue;
      auto w = writer.find(s);
      if (w == writer.end()) throw std::runtime_error("protocol bug: version without a writer " + k + "@" + s.str());
      list.push_back(Version{v.value, w->second, {}});
      stamps.push_back(s);
    }
    for (const auto& [s, ts] : readers[k]) {
      auto pos = std::find(stamps.begin(), stamps.end(), s);
      if (pos == stamps.end()) throw std::runtime_error("protocol bug: read of unknown version " + k + "@" + s.str());
      auto& entry = list[static_cast<std::size_t>(pos - stamps.begin())];
      for (const auto& t : ts) entry.readers.insert(t);
    }
  }

  for (const auto& [cl, client] : st.clients) {
    View view = initial_view(enc.config.store);
    for (const auto& [k, s] : client.context) {
      const auto& stamps = enc.stamps.at(k);
      auto pos = std::find(stamps.begin(), stamps.end(), s);
      if (pos == stamps.end()) throw std::runtime_error("protocol bug: context references unknown version");
      view.add_index(k, static_cast<std::size_t>(pos - stamps.begin()));
    }
    enc.config.views[cl] = view;
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Seeded simulation

struct CopsParams {
  int clients = 2;
  int replicas = 2;
  int ops = 4;  // operations per client
  unsigned long long seed = 0;
  int num_keys = 3;
  int max_events = 100000;
  bool deliver_without_deps = false;
  bool check_invariants = false;  // verify dependency closure after every event
};

namespace detail {

inline std::vector<CopsOp> random_cops_script(std::mt19937_64& rng, const std::vector<Key>& keys,
                                              int ops, long long& value_counter) {
  std::vector<CopsOp> script;
  for (int i = 0; i < ops; ++i) {
    CopsOp op;
    op.is_put = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    if (op.is_put) {
      op.key = keys[std::uniform_int_distribution<std::size_t>(0, keys.size() - 1)(rng)];
      op.value = ++value_counter;
    } else {
      // Non-empty random subset of keys, in a shuffled order.
      std::vector<Key> pool = keys;
      std::shuffle(pool.begin(), pool.end(), rng);
      auto count = std::uniform_int_distribution<std::size_t>(1, pool.size())(rng);
      op.keys.assign(pool.begin(), pool.begin() + static_cast<long>(count));
    }
    script.push_back(op);
  }
  return script;
}

}  // namespace detail

inline CopsState simulate_cops(const CopsParams& p) {
  std::set<Key> keys;
  std::vector<Key> key_list;
  for (int i = 1; i <= p.num_keys; ++i) {
    key_list.push_back("k" + std::to_string(i));
    keys.insert(key_list.back());
  }
  CopsState st = cops_initial(keys, p.replicas, p.clients);
  st.deliver_without_deps = p.deliver_without_deps;

  std::mt19937_64 rng(p.seed);
  long long value_counter = 0;
  for (auto& [cl, client] : st.clients) {
    client.script = detail::random_cops_script(rng, key_list, p.ops, value_counter);
  }

  // Pick uniformly among enabled moves: one pending step per unfinished
  // client, plus every deliverable in-flight message. Once all clients are
  // done, remaining messages are drained so the replicas can converge.
  struct Move {
    bool is_delivery = false;
    ClientId client;
    std::size_t msg = 0;
  };
  int fuel = p.max_events;
  while (true) {
    std::vector<Move> moves;
    for (const auto& [cl, client] : st.clients) {
      if (!client.done()) moves.push_back(Move{false, cl, 0});
    }
    for (std::size_t i = 0; i < st.inflight.size(); ++i) {
      if (cops_deliverable(st, st.inflight[i])) moves.push_back(Move{true, "", i});
    }
    if (moves.empty()) break;
    if (fuel-- <= 0) {
      st.livelock = true;
      break;
    }
    const Move& m = moves[std::uniform_int_distribution<std::size_t>(0, moves.size() - 1)(rng)];
    if (m.is_delivery) {
      cops_deliver(st, m.msg);
    } else {
      auto& client = st.clients.at(m.client);
      const CopsOp& op = client.script.at(client.next_op);
      if (op.is_put) {
        cops_put(st, m.client, op.key, op.value);
        client.next_op += 1;
      } else if (client.round1.size() < op.keys.size()) {
        cops_fetch(st, m.client);
      } else {
        cops_finish_get(st, m.client);
      }
    }
    if (p.check_invariants && !p.deliver_without_deps && !cops_replicas_closed(st)) {
      throw std::logic_error("cops: replica lost dependency closure");
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Conformance: replay the commit log against the causal execution test

namespace detail {

// Order the commits so that every transaction comes after the versions it
// read, their dependencies, the previous version of every key it wrote, and
// its session predecessor. Earlier real-time position breaks ties, so the
// result is deterministic. Returns std::nullopt when the constraints are
// cyclic (impossible for this protocol, but the checker stays total).
inline std::optional<std::vector<std::size_t>> cops_certificate(const CopsState& st) {
  const std::size_t n = st.log.size();
  std::map<CopsStamp, std::size_t> put_at;
  for (std::size_t i = 0; i < n; ++i) {
    if (st.log[i].is_put) put_at[st.log[i].stamp] = i;
  }

  std::vector<std::set<std::size_t>> preds(n);
  std::map<ClientId, std::size_t> last_of;
  for (std::size_t i = 0; i < n; ++i) {
    const CopsCommit& c = st.log[i];
    if (auto it = last_of.find(c.client); it != last_of.end()) preds[i].insert(it->second);
    last_of[c.client] = i;
    if (c.is_put) {
      // Keep each key's versions in stamp order; stamps of one key are
      // assigned in increasing order per replica but interleave across
      // replicas, so the constraint is the stamp order itself.
      for (std::size_t j = 0; j < i; ++j) {
        if (st.log[j].is_put && st.log[j].key == c.key) {
          if (st.log[j].stamp < c.stamp) preds[i].insert(j);
          else preds[j].insert(i);
        }
      }
    } else {
      for (const auto& [k, s, v] : c.reads) {
        if (!s.initial()) preds[i].insert(put_at.at(s));
      }
      for (const auto& [k, s] : c.read_deps) {
        if (!s.initial()) preds[i].insert(put_at.at(s));
      }
    }
  }

  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p : preds[i]) {
      succ[p].push_back(i);
      indeg[i] += 1;
    }
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t i = *ready.begin();  // smallest real-time position first
    ready.erase(ready.begin());
    order.push_back(i);
    for (std::size_t s : succ[i]) {
      if (--indeg[s] == 0) ready.insert(s);
    }
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

}  // namespace detail

// Replay every committed transaction, in an order consistent with sessions,
// stamp order per key, and reads-from, through the causal execution test.
// Views are rebuilt from the stamps each client had observed at that point.
inline ConformanceReport check_cops_run(const CopsState& st) {
  ConformanceReport report;
  report.livelock = st.livelock;

  auto order = detail::cops_certificate(st);
  if (!order) {
    report.violations.push_back({0, "commit constraints are cyclic"});
    return report;
  }

  KvStore store = KvStore::initial(st.keys);
  std::map<Key, std::vector<CopsStamp>> stamps;
  for (const auto& k : st.keys) stamps[k] = {CopsStamp{}};
  std::map<ClientId, CopsDeps> observed;

  auto encode_view = [&](const ClientId& cl) {
    View v = initial_view(store);
    for (const auto& [k, s] : observed[cl]) {
      const auto& list = stamps.at(k);
      auto pos = std::find(list.begin(), list.end(), s);
      if (pos == list.end()) throw std::runtime_error("observed version missing from the replay");
      v.add_index(k, static_cast<std::size_t>(pos - list.begin()));
    }
    return v;
  };

  for (std::size_t idx : *order) {
    const CopsCommit& c = st.log[idx];
    report.commits_checked += 1;
    try {
      Fingerprint fp;
      if (c.is_put) {
        fp = fp.combine(FpOp{OpKind::Write, c.key, c.value});
      } else {
        // A read joins the client's observations before the view is taken:
        // the two-round protocol returns versions at least as new as
        // anything observed before.
        for (const auto& [k, s, v] : c.reads) observed[c.client].emplace(k, s);
        for (const auto& d : c.read_deps) observed[c.client].insert(d);
        for (const auto& [k, s, v] : c.reads) fp = fp.combine(FpOp{OpKind::Read, k, v});
      }
      View before = encode_view(c.client);
      TxId t(c.client, c.seq);
      KvStore updated = update_kv(store, before, fp, t);
      if (c.is_put) {
        stamps.at(c.key).push_back(c.stamp);
        observed[c.client].emplace(c.key, c.stamp);
      }
      View after = [&] {
        View v = initial_view(updated);
        for (const auto& [k, s] : observed[c.client]) {
          const auto& list = stamps.at(k);
          auto pos = std::find(list.begin(), list.end(), s);
          if (pos == list.end()) throw std::runtime_error("observed version missing from the replay");
          v.add_index(k, static_cast<std::size_t>(pos - list.begin()));
        }
        return v;
      }();
      if (!et_allows(Model::CC, store, before, fp, updated, after, t)) {
        std::ostringstream why;
        why << "causal execution test rejects " << t.str();
        report.violations.push_back({idx, why.str()});
      }
      store = updated;
    } catch (const std::exception& e) {
      std::ostringstream why;
      why << "replay failed for " << c.client << "#" << c.seq << ": " << e.what();
      report.violations.push_back({idx, why.str()});
    }
  }

  // After a drained run the replayed store and the replicas must agree.
  if (st.inflight.empty() && !st.livelock) {
    try {
      CopsEncoded enc = cops_encode(st);
      if (!(enc.config.store == store)) {
        report.violations.push_back({st.log.size(), "replayed store differs from the replicas"});
      }
    } catch (const std::exception& e) {
      report.violations.push_back({st.log.size(), e.what()});
    }
  }
  return report;
}

}  // namespace kvsem
