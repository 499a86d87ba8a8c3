// A snapshot-isolated sharded key-value store in the style of Clock-SI.
// Keys are spread over shards, each shard keeps its own loosely synchronised
// logical clock, and a transaction's snapshot is the clock value of the
// shard it starts at. Reads return the newest version strictly below the
// snapshot (waiting until the key's shard clock has passed the snapshot, so
// the result is stable); a commit aborts if any written key already has a
// version at or above the snapshot, and otherwise installs its writes at a
// commit time no smaller than any participating shard's clock.
//
// The simulator is deterministic for a given seed. check_clocksi_run replays
// the committed transactions, in commit-time order, through the snapshot
// isolation execution test; faults (such as the commit_time_min switch,
// which takes the minimum instead of the maximum of the participant clocks)
// surface as concrete violations.

#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvsem/config.hpp"
#include "kvsem/conformance.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

// ---------------------------------------------------------------------------
// Protocol state

struct ClockSiVersion {
  Value value = 0;
  long long time = 0;  // commit time; doubles as the writer's session number
  ClientId writer;
};

struct ClockSiAction {
  bool is_write = false;
  Key key;
  Value value = 0;  // writes only
};

struct ClockSiTxnSpec {
  int coordinator = 0;  // shard whose clock provides the snapshot
  std::vector<ClockSiAction> actions;
};

struct ClockSiCommit {
  ClientId client;
  long long snapshot = 0;
  long long commit_time = 0;
  Fingerprint fp;
};

struct ClockSiClientState {
  long long time = 0;  // last commit time seen by this client
  std::vector<ClockSiTxnSpec> script;
  std::size_t next_txn = 0;

  // In-progress transaction.
  bool active = false;
  long long snapshot = 0;
  std::size_t next_action = 0;
  Fingerprint fp;

  bool done() const { return !active && next_txn >= script.size(); }
};

struct ClockSiState {
  std::vector<Key> keys;  // keys[i] lives on shard i % shards
  int shards = 1;
  std::vector<long long> clock;  // one logical clock per shard
  // Versions per key in commit order; index 0 is the initial version with
  // time 0. The per-shard stores are kept in this single map; shard_of
  // recovers the owner of a key.
  std::map<Key, std::vector<ClockSiVersion>> store;
  std::map<ClientId, ClockSiClientState> clients;
  std::vector<ClockSiCommit> log;
  int aborts = 0;
  std::vector<std::string> schedule;
  bool commit_time_min = false;  // fault switch: min instead of max commit time
  bool livelock = false;

  int shard_of(const Key& k) const {
    auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) throw std::invalid_argument("unknown key " + k);
    return static_cast<int>((it - keys.begin()) % shards);
  }
};

inline ClockSiState clocksi_initial(const std::vector<Key>& keys, int shards, int clients,
                                    std::vector<long long> initial_clocks) {
  if (shards < 1 || clients < 1) throw std::invalid_argument("clocksi: need at least one shard and client");
  if (static_cast<int>(initial_clocks.size()) != shards) {
    throw std::invalid_argument("clocksi: one initial clock per shard required");
  }
  for (long long c : initial_clocks) {
    if (c < 1) throw std::invalid_argument("clocksi: clocks start at 1 or later");
  }
  ClockSiState st;
  st.keys = keys;
  st.shards = shards;
  st.clock = std::move(initial_clocks);
  for (const auto& k : keys) st.store[k] = {ClockSiVersion{0, 0, TxId::initial().client()}};
  for (int c = 1; c <= clients; ++c) st.clients["cl" + std::to_string(c)];
  return st;
}

// ---------------------------------------------------------------------------
// Protocol steps. Each returns false (and changes nothing) when the step has
// to wait for a clock; the scheduler then ticks clocks until it is enabled.

// Take the snapshot from the coordinator's clock. The transaction must not
// start in its own past: it waits until the coordinator clock exceeds the
// client's last commit time, and bumps the clock so that no later starter
// gets the same snapshot.
inline bool clocksi_start(ClockSiState& st, const ClientId& cl) {
  auto& client = st.clients.at(cl);
  if (client.active || client.next_txn >= client.script.size()) {
    throw std::logic_error("clocksi_start: no transaction to start");
  }
  int sd = client.script[client.next_txn].coordinator;
  if (!(client.time < st.clock[static_cast<std::size_t>(sd)])) return false;
  client.snapshot = st.clock[static_cast<std::size_t>(sd)];
  st.clock[static_cast<std::size_t>(sd)] += 1;
  client.time = client.snapshot;
  client.active = true;
  client.next_action = 0;
  client.fp = Fingerprint{};
  std::ostringstream line;
  line << "start " << cl << " snapshot=" << client.snapshot << " s" << sd;
  st.schedule.push_back(line.str());
  return true;
}

// Run the transaction's next read or write. A write is purely local. A read
// of a key this transaction has written comes from the fingerprint; any
// other read waits until the key's shard clock has passed the snapshot and
// then returns the newest version strictly older than the snapshot.
inline bool clocksi_step(ClockSiState& st, const ClientId& cl) {
  auto& client = st.clients.at(cl);
  const auto& spec = client.script[client.next_txn];
  const ClockSiAction& a = spec.actions.at(client.next_action);
  std::ostringstream line;
  if (a.is_write) {
    client.fp = client.fp.combine(FpOp{OpKind::Write, a.key, a.value});
    line << "write " << cl << " " << a.key << "=" << a.value;
  } else if (client.fp.writes().count(a.key)) {
    line << "read " << cl << " " << a.key << "=" << client.fp.writes().at(a.key) << " (own)";
    client.fp = client.fp.combine(FpOp{OpKind::Read, a.key, client.fp.writes().at(a.key)});
  } else {
    int sd = st.shard_of(a.key);
    if (!(client.snapshot < st.clock[static_cast<std::size_t>(sd)])) return false;
    const auto& list = st.store.at(a.key);
    const ClockSiVersion* seen = nullptr;
    for (const auto& v : list) {
      if (v.time < client.snapshot && (!seen || v.time > seen->time)) seen = &v;
    }
    // Version 0 has time 0 and snapshots are at least 1, so seen is set.
    client.fp = client.fp.combine(FpOp{OpKind::Read, a.key, seen->value});
    line << "read " << cl << " " << a.key << "=" << seen->value << "@" << seen->time;
  }
  client.next_action += 1;
  st.schedule.push_back(line.str());
  return true;
}

// Atomic commit across the shards of every key the transaction touched.
// Writes are rejected wholesale if any written key gained a version at or
// after the snapshot (first-committer-wins); otherwise the commit time is
// the maximum of the participating shard clocks and the snapshot, the
// writes are installed, and the participants' clocks advance past their
// previous values.
inline bool clocksi_commit(ClockSiState& st, const ClientId& cl) {
  auto& client = st.clients.at(cl);
  std::set<int> participants;
  for (const auto& [k, v] : client.fp.reads()) participants.insert(st.shard_of(k));
  for (const auto& [k, v] : client.fp.writes()) participants.insert(st.shard_of(k));

  for (const auto& [k, v] : client.fp.writes()) {
    for (const auto& ver : st.store.at(k)) {
      if (ver.time >= client.snapshot) {
        st.aborts += 1;
        client.active = false;
        client.next_txn += 1;
        std::ostringstream line;
        line << "abort " << cl << " (concurrent write on " << k << ")";
        st.schedule.push_back(line.str());
        return true;
      }
    }
  }

  long long n = client.snapshot;
  for (int sd : participants) {
    long long c = st.clock[static_cast<std::size_t>(sd)];
    n = st.commit_time_min ? std::min(n, c) : std::max(n, c);
  }
  for (const auto& [k, v] : client.fp.writes()) {
    auto& list = st.store.at(k);
    auto pos = std::upper_bound(list.begin(), list.end(), n,
                                [](long long t, const ClockSiVersion& ver) { return t < ver.time; });
    list.insert(pos, ClockSiVersion{v, n, cl});
  }
  for (int sd : participants) st.clock[static_cast<std::size_t>(sd)] += 1;
  client.time = n + 1;
  client.active = false;
  client.next_txn += 1;
  st.log.push_back(ClockSiCommit{cl, client.snapshot, n, client.fp});
  std::ostringstream line;
  line << "commit " << cl << " t=" << n << " " << client.fp.str();
  st.schedule.push_back(line.str());
  return true;
}

// ---------------------------------------------------------------------------
// Seeded simulation

struct ClockSiParams {
  int clients = 2;
  int shards = 2;
  int ops = 4;  // transactions per client
  unsigned long long seed = 0;
  int skew = 5;  // soft bound on the clock spread
  int num_keys = 3;
  int max_events = 100000;
  bool commit_time_min = false;
};

namespace detail {

inline std::vector<ClockSiTxnSpec> random_clocksi_script(std::mt19937_64& rng,
                                                         const std::vector<Key>& keys, int shards,
                                                         int ops, long long& value_counter) {
  std::vector<ClockSiTxnSpec> script;
  for (int i = 0; i < ops; ++i) {
    ClockSiTxnSpec spec;
    spec.coordinator = static_cast<int>(std::uniform_int_distribution<std::size_t>(
        0, static_cast<std::size_t>(shards) - 1)(rng));
    int len = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int j = 0; j < len; ++j) {
      ClockSiAction a;
      a.is_write = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      a.key = keys[std::uniform_int_distribution<std::size_t>(0, keys.size() - 1)(rng)];
      if (a.is_write) a.value = ++value_counter;
      spec.actions.push_back(a);
    }
    script.push_back(spec);
  }
  return script;
}

}  // namespace detail

inline ClockSiState simulate_clocksi(const ClockSiParams& p) {
  std::vector<Key> keys;
  for (int i = 1; i <= p.num_keys; ++i) keys.push_back("k" + std::to_string(i));

  std::mt19937_64 rng(p.seed);
  std::vector<long long> clocks;
  for (int s = 0; s < p.shards; ++s) {
    clocks.push_back(1 + std::uniform_int_distribution<int>(0, p.skew)(rng));
  }
  ClockSiState st = clocksi_initial(keys, p.shards, p.clients, clocks);
  st.commit_time_min = p.commit_time_min;

  long long value_counter = 0;
  for (auto& [cl, client] : st.clients) {
    client.script = detail::random_clocksi_script(rng, keys, p.shards, p.ops, value_counter);
  }

  // Moves: one pending micro-step per unfinished client (which may have to
  // wait for a clock, in which case it is skipped this round) and one tick
  // per shard whose clock has not run further than `skew` ahead of the
  // slowest shard. The slowest shard can always tick, so waits resolve.
  int fuel = p.max_events;
  while (true) {
    std::vector<ClientId> pending;
    for (const auto& [cl, client] : st.clients) {
      if (!client.done()) pending.push_back(cl);
    }
    if (pending.empty()) break;
    if (fuel-- <= 0) {
      st.livelock = true;
      break;
    }
    long long slowest = *std::min_element(st.clock.begin(), st.clock.end());
    std::vector<int> tickable;
    long long spread = std::max(1, p.skew);  // the slowest shard can always tick
    for (int s = 0; s < p.shards; ++s) {
      if (st.clock[static_cast<std::size_t>(s)] - slowest < spread) tickable.push_back(s);
    }
    auto total = pending.size() + tickable.size();
    auto pick = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    if (pick < pending.size()) {
      const ClientId& cl = pending[pick];
      auto& client = st.clients.at(cl);
      if (!client.active) {
        clocksi_start(st, cl);  // a wait is simply a skipped turn
      } else if (client.next_action < client.script[client.next_txn].actions.size()) {
        clocksi_step(st, cl);
      } else {
        clocksi_commit(st, cl);
      }
    } else {
      int sd = tickable[pick - pending.size()];
      st.clock[static_cast<std::size_t>(sd)] += 1;
      std::ostringstream line;
      line << "tick s" << sd << " ->" << st.clock[static_cast<std::size_t>(sd)];
      st.schedule.push_back(line.str());
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Conformance: replay the commit log against the snapshot isolation test

// Everything a transaction may see at logical time t: exactly the versions
// committed strictly before t. Session numbers double as commit times, so
// the view can be read off the replayed store directly.
inline View clocksi_view_at(const KvStore& store, long long t) {
  View v = initial_view(store);
  for (const auto& [k, list] : store.data()) {
    std::set<std::size_t> idx{0};
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].writer.seq() < t) idx.insert(i);
    }
    v.set_indices(k, idx);
  }
  return v;
}

// Replay the committed transactions in commit-time order (client id breaks
// ties; tied transactions never touch the same key, so the order between
// them is immaterial) and check each against the snapshot isolation test,
// reading at the snapshot and committing at the commit time.
inline ConformanceReport check_clocksi_run(const ClockSiState& st) {
  ConformanceReport report;
  report.livelock = st.livelock;

  std::map<ClientId, long long> last_time;
  for (const auto& c : st.log) {
    auto [it, fresh] = last_time.emplace(c.client, c.commit_time);
    if (!fresh) {
      if (c.commit_time <= it->second) {
        std::ostringstream why;
        why << c.client << " commit times do not increase (" << it->second << " then "
            << c.commit_time << ")";
        report.violations.push_back({st.log.size(), why.str()});
      }
      it->second = c.commit_time;
    }
  }

  std::vector<std::size_t> order(st.log.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = st.log[a];
    const auto& cb = st.log[b];
    return std::tie(ca.commit_time, ca.client) < std::tie(cb.commit_time, cb.client);
  });

  std::set<Key> keys(st.keys.begin(), st.keys.end());
  KvStore store = KvStore::initial(keys);
  for (std::size_t idx : order) {
    const ClockSiCommit& c = st.log[idx];
    report.commits_checked += 1;
    try {
      View before = clocksi_view_at(store, c.snapshot);
      TxId t(c.client, static_cast<int>(c.commit_time));
      KvStore updated = update_kv(store, before, c.fp, t);
      View after = clocksi_view_at(updated, c.commit_time + 1);
      if (!et_allows(Model::SI, store, before, c.fp, updated, after, t)) {
        std::ostringstream why;
        why << "snapshot isolation test rejects " << t.str();
        report.violations.push_back({idx, why.str()});
      }
      store = updated;
    } catch (const std::exception& e) {
      std::ostringstream why;
      why << "replay failed for " << c.client << "@" << c.commit_time << ": " << e.what();
      report.violations.push_back({idx, why.str()});
    }
  }

  // The replayed store must list exactly the versions the shards hold, in
  // the same order with the same writers (reader marks exist only in the
  // replay; the shards do not track readers).
  for (const auto& [k, list] : st.store) {
    const auto& replayed = store.data().at(k);
    bool same = replayed.size() == list.size();
    for (std::size_t i = 1; same && i < list.size(); ++i) {
      same = replayed[i].value == list[i].value &&
             replayed[i].writer == TxId(list[i].writer, static_cast<int>(list[i].time));
    }
    if (!same) {
      report.violations.push_back({st.log.size(), "replayed versions of " + k + " differ from the shard"});
    }
  }
  return report;
}

}  // namespace kvsem
