#pragma once

// The multi-versioned key-value store. Each key maps to a non-empty ordered
// list of versions (value, writer, reader set); index 0 always holds the
// initial version written by t0. Stores are immutable values: every operation
// returns a fresh store.
//
// Well-formedness:
//   WF1 (unique access)     distinct versions of a key never share a reader
//                           or a writer.
//   WF2 (initialisation)    every key's version 0 is (kInitialValue, t0, _),
//                           and t0 never appears in a reader set.
//   WF3 (session agreement) if version i of k is written by (cl,n), then any
//                           (cl,m) that reads version i or writes a later
//                           version of k has n < m.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kvsem/txid.hpp"

namespace kvsem {

struct Version {
  Value value = kInitialValue;
  TxId writer;
  std::set<TxId> readers;

  auto operator<=>(const Version&) const = default;
};

class KvStore {
 public:
  KvStore() = default;

  static KvStore initial(const std::set<Key>& keys) {
    KvStore store;
    for (const auto& k : keys) {
      store.data_[k] = {Version{kInitialValue, TxId::initial(), {}}};
    }
    return store;
  }

  const std::map<Key, std::vector<Version>>& data() const { return data_; }
  std::map<Key, std::vector<Version>>& data() { return data_; }

  bool has_key(const Key& k) const { return data_.count(k) > 0; }

  std::set<Key> keys() const {
    std::set<Key> out;
    for (const auto& [k, _] : data_) out.insert(k);
    return out;
  }

  const std::vector<Version>& versions(const Key& k) const {
    auto it = data_.find(k);
    if (it == data_.end()) throw std::invalid_argument("unknown key: " + k);
    return it->second;
  }

  const Version& version(const Key& k, std::size_t i) const {
    const auto& list = versions(k);
    if (i >= list.size()) {
      throw std::invalid_argument("no version " + std::to_string(i) +
                                  " of key " + k);
    }
    return list[i];
  }

  std::size_t num_versions(const Key& k) const { return versions(k).size(); }

  // Every non-initial id occurring anywhere (as writer or reader).
  std::set<TxId> all_ids() const {
    std::set<TxId> out;
    for (const auto& [k, list] : data_) {
      for (const auto& ver : list) {
        if (!ver.writer.is_initial()) out.insert(ver.writer);
        for (const auto& r : ver.readers) {
          if (!r.is_initial()) out.insert(r);
        }
      }
    }
    return out;
  }

  bool contains_id(const TxId& t) const {
    for (const auto& [k, list] : data_) {
      for (const auto& ver : list) {
        if (ver.writer == t || ver.readers.count(t)) return true;
      }
    }
    return false;
  }

  // All non-initial writer ids (the ids with at least one version).
  std::set<TxId> writer_ids() const {
    std::set<TxId> out;
    for (const auto& [k, list] : data_) {
      for (const auto& ver : list) {
        if (!ver.writer.is_initial()) out.insert(ver.writer);
      }
    }
    return out;
  }

  bool is_writer(const TxId& t) const {
    for (const auto& [k, list] : data_) {
      for (const auto& ver : list) {
        if (ver.writer == t) return true;
      }
    }
    return false;
  }

  auto operator<=>(const KvStore&) const = default;

  std::string str() const {
    std::ostringstream out;
    for (const auto& [k, list] : data_) {
      out << k << " -> [";
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (i) out << ", ";
        out << '(' << list[i].value << ',' << list[i].writer.str() << ",{";
        bool first = true;
        for (const auto& r : list[i].readers) {
          if (!first) out << ',';
          out << r.str();
          first = false;
        }
        out << "})";
      }
      out << "]\n";
    }
    return out.str();
  }

 private:
  std::map<Key, std::vector<Version>> data_;
};

struct WfViolation {
  std::string rule;  // "unique-access", "init", or "session-agreement"
  Key key;
  std::vector<std::size_t> indices;
  std::vector<TxId> ids;
  std::string message;
};

// Returns one record per breached well-formedness instance; empty means OK.
inline std::vector<WfViolation> check_wellformed(const KvStore& store) {
  std::vector<WfViolation> out;
  auto report = [&out](std::string rule, const Key& k,
                       std::vector<std::size_t> idx, std::vector<TxId> ids,
                       std::string msg) {
    out.push_back({std::move(rule), k, std::move(idx), std::move(ids),
                   std::move(msg)});
  };

  for (const auto& [k, list] : store.data()) {
    // WF2: initial version present and untouched by t0 elsewhere.
    if (list.empty() || list[0].writer != TxId::initial() ||
        list[0].value != kInitialValue) {
      report("init", k, {0}, {},
             "key " + k + " lacks the initial version (v0, t0)");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i > 0 && list[i].writer.is_initial()) {
        report("init", k, {i}, {TxId::initial()},
               "t0 writes a non-initial version of " + k);
      }
      if (list[i].readers.count(TxId::initial())) {
        report("init", k, {i}, {TxId::initial()},
               "t0 appears as a reader of " + k + "[" + std::to_string(i) +
                   "]");
      }
    }

    // WF1: no shared writer or reader across distinct versions of one key.
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        if (list[i].writer == list[j].writer) {
          report("unique-access", k, {i, j}, {list[i].writer},
                 "writer " + list[i].writer.str() + " owns versions " +
                     std::to_string(i) + " and " + std::to_string(j) +
                     " of " + k);
        }
        std::vector<TxId> shared;
        std::set_intersection(list[i].readers.begin(), list[i].readers.end(),
                              list[j].readers.begin(), list[j].readers.end(),
                              std::back_inserter(shared));
        for (const auto& t : shared) {
          report("unique-access", k, {i, j}, {t},
                 "reader " + t.str() + " marks versions " + std::to_string(i) +
                     " and " + std::to_string(j) + " of " + k);
        }
      }
    }

    // WF3: a client's accesses to earlier versions carry smaller sequence
    // numbers than its writes of later versions; readers of a version come
    // after its writer in session order.
    for (std::size_t i = 0; i < list.size(); ++i) {
      const TxId& w = list[i].writer;
      if (w.is_initial()) continue;
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        const TxId& w2 = list[j].writer;
        if (!w2.is_initial() && w2.client() == w.client() &&
            w2.seq() <= w.seq()) {
          report("session-agreement", k, {i, j}, {w, w2},
                 "writer " + w2.str() + " of " + k + "[" + std::to_string(j) +
                     "] does not follow writer " + w.str() + " of [" +
                     std::to_string(i) + "] in session order");
        }
      }
      for (const auto& r : list[i].readers) {
        if (!r.is_initial() && r.client() == w.client() &&
            r.seq() <= w.seq()) {
          report("session-agreement", k, {i}, {w, r},
                 "reader " + r.str() + " of " + k + "[" + std::to_string(i) +
                     "] does not follow its writer " + w.str() +
                     " in session order");
        }
      }
    }
  }
  return out;
}

inline bool wellformed(const KvStore& store) {
  return check_wellformed(store).empty();
}

// Least fresh id for the client: 1 + the largest sequence number of cl
// appearing anywhere in the store (as writer or reader), or 1 if none.
inline TxId next_txid(const ClientId& cl, const KvStore& store) {
  int max_seq = 0;
  for (const auto& [k, list] : store.data()) {
    for (const auto& ver : list) {
      if (!ver.writer.is_initial() && ver.writer.client() == cl) {
        max_seq = std::max(max_seq, ver.writer.seq());
      }
      for (const auto& r : ver.readers) {
        if (!r.is_initial() && r.client() == cl) {
          max_seq = std::max(max_seq, r.seq());
        }
      }
    }
  }
  return TxId(cl, max_seq + 1);
}

// Membership in the semantic fresh-id set: t is admissible for its client iff
// its sequence number exceeds every same-client sequence number in the store.
inline bool txid_fresh(const TxId& t, const KvStore& store) {
  if (t.is_initial()) return false;
  for (const auto& [k, list] : store.data()) {
    for (const auto& ver : list) {
      if (!ver.writer.is_initial() && ver.writer.client() == t.client() &&
          ver.writer.seq() >= t.seq()) {
        return false;
      }
      for (const auto& r : ver.readers) {
        if (!r.is_initial() && r.client() == t.client() && r.seq() >= t.seq()) {
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace kvsem
