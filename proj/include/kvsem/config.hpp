#pragma once

// Configurations (store + per-client views) and the atomic transactional
// update. update_kv is the single state transformer of the model: committing
// fingerprint F from view u as transaction t marks t as a reader of the
// maximal visible version of every key F reads, and appends one fresh version
// per key F writes.

#include <map>
#include <set>
#include <stdexcept>

#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

struct Configuration {
  KvStore store;
  std::map<ClientId, View> views;

  auto operator<=>(const Configuration&) const = default;
};

inline Configuration initial_config(const std::set<ClientId>& clients,
                                    const std::set<Key>& keys) {
  if (keys.empty()) throw std::invalid_argument("no keys");
  Configuration conf;
  conf.store = KvStore::initial(keys);
  for (const auto& cl : clients) conf.views[cl] = initial_view(conf.store);
  return conf;
}

inline bool config_wellformed(const Configuration& conf) {
  if (!wellformed(conf.store)) return false;
  for (const auto& [cl, u] : conf.views) {
    if (!view_wellformed(conf.store, u)) return false;
  }
  return true;
}

inline KvStore update_kv(const KvStore& store, const View& u,
                         const Fingerprint& fp, const TxId& t) {
  if (t.is_initial() || store.contains_id(t)) {
    throw std::invalid_argument("stale transaction id");
  }
  if (!view_wellformed(store, u)) {
    throw std::invalid_argument("bad view");
  }
  KvStore next = store;
  // Reads first: t becomes a reader of the maximal visible version. Writes
  // never affect this, because u indexes the pre-update lists only.
  for (const auto& [k, v] : fp.reads()) {
    if (!next.has_key(k)) throw std::invalid_argument("unknown key: " + k);
    next.data()[k][u.max_index(k)].readers.insert(t);
  }
  for (const auto& [k, v] : fp.writes()) {
    if (!next.has_key(k)) throw std::invalid_argument("unknown key: " + k);
    next.data()[k].push_back(Version{v, t, {}});
  }
  return next;
}

}  // namespace kvsem
