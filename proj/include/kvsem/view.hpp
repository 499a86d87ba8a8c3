#pragma once

// Client views and snapshots. A view picks, per key, the set of version
// indices visible to a client. Valid views always contain index 0 (V1) and
// are atomic (V2): when any version written by a transaction is visible, all
// versions written by that transaction are.
//
// V2 makes valid views of a well-formed store bijective with subsets of the
// store's non-initial writers: a view is exactly "the versions written by the
// transactions in W, plus the initial versions". That bijection powers both
// view enumeration and the bridge to abstract executions.

#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "kvsem/store.hpp"

namespace kvsem {

class View {
 public:
  View() = default;

  const std::set<std::size_t>& indices(const Key& k) const {
    static const std::set<std::size_t> empty;
    auto it = visible_.find(k);
    return it == visible_.end() ? empty : it->second;
  }

  void set_indices(const Key& k, std::set<std::size_t> idx) {
    visible_[k] = std::move(idx);
  }

  void add_index(const Key& k, std::size_t i) { visible_[k].insert(i); }

  std::size_t max_index(const Key& k) const {
    const auto& idx = indices(k);
    if (idx.empty()) throw std::invalid_argument("view empty on key " + k);
    return *idx.rbegin();
  }

  const std::map<Key, std::set<std::size_t>>& data() const { return visible_; }

  auto operator<=>(const View&) const = default;

  std::string str() const {
    std::ostringstream out;
    out << '[';
    bool first_key = true;
    for (const auto& [k, idx] : visible_) {
      if (!first_key) out << ", ";
      out << k << ":{";
      bool first = true;
      for (auto i : idx) {
        if (!first) out << ',';
        out << i;
        first = false;
      }
      out << '}';
      first_key = false;
    }
    out << ']';
    return out.str();
  }

 private:
  std::map<Key, std::set<std::size_t>> visible_;
};

// V1 + V2 against a concrete store; the view must cover exactly the store's
// keys.
inline bool view_wellformed(const KvStore& store, const View& u) {
  if (u.data().size() != store.data().size()) return false;
  for (const auto& [k, list] : store.data()) {
    const auto& idx = u.indices(k);
    if (!idx.count(0)) return false;                       // V1: 0 visible
    if (!idx.empty() && *idx.rbegin() >= list.size()) {    // V1: in range
      return false;
    }
  }
  // V2: versions of one writer are visible all-or-none across all keys.
  std::map<TxId, bool> seen_visible;
  for (const auto& [k, list] : store.data()) {
    const auto& idx = u.indices(k);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const TxId& w = list[i].writer;
      if (w.is_initial()) continue;
      bool visible = idx.count(i) > 0;
      auto [it, inserted] = seen_visible.emplace(w, visible);
      if (!inserted && it->second != visible) return false;
    }
  }
  return true;
}

inline View initial_view(const KvStore& store) {
  View u;
  for (const auto& [k, _] : store.data()) u.set_indices(k, {0});
  return u;
}

inline View initial_view(const std::set<Key>& keys) {
  View u;
  for (const auto& k : keys) u.set_indices(k, {0});
  return u;
}

inline bool view_leq(const View& u, const View& v) {
  for (const auto& [k, idx] : u.data()) {
    const auto& other = v.indices(k);
    for (auto i : idx) {
      if (!other.count(i)) return false;
    }
  }
  return true;
}

// The transactions visible in u: the writers of all visible versions
// (includes t0 through the initial versions).
inline std::set<TxId> tx_of(const KvStore& store, const View& u) {
  std::set<TxId> out;
  for (const auto& [k, list] : store.data()) {
    for (auto i : u.indices(k)) {
      if (i < list.size()) out.insert(list[i].writer);
    }
  }
  return out;
}

// The view showing exactly the versions written by `writers` (t0 implied).
// Always valid for a well-formed store.
inline View view_of_writers(const KvStore& store, const std::set<TxId>& writers) {
  View u;
  for (const auto& [k, list] : store.data()) {
    std::set<std::size_t> idx = {0};
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (writers.count(list[i].writer)) idx.insert(i);
    }
    u.set_indices(k, std::move(idx));
  }
  return u;
}

// All valid views of the store, enumerated through the writer-set bijection.
inline std::vector<View> all_views(const KvStore& store) {
  const std::set<TxId> writer_set = store.writer_ids();
  std::vector<TxId> writers(writer_set.begin(), writer_set.end());
  if (writers.size() > 24) {
    throw std::runtime_error("view enumeration over " +
                             std::to_string(writers.size()) +
                             " writers is not tractable");
  }
  std::vector<View> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << writers.size());
       ++mask) {
    std::set<TxId> chosen;
    for (std::size_t b = 0; b < writers.size(); ++b) {
      if (mask & (std::size_t{1} << b)) chosen.insert(writers[b]);
    }
    out.push_back(view_of_writers(store, chosen));
  }
  return out;
}

// All valid views v with u ⊑ v (the ε view-shift successors).
inline std::vector<View> views_geq(const KvStore& store, const View& u) {
  std::set<TxId> base = tx_of(store, u);
  base.erase(TxId::initial());
  std::vector<TxId> rest;
  for (const auto& w : store.writer_ids()) {
    if (!base.count(w)) rest.push_back(w);
  }
  if (rest.size() > 24) {
    throw std::runtime_error("view enumeration over " +
                             std::to_string(rest.size()) +
                             " extra writers is not tractable");
  }
  std::vector<View> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << rest.size()); ++mask) {
    std::set<TxId> chosen = base;
    for (std::size_t b = 0; b < rest.size(); ++b) {
      if (mask & (std::size_t{1} << b)) chosen.insert(rest[b]);
    }
    out.push_back(view_of_writers(store, chosen));
  }
  return out;
}

using Snapshot = std::map<Key, Value>;

// Last-writer-wins snapshot: each key resolves to the value of its maximal
// visible version.
inline Snapshot snapshot(const KvStore& store, const View& u) {
  if (!view_wellformed(store, u)) {
    throw std::invalid_argument("view not in Views(K)");
  }
  Snapshot snap;
  for (const auto& [k, list] : store.data()) {
    snap[k] = list[u.max_index(k)].value;
  }
  return snap;
}

}  // namespace kvsem
