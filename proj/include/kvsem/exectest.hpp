// Execution tests: the per-model commit admission predicates.  Each model
// pairs a canCommit check (view closure and/or completeness conditions
// against the pre-commit store) with a viewShift check (how a client's view
// may move across its own commit); et_allows glues them to the actual store
// update and the last-writer-wins read check.
#pragma once

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvsem/config.hpp"
#include "kvsem/dependencies.hpp"
#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

enum class Model { TOP, MR, RYW, MW, WFR, CC, UA, PSI, CP, SI, WSI, SER };

inline const std::vector<Model>& all_models() {
  static const std::vector<Model> models = {
      Model::TOP, Model::MR, Model::RYW, Model::MW, Model::WFR, Model::CC,
      Model::UA,  Model::PSI, Model::CP, Model::SI, Model::WSI, Model::SER};
  return models;
}

inline std::string model_name(Model m) {
  switch (m) {
    case Model::TOP: return "TOP";
    case Model::MR:  return "MR";
    case Model::RYW: return "RYW";
    case Model::MW:  return "MW";
    case Model::WFR: return "WFR";
    case Model::CC:  return "CC";
    case Model::UA:  return "UA";
    case Model::PSI: return "PSI";
    case Model::CP:  return "CP";
    case Model::SI:  return "SI";
    case Model::WSI: return "WSI";
    case Model::SER: return "SER";
  }
  throw std::logic_error("unreachable model");
}

inline Model parse_model(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (Model m : all_models()) {
    if (model_name(m) == upper) return m;
  }
  throw std::invalid_argument("unknown model: " + name);
}

// ---------------------------------------------------------------------------
// The closure predicate: the view's visible transaction set may not acquire
// new writers when closed under r-predecessors.  Non-writing ids (pure
// readers) may enter the closure and are passed through, but only writers
// count against the view.

inline bool closed(const KvStore& store, const View& u, const Relation& r) {
  std::set<TxId> visible = tx_of(store, u);
  std::set<TxId> reach = closure_txids(store, visible, r);
  for (const TxId& t : reach) {
    if (store.is_writer(t) && !visible.count(t)) return false;
  }
  return true;
}

// The four base relations of one store, computed once and shared across the
// per-model commit relations.
struct StoreRelations {
  Relation so, wr, ww, rw;
};

inline StoreRelations store_relations(const KvStore& store) {
  return StoreRelations{so(store), wr(store), ww(store), rw(store)};
}

// The relation each model's canCommit closes the view under.  Models whose
// canCommit is not a closure (or is trivially true) use an empty relation.
inline Relation commit_relation(Model m, const StoreRelations& r) {
  switch (m) {
    case Model::MW:
      return rel_intersect(r.so, r.ww);
    case Model::WFR:  // WR followed by an optional session step
      return rel_union(r.wr, rel_compose(r.wr, r.so));
    case Model::CC:
      return rel_union(r.so, r.wr);
    case Model::PSI:
      return rel_union(rel_union(r.so, r.wr), r.ww);
    case Model::CP:
    case Model::SI: {
      // WR;RW? | SO;RW? | WW, approximating commit order.
      Relation cp = rel_union(
          rel_union(rel_union(r.wr, rel_compose(r.wr, r.rw)),
                    rel_union(r.so, rel_compose(r.so, r.rw))),
          r.ww);
      if (m == Model::CP) return cp;
      return rel_union(cp, rel_compose(r.ww, r.rw));
    }
    default:
      return Relation{};
  }
}

namespace detail {

// Write-conflict freedom: the committing view holds every version of every
// key the fingerprint writes.
inline bool view_complete_on_writes(const KvStore& store, const View& u,
                                    const Fingerprint& fp) {
  for (const auto& [k, v] : fp.writes()) {
    if (u.indices(k).size() != store.num_versions(k)) return false;
  }
  return true;
}

inline bool view_complete(const KvStore& store, const View& u) {
  for (const Key& k : store.keys()) {
    if (u.indices(k).size() != store.num_versions(k)) return false;
  }
  return true;
}

}  // namespace detail

inline bool can_commit(Model m, const KvStore& store, const StoreRelations& rels,
                       const View& u, const Fingerprint& fp) {
  switch (m) {
    case Model::TOP:
    case Model::MR:
    case Model::RYW:
      return true;
    case Model::MW:
    case Model::WFR:
    case Model::CC:
    case Model::CP:
      return closed(store, u, commit_relation(m, rels));
    case Model::UA:
      return detail::view_complete_on_writes(store, u, fp);
    case Model::PSI:
    case Model::SI:
      return detail::view_complete_on_writes(store, u, fp) &&
             closed(store, u, commit_relation(m, rels));
    case Model::WSI:
      return can_commit(Model::CP, store, rels, u, fp) &&
             can_commit(Model::UA, store, rels, u, fp);
    case Model::SER:
      return detail::view_complete(store, u);
  }
  throw std::logic_error("unreachable model");
}

inline bool can_commit(Model m, const KvStore& store, const View& u,
                       const Fingerprint& fp) {
  return can_commit(m, store, store_relations(store), u, fp);
}

// ---------------------------------------------------------------------------
// View shift: u is the client's view when it committed t against the old
// store; u' is its view of the updated store afterwards.

namespace detail {

// Monotonic reads: the client keeps everything it saw.
inline bool shift_mr(const View& u, const View& after) {
  return view_leq(u, after);
}

// Read your writes: the new view holds every version the committing client
// ever wrote, including the commit itself.
inline bool shift_ryw(const KvStore& updated, const View& after,
                      const TxId& t) {
  for (const Key& k : updated.keys()) {
    const auto& vers = updated.versions(k);
    for (std::size_t i = 0; i < vers.size(); ++i) {
      if (!vers[i].writer.is_initial() && vers[i].writer.client() == t.client() &&
          !after.indices(k).count(i)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace detail

inline bool view_shift(Model m, const KvStore& store, const View& u,
                       const KvStore& updated, const View& after,
                       const TxId& t) {
  (void)store;
  switch (m) {
    case Model::TOP:
    case Model::MW:
    case Model::WFR:
    case Model::UA:
    case Model::SER:
      return true;
    case Model::MR:
      return detail::shift_mr(u, after);
    case Model::RYW:
      return detail::shift_ryw(updated, after, t);
    // CP needs the session guarantees here: with a free view shift a client
    // could forget its own writes and the long-fork shape would slip through
    // the commit check, which only constrains the pre-view.
    case Model::CP:
    case Model::CC:
    case Model::PSI:
    case Model::SI:
    case Model::WSI:
      return detail::shift_mr(u, after) && detail::shift_ryw(updated, after, t);
  }
  throw std::logic_error("unreachable model");
}

// ---------------------------------------------------------------------------
// Full admission of one commit: the update must be the transactional update
// of (store, u, fp, t), every read must see the last write visible in u,
// and both model predicates must pass.

inline bool et_allows(Model m, const KvStore& store, const View& u,
                      const Fingerprint& fp, const KvStore& updated,
                      const View& after, const TxId& t) {
  if (updated != update_kv(store, u, fp, t)) {
    throw std::invalid_argument("store/update mismatch");
  }
  Snapshot snap = snapshot(store, u);
  for (const auto& [k, v] : fp.reads()) {
    if (snap.at(k) != v) return false;
  }
  return can_commit(m, store, u, fp) && view_shift(m, store, u, updated, after, t);
}

}  // namespace kvsem
