#pragma once

// The interleaved machine. A machine state pairs a configuration (store +
// per-client views) with each client's variable stack and residual command.
// Clients step one at a time: local steps (assign, assume, branch, loop
// unfolding) touch only the stack and program text; an atomic block commits
// in one step by picking a grown view, running the body against that view's
// snapshot, and pushing the fingerprint through the commit test.
//
// Reachability search uses a collapsed transition relation: a view only ever
// grows right before it is used by a commit, and after a commit the client
// keeps the smallest view the model's shift predicate accepts. Both are
// lossless for the set of reachable stores, because any larger view can be
// re-grown at the next commit.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kvsem/config.hpp"
#include "kvsem/exectest.hpp"
#include "kvsem/program.hpp"
#include "kvsem/store_io.hpp"

namespace kvsem {

// --- machine states --------------------------------------------------------

struct MachineState {
  Configuration config;
  std::map<ClientId, Stack> stacks;
  std::map<ClientId, CmdPtr> threads;
};

inline MachineState initial_machine(const Program& p) {
  std::set<ClientId> clients;
  for (const auto& [cl, c] : p.threads) clients.insert(cl);
  MachineState st;
  st.config = initial_config(clients, program_keys(p));
  for (const auto& [cl, c] : p.threads) {
    st.stacks[cl] = {};
    st.threads[cl] = c;
  }
  return st;
}

inline bool machine_terminal(const MachineState& st) {
  for (const auto& [cl, c] : st.threads) {
    if (c->kind != Cmd::Kind::Skip) return false;
  }
  return true;
}

// Canonical dedup key. Commands compare by printed form because equal ASTs
// may live at different addresses after branching.
inline std::string machine_key(const MachineState& st) {
  std::string out = canonical_store_str(st.config.store);
  for (const auto& [cl, u] : st.config.views) out += "|" + cl + u.str();
  for (const auto& [cl, s] : st.stacks) {
    out += "#" + cl + ":";
    for (const auto& [var, val] : s) out += var + "=" + std::to_string(val) + ",";
  }
  for (const auto& [cl, c] : st.threads) out += "@" + cl + ":" + cmd_str(c);
  return out;
}

// --- transition labels -------------------------------------------------------

// Local steps and view shifts are silent; commits carry the fingerprint and
// the (possibly grown) view the transaction body ran against.
struct Label {
  ClientId client;
  bool commit = false;
  Fingerprint fp;
  View pre_view;
};

namespace detail {

// One client-local possibility: the command can either take a silent step
// (new stack, residual command) or is about to run an atomic body.
struct LocalStep {
  Stack stack;
  CmdPtr rest;
};
struct PendingCommit {
  TxnPtr body;
  CmdPtr rest;
};

inline void cmd_steps(const CmdPtr& c, const Stack& stk,
                      std::vector<LocalStep>& locals,
                      std::vector<PendingCommit>& commits) {
  switch (c->kind) {
    case Cmd::Kind::Skip:
      return;
    case Cmd::Kind::Assign: {
      Stack s2 = stk;
      s2[c->var] = eval_expr(stk, c->expr);
      locals.push_back({std::move(s2), Cmd::skip()});
      return;
    }
    case Cmd::Kind::Assume:
      if (eval_expr(stk, c->expr) != 0) locals.push_back({stk, Cmd::skip()});
      return;
    case Cmd::Kind::Atomic:
      commits.push_back({c->txn, Cmd::skip()});
      return;
    case Cmd::Kind::Seq: {
      std::vector<LocalStep> l2;
      std::vector<PendingCommit> c2;
      cmd_steps(c->left, stk, l2, c2);
      for (auto& s : l2) locals.push_back({std::move(s.stack), Cmd::seq(s.rest, c->right)});
      for (auto& p : c2) commits.push_back({p.body, Cmd::seq(p.rest, c->right)});
      return;
    }
    case Cmd::Kind::Choice:
      locals.push_back({stk, c->left});
      locals.push_back({stk, c->right});
      return;
    case Cmd::Kind::Iter:
      locals.push_back({stk, Cmd::skip()});
      locals.push_back({stk, Cmd::seq(c->left, Cmd::iterate(c->left))});
      return;
  }
  throw std::logic_error("unreachable command kind");
}

// Smallest post-commit view the model's shift predicate accepts. Must mirror
// view_shift: models checking monotonic reads keep the pre-commit view,
// models checking read-your-writes keep every version the client ever wrote.
inline View minimal_post_view(Model m, const KvStore& updated, const View& pre,
                              const ClientId& cl) {
  bool keep_pre = false;
  bool keep_own = false;
  switch (m) {
    case Model::MR:
      keep_pre = true;
      break;
    case Model::RYW:
      keep_own = true;
      break;
    case Model::CP:
    case Model::CC:
    case Model::PSI:
    case Model::SI:
    case Model::WSI:
      keep_pre = keep_own = true;
      break;
    default:
      break;
  }
  View v = initial_view(updated);
  if (keep_pre) {
    for (const auto& [k, idx] : pre.data()) {
      for (auto i : idx) v.add_index(k, i);
    }
  }
  if (keep_own) {
    for (const auto& [k, list] : updated.data()) {
      for (std::size_t i = 1; i < list.size(); ++i) {
        if (!list[i].writer.is_initial() && list[i].writer.client() == cl) {
          v.add_index(k, i);
        }
      }
    }
  }
  return v;
}

// Shared successor core. all_post_views=true enumerates every admissible
// post-commit view (the full transition relation); false keeps only the
// minimal one, which preserves reachable stores.
inline std::vector<std::pair<Label, MachineState>> successors(
    Model m, const MachineState& st, bool all_post_views) {
  std::vector<std::pair<Label, MachineState>> out;
  const KvStore& store = st.config.store;
  std::optional<StoreRelations> rels;  // computed lazily, once per state

  for (const auto& [cl, c] : st.threads) {
    std::vector<LocalStep> locals;
    std::vector<PendingCommit> commits;
    cmd_steps(c, st.stacks.at(cl), locals, commits);

    for (auto& l : locals) {
      MachineState next = st;
      next.stacks[cl] = std::move(l.stack);
      next.threads[cl] = l.rest;
      out.emplace_back(Label{cl, false, {}, {}}, std::move(next));
    }

    if (commits.empty()) continue;
    if (!rels) rels = store_relations(store);
    const TxId t = next_txid(cl, store);
    for (const auto& pc : commits) {
      for (const View& pre : views_geq(store, st.config.views.at(cl))) {
        const Snapshot snap = snapshot(store, pre);
        FingerprintSet fps = final_fingerprints(pc.body, st.stacks.at(cl), snap);
        if (fps.partial) throw std::runtime_error("iteration bound exceeded");
        for (const auto& [stack2, fp] : fps.results) {
          // Reads in fp agree with snap by construction, so the read check
          // of the commit test cannot fail here.
          if (!can_commit(m, store, *rels, pre, fp)) continue;
          const KvStore updated = update_kv(store, pre, fp, t);
          std::vector<View> posts;
          if (all_post_views) {
            for (const View& v : all_views(updated)) {
              if (view_shift(m, store, pre, updated, v, t)) posts.push_back(v);
            }
          } else {
            posts.push_back(minimal_post_view(m, updated, pre, cl));
          }
          for (const View& post : posts) {
            MachineState next = st;
            next.config.store = updated;
            next.config.views[cl] = post;
            next.stacks[cl] = stack2;
            next.threads[cl] = pc.rest;
            out.emplace_back(Label{cl, true, fp, pre}, std::move(next));
          }
        }
      }
    }
  }
  return out;
}

}  // namespace detail

// Every successor of a machine state: silent client-local steps plus, for
// each runnable atomic block, every choice of grown view, final fingerprint,
// and admissible post-commit view. Deadlocked states yield no successors.
inline std::vector<std::pair<Label, MachineState>> step_program(
    Model m, const MachineState& st) {
  return detail::successors(m, st, /*all_post_views=*/true);
}

// --- configuration-level reduction ------------------------------------------

// One labelled reduction on a configuration: action == nullopt is a view
// shift (every configuration whose only change grows cl's view), a
// fingerprint is a commit (every configuration reachable by an admitted
// commit of that fingerprint from cl's current view).
inline std::vector<Configuration> et_reduce(
    Model m, const Configuration& conf, const ClientId& cl,
    const std::optional<Fingerprint>& action) {
  auto it = conf.views.find(cl);
  if (it == conf.views.end()) {
    throw std::invalid_argument("unknown client: " + cl);
  }
  const View& u = it->second;
  std::vector<Configuration> out;

  if (!action) {
    for (const View& grown : views_geq(conf.store, u)) {
      Configuration next = conf;
      next.views[cl] = grown;
      out.push_back(std::move(next));
    }
    return out;
  }

  const Fingerprint& fp = *action;
  const Snapshot snap = snapshot(conf.store, u);
  for (const auto& [k, v] : fp.reads()) {
    auto st = snap.find(k);
    if (st == snap.end()) throw std::invalid_argument("unknown key: " + k);
    if (st->second != v) return out;  // reads disagree with the view
  }
  if (!can_commit(m, conf.store, u, fp)) return out;
  const TxId t = next_txid(cl, conf.store);
  const KvStore updated = update_kv(conf.store, u, fp, t);
  for (const View& post : all_views(updated)) {
    if (!view_shift(m, conf.store, u, updated, post, t)) continue;
    Configuration next;
    next.store = updated;
    next.views = conf.views;
    next.views[cl] = post;
    out.push_back(std::move(next));
  }
  return out;
}

// --- reachability -------------------------------------------------------------

struct ReachResult {
  std::set<KvStore> stores;  // final stores of fully terminated runs
  bool partial = false;      // true when the step bound cut off live states
};

// Breadth-first enumeration of final stores, deduplicating machine states by
// canonical serialization. max_steps bounds the run length (every local step,
// and every commit with its fused view growth, counts as one step).
inline ReachResult reachable_stores(Model m, const Program& p,
                                    int max_steps = 32) {
  MachineState init = initial_machine(p);
  ReachResult res;
  std::set<std::string> seen{machine_key(init)};
  std::vector<MachineState> frontier;
  if (machine_terminal(init)) {
    res.stores.insert(init.config.store);
  } else {
    frontier.push_back(std::move(init));
  }
  for (int depth = 0; depth < max_steps && !frontier.empty(); ++depth) {
    std::vector<MachineState> next_frontier;
    for (const MachineState& st : frontier) {
      for (auto& [label, next] : detail::successors(m, st, false)) {
        if (!seen.insert(machine_key(next)).second) continue;
        if (machine_terminal(next)) {
          res.stores.insert(next.config.store);
        } else {
          next_frontier.push_back(std::move(next));
        }
      }
    }
    frontier = std::move(next_frontier);
  }
  res.partial = !frontier.empty();
  return res;
}

// --- traces -------------------------------------------------------------------

// A trace is an initial configuration plus labelled steps, each recording the
// configuration it produced. Commits carry their fingerprint; view shifts are
// silent. Transaction ids are implicit: the committing client's next fresh id.
struct TraceStep {
  ClientId client;
  bool commit = false;
  Fingerprint fp;
  Configuration after;

  auto operator<=>(const TraceStep&) const = default;
};

struct Trace {
  Configuration initial;
  std::vector<TraceStep> steps;

  auto operator<=>(const Trace&) const = default;
};

inline const Configuration& trace_final_config(const Trace& tr) {
  return tr.steps.empty() ? tr.initial : tr.steps.back().after;
}

// Append a commit to a trace being built: a view shift to `pre` when the
// client is not already there, then the commit landing on `post`. The caller
// is responsible for admissibility; returns the transaction id used.
inline TxId trace_append_commit(Trace& tr, const ClientId& cl, const View& pre,
                                const Fingerprint& fp, const View& post) {
  Configuration cur = trace_final_config(tr);
  if (!(cur.views.at(cl) == pre)) {
    Configuration shifted = cur;
    shifted.views[cl] = pre;
    tr.steps.push_back(TraceStep{cl, false, {}, shifted});
    cur = std::move(shifted);
  }
  const TxId t = next_txid(cl, cur.store);
  Configuration done;
  done.store = update_kv(cur.store, pre, fp, t);
  done.views = cur.views;
  done.views[cl] = post;
  tr.steps.push_back(TraceStep{cl, true, fp, std::move(done)});
  return t;
}

namespace detail {

inline bool views_match_except(const Configuration& a, const Configuration& b,
                               const ClientId& cl) {
  if (a.views.size() != b.views.size()) return false;
  for (const auto& [c, u] : a.views) {
    auto it = b.views.find(c);
    if (it == b.views.end()) return false;
    if (c != cl && !(it->second == u)) return false;
  }
  return true;
}

}  // namespace detail

// Replays a trace, throwing std::runtime_error with a step-indexed message on
// the first illegal step.
inline void validate_trace(Model m, const Trace& tr) {
  if (!config_wellformed(tr.initial)) {
    throw std::runtime_error("illegal trace: malformed initial configuration");
  }
  Configuration cur = tr.initial;
  int n = 0;
  for (const TraceStep& s : tr.steps) {
    ++n;
    const std::string where = "illegal trace: step " + std::to_string(n);
    auto it = cur.views.find(s.client);
    if (it == cur.views.end()) {
      throw std::runtime_error(where + ": unknown client " + s.client);
    }
    if (!detail::views_match_except(cur, s.after, s.client)) {
      throw std::runtime_error(where + ": other clients' views changed");
    }
    const View& u = it->second;
    const View& after = s.after.views.at(s.client);
    if (!s.commit) {
      if (!(s.after.store == cur.store)) {
        throw std::runtime_error(where + ": view shift must not change the store");
      }
      if (!view_wellformed(cur.store, after)) {
        throw std::runtime_error(where + ": target is not a view of the store");
      }
      if (!view_leq(u, after)) {
        throw std::runtime_error(where + ": view shift must grow the view");
      }
    } else {
      const TxId t = next_txid(s.client, cur.store);
      KvStore updated;
      try {
        updated = update_kv(cur.store, u, s.fp, t);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
      if (!(s.after.store == updated)) {
        throw std::runtime_error(where + ": store does not match the committed update");
      }
      if (!view_wellformed(updated, after)) {
        throw std::runtime_error(where + ": post view is not a view of the store");
      }
      if (!et_allows(m, cur.store, u, s.fp, updated, after, t)) {
        throw std::runtime_error(where + ": commit not admitted");
      }
    }
    cur = s.after;
  }
}

// Rewrites a legal trace into normal form: every view shift immediately
// precedes a commit by the same client, standalone shifts disappear. The
// final store is unchanged and every client's final view is below its
// original one. Throws like validate_trace on illegal input.
inline Trace normalize_trace(Model m, const Trace& tr) {
  validate_trace(m, tr);
  Trace out;
  out.initial = tr.initial;
  std::map<ClientId, View> replay_views;  // views along the original trace
  for (const auto& [cl, u] : tr.initial.views) replay_views[cl] = u;
  KvStore store = tr.initial.store;
  std::map<ClientId, View> views = replay_views;  // views along the new trace
  for (const TraceStep& s : tr.steps) {
    if (!s.commit) {
      replay_views[s.client] = s.after.views.at(s.client);
      continue;
    }
    const View pre = replay_views[s.client];
    if (!(views.at(s.client) == pre)) {
      Configuration shifted;
      shifted.store = store;
      shifted.views = views;
      shifted.views[s.client] = pre;
      out.steps.push_back(TraceStep{s.client, false, {}, shifted});
      views[s.client] = pre;
    }
    const View post = s.after.views.at(s.client);
    store = s.after.store;
    views[s.client] = post;
    replay_views[s.client] = post;
    Configuration done;
    done.store = store;
    done.views = views;
    out.steps.push_back(TraceStep{s.client, true, s.fp, std::move(done)});
  }
  return out;
}

// --- trace serialization --------------------------------------------------

inline nlohmann::ordered_json trace_to_json(const Trace& tr) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const TraceStep& s : tr.steps) {
    nlohmann::ordered_json step = {{"client", s.client}, {"commit", s.commit}};
    if (s.commit) step["fp"] = fingerprint_to_json(s.fp);
    step["after"] = config_to_json(s.after);
    steps.push_back(std::move(step));
  }
  return {{"initial", config_to_json(tr.initial)}, {"steps", steps}};
}

inline Trace trace_from_json(const nlohmann::ordered_json& doc) {
  Trace tr;
  tr.initial = config_from_json(doc.at("initial"));
  for (const auto& step : doc.at("steps")) {
    TraceStep s;
    s.client = step.at("client").get<std::string>();
    s.commit = step.at("commit").get<bool>();
    if (s.commit) s.fp = fingerprint_from_json(step.at("fp"));
    s.after = config_from_json(step.at("after"));
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

inline void save_trace(const Trace& tr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << trace_to_json(tr).dump(2) << "\n";
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return trace_from_json(nlohmann::ordered_json::parse(buf.str()));
}

}  // namespace kvsem
