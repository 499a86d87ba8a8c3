// Tests for dependency relations, the dependency-graph correspondence,
// cycle detection, and the predecessor closure.
#include "kvsem/dependencies.hpp"

#include <gtest/gtest.h>

#include <random>

#include "testutil.hpp"

namespace kvsem {
namespace {

TxId t(const std::string& cl, int n) { return TxId(cl, n); }

KvStore first_increment_store() {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(t("cl1", 1));
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  return store;
}

// Two clients both increment from the initial version: the classic lost
// update, with anti-dependencies in both directions.
KvStore lost_update_store() {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(t("cl1", 1));
  store.data()["k"][0].readers.insert(t("cl2", 1));
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  store.data()["k"].push_back({1, t("cl2", 1), {}});
  return store;
}

// Two counters, each incremented by one client and then read by the other
// client while its view still lacks the increment.
KvStore multi_counter_store() {
  KvStore store = KvStore::initial({"k1", "k2"});
  store.data()["k1"][0].readers = {t("cl1", 1), t("cl2", 2)};
  store.data()["k1"].push_back({1, t("cl1", 1), {}});
  store.data()["k2"][0].readers = {t("cl2", 1), t("cl1", 2)};
  store.data()["k2"].push_back({1, t("cl2", 1), {}});
  return store;
}

TEST(Relations, InitialStoreHasNone) {
  KvStore store = KvStore::initial(testutil::key_universe(2));
  EXPECT_TRUE(so(store).empty());
  EXPECT_TRUE(wr(store).empty());
  EXPECT_TRUE(ww(store).empty());
  EXPECT_TRUE(rw(store).empty());
  EXPECT_TRUE(acyclic(store));
  DependencyGraph g = graph_of(store);
  ASSERT_EQ(g.txns.size(), 1u);
  Fingerprint init;
  init.add_write("k1", 0);
  init.add_write("k2", 0);
  EXPECT_EQ(g.txns.at(TxId::initial()), init);
}

TEST(Relations, FirstIncrement) {
  KvStore store = first_increment_store();
  EXPECT_EQ(wr(store).pairs,
            (std::set<std::pair<TxId, TxId>>{{TxId::initial(), t("cl1", 1)}}));
  EXPECT_EQ(ww(store).pairs,
            (std::set<std::pair<TxId, TxId>>{{TxId::initial(), t("cl1", 1)}}));
  EXPECT_TRUE(rw(store).empty());
  EXPECT_TRUE(so(store).empty());
  EXPECT_TRUE(acyclic(store));
}

TEST(Relations, SessionOrderComesFromIdsInTheStore) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  store.data()["k"].push_back({2, t("cl1", 2), {t("cl2", 1)}});
  EXPECT_EQ(so(store).pairs,
            (std::set<std::pair<TxId, TxId>>{{t("cl1", 1), t("cl1", 2)}}));
}

TEST(Relations, ReaderOfItsOwnOverwrittenVersionIsExcludedFromRw) {
  KvStore store = lost_update_store();
  // cl1:1 reads index 0 and also writes index 1: no self anti-dependency.
  EXPECT_EQ(rw(store).pairs,
            (std::set<std::pair<TxId, TxId>>{{t("cl1", 1), t("cl2", 1)},
                                             {t("cl2", 1), t("cl1", 1)}}));
}

TEST(Relations, IllFormedStoreIsRejected) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  store.data()["k"].push_back({2, t("cl1", 1), {}});
  EXPECT_THROW(so(store), std::invalid_argument);
  EXPECT_THROW(graph_of(store), std::invalid_argument);
}

TEST(RelationAlgebra, UnionIntersectComposeClosure) {
  TxId a = t("a", 1), b = t("b", 1), c = t("c", 1);
  Relation r1{"r1", {{a, b}}};
  Relation r2{"r2", {{b, c}, {a, b}}};
  EXPECT_EQ(rel_union(r1, r2).pairs,
            (std::set<std::pair<TxId, TxId>>{{a, b}, {b, c}}));
  EXPECT_EQ(rel_intersect(r1, r2).pairs,
            (std::set<std::pair<TxId, TxId>>{{a, b}}));
  EXPECT_EQ(rel_compose(r1, r2).pairs,
            (std::set<std::pair<TxId, TxId>>{{a, c}}));
  Relation chain{"chain", {{a, b}, {b, c}}};
  EXPECT_EQ(rel_tclosure(chain).pairs,
            (std::set<std::pair<TxId, TxId>>{{a, b}, {b, c}, {a, c}}));
}

TEST(Cycles, LostUpdateHasATwoStepCycle) {
  KvStore store = lost_update_store();
  EXPECT_FALSE(acyclic(store));
  auto cycle = find_cycle(store);
  ASSERT_TRUE(cycle.has_value());
  EXPECT_EQ(*cycle, (std::vector<TxId>{t("cl1", 1), t("cl2", 1)}));
}

TEST(Cycles, MultiCounterStoreHasTheFourStepCycle) {
  KvStore store = multi_counter_store();
  auto pairs = rw(store).pairs;
  EXPECT_TRUE(pairs.count({t("cl1", 2), t("cl2", 1)}));
  EXPECT_TRUE(pairs.count({t("cl2", 2), t("cl1", 1)}));
  auto cycle = find_cycle(store);
  ASSERT_TRUE(cycle.has_value());
  EXPECT_EQ(*cycle, (std::vector<TxId>{t("cl1", 1), t("cl1", 2), t("cl2", 1),
                                       t("cl2", 2)}));
}

TEST(Cycles, SingleCounterChainIsAcyclic) {
  // Each increment reads the version the previous one wrote.
  KvStore store = KvStore::initial({"k"});
  const TxId ids[] = {t("cl1", 1), t("cl2", 1), t("cl1", 2)};
  for (int i = 0; i < 3; ++i) {
    store.data()["k"][i].readers.insert(ids[i]);
    store.data()["k"].push_back({i + 1, ids[i], {}});
  }
  ASSERT_TRUE(wellformed(store));
  EXPECT_TRUE(acyclic(store));
  EXPECT_EQ(find_cycle(store), std::nullopt);
}

TEST(Graph, FingerprintsReadOffTheStore) {
  KvStore store = KvStore::initial({"k1", "k2"});
  store.data()["k1"][0].readers.insert(t("cl1", 1));
  store.data()["k1"].push_back({1, t("cl1", 1), {}});
  store.data()["k2"].push_back({10, t("cl1", 1), {}});
  DependencyGraph g = graph_of(store);
  Fingerprint want;
  want.add_read("k1", 0);
  want.add_write("k1", 1);
  want.add_write("k2", 10);
  EXPECT_EQ(g.txns.at(t("cl1", 1)), want);
}

TEST(Graph, RoundTripsOnHandStores) {
  for (const KvStore& store : {first_increment_store(), lost_update_store(),
                               multi_counter_store()}) {
    EXPECT_EQ(kv_of(graph_of(store)), store);
  }
}

TEST(Graph, RoundTripsOnRandomStores) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    KvStore store = testutil::random_store(rng);
    EXPECT_EQ(kv_of(graph_of(store)), store);
  }
}

void expect_graph_eq(const DependencyGraph& a, const DependencyGraph& b) {
  EXPECT_EQ(a.txns, b.txns);
  ASSERT_EQ(a.wr.size(), b.wr.size());
  for (const auto& [k, rel] : a.wr) EXPECT_EQ(rel.pairs, b.wr.at(k).pairs);
  for (const auto& [k, rel] : a.ww) EXPECT_EQ(rel.pairs, b.ww.at(k).pairs);
  for (const auto& [k, rel] : a.rw) EXPECT_EQ(rel.pairs, b.rw.at(k).pairs);
}

TEST(Graph, StoreOfGraphOfStoreIsAFixpointBothWays) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    DependencyGraph g = graph_of(testutil::random_store(rng));
    expect_graph_eq(graph_of(kv_of(g)), g);
  }
}

TEST(Graph, RejectsBrokenGraphsByName) {
  auto expect_violation = [](DependencyGraph g, const std::string& name) {
    try {
      kv_of(g);
      FAIL() << "expected a violation named " << name;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos)
          << e.what();
    }
  };

  DependencyGraph g = graph_of(first_increment_store());

  DependencyGraph no_init = g;
  no_init.txns.erase(TxId::initial());
  expect_violation(no_init, "init");

  DependencyGraph no_wr = g;
  no_wr.wr["k"].pairs.clear();
  expect_violation(no_wr, "wr-source");

  DependencyGraph flipped_ww = g;
  flipped_ww.ww["k"].pairs = {{t("cl1", 1), TxId::initial()}};
  expect_violation(flipped_ww, "ww-order");

  DependencyGraph bogus_rw = g;
  bogus_rw.rw["k"].add(t("cl1", 1), TxId::initial());
  expect_violation(bogus_rw, "rw-derived");

  DependencyGraph bad_value = g;
  Fingerprint misread;
  misread.add_read("k", 5);  // index 0 holds 0, not 5
  misread.add_write("k", 1);
  bad_value.txns[t("cl1", 1)] = misread;
  expect_violation(bad_value, "read-value");

  DependencyGraph stray_key = g;
  stray_key.txns[t("cl1", 1)].add_write("zz", 1);
  expect_violation(stray_key, "unknown-key");
}

TEST(Graph, RwIsTheCompositionOfWrAndWw) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    KvStore store = testutil::random_store(rng);
    DependencyGraph g = graph_of(store);
    std::set<std::pair<TxId, TxId>> expected;
    for (const Key& k : store.keys()) {
      for (const auto& [w, reader] : g.wr.at(k).pairs) {
        for (const auto& [w2, later] : g.ww.at(k).pairs) {
          if (w2 == w && reader != later) expected.emplace(reader, later);
        }
      }
    }
    EXPECT_EQ(rw(store).pairs, expected);
  }
}

// Kahn's algorithm as an independent acyclicity oracle.
bool has_topological_order(const KvStore& store) {
  Relation all = rel_union(rel_union(so(store), wr(store)),
                           rel_union(ww(store), rw(store)));
  std::map<TxId, int> indeg;
  std::map<TxId, std::set<TxId>> succ;
  indeg[TxId::initial()] = 0;  // all_ids() lists only non-initial ids
  for (const TxId& id : store.all_ids()) indeg[id] = 0;
  for (const auto& [a, b] : all.pairs) {
    if (succ[a].insert(b).second) indeg[b] += 1;
  }
  std::vector<TxId> ready;
  for (const auto& [id, d] : indeg) {
    if (d == 0) ready.push_back(id);
  }
  std::size_t done = 0;
  while (!ready.empty()) {
    TxId id = ready.back();
    ready.pop_back();
    ++done;
    for (const TxId& next : succ[id]) {
      if (--indeg[next] == 0) ready.push_back(next);
    }
  }
  return done == indeg.size();
}

TEST(Cycles, AcyclicAgreesWithTopologicalOrderOracle) {
  std::mt19937_64 rng(37);
  int cyclic_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    KvStore store = testutil::random_store(rng);
    bool a = acyclic(store);
    EXPECT_EQ(a, has_topological_order(store));
    if (!a) ++cyclic_seen;
  }
  EXPECT_GT(cyclic_seen, 0) << "generator never produced a dependency cycle";
}

TEST(Closure, EmptyRelationAndChains) {
  KvStore store = KvStore::initial({"k"});
  const TxId ids[] = {t("cl1", 1), t("cl2", 1), t("cl3", 1)};
  for (int i = 0; i < 3; ++i) {
    store.data()["k"][i].readers.insert(ids[i]);
    store.data()["k"].push_back({i + 1, ids[i], {}});
  }
  EXPECT_EQ(closure_txids(store, {ids[2]}, Relation{}),
            (std::set<TxId>{ids[2]}));
  EXPECT_EQ(closure_txids(store, {ids[2]}, wr(store)),
            (std::set<TxId>{TxId::initial(), ids[0], ids[1], ids[2]}));
}

std::set<TxId> naive_closure(std::set<TxId> base, const Relation& r) {
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& [a, b] : r.pairs) {
      if (base.count(b) && base.insert(a).second) grew = true;
    }
  }
  return base;
}

Relation random_subrelation(std::mt19937_64& rng, const KvStore& store) {
  Relation all = rel_union(rel_union(so(store), wr(store)),
                           rel_union(ww(store), rw(store)));
  Relation out{"sample", {}};
  for (const auto& p : all.pairs) {
    if (rng() % 2) out.pairs.insert(p);
  }
  return out;
}

TEST(Closure, MatchesTheNaiveFixpointOracle) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    KvStore store = testutil::random_store(rng);
    Relation r = random_subrelation(rng, store);
    std::set<TxId> ids = store.all_ids();
    std::set<TxId> base;
    for (const TxId& id : ids) {
      if (rng() % 3 == 0) base.insert(id);
    }
    EXPECT_EQ(closure_txids(store, base, r), naive_closure(base, r));
  }
}

TEST(Closure, IsMonotoneInBaseAndRelation) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    KvStore store = testutil::random_store(rng);
    Relation big = random_subrelation(rng, store);
    Relation small{"smaller", {}};
    for (const auto& p : big.pairs) {
      if (rng() % 2) small.pairs.insert(p);
    }
    std::set<TxId> base_small, base_big;
    for (const TxId& id : store.all_ids()) {
      if (rng() % 3 == 0) base_small.insert(id);
      if (rng() % 2 == 0) base_big.insert(id);
    }
    base_big.insert(base_small.begin(), base_small.end());

    auto in_base_big = closure_txids(store, base_big, big);
    for (const TxId& id : closure_txids(store, base_small, big)) {
      EXPECT_TRUE(in_base_big.count(id));
    }
    auto in_rel_big = closure_txids(store, base_small, big);
    for (const TxId& id : closure_txids(store, base_small, small)) {
      EXPECT_TRUE(in_rel_big.count(id));
    }
  }
}

TEST(Dot, FirstIncrementRendering) {
  EXPECT_EQ(dependency_dot(first_increment_store()),
            "digraph dependencies {\n"
            "  \"t0\" [label=\"t0: {(W,k,0)}\"];\n"
            "  \"cl1:1\" [label=\"cl1:1: {(R,k,0),(W,k,1)}\"];\n"
            "  \"t0\" -> \"cl1:1\" [label=\"WR\"];\n"
            "  \"t0\" -> \"cl1:1\" [label=\"WW\"];\n"
            "}\n");
}

}  // namespace
}  // namespace kvsem
