#include "kvsem/view.hpp"

#include <gtest/gtest.h>

#include "kvsem/config.hpp"
#include "testutil.hpp"

namespace kvsem {
namespace {

using testutil::random_store;

TxId t(const char* cl, int n) { return TxId(cl, n); }

// k1 gains a version from cl1:1 (which also writes k2), k2 gains another from
// cl2:1. Exercises the cross-key atomicity constraint.
KvStore two_key_store() {
  KvStore store = KvStore::initial({"k1", "k2"});
  Fingerprint f1;
  f1.add_write("k1", 1);
  f1.add_write("k2", 10);
  store = update_kv(store, initial_view(store), f1, t("cl1", 1));
  Fingerprint f2;
  f2.add_write("k2", 20);
  store = update_kv(store, initial_view(store), f2, t("cl2", 1));
  return store;
}

TEST(ViewWellformed, InitialViewIsValid) {
  KvStore store = two_key_store();
  EXPECT_TRUE(view_wellformed(store, initial_view(store)));
}

TEST(ViewWellformed, MissingZeroIndexViolatesV1) {
  KvStore store = two_key_store();
  View u = initial_view(store);
  u.set_indices("k1", {1});
  EXPECT_FALSE(view_wellformed(store, u));
}

TEST(ViewWellformed, OutOfRangeIndexViolatesV1) {
  KvStore store = two_key_store();
  View u = initial_view(store);
  u.set_indices("k1", {0, 7});
  EXPECT_FALSE(view_wellformed(store, u));
}

TEST(ViewWellformed, MissingKeyViolatesV1) {
  KvStore store = two_key_store();
  View u;
  u.set_indices("k1", {0});
  EXPECT_FALSE(view_wellformed(store, u));
}

TEST(ViewWellformed, PartialTransactionViolatesV2) {
  KvStore store = two_key_store();
  // cl1:1 wrote k1[1] and k2[1]; seeing only one of them breaks atomicity.
  View u = initial_view(store);
  u.set_indices("k1", {0, 1});
  EXPECT_FALSE(view_wellformed(store, u));
  u.set_indices("k2", {0, 1});
  EXPECT_TRUE(view_wellformed(store, u));
}

TEST(ViewLeq, BasicOrdering) {
  KvStore store = two_key_store();
  View lo = initial_view(store);
  View hi = view_of_writers(store, {t("cl1", 1)});
  EXPECT_TRUE(view_leq(lo, lo));
  EXPECT_TRUE(view_leq(lo, hi));
  EXPECT_FALSE(view_leq(hi, lo));
}

TEST(ViewOfWriters, RoundTripsThroughTxOf) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    KvStore store = random_store(rng);
    std::set<TxId> chosen;
    for (const auto& w : store.writer_ids()) {
      if (rng() & 1) chosen.insert(w);
    }
    View u = view_of_writers(store, chosen);
    ASSERT_TRUE(view_wellformed(store, u));
    std::set<TxId> back = tx_of(store, u);
    back.erase(TxId::initial());
    EXPECT_EQ(back, chosen);
  }
}

TEST(AllViews, EnumeratesExactlyTheValidViews) {
  KvStore store = two_key_store();  // 2 writers -> 4 views
  std::vector<View> views = all_views(store);
  EXPECT_EQ(views.size(), 4u);
  std::set<View> unique(views.begin(), views.end());
  EXPECT_EQ(unique.size(), 4u);
  for (const auto& u : views) {
    EXPECT_TRUE(view_wellformed(store, u));
  }
  // Cross-check against brute force over all per-key index subsets.
  int valid_count = 0;
  const auto& k1 = store.versions("k1");
  const auto& k2 = store.versions("k2");
  for (std::size_t m1 = 0; m1 < (1u << k1.size()); ++m1) {
    for (std::size_t m2 = 0; m2 < (1u << k2.size()); ++m2) {
      View u;
      std::set<std::size_t> i1, i2;
      for (std::size_t b = 0; b < k1.size(); ++b) {
        if (m1 & (1u << b)) i1.insert(b);
      }
      for (std::size_t b = 0; b < k2.size(); ++b) {
        if (m2 & (1u << b)) i2.insert(b);
      }
      u.set_indices("k1", i1);
      u.set_indices("k2", i2);
      if (view_wellformed(store, u)) ++valid_count;
    }
  }
  EXPECT_EQ(valid_count, 4);
}

TEST(ViewsGeq, EnumeratesSupersetsOnly) {
  KvStore store = two_key_store();
  View base = view_of_writers(store, {t("cl1", 1)});
  std::vector<View> sup = views_geq(store, base);
  EXPECT_EQ(sup.size(), 2u);  // cl2:1 in or out
  for (const auto& v : sup) {
    EXPECT_TRUE(view_leq(base, v));
    EXPECT_TRUE(view_wellformed(store, v));
  }
}

TEST(SnapshotOnViews, UsesMaxVisibleIndexPerKey) {
  KvStore store = two_key_store();
  View u = view_of_writers(store, {t("cl1", 1)});
  Snapshot snap = snapshot(store, u);
  EXPECT_EQ(snap.at("k1"), 1);
  EXPECT_EQ(snap.at("k2"), 10);
  View full = view_of_writers(store, {t("cl1", 1), t("cl2", 1)});
  EXPECT_EQ(snapshot(store, full).at("k2"), 20);
}

}  // namespace
}  // namespace kvsem
