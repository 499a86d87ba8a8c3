#include "kvsem/store.hpp"

#include <gtest/gtest.h>

#include "kvsem/config.hpp"
#include "kvsem/view.hpp"
#include "testutil.hpp"

namespace kvsem {
namespace {

using testutil::key_universe;
using testutil::random_fingerprint;
using testutil::random_store;
using testutil::random_view;

TxId t(const char* cl, int n) { return TxId(cl, n); }

KvStore first_increment_store() {
  // k -> [(0, t0, {cl1:1}), (1, cl1:1, {})]
  KvStore store = KvStore::initial({"k"});
  Fingerprint fp;
  fp.add_read("k", 0);
  fp.add_write("k", 1);
  return update_kv(store, initial_view(store), fp, t("cl1", 1));
}

TEST(InitialConfig, SingleClientSingleKey) {
  Configuration conf = initial_config({"cl1"}, {"k"});
  ASSERT_TRUE(conf.store.has_key("k"));
  ASSERT_EQ(conf.store.num_versions("k"), 1u);
  EXPECT_EQ(conf.store.version("k", 0).value, kInitialValue);
  EXPECT_TRUE(conf.store.version("k", 0).writer.is_initial());
  EXPECT_TRUE(conf.store.version("k", 0).readers.empty());
  ASSERT_EQ(conf.views.size(), 1u);
  EXPECT_EQ(conf.views.at("cl1").indices("k"), std::set<std::size_t>{0});
}

TEST(InitialConfig, TwoClientsTwoKeys) {
  Configuration conf = initial_config({"cl1", "cl2"}, {"k1", "k2"});
  for (const auto& cl : {"cl1", "cl2"}) {
    for (const auto& k : {"k1", "k2"}) {
      EXPECT_EQ(conf.views.at(cl).indices(k), std::set<std::size_t>{0});
    }
  }
}

TEST(InitialConfig, EmptyClientSetIsAllowed) {
  Configuration conf = initial_config({}, {"k"});
  EXPECT_TRUE(conf.views.empty());
  EXPECT_TRUE(conf.store.has_key("k"));
}

TEST(InitialConfig, EmptyKeySetIsRejected) {
  try {
    initial_config({"cl1"}, {});
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "no keys");
  }
}

TEST(CheckWellformed, InitialStoreIsClean) {
  EXPECT_TRUE(check_wellformed(KvStore::initial(key_universe(2))).empty());
}

TEST(CheckWellformed, DuplicateWriterIsWF1) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  store.data()["k"].push_back({2, t("cl1", 1), {}});
  // The same id writing twice breaks unique access, and because the two
  // writes carry equal session numbers it breaks session agreement too.
  auto violations = check_wellformed(store);
  ASSERT_EQ(violations.size(), 2u);
  const WfViolation* unique = nullptr;
  const WfViolation* session = nullptr;
  for (const auto& v : violations) {
    if (v.rule == "unique-access") unique = &v;
    if (v.rule == "session-agreement") session = &v;
  }
  ASSERT_NE(unique, nullptr);
  ASSERT_NE(session, nullptr);
  EXPECT_EQ(unique->key, "k");
  EXPECT_EQ(unique->indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(unique->ids, (std::vector<TxId>{t("cl1", 1)}));
}

TEST(CheckWellformed, SharedReaderIsWF1) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(t("cl2", 1));
  store.data()["k"].push_back({1, t("cl1", 1), {t("cl2", 1)}});
  auto violations = check_wellformed(store);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, "unique-access");
}

TEST(CheckWellformed, MissingInitialVersionIsWF2) {
  KvStore store;
  store.data()["k"] = {Version{1, t("cl1", 1), {}}};
  auto violations = check_wellformed(store);
  ASSERT_FALSE(violations.empty());
  EXPECT_EQ(violations[0].rule, "init");
}

TEST(CheckWellformed, InitialReaderIsReported) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(TxId::initial());
  auto violations = check_wellformed(store);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, "init");
}

TEST(CheckWellformed, SessionOrderAcrossVersionsIsWF3) {
  // cl1's second write lands before its first in version order.
  KvStore store = KvStore::initial({"k"});
  store.data()["k"].push_back({1, t("cl1", 2), {}});
  store.data()["k"].push_back({2, t("cl1", 1), {}});
  auto violations = check_wellformed(store);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, "session-agreement");
  EXPECT_EQ(violations[0].ids, (std::vector<TxId>{t("cl1", 2), t("cl1", 1)}));
}

TEST(CheckWellformed, ReaderBeforeWriterInSessionIsWF3) {
  // cl1:1 reads the version written by cl1:2.
  KvStore store = KvStore::initial({"k"});
  store.data()["k"].push_back({1, t("cl1", 2), {t("cl1", 1)}});
  auto violations = check_wellformed(store);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, "session-agreement");
}

TEST(CheckWellformed, LaterReadOfEarlierVersionIsAllowed) {
  // cl1:2 reading version 0 while cl1:1 wrote version 1 is legal: nothing
  // forces a client to keep its own writes visible under every model.
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(t("cl1", 2));
  store.data()["k"].push_back({1, t("cl1", 1), {}});
  EXPECT_TRUE(check_wellformed(store).empty());
}

TEST(CheckWellformed, ReportsAllViolationsNotJustTheFirst) {
  KvStore store;
  store.data()["k"] = {Version{5, t("cl1", 1), {}},   // bad initial version
                       Version{1, t("cl1", 1), {}}};  // duplicate writer
  auto violations = check_wellformed(store);
  EXPECT_GE(violations.size(), 2u);
}

TEST(Snapshot, InitialStoreYieldsInitialValues) {
  KvStore store = KvStore::initial(key_universe(2));
  Snapshot snap = snapshot(store, initial_view(store));
  EXPECT_EQ(snap.at("k1"), kInitialValue);
  EXPECT_EQ(snap.at("k2"), kInitialValue);
}

TEST(Snapshot, ReadsMaximalVisibleVersion) {
  KvStore store = first_increment_store();
  View old_only = initial_view(store);
  EXPECT_EQ(snapshot(store, old_only).at("k"), 0);
  View both = view_of_writers(store, {t("cl1", 1)});
  EXPECT_EQ(snapshot(store, both).at("k"), 1);
}

TEST(Snapshot, RejectsInvalidView) {
  KvStore store = first_increment_store();
  View bad;
  bad.set_indices("k", {1});  // V1 violated: 0 missing
  try {
    snapshot(store, bad);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "view not in Views(K)");
  }
}

TEST(UpdateKv, EmptyFingerprintIsIdentity) {
  KvStore store = first_increment_store();
  View u = initial_view(store);
  EXPECT_EQ(update_kv(store, u, Fingerprint{}, t("cl2", 1)), store);
}

TEST(UpdateKv, FirstIncrementMatchesHandBuiltStore) {
  KvStore store = first_increment_store();
  ASSERT_EQ(store.num_versions("k"), 2u);
  EXPECT_EQ(store.version("k", 0).readers, std::set<TxId>{t("cl1", 1)});
  EXPECT_EQ(store.version("k", 1).value, 1);
  EXPECT_EQ(store.version("k", 1).writer, t("cl1", 1));
  EXPECT_TRUE(store.version("k", 1).readers.empty());
}

TEST(UpdateKv, ReadOnlyFingerprintMarksReader) {
  KvStore store = KvStore::initial({"k"});
  Fingerprint fp;
  fp.add_read("k", 0);
  KvStore next = update_kv(store, initial_view(store), fp, t("cl1", 1));
  ASSERT_EQ(next.num_versions("k"), 1u);
  EXPECT_EQ(next.version("k", 0).readers, std::set<TxId>{t("cl1", 1)});
}

TEST(UpdateKv, StaleTransactionIdIsRejected) {
  KvStore store = first_increment_store();
  Fingerprint fp;
  fp.add_write("k", 9);
  try {
    update_kv(store, initial_view(store), fp, t("cl1", 1));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "stale transaction id");
  }
}

TEST(UpdateKv, InvalidViewIsRejected) {
  KvStore store = first_increment_store();
  View bad;
  bad.set_indices("k", {0, 5});
  Fingerprint fp;
  fp.add_write("k", 9);
  try {
    update_kv(store, bad, fp, t("cl2", 1));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "bad view");
  }
}

// Independent oracle: the explicit per-key description of the transactional
// update — untouched keys unchanged; read-only keys gain a reader on the
// maximal visible version; written keys gain one appended version; read+write
// keys get both.
KvStore update_kv_oracle(const KvStore& store, const View& u,
                         const Fingerprint& fp, const TxId& txid) {
  KvStore next = store;
  for (auto& [k, list] : next.data()) {
    bool rd = fp.read_of(k).has_value();
    bool wr = fp.write_of(k).has_value();
    if (rd) list[u.max_index(k)].readers.insert(txid);
    if (wr) list.push_back(Version{*fp.write_of(k), txid, {}});
  }
  return next;
}

TEST(UpdateKv, AgreesWithExplicitPerKeyOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    KvStore store = random_store(rng);
    View u = random_view(store, rng);
    Fingerprint fp = random_fingerprint(store, u, rng);
    TxId txid = next_txid("cl" + std::to_string(1 + rng() % 3), store);
    EXPECT_EQ(update_kv(store, u, fp, txid),
              update_kv_oracle(store, u, fp, txid));
  }
}

TEST(UpdateKv, PreservesWellformedness) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    KvStore store = random_store(rng);
    ASSERT_TRUE(check_wellformed(store).empty());
    View u = random_view(store, rng);
    Fingerprint fp = random_fingerprint(store, u, rng);
    KvStore next = update_kv(store, u, fp, next_txid("cl1", store));
    EXPECT_TRUE(check_wellformed(next).empty())
        << store.str() << u.str() << fp.str();
  }
}

TEST(UpdateKv, PreservesValidityOfOtherViews) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    KvStore store = random_store(rng);
    View bystander = random_view(store, rng);
    View committer = random_view(store, rng);
    Fingerprint fp = random_fingerprint(store, committer, rng);
    KvStore next = update_kv(store, committer, fp, next_txid("cl2", store));
    EXPECT_TRUE(view_wellformed(next, bystander));
  }
}

TEST(UpdateKv, NonConflictingCommitsCommute) {
  // Two commits by different clients writing disjoint key sets can swap
  // order, provided both views are valid for the original store.
  std::mt19937_64 rng(19);
  int checked = 0;
  for (int trial = 0; trial < 600 && checked < 200; ++trial) {
    KvStore store = random_store(rng);
    View u1 = random_view(store, rng);
    View u2 = random_view(store, rng);
    Fingerprint f1 = random_fingerprint(store, u1, rng);
    Fingerprint f2 = random_fingerprint(store, u2, rng);
    bool conflict = false;
    for (const auto& [k, v] : f1.writes()) {
      if (f2.write_of(k)) conflict = true;
    }
    if (conflict) continue;
    TxId t1 = next_txid("cl1", store);
    TxId t2 = next_txid("cl2", store);
    KvStore a = update_kv(update_kv(store, u1, f1, t1), u2, f2, t2);
    KvStore b = update_kv(update_kv(store, u2, f2, t2), u1, f1, t1);
    EXPECT_EQ(a, b) << store.str();
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(UpdateKv, ClauseOrderIsIrrelevant) {
  // Processing writes before reads gives the same store: the reader mark
  // lands on the pre-update maximal visible version either way.
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    KvStore store = random_store(rng);
    View u = random_view(store, rng);
    Fingerprint fp = random_fingerprint(store, u, rng);
    TxId txid = next_txid("cl1", store);

    KvStore writes_first = store;
    for (const auto& [k, v] : fp.writes()) {
      writes_first.data()[k].push_back(Version{v, txid, {}});
    }
    for (const auto& [k, v] : fp.reads()) {
      writes_first.data()[k][u.max_index(k)].readers.insert(txid);
    }
    EXPECT_EQ(update_kv(store, u, fp, txid), writes_first);
  }
}

TEST(NextTxid, StartsAtOne) {
  EXPECT_EQ(next_txid("cl1", KvStore::initial({"k"})), t("cl1", 1));
}

TEST(NextTxid, SkipsToAboveMaximum) {
  KvStore store = KvStore::initial({"k"});
  store.data()["k"][0].readers.insert(t("cl1", 1));
  store.data()["k"].push_back({1, t("cl1", 3), {}});
  EXPECT_EQ(next_txid("cl1", store), t("cl1", 4));
}

TEST(NextTxid, ClientsAreIndependent) {
  KvStore store = first_increment_store();
  EXPECT_EQ(next_txid("cl2", store), t("cl2", 1));
}

TEST(TxidFresh, MembershipInTheFreshSet) {
  KvStore store = first_increment_store();  // contains cl1:1
  EXPECT_FALSE(txid_fresh(t("cl1", 1), store));
  EXPECT_TRUE(txid_fresh(t("cl1", 2), store));
  EXPECT_TRUE(txid_fresh(t("cl1", 7), store));
  EXPECT_TRUE(txid_fresh(t("cl2", 1), store));
  EXPECT_FALSE(txid_fresh(TxId::initial(), store));
}

TEST(TxId, ParseAndPrintRoundTrip) {
  EXPECT_EQ(TxId::parse("t0"), TxId::initial());
  EXPECT_EQ(TxId::parse("cl1:3"), t("cl1", 3));
  EXPECT_EQ(t("cl1", 3).str(), "cl1:3");
  EXPECT_EQ(TxId::initial().str(), "t0");
  EXPECT_THROW(TxId::parse("nonsense"), std::invalid_argument);
}

}  // namespace
}  // namespace kvsem
