#include "kvsem/store_io.hpp"

#include <gtest/gtest.h>

#include "kvsem/config.hpp"
#include "testutil.hpp"

namespace kvsem {
namespace {

using testutil::random_store;

TEST(StoreIo, PinnedDocumentShape) {
  KvStore store = KvStore::initial({"k"});
  Fingerprint fp;
  fp.add_read("k", 0);
  fp.add_write("k", 1);
  store = update_kv(store, initial_view(store), fp, TxId("cl1", 1));

  const char* expected = R"({
  "k": [
    {
      "value": 0,
      "writer": "t0",
      "readers": [
        "cl1:1"
      ]
    },
    {
      "value": 1,
      "writer": "cl1:1",
      "readers": []
    }
  ]
}
)";
  EXPECT_EQ(store_to_text(store), expected);
}

TEST(StoreIo, RoundTripOnRandomStores) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    KvStore store = random_store(rng);
    EXPECT_EQ(store_from_text(store_to_text(store)), store);
  }
}

TEST(StoreIo, CanonicalStringSeparatesStores) {
  std::mt19937_64 rng(43);
  std::set<std::string> seen;
  std::set<KvStore> stores;
  for (int trial = 0; trial < 100; ++trial) {
    KvStore store = random_store(rng);
    stores.insert(store);
    seen.insert(canonical_store_str(store));
  }
  EXPECT_EQ(seen.size(), stores.size());
}

TEST(StoreIo, RejectsEmptyVersionList) {
  EXPECT_THROW(store_from_text(R"({"k": []})"), std::invalid_argument);
}

TEST(StoreIo, RejectsNonObjectDocument) {
  EXPECT_THROW(store_from_text("[1,2]"), std::invalid_argument);
}

}  // namespace
}  // namespace kvsem
