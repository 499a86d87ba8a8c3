#pragma once

// The classic anomaly stores that separate adjacent consistency models: each
// fixture is reachable under every model strictly weaker than the one it
// names and unreachable from the named model upward (along its strengthening
// chain).  The expected matrix is checked against the reachability search,
// giving an end-to-end differential test of every commit test and view-shift
// rule.

#include <map>
#include <string>
#include <vector>

#include "kvsem/exectest.hpp"
#include "kvsem/robustness.hpp"
#include "kvsem/store.hpp"

namespace kvsem {

struct AnomalyFixture {
  std::string name;
  KvStore store;
};

namespace detail {

inline TxId at(const char* cl, int n) { return TxId(cl, n); }

}  // namespace detail

inline std::vector<AnomalyFixture> anomaly_fixtures() {
  using detail::at;
  std::vector<AnomalyFixture> out;

  {  // a session reads version 1, then loses it again
    KvStore s = KvStore::initial({"k"});
    s.data()["k"][0].readers = {at("cl1", 2)};
    s.data()["k"].push_back({1, at("cl2", 1), {at("cl1", 1)}});
    out.push_back({"nonmonotonic-read", s});
  }
  {  // a session increments twice but the second write misses the first
    KvStore s = KvStore::initial({"k"});
    s.data()["k"][0].readers = {at("cl1", 1), at("cl1", 2)};
    s.data()["k"].push_back({1, at("cl1", 1), {}});
    s.data()["k"].push_back({1, at("cl1", 2), {}});
    out.push_back({"forgotten-write", s});
  }
  {  // cl2 sees cl1's third write but not its first
    KvStore s = KvStore::initial({"k1", "k2", "k3"});
    s.data()["k1"][0].readers = {at("cl2", 1)};
    s.data()["k1"].push_back({1, at("cl1", 1), {}});
    s.data()["k2"].push_back({2, at("cl1", 2), {}});
    s.data()["k3"].push_back({3, at("cl1", 3), {at("cl2", 1)}});
    out.push_back({"causal-gap", s});
  }
  {  // two clients increment from the same snapshot
    KvStore s = KvStore::initial({"k"});
    s.data()["k"][0].readers = {at("cl1", 1), at("cl2", 1)};
    s.data()["k"].push_back({1, at("cl1", 1), {}});
    s.data()["k"].push_back({1, at("cl2", 1), {}});
    out.push_back({"lost-update", s});
  }
  {  // cl3 sees a write conflicting with cl1's pair but only half of the pair
    KvStore s = KvStore::initial({"k1", "k2"});
    s.data()["k1"].push_back({1, at("cl1", 1), {}});
    s.data()["k1"].push_back({2, at("cl2", 1), {at("cl3", 1)}});
    s.data()["k2"][0].readers = {at("cl3", 1)};
    s.data()["k2"].push_back({10, at("cl1", 1), {}});
    out.push_back({"fractured-read", s});
  }
  {  // two observers disagree about the order of independent writes
    KvStore s = KvStore::initial({"k1", "k2"});
    s.data()["k1"][0].readers = {at("cl2", 2)};
    s.data()["k1"].push_back({1, at("cl3", 1), {at("cl1", 1)}});
    s.data()["k2"][0].readers = {at("cl1", 2)};
    s.data()["k2"].push_back({1, at("cl4", 1), {at("cl2", 1)}});
    out.push_back({"long-fork", s});
  }
  {  // cl4 sees a write whose author overlooked a conflicting chain
    KvStore s = KvStore::initial({"k1", "k2"});
    s.data()["k1"][0].readers = {at("cl4", 1)};
    s.data()["k1"].push_back({1, at("cl1", 1), {}});
    s.data()["k1"].push_back({2, at("cl2", 1), {}});
    s.data()["k2"][0].readers = {at("cl2", 1)};
    s.data()["k2"].push_back({3, at("cl3", 1), {at("cl4", 1)}});
    out.push_back({"conflict-fork", s});
  }
  {  // each client updates one key having read the other's untouched key
    KvStore s = KvStore::initial({"k1", "k2"});
    s.data()["k1"][0].readers = {at("cl2", 1)};
    s.data()["k1"].push_back({1, at("cl1", 1), {}});
    s.data()["k2"][0].readers = {at("cl1", 1)};
    s.data()["k2"].push_back({2, at("cl2", 1), {}});
    out.push_back({"write-skew", s});
  }
  return out;
}

// fixture name -> model -> reachable?
using AnomalyMatrix = std::map<std::string, std::map<Model, bool>>;

inline AnomalyMatrix expected_anomaly_matrix() {
  auto row = [](bool top, bool mr, bool ryw, bool mw, bool wfr, bool cc,
                bool ua, bool psi, bool cp, bool si, bool wsi, bool ser) {
    return std::map<Model, bool>{
        {Model::TOP, top}, {Model::MR, mr},   {Model::RYW, ryw},
        {Model::MW, mw},   {Model::WFR, wfr}, {Model::CC, cc},
        {Model::UA, ua},   {Model::PSI, psi}, {Model::CP, cp},
        {Model::SI, si},   {Model::WSI, wsi}, {Model::SER, ser}};
  };
  AnomalyMatrix m;
  //                          TOP    MR     RYW    MW     WFR    CC     UA     PSI    CP     SI     WSI    SER
  m["nonmonotonic-read"] =
      row(true, false, true, true, true, false, true, false, false, false,
          false, false);
  m["forgotten-write"] =
      row(true, true, false, true, true, false, false, false, false, false,
          false, false);
  m["causal-gap"] =
      row(true, true, true, true, true, false, true, false, false, false,
          false, false);
  m["lost-update"] =
      row(true, true, true, true, true, true, false, false, true, false,
          false, false);
  m["fractured-read"] =
      row(true, true, true, true, true, true, true, false, false, false,
          false, false);
  m["long-fork"] =
      row(true, true, true, true, true, true, true, true, false, false,
          false, false);
  m["conflict-fork"] =
      row(true, true, true, true, true, true, true, true, true, false, true,
          false);
  m["write-skew"] =
      row(true, true, true, true, true, true, true, true, true, true, true,
          false);
  return m;
}

inline AnomalyMatrix anomaly_matrix() {
  AnomalyMatrix m;
  for (const AnomalyFixture& fx : anomaly_fixtures()) {
    for (Model model : all_models()) {
      m[fx.name][model] = store_reachable(model, fx.store);
    }
  }
  return m;
}

inline bool anomaly_matrix_matches() {
  return anomaly_matrix() == expected_anomaly_matrix();
}

}  // namespace kvsem
