#pragma once

// Store serialization: a JSON document mapping each key to its version array,
// each version an object {value, writer, readers}. Transaction ids are spelled
// "t0" or "client:seq". The dump is canonical (keys and reader sets sorted),
// so it doubles as the structural-equality fingerprint used to deduplicate
// stores during enumeration.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "kvsem/config.hpp"
#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

inline nlohmann::ordered_json store_to_json(const KvStore& store) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [k, list] : store.data()) {
    nlohmann::ordered_json versions = nlohmann::ordered_json::array();
    for (const auto& ver : list) {
      nlohmann::ordered_json readers = nlohmann::ordered_json::array();
      for (const auto& r : ver.readers) readers.push_back(r.str());
      versions.push_back({{"value", ver.value},
                          {"writer", ver.writer.str()},
                          {"readers", readers}});
    }
    doc[k] = versions;
  }
  return doc;
}

inline KvStore store_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) {
    throw std::invalid_argument("store document must be an object");
  }
  KvStore store;
  for (const auto& [k, versions] : doc.items()) {
    if (!versions.is_array() || versions.empty()) {
      throw std::invalid_argument("key " + k +
                                  " must map to a non-empty version array");
    }
    std::vector<Version> list;
    for (const auto& ver : versions) {
      Version v;
      v.value = ver.at("value").get<Value>();
      v.writer = TxId::parse(ver.at("writer").get<std::string>());
      for (const auto& r : ver.at("readers")) {
        v.readers.insert(TxId::parse(r.get<std::string>()));
      }
      list.push_back(std::move(v));
    }
    store.data()[k] = std::move(list);
  }
  return store;
}

inline std::string store_to_text(const KvStore& store) {
  return store_to_json(store).dump(2) + "\n";
}

inline KvStore store_from_text(const std::string& text) {
  return store_from_json(nlohmann::ordered_json::parse(text));
}

inline KvStore load_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open store file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return store_from_text(buf.str());
}

inline void save_store(const KvStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write store file: " + path);
  out << store_to_text(store);
}

// Canonical single-line form; equal strings iff equal stores.
inline std::string canonical_store_str(const KvStore& store) {
  return store_to_json(store).dump();
}

// --- views, fingerprints, configurations --------------------------------
// Same conventions as stores: objects keyed by key/client, ids as strings.

inline nlohmann::ordered_json view_to_json(const View& u) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [k, idx] : u.data()) {
    doc[k] = nlohmann::ordered_json(idx);
  }
  return doc;
}

inline View view_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) {
    throw std::invalid_argument("view document must be an object");
  }
  View u;
  for (const auto& [k, idx] : doc.items()) {
    std::set<std::size_t> s;
    for (const auto& i : idx) s.insert(i.get<std::size_t>());
    u.set_indices(k, std::move(s));
  }
  return u;
}

inline nlohmann::ordered_json fingerprint_to_json(const Fingerprint& fp) {
  nlohmann::ordered_json ops = nlohmann::ordered_json::array();
  for (const FpOp& op : fp.ops()) {
    ops.push_back({{"op", op.kind == OpKind::Read ? "R" : "W"},
                   {"key", op.key},
                   {"value", op.value}});
  }
  return ops;
}

inline Fingerprint fingerprint_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_array()) {
    throw std::invalid_argument("fingerprint document must be an array");
  }
  Fingerprint fp;
  for (const auto& op : doc) {
    const std::string kind = op.at("op").get<std::string>();
    const Key key = op.at("key").get<std::string>();
    const Value value = op.at("value").get<Value>();
    if (kind == "R") {
      fp.add_read(key, value);
    } else if (kind == "W") {
      fp.add_write(key, value);
    } else {
      throw std::invalid_argument("fingerprint op must be R or W");
    }
  }
  return fp;
}

inline nlohmann::ordered_json config_to_json(const Configuration& conf) {
  nlohmann::ordered_json views = nlohmann::ordered_json::object();
  for (const auto& [cl, u] : conf.views) views[cl] = view_to_json(u);
  return {{"store", store_to_json(conf.store)}, {"views", views}};
}

inline Configuration config_from_json(const nlohmann::ordered_json& doc) {
  Configuration conf;
  conf.store = store_from_json(doc.at("store"));
  for (const auto& [cl, u] : doc.at("views").items()) {
    conf.views[cl] = view_from_json(u);
  }
  return conf;
}

}  // namespace kvsem
