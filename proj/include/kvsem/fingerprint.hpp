#pragma once

// Transaction fingerprints: the read/write effect set a transaction commits
// atomically. A fingerprint holds at most one read and at most one write per
// key. The combine operator implements the internal bookkeeping of a running
// transaction: only the first read of a key is recorded (and none at all once
// the key has been written, since later reads see the transaction's own
// write), while a later write replaces an earlier one.

#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "kvsem/txid.hpp"

namespace kvsem {

enum class OpKind { Read, Write };

struct FpOp {
  OpKind kind;
  Key key;
  Value value;

  auto operator<=>(const FpOp&) const = default;

  std::string str() const {
    std::ostringstream out;
    out << '(' << (kind == OpKind::Read ? 'R' : 'W') << ',' << key << ','
        << value << ')';
    return out.str();
  }
};

class Fingerprint {
 public:
  Fingerprint() = default;

  // F ⋖ o. Read: recorded only if the key has no entry yet (neither read nor
  // write). Write: replaces any previous write to the key. Absent op: no-op.
  Fingerprint combine(const std::optional<FpOp>& op) const {
    Fingerprint next = *this;
    if (!op) return next;
    if (op->kind == OpKind::Read) {
      if (!reads_.count(op->key) && !writes_.count(op->key)) {
        next.reads_.emplace(op->key, op->value);
      }
    } else {
      next.writes_[op->key] = op->value;
    }
    return next;
  }

  void add_read(const Key& k, Value v) { reads_.emplace(k, v); }
  void add_write(const Key& k, Value v) { writes_[k] = v; }

  std::optional<Value> read_of(const Key& k) const {
    auto it = reads_.find(k);
    if (it == reads_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<Value> write_of(const Key& k) const {
    auto it = writes_.find(k);
    if (it == writes_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<Key, Value>& reads() const { return reads_; }
  const std::map<Key, Value>& writes() const { return writes_; }

  bool empty() const { return reads_.empty() && writes_.empty(); }
  bool is_read_only() const { return writes_.empty(); }

  // All operations, reads before writes, keys sorted.
  std::vector<FpOp> ops() const {
    std::vector<FpOp> out;
    for (const auto& [k, v] : reads_) out.push_back({OpKind::Read, k, v});
    for (const auto& [k, v] : writes_) out.push_back({OpKind::Write, k, v});
    return out;
  }

  auto operator<=>(const Fingerprint&) const = default;

  std::string str() const {
    std::ostringstream out;
    out << '{';
    bool first = true;
    for (const auto& op : ops()) {
      if (!first) out << ',';
      out << op.str();
      first = false;
    }
    out << '}';
    return out.str();
  }

 private:
  std::map<Key, Value> reads_;
  std::map<Key, Value> writes_;
};

inline std::ostream& operator<<(std::ostream& os, const Fingerprint& fp) {
  return os << fp.str();
}

}  // namespace kvsem
