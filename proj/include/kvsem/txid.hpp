#pragma once

// Transaction identifiers and the session order they induce.
//
// A TxId is either the distinguished initial id t0 (written "t0") or a
// (client, sequence) pair with sequence >= 1 (written "client:seq").
// Session order relates two ids of the same client by increasing sequence
// number; t0 belongs to no session.

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kvsem {

using Key = std::string;
using Value = long long;
using ClientId = std::string;

// All keys start at this value in the initial store.
inline constexpr Value kInitialValue = 0;

class TxId {
 public:
  // Default-constructs the initial id t0.
  TxId() = default;

  TxId(ClientId client, int seq) : client_(std::move(client)), seq_(seq) {
    if (client_.empty() || seq_ < 1) {
      throw std::invalid_argument("transaction id needs a client and seq >= 1");
    }
  }

  static TxId initial() { return TxId{}; }

  bool is_initial() const { return client_.empty(); }
  const ClientId& client() const { return client_; }
  int seq() const { return seq_; }

  // t0 orders first; client ids then break ties lexicographically.
  auto operator<=>(const TxId&) const = default;

  std::string str() const {
    return is_initial() ? "t0" : client_ + ":" + std::to_string(seq_);
  }

  static TxId parse(const std::string& text) {
    if (text == "t0") return initial();
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
      throw std::invalid_argument("bad transaction id: " + text);
    }
    return TxId(text.substr(0, colon), std::stoi(text.substr(colon + 1)));
  }

 private:
  ClientId client_;
  int seq_ = 0;
};

// Session order: (cl,n) precedes (cl,m) iff n < m. t0 is unrelated.
inline bool session_ordered(const TxId& a, const TxId& b) {
  return !a.is_initial() && !b.is_initial() && a.client() == b.client() &&
         a.seq() < b.seq();
}

}  // namespace kvsem
