// Transaction and command mini-language.  Expressions evaluate over a
// client-local stack; transaction bodies read and write a private snapshot
// while accumulating a fingerprint; sequential commands wrap bodies into
// atomic blocks.  Scenario files use a small s-expression grammar, parsed
// and printed here.
#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "kvsem/fingerprint.hpp"
#include "kvsem/store.hpp"
#include "kvsem/view.hpp"

namespace kvsem {

// ---------------------------------------------------------------------------
// Client-local stacks.  Every variable is defined; unset variables read 0.

using Stack = std::map<std::string, Value>;

inline Value stack_get(const Stack& s, const std::string& var) {
  auto it = s.find(var);
  return it == s.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// Expressions: integer literals, variables, and binary operators.
// Comparisons evaluate to 1 (true) or 0 (false).

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Lit, Var, Add, Sub, Eq, Lt, Ne };

  Kind kind = Kind::Lit;
  Value lit = 0;        // Kind::Lit
  std::string var;      // Kind::Var
  ExprPtr lhs, rhs;     // binary operators

  static ExprPtr literal(Value v) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Lit;
    e->lit = v;
    return e;
  }
  static ExprPtr variable(std::string name) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Var;
    e->var = std::move(name);
    return e;
  }
  static ExprPtr binary(Kind k, ExprPtr a, ExprPtr b) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
  }
  static ExprPtr add(ExprPtr a, ExprPtr b) {
    return binary(Kind::Add, std::move(a), std::move(b));
  }
  static ExprPtr sub(ExprPtr a, ExprPtr b) {
    return binary(Kind::Sub, std::move(a), std::move(b));
  }
  static ExprPtr eq(ExprPtr a, ExprPtr b) {
    return binary(Kind::Eq, std::move(a), std::move(b));
  }
  static ExprPtr lt(ExprPtr a, ExprPtr b) {
    return binary(Kind::Lt, std::move(a), std::move(b));
  }
  static ExprPtr ne(ExprPtr a, ExprPtr b) {
    return binary(Kind::Ne, std::move(a), std::move(b));
  }
};

inline Value eval_expr(const Stack& s, const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::Lit:
      return e->lit;
    case Expr::Kind::Var:
      return stack_get(s, e->var);
    case Expr::Kind::Add:
      return eval_expr(s, e->lhs) + eval_expr(s, e->rhs);
    case Expr::Kind::Sub:
      return eval_expr(s, e->lhs) - eval_expr(s, e->rhs);
    case Expr::Kind::Eq:
      return eval_expr(s, e->lhs) == eval_expr(s, e->rhs) ? 1 : 0;
    case Expr::Kind::Lt:
      return eval_expr(s, e->lhs) < eval_expr(s, e->rhs) ? 1 : 0;
    case Expr::Kind::Ne:
      return eval_expr(s, e->lhs) != eval_expr(s, e->rhs) ? 1 : 0;
  }
  throw std::logic_error("unreachable expression kind");
}

// ---------------------------------------------------------------------------
// Key positions accept either a literal key or a variable whose current
// value names the key.  Integer values map to their decimal spelling, so
// computed keys (say, account slots 2n and 2n+1) stay expressible without
// arithmetic over key strings.

struct KeyExpr {
  bool is_literal = true;
  Key literal;
  std::string var;

  static KeyExpr lit(Key k) {
    KeyExpr ke;
    ke.is_literal = true;
    ke.literal = std::move(k);
    return ke;
  }
  static KeyExpr of_var(std::string v) {
    KeyExpr ke;
    ke.is_literal = false;
    ke.var = std::move(v);
    return ke;
  }
};

inline Key eval_key(const Stack& s, const KeyExpr& ke) {
  return ke.is_literal ? ke.literal : std::to_string(stack_get(s, ke.var));
}

// ---------------------------------------------------------------------------
// Transaction bodies.  lookup and mutate exist only here, never at the
// program level, so atomicity is enforced by construction.

struct TxnCmd;
using TxnPtr = std::shared_ptr<const TxnCmd>;

struct TxnCmd {
  enum class Kind { Skip, Assign, Assume, Lookup, Mutate, Seq, Choice, Iter };

  Kind kind = Kind::Skip;
  std::string var;     // Assign / Lookup target
  ExprPtr expr;        // Assign value, Assume guard, Mutate value
  KeyExpr key;         // Lookup / Mutate key
  TxnPtr left, right;  // Seq / Choice children; Iter body in left

  static TxnPtr skip() {
    static const TxnPtr instance = std::make_shared<TxnCmd>();
    return instance;
  }
  static TxnPtr assign(std::string var, ExprPtr e) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Assign;
    t->var = std::move(var);
    t->expr = std::move(e);
    return t;
  }
  static TxnPtr assume(ExprPtr e) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Assume;
    t->expr = std::move(e);
    return t;
  }
  static TxnPtr lookup(std::string var, KeyExpr k) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Lookup;
    t->var = std::move(var);
    t->key = std::move(k);
    return t;
  }
  static TxnPtr mutate(KeyExpr k, ExprPtr v) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Mutate;
    t->key = std::move(k);
    t->expr = std::move(v);
    return t;
  }
  // skip;T is folded to T so stepping a Seq always makes progress.
  static TxnPtr seq(TxnPtr a, TxnPtr b) {
    if (a->kind == Kind::Skip) return b;
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Seq;
    t->left = std::move(a);
    t->right = std::move(b);
    return t;
  }
  static TxnPtr choice(TxnPtr a, TxnPtr b) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Choice;
    t->left = std::move(a);
    t->right = std::move(b);
    return t;
  }
  static TxnPtr iterate(TxnPtr body) {
    auto t = std::make_shared<TxnCmd>();
    t->kind = Kind::Iter;
    t->left = std::move(body);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Sequential commands: what a client runs between and around transactions.

struct Cmd;
using CmdPtr = std::shared_ptr<const Cmd>;

struct Cmd {
  enum class Kind { Skip, Assign, Assume, Atomic, Seq, Choice, Iter };

  Kind kind = Kind::Skip;
  std::string var;     // Assign target
  ExprPtr expr;        // Assign value, Assume guard
  TxnPtr txn;          // Atomic body
  CmdPtr left, right;  // Seq / Choice children; Iter body in left

  static CmdPtr skip() {
    static const CmdPtr instance = std::make_shared<Cmd>();
    return instance;
  }
  static CmdPtr assign(std::string var, ExprPtr e) {
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Assign;
    c->var = std::move(var);
    c->expr = std::move(e);
    return c;
  }
  static CmdPtr assume(ExprPtr e) {
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Assume;
    c->expr = std::move(e);
    return c;
  }
  static CmdPtr atomic(TxnPtr body) {
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Atomic;
    c->txn = std::move(body);
    return c;
  }
  static CmdPtr seq(CmdPtr a, CmdPtr b) {
    if (a->kind == Kind::Skip) return b;
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Seq;
    c->left = std::move(a);
    c->right = std::move(b);
    return c;
  }
  static CmdPtr choice(CmdPtr a, CmdPtr b) {
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Choice;
    c->left = std::move(a);
    c->right = std::move(b);
    return c;
  }
  static CmdPtr iterate(CmdPtr body) {
    auto c = std::make_shared<Cmd>();
    c->kind = Kind::Iter;
    c->left = std::move(body);
    return c;
  }
};

// A program assigns one command to each client; `keys` optionally declares
// the key universe (needed when keys are computed from variables).
struct Program {
  std::set<Key> keys;
  std::map<ClientId, CmdPtr> threads;
};

// ---------------------------------------------------------------------------
// Printers.  Output is the canonical form of the scenario grammar; parsers
// below accept it back unchanged (round-trip tested).

inline std::string expr_str(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::Lit:
      return std::to_string(e->lit);
    case Expr::Kind::Var:
      return e->var;
    case Expr::Kind::Add:
      return "(+ " + expr_str(e->lhs) + " " + expr_str(e->rhs) + ")";
    case Expr::Kind::Sub:
      return "(- " + expr_str(e->lhs) + " " + expr_str(e->rhs) + ")";
    case Expr::Kind::Eq:
      return "(= " + expr_str(e->lhs) + " " + expr_str(e->rhs) + ")";
    case Expr::Kind::Lt:
      return "(< " + expr_str(e->lhs) + " " + expr_str(e->rhs) + ")";
    case Expr::Kind::Ne:
      return "(!= " + expr_str(e->lhs) + " " + expr_str(e->rhs) + ")";
  }
  throw std::logic_error("unreachable expression kind");
}

inline std::string key_str(const KeyExpr& k) {
  return k.is_literal ? "\"" + k.literal + "\"" : k.var;
}

inline std::string txn_str(const TxnPtr& t) {
  switch (t->kind) {
    case TxnCmd::Kind::Skip:
      return "skip";
    case TxnCmd::Kind::Assign:
      return "(assign " + t->var + " " + expr_str(t->expr) + ")";
    case TxnCmd::Kind::Assume:
      return "(assume " + expr_str(t->expr) + ")";
    case TxnCmd::Kind::Lookup:
      return "(lookup " + t->var + " " + key_str(t->key) + ")";
    case TxnCmd::Kind::Mutate:
      return "(mutate " + key_str(t->key) + " " + expr_str(t->expr) + ")";
    case TxnCmd::Kind::Seq:
      return "(seq " + txn_str(t->left) + " " + txn_str(t->right) + ")";
    case TxnCmd::Kind::Choice:
      return "(choice " + txn_str(t->left) + " " + txn_str(t->right) + ")";
    case TxnCmd::Kind::Iter:
      return "(iter " + txn_str(t->left) + ")";
  }
  throw std::logic_error("unreachable transaction kind");
}

inline std::string cmd_str(const CmdPtr& c) {
  switch (c->kind) {
    case Cmd::Kind::Skip:
      return "skip";
    case Cmd::Kind::Assign:
      return "(assign " + c->var + " " + expr_str(c->expr) + ")";
    case Cmd::Kind::Assume:
      return "(assume " + expr_str(c->expr) + ")";
    case Cmd::Kind::Atomic:
      return "(atomic " + txn_str(c->txn) + ")";
    case Cmd::Kind::Seq:
      return "(seq " + cmd_str(c->left) + " " + cmd_str(c->right) + ")";
    case Cmd::Kind::Choice:
      return "(choice " + cmd_str(c->left) + " " + cmd_str(c->right) + ")";
    case Cmd::Kind::Iter:
      return "(iter " + cmd_str(c->left) + ")";
  }
  throw std::logic_error("unreachable command kind");
}

inline std::string program_str(const Program& p) {
  std::string out = "(program";
  if (!p.keys.empty()) {
    out += "\n  (keys";
    for (const Key& k : p.keys) out += " \"" + k + "\"";
    out += ")";
  }
  for (const auto& [client, c] : p.threads) {
    out += "\n  (client " + client + " " + cmd_str(c) + ")";
  }
  out += ")\n";
  return out;
}

// ---------------------------------------------------------------------------
// S-expression reader.  Atoms are integers, symbols, or double-quoted
// strings; ';' starts a line comment.

namespace detail {

struct SExpr {
  enum class Kind { List, Symbol, Int, String };

  Kind kind = Kind::List;
  std::string text;  // Symbol / String
  Value num = 0;     // Int
  std::vector<SExpr> items;
};

class SExprReader {
 public:
  explicit SExprReader(std::string_view src) : src_(src) {}

  SExpr read() {
    skip_space();
    if (at_end()) throw error("unexpected end of input");
    char c = src_[pos_];
    if (c == '(') return read_list();
    if (c == ')') throw error("unexpected ')'");
    if (c == '"') return read_string();
    return read_atom();
  }

  void expect_end() {
    skip_space();
    if (!at_end()) throw error("trailing input after expression");
  }

 private:
  bool at_end() const { return pos_ >= src_.size(); }

  void skip_space() {
    while (!at_end()) {
      char c = src_[pos_];
      if (c == ';') {
        while (!at_end() && src_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  SExpr read_list() {
    ++pos_;  // '('
    SExpr list;
    list.kind = SExpr::Kind::List;
    while (true) {
      skip_space();
      if (at_end()) throw error("unterminated list");
      if (src_[pos_] == ')') {
        ++pos_;
        return list;
      }
      list.items.push_back(read());
    }
  }

  SExpr read_string() {
    ++pos_;  // '"'
    SExpr s;
    s.kind = SExpr::Kind::String;
    while (!at_end() && src_[pos_] != '"') s.text.push_back(src_[pos_++]);
    if (at_end()) throw error("unterminated string");
    ++pos_;  // closing '"'
    return s;
  }

  SExpr read_atom() {
    std::string text;
    while (!at_end()) {
      char c = src_[pos_];
      if (c == '(' || c == ')' || c == '"' || c == ';' || c == ' ' ||
          c == '\t' || c == '\n' || c == '\r') {
        break;
      }
      text.push_back(c);
      ++pos_;
    }
    bool numeric = !text.empty() &&
                   text.find_first_not_of("0123456789", text[0] == '-' ? 1 : 0) ==
                       std::string::npos &&
                   text != "-";
    SExpr a;
    if (numeric) {
      a.kind = SExpr::Kind::Int;
      a.num = std::stoll(text);
    } else {
      a.kind = SExpr::Kind::Symbol;
      a.text = std::move(text);
    }
    return a;
  }

  std::runtime_error error(const std::string& what) const {
    return std::runtime_error("scenario parse error at offset " +
                              std::to_string(pos_) + ": " + what);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

inline bool is_symbol(const SExpr& e, const char* name) {
  return e.kind == SExpr::Kind::Symbol && e.text == name;
}

inline std::runtime_error form_error(const std::string& what) {
  return std::runtime_error("scenario parse error: " + what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AST builders from s-expressions.

inline ExprPtr expr_of_sexpr(const detail::SExpr& e) {
  using detail::SExpr;
  switch (e.kind) {
    case SExpr::Kind::Int:
      return Expr::literal(e.num);
    case SExpr::Kind::Symbol:
      return Expr::variable(e.text);
    case SExpr::Kind::String:
      throw detail::form_error("strings are keys, not expression values");
    case SExpr::Kind::List:
      break;
  }
  if (e.items.size() != 3 || e.items[0].kind != SExpr::Kind::Symbol) {
    throw detail::form_error("expected (op lhs rhs) expression");
  }
  const std::string& op = e.items[0].text;
  ExprPtr a = expr_of_sexpr(e.items[1]);
  ExprPtr b = expr_of_sexpr(e.items[2]);
  if (op == "+") return Expr::add(a, b);
  if (op == "-") return Expr::sub(a, b);
  if (op == "=") return Expr::eq(a, b);
  if (op == "<") return Expr::lt(a, b);
  if (op == "!=") return Expr::ne(a, b);
  throw detail::form_error("unknown expression operator: " + op);
}

inline KeyExpr key_of_sexpr(const detail::SExpr& e) {
  using detail::SExpr;
  if (e.kind == SExpr::Kind::String) return KeyExpr::lit(e.text);
  if (e.kind == SExpr::Kind::Symbol) return KeyExpr::of_var(e.text);
  throw detail::form_error(
      "key expressions are literal keys (\"k\") or variables holding keys");
}

inline TxnPtr txn_of_sexpr(const detail::SExpr& e) {
  using detail::SExpr;
  if (detail::is_symbol(e, "skip")) return TxnCmd::skip();
  if (e.kind != SExpr::Kind::List || e.items.empty() ||
      e.items[0].kind != SExpr::Kind::Symbol) {
    throw detail::form_error("expected a transaction command form");
  }
  const std::string& head = e.items[0].text;
  const auto args = e.items.size() - 1;
  if (head == "assign") {
    if (args != 2 || e.items[1].kind != SExpr::Kind::Symbol)
      throw detail::form_error("assign needs a variable and an expression");
    return TxnCmd::assign(e.items[1].text, expr_of_sexpr(e.items[2]));
  }
  if (head == "assume") {
    if (args != 1) throw detail::form_error("assume needs one guard");
    return TxnCmd::assume(expr_of_sexpr(e.items[1]));
  }
  if (head == "lookup") {
    if (args != 2 || e.items[1].kind != SExpr::Kind::Symbol)
      throw detail::form_error("lookup needs a variable and a key");
    return TxnCmd::lookup(e.items[1].text, key_of_sexpr(e.items[2]));
  }
  if (head == "mutate") {
    if (args != 2) throw detail::form_error("mutate needs a key and a value");
    return TxnCmd::mutate(key_of_sexpr(e.items[1]), expr_of_sexpr(e.items[2]));
  }
  if (head == "seq" || head == "choice") {
    if (args < 2) throw detail::form_error(head + " needs at least two commands");
    TxnPtr acc = txn_of_sexpr(e.items.back());
    for (std::size_t i = e.items.size() - 1; i-- > 1;) {
      TxnPtr item = txn_of_sexpr(e.items[i]);
      acc = head == "seq" ? TxnCmd::seq(item, acc) : TxnCmd::choice(item, acc);
    }
    return acc;
  }
  if (head == "iter") {
    if (args != 1) throw detail::form_error("iter needs one body");
    return TxnCmd::iterate(txn_of_sexpr(e.items[1]));
  }
  throw detail::form_error("unknown transaction command: " + head);
}

inline CmdPtr cmd_of_sexpr(const detail::SExpr& e) {
  using detail::SExpr;
  if (detail::is_symbol(e, "skip")) return Cmd::skip();
  if (e.kind != SExpr::Kind::List || e.items.empty() ||
      e.items[0].kind != SExpr::Kind::Symbol) {
    throw detail::form_error("expected a command form");
  }
  const std::string& head = e.items[0].text;
  const auto args = e.items.size() - 1;
  if (head == "assign") {
    if (args != 2 || e.items[1].kind != SExpr::Kind::Symbol)
      throw detail::form_error("assign needs a variable and an expression");
    return Cmd::assign(e.items[1].text, expr_of_sexpr(e.items[2]));
  }
  if (head == "assume") {
    if (args != 1) throw detail::form_error("assume needs one guard");
    return Cmd::assume(expr_of_sexpr(e.items[1]));
  }
  if (head == "atomic") {
    if (args != 1) throw detail::form_error("atomic needs one transaction body");
    return Cmd::atomic(txn_of_sexpr(e.items[1]));
  }
  if (head == "seq" || head == "choice") {
    if (args < 2) throw detail::form_error(head + " needs at least two commands");
    CmdPtr acc = cmd_of_sexpr(e.items.back());
    for (std::size_t i = e.items.size() - 1; i-- > 1;) {
      CmdPtr item = cmd_of_sexpr(e.items[i]);
      acc = head == "seq" ? Cmd::seq(item, acc) : Cmd::choice(item, acc);
    }
    return acc;
  }
  if (head == "iter") {
    if (args != 1) throw detail::form_error("iter needs one body");
    return Cmd::iterate(cmd_of_sexpr(e.items[1]));
  }
  if (head == "lookup" || head == "mutate") {
    throw detail::form_error(head + " is only valid inside (atomic ...)");
  }
  throw detail::form_error("unknown command: " + head);
}

inline Program program_of_sexpr(const detail::SExpr& e) {
  using detail::SExpr;
  if (e.kind != SExpr::Kind::List || e.items.empty() ||
      !detail::is_symbol(e.items[0], "program")) {
    throw detail::form_error("expected (program (client NAME CMD) ...)");
  }
  Program p;
  for (std::size_t i = 1; i < e.items.size(); ++i) {
    const SExpr& entry = e.items[i];
    if (entry.kind == SExpr::Kind::List && !entry.items.empty() &&
        detail::is_symbol(entry.items[0], "keys")) {
      for (std::size_t j = 1; j < entry.items.size(); ++j) {
        if (entry.items[j].kind != SExpr::Kind::String) {
          throw detail::form_error("expected (keys \"k1\" \"k2\" ...)");
        }
        p.keys.insert(entry.items[j].text);
      }
      continue;
    }
    if (entry.kind != SExpr::Kind::List || entry.items.size() != 3 ||
        !detail::is_symbol(entry.items[0], "client") ||
        entry.items[1].kind != SExpr::Kind::Symbol) {
      throw detail::form_error("expected (client NAME CMD)");
    }
    const std::string& name = entry.items[1].text;
    if (p.threads.count(name)) throw detail::form_error("duplicate client: " + name);
    p.threads[name] = cmd_of_sexpr(entry.items[2]);
  }
  return p;
}

inline ExprPtr parse_expr(std::string_view text) {
  detail::SExprReader r(text);
  ExprPtr e = expr_of_sexpr(r.read());
  r.expect_end();
  return e;
}

inline TxnPtr parse_txn(std::string_view text) {
  detail::SExprReader r(text);
  TxnPtr t = txn_of_sexpr(r.read());
  r.expect_end();
  return t;
}

inline CmdPtr parse_cmd(std::string_view text) {
  detail::SExprReader r(text);
  CmdPtr c = cmd_of_sexpr(r.read());
  r.expect_end();
  return c;
}

inline Program parse_program(std::string_view text) {
  detail::SExprReader r(text);
  Program p = program_of_sexpr(r.read());
  r.expect_end();
  return p;
}

inline Program load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open program file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_program(buf.str());
}

// Keys mentioned literally in a program.  Used as the default key universe
// when a program file has no (keys ...) declaration; programs that compute
// keys from variables must declare theirs explicitly.
inline void collect_literal_keys(const TxnPtr& t, std::set<Key>& out) {
  if (!t) return;
  if ((t->kind == TxnCmd::Kind::Lookup || t->kind == TxnCmd::Kind::Mutate) &&
      t->key.is_literal) {
    out.insert(t->key.literal);
  }
  collect_literal_keys(t->left, out);
  collect_literal_keys(t->right, out);
}

inline void collect_literal_keys(const CmdPtr& c, std::set<Key>& out) {
  if (!c) return;
  if (c->kind == Cmd::Kind::Atomic) collect_literal_keys(c->txn, out);
  collect_literal_keys(c->left, out);
  collect_literal_keys(c->right, out);
}

inline std::set<Key> program_keys(const Program& p) {
  if (!p.keys.empty()) return p.keys;
  std::set<Key> out;
  for (const auto& [client, c] : p.threads) collect_literal_keys(c, out);
  return out;
}

// ---------------------------------------------------------------------------
// Transactional small-step semantics.  A transaction runs against a private
// snapshot: lookup reads it, mutate updates it (so later lookups of the same
// key observe the write), and the fingerprint records the first read and the
// last write per key.

struct TxnState {
  Stack stack;
  Snapshot snap;
  Fingerprint fp;
};

struct TxnStep {
  TxnState state;
  TxnPtr rest;
  bool unfolded = false;  // this step unrolled an iterate
};

inline std::vector<TxnStep> step_txn(const TxnState& st, const TxnPtr& t) {
  switch (t->kind) {
    case TxnCmd::Kind::Skip:
      return {};
    case TxnCmd::Kind::Assign: {
      TxnState n = st;
      n.stack[t->var] = eval_expr(st.stack, t->expr);
      return {{std::move(n), TxnCmd::skip(), false}};
    }
    case TxnCmd::Kind::Assume: {
      if (eval_expr(st.stack, t->expr) == 0) return {};
      return {{st, TxnCmd::skip(), false}};
    }
    case TxnCmd::Kind::Lookup: {
      Key k = eval_key(st.stack, t->key);
      auto it = st.snap.find(k);
      if (it == st.snap.end()) throw std::invalid_argument("unknown key: " + k);
      TxnState n = st;
      n.stack[t->var] = it->second;
      n.fp = n.fp.combine(FpOp{OpKind::Read, k, it->second});
      return {{std::move(n), TxnCmd::skip(), false}};
    }
    case TxnCmd::Kind::Mutate: {
      Key k = eval_key(st.stack, t->key);
      if (!st.snap.count(k)) throw std::invalid_argument("unknown key: " + k);
      Value v = eval_expr(st.stack, t->expr);
      TxnState n = st;
      n.snap[k] = v;
      n.fp = n.fp.combine(FpOp{OpKind::Write, k, v});
      return {{std::move(n), TxnCmd::skip(), false}};
    }
    case TxnCmd::Kind::Seq: {
      if (t->left->kind == TxnCmd::Kind::Skip) return step_txn(st, t->right);
      std::vector<TxnStep> steps = step_txn(st, t->left);
      for (TxnStep& s : steps) s.rest = TxnCmd::seq(s.rest, t->right);
      return steps;
    }
    case TxnCmd::Kind::Choice:
      return {{st, t->left, false}, {st, t->right, false}};
    case TxnCmd::Kind::Iter:
      return {{st, TxnCmd::skip(), false},
              {st, TxnCmd::seq(t->left, t), true}};
  }
  throw std::logic_error("unreachable transaction kind");
}

// ---------------------------------------------------------------------------
// All (final stack, fingerprint) pairs a body can produce from a snapshot.
// Loops may unroll at most `unfold_bound` times along any single execution
// path; cutting a path marks the result partial instead of silently
// truncating it.

struct FingerprintSet {
  std::set<std::pair<Stack, Fingerprint>> results;
  bool partial = false;
};

inline FingerprintSet final_fingerprints(const TxnPtr& t, const Stack& s,
                                         const Snapshot& snap,
                                         int unfold_bound = 8) {
  using Cfg = std::tuple<Stack, Snapshot, Fingerprint, std::string>;
  FingerprintSet out;
  // Track the largest remaining unfold budget per configuration: anything
  // reachable with a smaller budget is reachable with a larger one.
  std::map<Cfg, int> best;
  std::vector<std::tuple<TxnState, TxnPtr, int>> work;
  TxnState init{s, snap, Fingerprint{}};
  best[{s, snap, Fingerprint{}, txn_str(t)}] = unfold_bound;
  work.emplace_back(std::move(init), t, unfold_bound);
  while (!work.empty()) {
    auto [st, rest, budget] = std::move(work.back());
    work.pop_back();
    if (rest->kind == TxnCmd::Kind::Skip) {
      out.results.emplace(st.stack, st.fp);
      continue;
    }
    for (TxnStep& step : step_txn(st, rest)) {
      int next_budget = budget;
      if (step.unfolded) {
        if (budget == 0) {
          out.partial = true;
          continue;
        }
        next_budget = budget - 1;
      }
      Cfg cfg{step.state.stack, step.state.snap, step.state.fp,
              txn_str(step.rest)};
      auto it = best.find(cfg);
      if (it != best.end() && it->second >= next_budget) continue;
      best[cfg] = next_budget;
      work.emplace_back(std::move(step.state), std::move(step.rest),
                        next_budget);
    }
  }
  return out;
}

}  // namespace kvsem
