#pragma once

/// @file expr.hpp
/// Hash-consed expression trees. Structurally equal expressions are the same
/// node, so equality, hashing and memo lookups are pointer operations.

#include "qmask/domain.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace qmask {

enum class VarClass : std::uint8_t { Public, Secret, Random, Internal };

inline const char* class_name(VarClass c) {
    switch (c) {
    case VarClass::Public: return "public";
    case VarClass::Secret: return "secret";
    case VarClass::Random: return "random";
    case VarClass::Internal: return "internal";
    }
    return "?";
}

enum class ExprKind : std::uint8_t { Const, Var, Unary, Binary };

namespace detail {

struct Node {
    ExprKind kind = ExprKind::Const;
    Op op = Op::Xor;
    VarClass cls = VarClass::Public;
    Value value = 0;
    std::string name;
    const Node* lhs = nullptr;
    const Node* rhs = nullptr;

    std::size_t hash = 0;
    std::uint64_t id = 0;
    /// Number of nodes of the expanded tree, saturating.
    std::uint64_t tree_size = 1;
    /// Distinct variable leaves, ordered by name.
    std::vector<const Node*> vars;
};

inline std::size_t mix(std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

struct NodeKeyHash {
    std::size_t operator()(const Node* n) const noexcept { return n->hash; }
};

struct NodeKeyEq {
    bool operator()(const Node* a, const Node* b) const noexcept {
        return a->kind == b->kind && a->op == b->op && a->cls == b->cls && a->value == b->value &&
               a->lhs == b->lhs && a->rhs == b->rhs && a->name == b->name;
    }
};

/// Process-wide intern table. Nodes are never freed; programs are small and
/// analysis runs are short-lived.
class NodeStore {
public:
    static NodeStore& instance() {
        static NodeStore store;
        return store;
    }

    const Node* intern(Node&& proto) {
        proto.hash = structural_hash(proto);
        std::lock_guard<std::mutex> lock(mutex_);
        if (auto it = table_.find(&proto); it != table_.end()) return *it;
        proto.id = nodes_.size();
        finish(proto);
        nodes_.push_back(std::move(proto));
        Node* n = &nodes_.back();
        if (n->kind == ExprKind::Var) n->vars = {n};
        table_.insert(n);
        return n;
    }

private:
    static std::size_t structural_hash(const Node& n) {
        std::size_t h = static_cast<std::size_t>(n.kind);
        h = mix(h, static_cast<std::size_t>(n.op));
        h = mix(h, static_cast<std::size_t>(n.cls));
        h = mix(h, n.value);
        h = mix(h, std::hash<std::string>{}(n.name));
        h = mix(h, n.lhs ? n.lhs->hash : 0);
        h = mix(h, n.rhs ? n.rhs->hash : 0);
        return h;
    }

    static void finish(Node& n) {
        constexpr std::uint64_t cap = UINT64_MAX / 4;
        auto by_name = [](const Node* a, const Node* b) { return a->name < b->name; };
        switch (n.kind) {
        case ExprKind::Const: break;
        case ExprKind::Var: break;
        case ExprKind::Unary:
            n.tree_size = std::min(cap, n.lhs->tree_size + 1);
            n.vars = n.lhs->vars;
            break;
        case ExprKind::Binary:
            n.tree_size = std::min(cap, n.lhs->tree_size + n.rhs->tree_size + 1);
            std::set_union(n.lhs->vars.begin(), n.lhs->vars.end(), n.rhs->vars.begin(), n.rhs->vars.end(),
                           std::back_inserter(n.vars), by_name);
            break;
        }
    }

    std::mutex mutex_;
    std::deque<Node> nodes_;
    std::unordered_set<const Node*, NodeKeyHash, NodeKeyEq> table_;
};

} // namespace detail

/// Handle to an immutable, interned expression node.
class Expr {
public:
    Expr() = default;

    static Expr constant(Value v) {
        detail::Node n;
        n.kind = ExprKind::Const;
        n.value = v;
        return Expr(detail::NodeStore::instance().intern(std::move(n)));
    }

    static Expr var(std::string name, VarClass cls) {
        detail::Node n;
        n.kind = ExprKind::Var;
        n.name = std::move(name);
        n.cls = cls;
        return Expr(detail::NodeStore::instance().intern(std::move(n)));
    }

    static Expr unary(Op op, Expr e) {
        detail::Node n;
        n.kind = ExprKind::Unary;
        n.op = op;
        n.lhs = e.node_;
        return Expr(detail::NodeStore::instance().intern(std::move(n)));
    }

    static Expr binary(Op op, Expr a, Expr b) {
        detail::Node n;
        n.kind = ExprKind::Binary;
        n.op = op;
        n.lhs = a.node_;
        n.rhs = b.node_;
        return Expr(detail::NodeStore::instance().intern(std::move(n)));
    }

    bool valid() const noexcept { return node_ != nullptr; }
    ExprKind kind() const noexcept { return node_->kind; }
    bool is_const() const noexcept { return node_->kind == ExprKind::Const; }
    bool is_const(Value v) const noexcept { return is_const() && node_->value == v; }
    bool is_var() const noexcept { return node_->kind == ExprKind::Var; }
    bool is_random() const noexcept { return is_var() && node_->cls == VarClass::Random; }
    bool is_secret() const noexcept { return is_var() && node_->cls == VarClass::Secret; }
    bool is_unary() const noexcept { return node_->kind == ExprKind::Unary; }
    bool is_binary() const noexcept { return node_->kind == ExprKind::Binary; }

    Op op() const noexcept { return node_->op; }
    Value value() const noexcept { return node_->value; }
    const std::string& name() const noexcept { return node_->name; }
    VarClass var_class() const noexcept { return node_->cls; }
    Expr operand() const noexcept { return Expr(node_->lhs); }
    Expr lhs() const noexcept { return Expr(node_->lhs); }
    Expr rhs() const noexcept { return Expr(node_->rhs); }

    std::uint64_t id() const noexcept { return node_->id; }
    std::size_t hash() const noexcept { return node_->hash; }
    std::uint64_t tree_size() const noexcept { return node_->tree_size; }

    /// Variable leaves (deduplicated, ordered by name).
    std::vector<Expr> vars() const {
        std::vector<Expr> out;
        out.reserve(node_->vars.size());
        for (const detail::Node* v : node_->vars) out.push_back(Expr(v));
        return out;
    }
    std::vector<Expr> rvars() const { return vars_of_class(VarClass::Random); }
    std::vector<Expr> vars_of_class(VarClass c) const {
        std::vector<Expr> out;
        for (const detail::Node* v : node_->vars)
            if (v->cls == c) out.push_back(Expr(v));
        return out;
    }
    bool has_var(Expr v) const {
        return std::binary_search(node_->vars.begin(), node_->vars.end(), v.node_,
                                  [](const detail::Node* a, const detail::Node* b) { return a->name < b->name; });
    }
    bool has_secret() const {
        return std::any_of(node_->vars.begin(), node_->vars.end(),
                           [](const detail::Node* v) { return v->cls == VarClass::Secret; });
    }

    friend bool operator==(Expr a, Expr b) noexcept { return a.node_ == b.node_; }
    friend bool operator!=(Expr a, Expr b) noexcept { return a.node_ != b.node_; }

    const detail::Node* raw() const noexcept { return node_; }

private:
    explicit Expr(const detail::Node* n) : node_(n) {}

    const detail::Node* node_ = nullptr;
};

struct ExprHash {
    std::size_t operator()(Expr e) const noexcept { return e.hash(); }
};

template <typename T>
using ExprMap = std::unordered_map<Expr, T, ExprHash>;

inline Expr operator^(Expr a, Expr b) { return Expr::binary(Op::Xor, a, b); }
inline Expr operator&(Expr a, Expr b) { return Expr::binary(Op::And, a, b); }
inline Expr operator|(Expr a, Expr b) { return Expr::binary(Op::Or, a, b); }
inline Expr operator+(Expr a, Expr b) { return Expr::binary(Op::Add, a, b); }
inline Expr operator-(Expr a, Expr b) { return Expr::binary(Op::Sub, a, b); }
inline Expr operator*(Expr a, Expr b) { return Expr::binary(Op::Mul, a, b); }
inline Expr operator~(Expr a) { return Expr::unary(Op::Not, a); }
inline Expr gf(Expr a, Expr b) { return Expr::binary(Op::GfMul, a, b); }

/// Binding strength used by the parser and printer; larger binds tighter.
inline int precedence(Op op) {
    switch (op) {
    case Op::Shl:
    case Op::Shr: return 1;
    case Op::And:
    case Op::Or: return 2;
    case Op::Xor: return 3;
    case Op::Add:
    case Op::Sub: return 4;
    case Op::Mul:
    case Op::GfMul: return 5;
    case Op::Not: return 6;
    }
    return 0;
}

namespace detail {

inline void print_expr(std::ostream& os, Expr e, int parent_prec, bool right_child) {
    switch (e.kind()) {
    case ExprKind::Const: os << e.value(); return;
    case ExprKind::Var: os << e.name(); return;
    case ExprKind::Unary:
        os << '~';
        print_expr(os, e.operand(), precedence(Op::Not), false);
        return;
    case ExprKind::Binary: {
        const int p = precedence(e.op());
        // Left-associative: a right child of equal precedence needs parentheses.
        const bool paren = p < parent_prec || (right_child && p == parent_prec);
        if (paren) os << '(';
        print_expr(os, e.lhs(), p, false);
        os << ' ' << op_symbol(e.op()) << ' ';
        print_expr(os, e.rhs(), p, true);
        if (paren) os << ')';
        return;
    }
    }
}

} // namespace detail

/// Renders `e` in the surface syntax with minimal parentheses.
inline std::string to_string(Expr e) {
    std::ostringstream os;
    detail::print_expr(os, e, 0, false);
    return os.str();
}

inline std::ostream& operator<<(std::ostream& os, Expr e) { return os << to_string(e); }

/// Distinct variable names of `e`.
inline std::vector<std::string> var_names(Expr e) {
    std::vector<std::string> out;
    for (Expr v : e.vars()) out.push_back(v.name());
    return out;
}

inline std::vector<std::string> rvar_names(Expr e) {
    std::vector<std::string> out;
    for (Expr v : e.rvars()) out.push_back(v.name());
    return out;
}

/// Rebuilds `e` bottom-up, replacing every node for which `fn` returns a
/// valid Expr. `fn` sees the node after its children were rewritten.
template <typename Fn>
Expr rewrite_bottom_up(Expr e, Fn&& fn, ExprMap<Expr>& memo) {
    if (auto it = memo.find(e); it != memo.end()) return it->second;
    Expr rebuilt = e;
    if (e.is_unary()) {
        Expr a = rewrite_bottom_up(e.operand(), fn, memo);
        if (a != e.operand()) rebuilt = Expr::unary(e.op(), a);
    } else if (e.is_binary()) {
        Expr a = rewrite_bottom_up(e.lhs(), fn, memo);
        Expr b = rewrite_bottom_up(e.rhs(), fn, memo);
        if (a != e.lhs() || b != e.rhs()) rebuilt = Expr::binary(e.op(), a, b);
    }
    Expr out = fn(rebuilt);
    if (!out.valid()) out = rebuilt;
    memo.emplace(e, out);
    return out;
}

/// Replaces every occurrence of `from` by `to`.
inline Expr substitute(Expr e, Expr from, Expr to) {
    ExprMap<Expr> memo;
    return rewrite_bottom_up(e, [&](Expr n) { return n == from ? to : Expr{}; }, memo);
}

/// Replaces several leaves or subexpressions at once (matched before rewriting).
inline Expr substitute(Expr e, const ExprMap<Expr>& mapping) {
    ExprMap<Expr> memo;
    std::function<Expr(Expr)> go = [&](Expr n) -> Expr {
        if (auto it = mapping.find(n); it != mapping.end()) return it->second;
        if (auto it = memo.find(n); it != memo.end()) return it->second;
        Expr out = n;
        if (n.is_unary()) {
            Expr a = go(n.operand());
            if (a != n.operand()) out = Expr::unary(n.op(), a);
        } else if (n.is_binary()) {
            Expr a = go(n.lhs());
            Expr b = go(n.rhs());
            if (a != n.lhs() || b != n.rhs()) out = Expr::binary(n.op(), a, b);
        }
        memo.emplace(n, out);
        return out;
    };
    return go(e);
}

/// Number of occurrences of `sub` in the expanded tree of `e`, saturating.
inline std::uint64_t occurrences(Expr e, Expr sub) {
    ExprMap<std::uint64_t> memo;
    std::function<std::uint64_t(Expr)> go = [&](Expr n) -> std::uint64_t {
        if (n == sub) return 1;
        if (n.is_const() || n.is_var()) return 0;
        if (auto it = memo.find(n); it != memo.end()) return it->second;
        std::uint64_t c = n.is_unary() ? go(n.operand()) : go(n.lhs()) + go(n.rhs());
        c = std::min<std::uint64_t>(c, UINT64_MAX / 4);
        memo.emplace(n, c);
        return c;
    };
    return go(e);
}

/// Distinct subexpressions in post-order, left to right.
inline std::vector<Expr> subexpressions(Expr e) {
    std::vector<Expr> out;
    std::unordered_set<Expr, ExprHash> seen;
    std::function<void(Expr)> go = [&](Expr n) {
        if (seen.count(n)) return;
        if (n.is_unary()) go(n.operand());
        if (n.is_binary()) {
            go(n.lhs());
            go(n.rhs());
        }
        seen.insert(n);
        out.push_back(n);
    };
    go(e);
    return out;
}

} // namespace qmask
