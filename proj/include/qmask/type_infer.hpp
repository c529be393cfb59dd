#pragma once

/// @file type_infer.hpp
/// Dominant random variables and the distribution-type proof system.

#include "qmask/expr.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qmask {

/// RUD: uniform for every valuation. SID: independent of secrets.
/// SDD: depends on secrets. UKD: no rule applies. RUD is a subtype of SID.
enum class DistType { RUD, SID, SDD, UKD };

inline const char* type_name(DistType t) {
    switch (t) {
    case DistType::RUD: return "RUD";
    case DistType::SID: return "SID";
    case DistType::SDD: return "SDD";
    case DistType::UKD: return "UKD";
    }
    return "?";
}

inline std::optional<DistType> parse_type(const std::string& s) {
    if (s == "RUD") return DistType::RUD;
    if (s == "SID") return DistType::SID;
    if (s == "SDD") return DistType::SDD;
    if (s == "UKD") return DistType::UKD;
    return std::nullopt;
}

/// True when a judgement of type `t` satisfies a premise requiring `want`.
inline bool subtype(DistType t, DistType want) {
    return t == want || (t == DistType::RUD && want == DistType::SID);
}

struct Judgement {
    DistType type = DistType::UKD;
    /// Rules applied at the root, the rule yielding `type` last.
    std::vector<std::string> rule_trace;
    /// False when the derivation depends on a leaky verdict obtained by
    /// counting rather than by the rules themselves.
    bool structural = true;
};

/// Optional lookup of types already resolved for whole expressions.
using TypeStore = std::function<std::optional<DistType>(Expr)>;

/// Dominant random variables of `e`: random leaves occurring exactly once
/// whose root path only crosses ^, ~, +, -, or * / @ against a constant
/// that makes the step a bijection (odd for *, non-zero for @).
class DominantVars {
public:
    const std::vector<Expr>& operator()(Expr e) {
        if (auto it = memo_.find(e); it != memo_.end()) return it->second;
        std::vector<Expr> out;
        switch (e.kind()) {
        case ExprKind::Const: break;
        case ExprKind::Var:
            if (e.is_random()) out.push_back(e);
            break;
        case ExprKind::Unary: out = (*this)(e.operand()); break;
        case ExprKind::Binary: out = binary(e); break;
        }
        return memo_.emplace(e, std::move(out)).first->second;
    }

private:
    std::vector<Expr> binary(Expr e) {
        const Expr a = e.lhs();
        const Expr b = e.rhs();
        switch (e.op()) {
        case Op::Xor:
        case Op::Add:
        case Op::Sub: {
            std::vector<Expr> out;
            for (Expr r : (*this)(a))
                if (!b.has_var(r)) out.push_back(r);
            for (Expr r : (*this)(b))
                if (!a.has_var(r)) out.push_back(r);
            std::sort(out.begin(), out.end(), [](Expr x, Expr y) { return x.name() < y.name(); });
            return out;
        }
        case Op::Mul:
        case Op::GfMul: {
            auto invertible = [&](Expr c) {
                return c.is_const() && (e.op() == Op::Mul ? (c.value() & 1u) == 1u : c.value() != 0);
            };
            if (invertible(b)) return (*this)(a);
            if (invertible(a)) return (*this)(b);
            return {};
        }
        default: return {};
        }
    }

    ExprMap<std::vector<Expr>> memo_;
};

inline std::set<std::string> dominant_vars(Expr e) {
    DominantVars dom;
    std::set<std::string> out;
    for (Expr r : dom(e)) out.insert(r.name());
    return out;
}

/// Applies the rules in the order Dom, NoKey, Key, Ide3, Ide1, Ide2, Ide4,
/// Sid1, Sid2, Sdd, then the type store, then Ukd. Binary rules that are not
/// symmetric are also tried with swapped operands (Com).
///
/// Not thread-safe; use one instance per worker.
class TypeInference {
public:
    explicit TypeInference(TypeStore store = {}) : store_(std::move(store)) {}

    const Judgement& infer(Expr e) {
        if (auto it = memo_.find(e); it != memo_.end()) return it->second;
        Judgement j = derive(e);
        return memo_.emplace(e, std::move(j)).first->second;
    }

    DistType type_of(Expr e) { return infer(e).type; }

    const std::vector<Expr>& dominant(Expr e) { return dom_(e); }

    /// Drops memoized UKD judgements so new store entries can be used.
    void forget_unknown() {
        std::erase_if(memo_, [](const auto& kv) { return kv.second.type == DistType::UKD; });
    }

private:
    static Judgement by(DistType t, std::vector<std::string> trace, bool structural = true) {
        return Judgement{t, std::move(trace), structural};
    }

    // Dominant variable of `a` that `b` does not use.
    bool has_free_dominant(Expr a, Expr b) {
        const auto& d = dom_(a);
        return std::any_of(d.begin(), d.end(), [&](Expr r) { return !b.has_var(r); });
    }

    static bool disjoint_randoms(Expr a, Expr b) {
        for (Expr r : a.rvars())
            if (b.has_var(r)) return false;
        return true;
    }

    Judgement derive(Expr e) {
        if (!dom_(e).empty()) return by(DistType::RUD, {"Dom"});
        if (!e.has_secret()) return by(DistType::SID, {"NoKey"});
        if (e.is_secret()) return by(DistType::SDD, {"Key"});

        if (e.is_binary()) {
            const Op op = e.op();
            const Expr a = e.lhs();
            const Expr b = e.rhs();
            const bool same = a == b;
            if (same && (op == Op::Xor || op == Op::Sub)) return by(DistType::SID, {"Ide3"});
            if (same) {
                const Judgement& ja = infer(a);
                if (subtype(ja.type, DistType::SID)) return by(DistType::SID, {"Ide2"});
                if ((op == Op::And || op == Op::Or) && ja.type == DistType::SDD)
                    return by(DistType::SDD, {"Ide4"}, ja.structural);
            }
            const bool nonlinear = op == Op::And || op == Op::Or || op == Op::GfMul || op == Op::Mul;
            if (nonlinear) {
                for (int swap = 0; swap < 2; ++swap) {
                    const Expr x = swap ? b : a;
                    const Expr y = swap ? a : b;
                    if (type_of(x) == DistType::RUD && type_of(y) == DistType::RUD && has_free_dominant(x, y))
                        return swap ? by(DistType::SID, {"Com", "Sid1"}) : by(DistType::SID, {"Sid1"});
                }
            }
            if (subtype(type_of(a), DistType::SID) && subtype(type_of(b), DistType::SID) && disjoint_randoms(a, b))
                return by(DistType::SID, {"Sid2"});
            if (nonlinear) {
                for (int swap = 0; swap < 2; ++swap) {
                    const Expr x = swap ? b : a;
                    const Expr y = swap ? a : b;
                    const Judgement& jx = infer(x);
                    // A leaky verdict obtained by counting says nothing about
                    // how the operator combines it with a uniform operand.
                    if (jx.type == DistType::SDD && jx.structural && type_of(y) == DistType::RUD &&
                        has_free_dominant(y, x))
                        return swap ? by(DistType::SDD, {"Com", "Sdd"}) : by(DistType::SDD, {"Sdd"});
                }
            }
        } else if (e.is_unary()) {
            const Judgement& ja = infer(e.operand());
            if (ja.type != DistType::UKD) return by(ja.type, {"Ide1"}, ja.structural);
        }

        if (store_) {
            if (auto t = store_(e); t && *t != DistType::UKD) return by(*t, {"Store"}, *t != DistType::SDD);
        }
        return by(DistType::UKD, {"Ukd"});
    }

    TypeStore store_;
    DominantVars dom_;
    ExprMap<Judgement> memo_;
};

inline Judgement infer(Expr e) {
    TypeInference ti;
    return ti.infer(e);
}

} // namespace qmask
