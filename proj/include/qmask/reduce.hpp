#pragma once

/// @file reduce.hpp
/// Distribution-preserving expression reductions applied before type
/// inference and counting:
///
///  - ineffective variables are replaced by 0,
///  - algebraic laws (e^e, e-e, e*0, 0*e for *, @, & become 0; e^0, e*1,
///    e@1 and ~~e collapse),
///  - an r-dominated subexpression whose r occurs nowhere else becomes r,
///  - meta-theorem patterns replace known bijections of r by r,
///  - user-supplied transformation oracles.

#include "qmask/counting.hpp"
#include "qmask/domain.hpp"
#include "qmask/eval.hpp"
#include "qmask/expr.hpp"
#include "qmask/program.hpp"
#include "qmask/type_infer.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qmask {

inline constexpr unsigned kDefaultEffectivenessBits = 20;

/// True iff changing `x` can change the value of `e`. Decided exactly when
/// the variables of `e` span at most `budget_bits` bits; otherwise assumed.
inline bool is_effective(Expr x, Expr e, const DomainConfig& d, unsigned budget_bits = kDefaultEffectivenessBits) {
    if (!e.has_var(x)) return false;
    std::vector<Expr> slots;
    for (Expr v : e.vars())
        if (v != x) slots.push_back(v);
    if (d.bits() * (slots.size() + 1) > budget_bits) return true;
    slots.push_back(x);
    const CompiledExpr code(e, d, slots);
    std::vector<Value> regs(code.registers(), 0);
    std::span<Value> others(regs.data(), slots.size() - 1);
    Value& xv = regs[slots.size() - 1];
    do {
        xv = 0;
        const Value base = code.run(regs);
        for (Value c = 1; c <= d.mask(); ++c) {
            xv = c;
            if (code.run(regs) != base) return true;
        }
    } while (next_assignment(others, d.mask()));
    return false;
}

inline bool is_effective(const std::string& x, Expr e, const DomainConfig& d,
                         unsigned budget_bits = kDefaultEffectivenessBits) {
    for (Expr v : e.vars())
        if (v.name() == x) return is_effective(v, e, d, budget_bits);
    return false;
}

inline Expr eliminate_ineffective(Expr e, const DomainConfig& d, unsigned budget_bits = kDefaultEffectivenessBits) {
    for (Expr v : e.vars()) {
        if (!is_effective(v, e, d, budget_bits)) e = substitute(e, v, Expr::constant(0));
    }
    return e;
}

namespace detail {

inline Expr law_step(Expr n) {
    if (n.is_unary()) {
        if (n.operand().is_unary() && n.operand().op() == Op::Not) return n.operand().operand();
        return {};
    }
    if (!n.is_binary()) return {};
    const Expr a = n.lhs();
    const Expr b = n.rhs();
    const Expr zero = Expr::constant(0);
    switch (n.op()) {
    case Op::Xor:
        if (a == b) return zero;
        if (a.is_const(0)) return b;
        if (b.is_const(0)) return a;
        break;
    case Op::Sub:
        if (a == b) return zero;
        break;
    case Op::Mul:
    case Op::GfMul:
        if (a.is_const(0) || b.is_const(0)) return zero;
        if (a.is_const(1)) return b;
        if (b.is_const(1)) return a;
        break;
    case Op::And:
        if (a.is_const(0) || b.is_const(0)) return zero;
        break;
    default: break;
    }
    return {};
}

} // namespace detail

/// Rewrites innermost-first until no law applies.
inline Expr apply_algebraic_laws(Expr e) {
    for (;;) {
        ExprMap<Expr> memo;
        const Expr next = rewrite_bottom_up(e, detail::law_step, memo);
        if (next == e) return e;
        e = next;
    }
}

namespace detail {

/// A leaf no program can name; marks the subexpression being replaced.
inline Expr hole() { return Expr::var("\x01hole", VarClass::Internal); }

} // namespace detail

/// Replaces an r-dominated subexpression by r whenever r occurs nowhere else.
/// Candidates are visited innermost-first, left to right.
inline Expr eliminate_dominated(Expr e) {
    for (;;) {
        DominantVars dom;
        bool changed = false;
        for (Expr sub : subexpressions(e)) {
            if (sub.is_var() || sub.is_const()) continue;
            for (Expr r : dom(sub)) {
                const Expr marked = substitute(e, sub, detail::hole());
                if (marked.has_var(r)) continue;
                e = substitute(marked, detail::hole(), r);
                changed = true;
                break;
            }
            if (changed) break;
        }
        if (!changed) return e;
    }
}

/// A pattern whose instances are bijections of one random variable and may
/// therefore be replaced by it. Metavariables are written `?name`; the
/// distinguished one binds a random input that must not occur elsewhere.
struct MetaTheorem {
    Expr pattern;
    std::string random_meta;
};

class MetaTheoremError : public std::runtime_error {
public:
    explicit MetaTheoremError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool is_meta(Expr e) { return e.is_var() && e.var_class() == VarClass::Internal && e.name().front() == '?'; }

class Matcher {
public:
    explicit Matcher(const MetaTheorem& mt) : mt_(mt) {}

    std::optional<std::map<std::string, Expr>> match(Expr pattern, Expr e) {
        std::map<std::string, Expr> bind;
        if (go(pattern, e, bind)) return bind;
        return std::nullopt;
    }

private:
    bool go(Expr p, Expr e, std::map<std::string, Expr>& bind) {
        if (is_meta(p)) {
            if (p.name() == mt_.random_meta && !e.is_random()) return false;
            auto [it, fresh] = bind.emplace(p.name(), e);
            return fresh || it->second == e;
        }
        if (p.kind() != e.kind()) return false;
        switch (p.kind()) {
        case ExprKind::Const: return p == e;
        case ExprKind::Var: return p == e;
        case ExprKind::Unary: return p.op() == e.op() && go(p.operand(), e.operand(), bind);
        case ExprKind::Binary: {
            if (p.op() != e.op()) return false;
            auto saved = bind;
            if (go(p.lhs(), e.lhs(), bind) && go(p.rhs(), e.rhs(), bind)) return true;
            bind = saved;
            if (is_commutative(p.op()) && go(p.lhs(), e.rhs(), bind) && go(p.rhs(), e.lhs(), bind)) return true;
            bind = std::move(saved);
            return false;
        }
        }
        return false;
    }

    const MetaTheorem& mt_;
};

} // namespace detail

/// The built-in table: r ^ ((2 * r) & e) is a bijection of r.
inline std::vector<MetaTheorem> default_meta_theorems();

/// Parses `pattern => ?r` lines; `#` and `//` start comments.
inline std::vector<MetaTheorem> parse_meta_theorems(const std::string& text) {
    std::vector<MetaTheorem> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        for (const char* marker : {"#", "//"}) {
            if (auto pos = line.find(marker); pos != std::string::npos) line.erase(pos);
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto arrow = line.find("=>");
        if (arrow == std::string::npos)
            throw MetaTheoremError("line " + std::to_string(lineno) + ": expected 'pattern => ?var'");
        auto meta = [](const std::string& name) -> Expr {
            if (name.front() != '?') throw MetaTheoremError("pattern may only use metavariables, found " + name);
            return Expr::var(name, VarClass::Internal);
        };
        MetaTheorem mt;
        try {
            mt.pattern = parse_expression(line.substr(0, arrow), meta);
            const Expr repl = parse_expression(line.substr(arrow + 2), meta);
            if (!repl.is_var()) throw MetaTheoremError("replacement must be a single metavariable");
            mt.random_meta = repl.name();
        } catch (const ParseError& err) {
            throw MetaTheoremError("line " + std::to_string(lineno) + ": " + err.what());
        }
        if (!mt.pattern.has_var(Expr::var(mt.random_meta, VarClass::Internal)) || mt.pattern.is_var())
            throw MetaTheoremError("line " + std::to_string(lineno) + ": pattern must contain " + mt.random_meta);
        out.push_back(std::move(mt));
    }
    return out;
}

inline std::vector<MetaTheorem> load_meta_theorems(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MetaTheoremError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_meta_theorems(ss.str());
}

inline std::vector<MetaTheorem> default_meta_theorems() {
    return parse_meta_theorems("?r ^ ((2 * ?r) & ?e) => ?r\n");
}

/// Replaces matched pattern instances by their random variable when it does
/// not occur outside the instance.
inline Expr apply_meta_theorems(Expr e, const std::vector<MetaTheorem>& table) {
    for (;;) {
        bool changed = false;
        for (Expr sub : subexpressions(e)) {
            if (sub.is_var() || sub.is_const()) continue;
            for (const auto& mt : table) {
                detail::Matcher m(mt);
                auto bind = m.match(mt.pattern, sub);
                if (!bind) continue;
                const Expr r = bind->at(mt.random_meta);
                bool clean = true;
                for (const auto& [name, val] : *bind)
                    if (name != mt.random_meta && val.has_var(r)) clean = false;
                if (!clean) continue;
                const Expr marked = substitute(e, sub, detail::hole());
                if (marked.has_var(r)) continue;
                e = substitute(marked, detail::hole(), r);
                changed = true;
                break;
            }
            if (changed) break;
        }
        if (!changed) return e;
    }
}

inline Expr apply_meta_theorems(Expr e) {
    static const std::vector<MetaTheorem> table = default_meta_theorems();
    return apply_meta_theorems(e, table);
}

struct SimplifyOptions {
    unsigned effectiveness_bits = kDefaultEffectivenessBits;
    const std::vector<MetaTheorem>* meta_theorems = nullptr; // null: built-in table
};

/// Fixpoint of ineffective-variable elimination, algebraic laws, dominated
/// subexpression elimination and meta-theorems.
inline Expr simplify(Expr e, const DomainConfig& d, const SimplifyOptions& opts = {}) {
    static const std::vector<MetaTheorem> builtin = default_meta_theorems();
    const auto& table = opts.meta_theorems ? *opts.meta_theorems : builtin;
    for (;;) {
        Expr next = eliminate_ineffective(e, d, opts.effectiveness_bits);
        next = apply_algebraic_laws(next);
        next = eliminate_dominated(next);
        next = apply_meta_theorems(next, table);
        if (next == e) return e;
        e = next;
    }
}

class OracleUnsound : public std::runtime_error {
public:
    OracleUnsound(const std::string& oracle, Expr from, Expr to)
        : std::runtime_error("oracle '" + oracle + "' changed the distribution of " + to_string(from) + " (gave " +
                             to_string(to) + ")") {}
};

/// Named rewrite callbacks tried in registration order. Every result is
/// checked to have the same distribution as its input for every valuation
/// when that is enumerable (at most 16 input bits).
class OracleRegistry {
public:
    using Fn = std::function<std::optional<Expr>(Expr)>;

    void add(std::string name, Fn fn) { oracles_.emplace_back(std::move(name), std::move(fn)); }
    bool empty() const noexcept { return oracles_.empty(); }
    std::size_t size() const noexcept { return oracles_.size(); }

    std::optional<Expr> apply(Expr e, const DomainConfig& d) const {
        for (const auto& [name, fn] : oracles_) {
            auto out = fn(e);
            if (!out) continue;
            check(name, e, *out, d);
            return out;
        }
        return std::nullopt;
    }

private:
    static void check(const std::string& name, Expr from, Expr to, const DomainConfig& run_domain) {
        // Checked at the run's width when enumerable, otherwise at n = 2.
        auto total_bits = [](Expr a, Expr b, unsigned n) {
            std::set<std::string> names;
            for (Expr v : a.vars()) names.insert(v.name());
            for (Expr v : b.vars()) names.insert(v.name());
            return n * static_cast<unsigned>(names.size());
        };
        const DomainConfig d = total_bits(from, to, run_domain.bits()) <= 16 ? run_domain : make_domain(2);
        if (total_bits(from, to, d.bits()) > 16) return;
        // Both sides see the same valuations, including inputs only one side uses.
        std::vector<Expr> nonrandom;
        for (Expr v : from.vars())
            if (v.var_class() != VarClass::Random) nonrandom.push_back(v);
        for (Expr v : to.vars())
            if (v.var_class() != VarClass::Random && !from.has_var(v)) nonrandom.push_back(v);
        CountingEngine eng(d);
        std::vector<Value> digits(nonrandom.size(), 0);
        do {
            std::map<std::string, Value> sigma;
            for (std::size_t i = 0; i < nonrandom.size(); ++i) sigma[nonrandom[i].name()] = digits[i];
            CountVector a = eng.distribution(from, sigma);
            CountVector b = eng.distribution(to, sigma);
            // Compare probabilities: counts scaled to a common total.
            for (std::size_t v = 0; v < a.counts.size(); ++v) {
                if (static_cast<unsigned __int128>(a.counts[v]) * b.total !=
                    static_cast<unsigned __int128>(b.counts[v]) * a.total)
                    throw OracleUnsound(name, from, to);
            }
        } while (next_assignment(digits, d.mask()));
    }

    std::vector<std::pair<std::string, Fn>> oracles_;
};

} // namespace qmask
