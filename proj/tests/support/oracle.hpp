#pragma once

// Reference semantics for tests. Shares nothing with the engine beyond the
// Expr accessors: field products use carry-less multiplication followed by
// polynomial long division, and every quantity is recomputed from scratch.

#include "qmask/expr.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Env = std::map<std::string, std::uint32_t>;

inline std::uint32_t clmul(std::uint32_t a, std::uint32_t b) {
    std::uint32_t r = 0;
    for (unsigned i = 0; i < 16; ++i)
        if (b & (1u << i)) r ^= a << i;
    return r;
}

inline std::uint32_t poly_rem(std::uint32_t a, std::uint32_t poly, unsigned n) {
    for (int bit = 31; bit >= static_cast<int>(n); --bit)
        if (a & (1u << bit)) a ^= poly << (bit - n);
    return a;
}

inline std::uint32_t gf(std::uint32_t a, std::uint32_t b, std::uint32_t poly, unsigned n) {
    return poly_rem(clmul(a, b), poly, n);
}

/// True iff p (degree n) has no factor of degree 1..n-1.
inline bool irreducible(std::uint32_t p, unsigned n) {
    for (std::uint32_t q = 2; q < (1u << n); ++q) {
        unsigned dq = 31 - static_cast<unsigned>(__builtin_clz(q));
        if (dq == 0 || dq >= n) continue;
        if (poly_rem(p, q, dq) == 0) return false;
    }
    return true;
}

struct Field {
    unsigned n;
    std::uint32_t poly;
    std::uint32_t mask() const { return (1u << n) - 1; }
};

inline std::uint32_t eval(qmask::Expr e, const Env& env, const Field& f) {
    using qmask::ExprKind;
    using qmask::Op;
    switch (e.kind()) {
    case ExprKind::Const: return e.value();
    case ExprKind::Var: return env.at(e.name());
    case ExprKind::Unary: return ~eval(e.operand(), env, f) & f.mask();
    case ExprKind::Binary: break;
    }
    const std::uint32_t a = eval(e.lhs(), env, f);
    const std::uint32_t b = eval(e.rhs(), env, f);
    switch (e.op()) {
    case Op::Xor: return a ^ b;
    case Op::And: return a & b;
    case Op::Or: return a | b;
    case Op::GfMul: return gf(a, b, f.poly, f.n);
    case Op::Add: return (a + b) % (1u << f.n);
    case Op::Sub: return (a + (1u << f.n) - b) % (1u << f.n);
    case Op::Mul: return static_cast<std::uint32_t>((std::uint64_t{a} * b) % (1u << f.n));
    case Op::Shl: return (a << b) & f.mask();
    case Op::Shr: return a >> b;
    default: return 0;
    }
}

/// All assignments of `names` to n-bit values, first name varying slowest.
inline std::vector<Env> assignments(const std::vector<std::string>& names, unsigned n) {
    std::vector<Env> out{Env{}};
    for (const auto& v : names) {
        std::vector<Env> next;
        for (const auto& env : out)
            for (std::uint32_t x = 0; x < (1u << n); ++x) {
                Env e = env;
                e[v] = x;
                next.push_back(e);
            }
        out = std::move(next);
    }
    return out;
}

inline std::vector<std::string> names_of(qmask::Expr e, bool random) {
    std::vector<std::string> out;
    for (auto v : e.vars())
        if (v.is_random() == random) out.push_back(v.name());
    return out;
}

inline std::vector<std::uint64_t> distribution(qmask::Expr e, const Env& sigma, const Field& f) {
    std::vector<std::uint64_t> counts(1u << f.n, 0);
    for (auto rho : assignments(names_of(e, true), f.n)) {
        rho.insert(sigma.begin(), sigma.end());
        ++counts[eval(e, rho, f)];
    }
    return counts;
}

struct Ratio {
    std::uint64_t num, den;
    bool operator==(const Ratio& o) const { return num * o.den == o.num * den; }
};

/// 1 - max over public-equal pairs and c of the probability gap.
inline Ratio qms(qmask::Expr e, const Field& f) {
    const auto sig = assignments(names_of(e, false), f.n);
    std::vector<std::vector<std::uint64_t>> dists;
    for (const auto& s : sig) dists.push_back(distribution(e, s, f));
    const std::uint64_t den = std::uint64_t{1} << (f.n * names_of(e, true).size());
    std::uint64_t gap = 0;
    for (std::size_t i = 0; i < sig.size(); ++i)
        for (std::size_t j = 0; j < sig.size(); ++j) {
            bool same_public = true;
            for (auto v : e.vars())
                if (v.var_class() == qmask::VarClass::Public && sig[i].at(v.name()) != sig[j].at(v.name()))
                    same_public = false;
            if (!same_public) continue;
            for (std::size_t c = 0; c < dists[i].size(); ++c)
                if (dists[i][c] > dists[j][c]) gap = std::max(gap, dists[i][c] - dists[j][c]);
        }
    return {den - gap, den};
}

inline bool uniform(qmask::Expr e, const Field& f) {
    for (const auto& s : assignments(names_of(e, false), f.n)) {
        const auto d = distribution(e, s, f);
        if (std::adjacent_find(d.begin(), d.end(), std::not_equal_to<>()) != d.end()) return false;
    }
    return true;
}

inline bool independent(qmask::Expr e, const Field& f) {
    const auto q = qms(e, f);
    return q.num == q.den;
}

} // namespace oracle
