#pragma once

/// @file domain.hpp
/// Arithmetic over the bounded domain B = {0, ..., 2^n - 1}: bitwise
/// operators, the ring Z/2^n and the field GF(2)[x]/(p(x)).

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmask {

using Value = std::uint32_t;

inline constexpr unsigned kMaxBits = 16;

enum class Op : std::uint8_t {
    Xor,     // ^
    And,     // &
    Or,      // |
    GfMul,   // @
    Add,     // +
    Sub,     // -
    Mul,     // *
    Shl,     // <<
    Shr,     // >>
    Not,     // ~ (unary)
};

inline const char* op_symbol(Op op) {
    switch (op) {
    case Op::Xor: return "^";
    case Op::And: return "&";
    case Op::Or: return "|";
    case Op::GfMul: return "@";
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Shl: return "<<";
    case Op::Shr: return ">>";
    case Op::Not: return "~";
    }
    return "?";
}

inline bool is_shift(Op op) { return op == Op::Shl || op == Op::Shr; }

/// Operators whose operands can be swapped without changing the value.
inline bool is_commutative(Op op) {
    switch (op) {
    case Op::Xor:
    case Op::And:
    case Op::Or:
    case Op::GfMul:
    case Op::Add:
    case Op::Mul: return true;
    default: return false;
    }
}

class DomainError : public std::runtime_error {
public:
    enum class Kind { BadBits, BadDegree, Reducible, ShiftOutOfRange, ValueOutOfRange };

    DomainError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {

inline unsigned poly_degree(std::uint32_t p) {
    unsigned d = 0;
    while (p >> (d + 1)) ++d;
    return d;
}

/// Remainder of a modulo b over GF(2)[x]; b != 0.
inline std::uint32_t poly_mod(std::uint32_t a, std::uint32_t b) {
    const unsigned db = poly_degree(b);
    while (a != 0 && poly_degree(a) >= db) a ^= b << (poly_degree(a) - db);
    return a;
}

/// Trial division by every polynomial of degree 1..deg/2.
inline bool poly_irreducible(std::uint32_t p) {
    const unsigned deg = poly_degree(p);
    if (deg == 0) return false;
    for (unsigned d = 1; 2 * d <= deg; ++d) {
        for (std::uint32_t q = 1u << d; q < (2u << d); ++q) {
            if (poly_mod(p, q) == 0) return false;
        }
    }
    return true;
}

/// Carry-less multiply followed by reduction; no tables.
inline Value gf_mul_slow(Value a, Value b, unsigned bits, std::uint32_t poly) {
    std::uint32_t acc = 0;
    std::uint32_t x = a;
    while (b != 0) {
        if (b & 1u) acc ^= x;
        b >>= 1;
        x <<= 1;
        if (x >> bits & 1u) x ^= poly;
    }
    return static_cast<Value>(acc);
}

} // namespace detail

/// Smallest irreducible polynomial of degree `bits` with constant term 1,
/// except for n = 8 where x^8 + x^4 + x^3 + x^2 + 1 is used.
inline std::uint32_t default_poly(unsigned bits) {
    if (bits == 8) return 0x11D;
    for (std::uint32_t p = (1u << bits) | 1u; p < (2u << bits); p += 2) {
        if (detail::poly_irreducible(p)) return p;
    }
    throw DomainError(DomainError::Kind::BadBits, "no irreducible polynomial of degree " + std::to_string(bits));
}

/// The domain B together with the polynomial defining field multiplication.
/// Cheap to copy: the multiplication table (n <= 8) is shared.
class DomainConfig {
public:
    unsigned bits() const noexcept { return bits_; }
    std::uint32_t poly() const noexcept { return poly_; }
    std::uint64_t size() const noexcept { return std::uint64_t{1} << bits_; }
    Value mask() const noexcept { return static_cast<Value>(size() - 1); }
    bool contains(std::uint64_t v) const noexcept { return v < size(); }

    Value gf_mul(Value a, Value b) const noexcept {
        if (table_) return (*table_)[(a << bits_) | b];
        return detail::gf_mul_slow(a, b, bits_, poly_);
    }

    friend bool operator==(const DomainConfig& a, const DomainConfig& b) {
        return a.bits_ == b.bits_ && a.poly_ == b.poly_;
    }

    friend DomainConfig make_domain(unsigned bits, std::optional<std::uint32_t> poly);

private:
    DomainConfig(unsigned bits, std::uint32_t poly) : bits_(bits), poly_(poly) {
        if (bits_ <= 8) {
            auto table = std::make_shared<std::vector<std::uint16_t>>(std::size_t{1} << (2 * bits_));
            for (Value a = 0; a < size(); ++a) {
                for (Value b = 0; b < size(); ++b) {
                    (*table)[(a << bits_) | b] = static_cast<std::uint16_t>(detail::gf_mul_slow(a, b, bits_, poly_));
                }
            }
            table_ = std::move(table);
        }
    }

    unsigned bits_;
    std::uint32_t poly_;
    std::shared_ptr<const std::vector<std::uint16_t>> table_;
};

/// Validates `bits` and `poly` (or picks the default polynomial).
inline DomainConfig make_domain(unsigned bits, std::optional<std::uint32_t> poly = std::nullopt) {
    if (bits < 1 || bits > kMaxBits) {
        throw DomainError(DomainError::Kind::BadBits, "bit-width must be in [1, 16], got " + std::to_string(bits));
    }
    const std::uint32_t p = poly.value_or(default_poly(bits));
    if (p >> bits != 1u) {
        throw DomainError(DomainError::Kind::BadDegree, "polynomial must have degree exactly " + std::to_string(bits));
    }
    if ((p & 1u) == 0 || !detail::poly_irreducible(p)) {
        throw DomainError(DomainError::Kind::Reducible, "polynomial is reducible over GF(2)");
    }
    return DomainConfig(bits, p);
}

inline Value gf_mul(Value a, Value b, const DomainConfig& d) { return d.gf_mul(a, b); }

/// Applies a unary or binary operator. For `Op::Not` the second operand is
/// ignored; for shifts it is the (constant) shift amount.
inline Value eval_op(Op op, Value a, Value b, const DomainConfig& d) {
    const Value m = d.mask();
    switch (op) {
    case Op::Xor: return a ^ b;
    case Op::And: return a & b;
    case Op::Or: return a | b;
    case Op::GfMul: return d.gf_mul(a, b);
    case Op::Add: return (a + b) & m;
    case Op::Sub: return (a - b) & m;
    case Op::Mul: return static_cast<Value>((std::uint64_t{a} * b) & m);
    case Op::Shl:
    case Op::Shr:
        if (b >= d.bits()) {
            throw DomainError(DomainError::Kind::ShiftOutOfRange,
                              "shift amount " + std::to_string(b) + " not below bit-width " + std::to_string(d.bits()));
        }
        return op == Op::Shl ? (a << b) & m : a >> b;
    case Op::Not: return ~a & m;
    }
    return 0;
}

} // namespace qmask
