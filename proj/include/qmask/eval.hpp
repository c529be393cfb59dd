#pragma once

/// @file eval.hpp
/// Straight-line evaluation of an expression DAG over a fixed variable order.

#include "qmask/domain.hpp"
#include "qmask/expr.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmask {

/// An expression flattened into instructions over registers. Registers
/// [0, slots) hold the variables in the order given at construction.
class CompiledExpr {
public:
    CompiledExpr(Expr e, const DomainConfig& d, const std::vector<Expr>& slots) : domain_(d), slots_(slots.size()) {
        ExprMap<std::uint32_t> reg;
        for (std::uint32_t i = 0; i < slots.size(); ++i) reg.emplace(slots[i], i);
        std::uint32_t next = static_cast<std::uint32_t>(slots.size());
        for (Expr n : subexpressions(e)) {
            if (reg.count(n)) continue;
            Instr in{};
            switch (n.kind()) {
            case ExprKind::Const:
                if (!d.contains(n.value()))
                    throw DomainError(DomainError::Kind::ValueOutOfRange,
                                      "constant " + std::to_string(n.value()) + " exceeds the domain");
                in.kind = Instr::Load;
                in.imm = n.value();
                break;
            case ExprKind::Var: throw std::invalid_argument("variable " + n.name() + " has no input slot");
            case ExprKind::Unary:
                in.kind = Instr::Apply;
                in.op = Op::Not;
                in.a = reg.at(n.operand());
                break;
            case ExprKind::Binary:
                in.kind = Instr::Apply;
                in.op = n.op();
                in.a = reg.at(n.lhs());
                in.b = reg.at(n.rhs());
                if (is_shift(n.op()) && n.rhs().value() >= d.bits())
                    throw DomainError(DomainError::Kind::ShiftOutOfRange,
                                      "shift by " + std::to_string(n.rhs().value()) + " in " + to_string(n));
                break;
            }
            in.dst = next;
            reg.emplace(n, next++);
            code_.push_back(in);
        }
        result_ = reg.at(e);
        registers_ = next;
    }

    std::size_t registers() const noexcept { return registers_; }
    std::size_t slots() const noexcept { return slots_; }

    /// `regs` must have registers() entries with the inputs in the first slots.
    Value run(std::vector<Value>& regs) const {
        const Value mask = domain_.mask();
        for (const Instr& in : code_) {
            if (in.kind == Instr::Load) {
                regs[in.dst] = in.imm;
                continue;
            }
            const Value a = regs[in.a];
            const Value b = regs[in.b];
            Value r;
            switch (in.op) {
            case Op::Xor: r = a ^ b; break;
            case Op::And: r = a & b; break;
            case Op::Or: r = a | b; break;
            case Op::GfMul: r = domain_.gf_mul(a, b); break;
            case Op::Add: r = (a + b) & mask; break;
            case Op::Sub: r = (a - b) & mask; break;
            case Op::Mul: r = static_cast<Value>((std::uint64_t{a} * b) & mask); break;
            case Op::Shl: r = (a << b) & mask; break;
            case Op::Shr: r = a >> b; break;
            case Op::Not: r = ~a & mask; break;
            default: r = 0;
            }
            regs[in.dst] = r;
        }
        return regs[result_];
    }

    Value operator()(std::span<const Value> inputs) const {
        std::vector<Value> regs(registers_, 0);
        std::copy(inputs.begin(), inputs.end(), regs.begin());
        return run(regs);
    }

private:
    struct Instr {
        enum Kind : std::uint8_t { Load, Apply } kind;
        Op op;
        std::uint32_t a, b, dst;
        Value imm;
    };

    DomainConfig domain_;
    std::size_t slots_;
    std::size_t registers_ = 0;
    std::uint32_t result_ = 0;
    std::vector<Instr> code_;
};

/// Steps `digits` (each in [0, 2^bits)) through all assignments, the last
/// digit varying fastest. Returns false after the final assignment.
inline bool next_assignment(std::span<Value> digits, Value mask) {
    for (std::size_t i = digits.size(); i-- > 0;) {
        if (digits[i] < mask) {
            ++digits[i];
            return true;
        }
        digits[i] = 0;
    }
    return false;
}

/// Decodes a mixed-radix index (first digit most significant).
inline void decode_assignment(std::uint64_t index, unsigned bits, std::span<Value> digits) {
    const Value mask = static_cast<Value>((std::uint64_t{1} << bits) - 1);
    for (std::size_t i = digits.size(); i-- > 0;) {
        digits[i] = static_cast<Value>(index & mask);
        index >>= bits;
    }
}

} // namespace qmask
