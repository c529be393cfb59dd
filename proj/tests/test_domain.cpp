#include "qmask/domain.hpp"
#include "support/oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qmask;

TEST(Domain, DefaultPolynomials) {
    EXPECT_EQ(default_poly(1), 0b11u);
    EXPECT_EQ(default_poly(2), 0b111u);
    EXPECT_EQ(default_poly(3), 0b1011u);
    EXPECT_EQ(default_poly(4), 0b10011u);
    EXPECT_EQ(default_poly(8), 0x11Du);
}

TEST(Domain, DefaultPolynomialIsSmallestIrreducible) {
    for (unsigned n = 1; n <= kMaxBits; ++n) {
        if (n == 8) continue; // fixed to x^8 + x^4 + x^3 + x^2 + 1
        const std::uint32_t p = default_poly(n);
        EXPECT_EQ(p >> n, 1u) << n;
        EXPECT_TRUE(oracle::irreducible(p, n)) << n;
        for (std::uint32_t q = (1u << n) | 1u; q < p; q += 2) EXPECT_FALSE(oracle::irreducible(q, n)) << n << " " << q;
    }
    EXPECT_TRUE(oracle::irreducible(0x11D, 8));
}

TEST(Domain, RejectsBadConfigurations) {
    auto kind = [](auto fn) {
        try {
            fn();
        } catch (const DomainError& e) {
            return e.kind();
        }
        ADD_FAILURE() << "no DomainError";
        return DomainError::Kind::BadBits;
    };
    EXPECT_EQ(kind([] { make_domain(0); }), DomainError::Kind::BadBits);
    EXPECT_EQ(kind([] { make_domain(17); }), DomainError::Kind::BadBits);
    EXPECT_EQ(kind([] { make_domain(8, 0x13); }), DomainError::Kind::BadDegree);
    EXPECT_EQ(kind([] { make_domain(8, 0x101); }), DomainError::Kind::Reducible); // (x + 1)^8
    EXPECT_EQ(kind([] { make_domain(4, 0x15); }), DomainError::Kind::Reducible);  // (x^2 + x + 1)^2
    EXPECT_EQ(kind([] { make_domain(4, 0x12); }), DomainError::Kind::Reducible);
    EXPECT_NO_THROW(make_domain(8, 0x11B));
}

TEST(Domain, GfMulMatchesLongDivisionExhaustively) {
    for (unsigned n = 1; n <= 6; ++n) {
        const auto d = make_domain(n);
        for (Value a = 0; a < d.size(); ++a)
            for (Value b = 0; b < d.size(); ++b)
                ASSERT_EQ(d.gf_mul(a, b), oracle::gf(a, b, d.poly(), n)) << n << " " << a << " " << b;
    }
    for (std::uint32_t poly : {0x11Du, 0x11Bu}) {
        const auto d = make_domain(8, poly);
        for (Value a = 0; a < 256; ++a)
            for (Value b = 0; b < 256; ++b) ASSERT_EQ(d.gf_mul(a, b), oracle::gf(a, b, poly, 8));
    }
}

TEST(Domain, GfMulWideWidths) {
    std::mt19937 rng(7);
    for (unsigned n : {9u, 12u, 16u}) {
        const auto d = make_domain(n);
        for (int i = 0; i < 2000; ++i) {
            const Value a = rng() & d.mask();
            const Value b = rng() & d.mask();
            ASSERT_EQ(d.gf_mul(a, b), oracle::gf(a, b, d.poly(), n));
        }
    }
}

TEST(Domain, KnownProducts) {
    EXPECT_EQ(make_domain(8, 0x11B).gf_mul(0x53, 0xCA), 0x01u);
    EXPECT_EQ(make_domain(8).gf_mul(0x02, 0x80), 0x1Du);
    EXPECT_EQ(make_domain(2).gf_mul(2, 2), 3u);
}

TEST(Domain, FieldLaws) {
    const auto d = make_domain(8);
    for (Value a = 1; a < 256; ++a) {
        int inverses = 0;
        for (Value b = 1; b < 256; ++b) inverses += d.gf_mul(a, b) == 1;
        EXPECT_EQ(inverses, 1) << a;
    }
    std::mt19937 rng(3);
    for (int i = 0; i < 5000; ++i) {
        const Value a = rng() & 255, b = rng() & 255, c = rng() & 255;
        EXPECT_EQ(d.gf_mul(a, b), d.gf_mul(b, a));
        EXPECT_EQ(d.gf_mul(a, b ^ c), d.gf_mul(a, b) ^ d.gf_mul(a, c));
        EXPECT_EQ(d.gf_mul(d.gf_mul(a, b), c), d.gf_mul(a, d.gf_mul(b, c)));
    }
}

TEST(Domain, RingOperations) {
    const auto d = make_domain(4);
    EXPECT_EQ(eval_op(Op::Add, 9, 9, d), 2u);
    EXPECT_EQ(eval_op(Op::Sub, 3, 5, d), 14u);
    EXPECT_EQ(eval_op(Op::Mul, 7, 7, d), 1u);
    EXPECT_EQ(eval_op(Op::Shl, 0b1011, 2, d), 0b1100u);
    EXPECT_EQ(eval_op(Op::Shr, 0b1011, 3, d), 1u);
    EXPECT_EQ(eval_op(Op::Not, 0b1010, 0, d), 0b0101u);
    EXPECT_EQ(eval_op(Op::And, 6, 3, d), 2u);
    EXPECT_EQ(eval_op(Op::Or, 6, 3, d), 7u);
    EXPECT_EQ(eval_op(Op::Xor, 6, 3, d), 5u);
    EXPECT_THROW(eval_op(Op::Shl, 1, 4, d), DomainError);
}

TEST(Domain, Equality) {
    EXPECT_EQ(make_domain(8), make_domain(8, 0x11D));
    EXPECT_FALSE(make_domain(8) == make_domain(8, 0x11B));
    EXPECT_FALSE(make_domain(4) == make_domain(8));
}
