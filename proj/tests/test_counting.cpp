#include "qmask/counting.hpp"
#include "qmask/program.hpp"
#include "support/oracle.hpp"
#include "support/random_program.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

using namespace qmask;

namespace {

const Expr k = Expr::var("k", VarClass::Secret);
const Expr k1 = Expr::var("k1", VarClass::Secret);
const Expr r0 = Expr::var("r0", VarClass::Random);
const Expr r1 = Expr::var("r1", VarClass::Random);
const Expr p = Expr::var("p", VarClass::Public);

Program cube() {
    std::ifstream in(std::string(QMASK_CORPUS_DIR) + "/cube.mv");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_program(ss.str());
}

oracle::Field field(const DomainConfig& d) { return {d.bits(), d.poly()}; }

CountingOptions opts(unsigned jobs) {
    CountingOptions o;
    o.jobs = jobs;
    return o;
}

} // namespace

TEST(Distribution, Examples) {
    const CountingEngine eng(make_domain(8));
    const auto masked = eng.distribution(k ^ r0, {{"k", 5}});
    EXPECT_EQ(masked.total, 256u);
    EXPECT_TRUE(std::all_of(masked.counts.begin(), masked.counts.end(), [](auto c) { return c == 1; }));
    const auto plain = eng.distribution(k, {{"k", 5}});
    EXPECT_EQ(plain.total, 1u);
    EXPECT_EQ(plain.counts[5], 1u);
    EXPECT_EQ(std::accumulate(plain.counts.begin(), plain.counts.end(), std::uint64_t{0}), 1u);
    EXPECT_THROW(eng.distribution(k ^ p, {{"k", 1}}), UncoveredVariable);
}

TEST(Distribution, SquaresInGf4) {
    const auto d = make_domain(2);
    const auto cv = CountingEngine(d).distribution(gf(r0, r0), {});
    EXPECT_EQ(cv.counts, oracle::distribution(gf(r0, r0), {}, field(d)));
    // Squaring is a bijection in characteristic 2.
    EXPECT_EQ(cv.counts, (std::vector<std::uint64_t>{1, 1, 1, 1}));
}

TEST(Uniformity, Examples) {
    const CountingEngine eng(make_domain(8));
    EXPECT_TRUE(eng.check_uniform(k ^ r0));
    EXPECT_FALSE(eng.check_uniform(k));
    EXPECT_TRUE(eng.check_uniform(cube().expr_of("x9")));
    EXPECT_FALSE(eng.check_uniform(gf(r0, r1)));
}

TEST(Independence, CubeAtEightBits) {
    const Program prog = cube();
    const CountingEngine eng(make_domain(8));
    EXPECT_TRUE(eng.check_si(prog.expr_of("x6")).independent);
    const SiResult x2 = eng.check_si(prog.expr_of("x2"));
    EXPECT_FALSE(x2.independent);
    ASSERT_TRUE(x2.witness);
    EXPECT_NE(x2.witness->first, x2.witness->second);
    EXPECT_FALSE(eng.check_si(prog.expr_of("x3")).independent);
    EXPECT_TRUE(eng.check_si(r0).independent);
}

TEST(Qms, CubeMatchesOracle) {
    const Program prog = cube();
    const auto d = make_domain(8);
    const CountingEngine eng(d);
    for (const char* x : {"x2", "x3"}) {
        const Expr e = prog.expr_of(x);
        const Qms q = eng.qms_exact(e);
        const auto want = oracle::qms(e, field(d));
        EXPECT_EQ(q.num, want.num) << x;
        EXPECT_EQ(q.den, want.den) << x;
        EXPECT_EQ(q.den, 256u);
        EXPECT_NEAR(q.value(), 0.988, 0.0005);
        ASSERT_TRUE(q.witness);
        // The witness attains the gap.
        auto env = [](const Valuation& v) {
            oracle::Env out;
            for (const auto& [n, x] : v) out[n] = x;
            return out;
        };
        const auto d1 = oracle::distribution(e, env(q.witness->sigma1), field(d));
        const auto d2 = oracle::distribution(e, env(q.witness->sigma2), field(d));
        EXPECT_EQ(d1[q.witness->c] - d2[q.witness->c], q.den - q.num);
    }
}

TEST(Qms, Degenerate) {
    const CountingEngine eng(make_domain(4));
    const Qms leak = eng.qms_exact(k);
    EXPECT_EQ(leak.num, 0u);
    EXPECT_EQ(leak.den, 1u);
    ASSERT_TRUE(leak.witness);
    EXPECT_EQ(leak.witness->sigma1, (Valuation{{"k", 0}}));
    EXPECT_EQ(leak.witness->sigma2, (Valuation{{"k", 1}}));
    EXPECT_EQ(leak.witness->c, 0u);
    const Qms masked = eng.qms_exact(k ^ r0);
    EXPECT_EQ(masked.num, 16u);
    EXPECT_EQ(masked.den, 16u);
    EXPECT_FALSE(masked.witness);
    const Qms pub = eng.qms_exact(p);
    EXPECT_TRUE(pub.is_one());
}

TEST(Qms, PublicInputsOnlyPairEqualValuations) {
    const auto d = make_domain(2);
    const Expr e = (k & p) ^ (r0 & ~p);
    const Qms q = CountingEngine(d).qms_exact(e);
    const auto want = oracle::qms(e, field(d));
    EXPECT_EQ(q.num, want.num);
    EXPECT_EQ(q.den, want.den);
    ASSERT_TRUE(q.witness);
    EXPECT_EQ(q.witness->sigma1[0], q.witness->sigma2[0]);
}

TEST(Qms, RandomExpressionsMatchOracle) {
    testgen::ProgramGen gen(5);
    for (int i = 0; i < 200; ++i) {
        const unsigned n = 1 + i % 3;
        const auto d = make_domain(n);
        const Program prog = parse_program(gen.program({n, 2, 2, 1, 1, 4}));
        const CountingEngine eng(d);
        for (const auto& x : prog.internals()) {
            const Expr e = prog.expr_of(x);
            const Qms q = eng.qms_exact(e);
            const auto want = oracle::qms(e, field(d));
            ASSERT_EQ(q.num, want.num) << to_string(e);
            ASSERT_EQ(q.den, want.den) << to_string(e);
            EXPECT_EQ(q.witness.has_value(), q.num < q.den);
            EXPECT_EQ(eng.check_si(e).independent, oracle::independent(e, field(d)));
            const bool uniform = eng.check_uniform(e);
            EXPECT_EQ(uniform, oracle::uniform(e, field(d))) << to_string(e);
            if (uniform) {
                EXPECT_TRUE(q.is_one());
            }
        }
    }
}

TEST(Qms, ParallelMatchesSerial) {
    const auto d = make_domain(4);
    testgen::ProgramGen gen(17);
    for (int i = 0; i < 20; ++i) {
        const Expr g = parse_expression(gen.expr({"k", "k1", "p", "r0", "r1"}, 4, 3), [](const std::string& s) {
            return Expr::var(s, s[0] == 'k' ? VarClass::Secret : s[0] == 'r' ? VarClass::Random : VarClass::Public);
        });
        // Every input present: enough work to split across workers.
        const Expr e = g ^ ((k & k1) + gf(p, r0 | r1));
        const Qms serial = CountingEngine(d, opts(1)).qms_exact(e);
        for (unsigned jobs : {2u, 3u, 8u}) {
            const Qms par = CountingEngine(d, opts(jobs)).qms_exact(e);
            EXPECT_EQ(par, serial) << to_string(e) << " jobs=" << jobs;
            EXPECT_EQ(CountingEngine(d, opts(jobs)).check_uniform(e), CountingEngine(d, opts(1)).check_uniform(e));
        }
    }
}

TEST(Budget, EnforcedBeforeWork) {
    CountingOptions o;
    o.budget = 1000;
    const CountingEngine eng(make_domain(8), o);
    EXPECT_THROW(eng.qms_exact((k ^ k1) & r0), BudgetExceeded);
    EXPECT_THROW(eng.check_uniform((k ^ k1) & r0), BudgetExceeded);
    EXPECT_NO_THROW(eng.qms_exact(k & Expr::constant(1)));
}

TEST(Budget, Deadline) {
    CountingOptions o;
    o.deadline = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    const CountingEngine eng(make_domain(8), o);
    EXPECT_THROW(eng.qms_exact((k ^ k1) & r0), CountingTimeout);
}

TEST(QmsRational, Comparisons) {
    const Qms a{3, 4, std::nullopt};
    const Qms b{6, 8, std::nullopt};
    const Qms c{7, 8, std::nullopt};
    EXPECT_TRUE(a.same_value(b));
    EXPECT_FALSE(a == b);
    EXPECT_TRUE(a.less_than(c));
    EXPECT_FALSE(c.less_than(b));
}
