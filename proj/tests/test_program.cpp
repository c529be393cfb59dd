#include "qmask/program.hpp"
#include "support/oracle.hpp"
#include "support/random_program.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace qmask;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Program cube() { return parse_program(slurp(std::string(QMASK_CORPUS_DIR) + "/cube.mv")); }

ParseError::Kind parse_kind(const std::string& text) {
    try {
        parse_program(text);
    } catch (const ParseError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "accepted: " << text;
    return ParseError::Kind::Syntax;
}

Expr leaf(const std::string& name) {
    VarClass cls = VarClass::Public;
    if (name[0] == 'k') cls = VarClass::Secret;
    if (name[0] == 'r') cls = VarClass::Random;
    return Expr::var(name, cls);
}

} // namespace

TEST(Program, CubePartition) {
    const Program p = cube();
    EXPECT_EQ(p.name(), "Cube");
    EXPECT_EQ(p.secrets(), (std::set<std::string>{"k"}));
    EXPECT_EQ(p.randoms(), (std::set<std::string>{"r0", "r1"}));
    EXPECT_TRUE(p.publics().empty());
    const std::vector<std::string> want = {"x", "x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9"};
    EXPECT_EQ(p.internals(), want);
    EXPECT_EQ(p.returns(), (std::vector<std::string>{"x7", "x9"}));
}

TEST(Program, CubeExpressions) {
    const Program p = cube();
    EXPECT_EQ(to_string(p.expr_of("x")), "k ^ r0");
    EXPECT_EQ(to_string(p.expr_of("x2")), "(k ^ r0) @ (k ^ r0) @ r0");
    EXPECT_EQ(to_string(p.expr_of("x3")), "r0 @ r0 @ (k ^ r0)");
    EXPECT_EQ(to_string(p.expr_of("x6")), "(k ^ r0) @ (k ^ r0) @ (k ^ r0)");
    EXPECT_EQ(vars(p.expr_of("x4")), (std::set<std::string>{"k", "r0", "r1"}));
    EXPECT_EQ(rvars(p.expr_of("x8")), (std::set<std::string>{"r0"}));
    EXPECT_THROW(p.expr_of("nope"), UnknownVariable);
}

TEST(Program, SharedSubtermsAreOneNode) {
    const Program p = cube();
    const Expr x2 = p.expr_of("x2");
    EXPECT_EQ(x2.lhs().lhs(), x2.lhs().rhs());
    EXPECT_EQ(x2.lhs().lhs(), p.expr_of("x"));
    EXPECT_EQ(Expr::var("k", VarClass::Secret) ^ Expr::var("r0", VarClass::Random), p.expr_of("x"));
    EXPECT_FALSE(Expr::var("k", VarClass::Secret) == Expr::var("k", VarClass::Public));
}

TEST(Program, Precedence) {
    auto p = [](const char* s) { return parse_expression(s, leaf); };
    const Expr a = leaf("a"), b = leaf("b"), c = leaf("c");
    EXPECT_EQ(p("a ^ b & c"), (a ^ b) & c);
    EXPECT_EQ(p("a & b ^ c"), a & (b ^ c));
    EXPECT_EQ(p("a + b * c"), a + (b * c));
    EXPECT_EQ(p("a ^ b + c"), a ^ (b + c));
    EXPECT_EQ(p("a @ b * c"), Expr::binary(Op::Mul, gf(a, b), c));
    EXPECT_EQ(p("a - b - c"), (a - b) - c);
    EXPECT_EQ(p("~a @ b"), gf(~a, b));
    EXPECT_EQ(p("a & b << 1"), Expr::binary(Op::Shl, a & b, Expr::constant(1)));
    EXPECT_THROW(p("a << 1 & b"), ParseError);
    EXPECT_EQ(p("0x1f ^ 10"), Expr::constant(31) ^ Expr::constant(10));
}

TEST(Program, PrintingRoundTrips) {
    testgen::ProgramGen gen(11);
    for (int i = 0; i < 300; ++i) {
        const std::string text = gen.program({4, 2, 3, 1, 1, 6});
        const Program p = parse_program(text);
        for (const auto& x : p.internals()) {
            const Expr e = p.expr_of(x);
            EXPECT_EQ(parse_expression(to_string(e), leaf), e) << to_string(e);
        }
        const Program again = parse_program(to_string(p));
        for (const auto& x : p.internals()) EXPECT_EQ(again.expr_of(x), p.expr_of(x));
    }
}

TEST(Program, CompoundStatementsAreSplit) {
    const Program p = parse_program("fn F(k: secret, r: random) { y = (k ^ r) @ (k & r); z = y; return z; }");
    const auto in = p.internals();
    ASSERT_EQ(in.size(), 4u);
    EXPECT_EQ(in[0].rfind("_t", 0), 0u);
    EXPECT_EQ(in[1].rfind("_t", 0), 0u);
    EXPECT_EQ(in[2], "y");
    for (const auto& s : p.statements()) {
        const Expr r = s.rhs;
        if (r.is_binary()) {
            EXPECT_TRUE(r.lhs().is_var() || r.lhs().is_const());
            EXPECT_TRUE(r.rhs().is_var() || r.rhs().is_const());
        }
    }
    EXPECT_EQ(to_string(p.expr_of("y")), "(k ^ r) @ (k & r)");
    EXPECT_EQ(p.expr_of("z"), p.expr_of("y"));
}

TEST(Program, TemporariesAvoidUserNames) {
    const Program p = parse_program("fn F(_t0: secret, r: random) { _t1 = (_t0 ^ r) & r; return _t1; }");
    for (const auto& x : p.internals()) EXPECT_NE(x, "_t0");
    EXPECT_EQ(to_string(p.expr_of("_t1")), "_t0 ^ r & r");
}

TEST(Program, Errors) {
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = k; x = k; return x; }"), ParseError::Kind::NotSSA);
    EXPECT_EQ(parse_kind("fn F(k: secret) { k = k; return k; }"), ParseError::Kind::NotSSA);
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = y; y = k; return x; }"), ParseError::Kind::UseBeforeDef);
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = k; return y; }"), ParseError::Kind::UseBeforeDef);
    EXPECT_EQ(parse_kind("fn F(k: hidden) { x = k; return x; }"), ParseError::Kind::UnknownClass);
    EXPECT_EQ(parse_kind("fn F(k: secret, r: random) { x = k << r; return x; }"), ParseError::Kind::NonConstShift);
    EXPECT_EQ(parse_kind("fn F(k: secret, k: random) { x = k; return x; }"), ParseError::Kind::Duplicate);
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = k ^ ; return x; }"), ParseError::Kind::Syntax);
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = k; }"), ParseError::Kind::Syntax);
    EXPECT_EQ(parse_kind("fn F(k: secret) { x = ?r; return x; }"), ParseError::Kind::Syntax);
}

TEST(Program, ErrorPosition) {
    try {
        parse_program("fn F(k: secret) {\n  x = k;\n  y = k $ x;\n  return y;\n}");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.col(), 9);
    }
}

TEST(Program, CommentsAndParenthesizedReturn) {
    const Program p = parse_program("# header\nfn F(k: secret, r: random) {\n // mask\n x = k ^ r; # inline\n return (x, r);\n}\n");
    EXPECT_EQ(p.returns(), (std::vector<std::string>{"x", "r"}));
}

TEST(Program, DomainCheck) {
    const Program p = parse_program("fn F(k: secret) { x = k ^ 300; y = k << 5; return y; }");
    EXPECT_THROW(p.check_domain(make_domain(8)), DomainError);
    EXPECT_NO_THROW(p.check_domain(make_domain(9)));
    EXPECT_THROW(p.check_domain(make_domain(4)), DomainError);
}

TEST(Expr, TreeSizeAndVars) {
    const Program p = cube();
    const Expr x6 = p.expr_of("x6");
    EXPECT_EQ(x6.tree_size(), 3u * 3u + 2u);
    ASSERT_EQ(x6.vars().size(), 2u);
    EXPECT_EQ(x6.vars()[0].name(), "k");
    EXPECT_EQ(x6.vars()[1].name(), "r0");
    EXPECT_TRUE(x6.has_secret());
    EXPECT_FALSE(p.expr_of("x8").has_secret());
}

TEST(Expr, SubstituteAndOccurrences) {
    const Program p = cube();
    const Expr x = p.expr_of("x");
    const Expr r0 = Expr::var("r0", VarClass::Random);
    EXPECT_EQ(occurrences(p.expr_of("x6"), x), 3u);
    EXPECT_EQ(to_string(substitute(p.expr_of("x6"), x, r0)), "r0 @ r0 @ r0");
}
