#include "qmask/program.hpp"
#include "qmask/type_infer.hpp"
#include "support/oracle.hpp"
#include "support/random_program.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace qmask;

namespace {

const Expr k = Expr::var("k", VarClass::Secret);
const Expr k1 = Expr::var("k1", VarClass::Secret);
const Expr r0 = Expr::var("r0", VarClass::Random);
const Expr r1 = Expr::var("r1", VarClass::Random);
const Expr p = Expr::var("p", VarClass::Public);
Expr c(Value v) { return Expr::constant(v); }

Program cube() {
    std::ifstream in(std::string(QMASK_CORPUS_DIR) + "/cube.mv");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_program(ss.str());
}

} // namespace

TEST(DominantVars, Basics) {
    EXPECT_EQ(dominant_vars(k ^ r0), (std::set<std::string>{"r0"}));
    EXPECT_EQ(dominant_vars(~(k + r0) - r1), (std::set<std::string>{"r0", "r1"}));
    EXPECT_TRUE(dominant_vars(r0 ^ r0).empty());
    EXPECT_TRUE(dominant_vars((k ^ r0) & r1).empty());
    EXPECT_EQ(dominant_vars(r0 ^ (k & r1) ^ r1), (std::set<std::string>{"r0"}));
    EXPECT_EQ(dominant_vars((r0 * c(3)) ^ k), (std::set<std::string>{"r0"}));
    EXPECT_TRUE(dominant_vars((r0 * c(2)) ^ k).empty());
    EXPECT_EQ(dominant_vars(gf(c(7), r0 ^ k)), (std::set<std::string>{"r0"}));
    EXPECT_TRUE(dominant_vars(gf(r0, c(0))).empty());
    EXPECT_TRUE(dominant_vars(Expr::binary(Op::Shl, r0, c(1))).empty());
}

TEST(TypeInference, CubeJudgements) {
    const Program prog = cube();
    const std::map<std::string, DistType> want = {
        {"x", DistType::RUD},  {"x0", DistType::SID}, {"x1", DistType::SID}, {"x2", DistType::UKD},
        {"x3", DistType::UKD}, {"x4", DistType::RUD}, {"x5", DistType::RUD}, {"x6", DistType::UKD},
        {"x7", DistType::RUD}, {"x8", DistType::SID}, {"x9", DistType::RUD}};
    TypeInference ti;
    for (const auto& [x, t] : want) EXPECT_EQ(ti.type_of(prog.expr_of(x)), t) << x;
}

TEST(TypeInference, RuleTraces) {
    auto trace = [](Expr e) { return infer(e).rule_trace; };
    using V = std::vector<std::string>;
    EXPECT_EQ(trace(k ^ r0), V{"Dom"});
    EXPECT_EQ(trace(gf(r0, r0)), V{"NoKey"});
    EXPECT_EQ(trace(k), V{"Key"});
    EXPECT_EQ(trace((k & r0) ^ (k & r0)), V{"Ide3"});
    EXPECT_EQ(trace(~(k & (k ^ r0))), V{"Ide1"});
    EXPECT_EQ(trace(gf(k ^ r0, k ^ r0)), V{"Ide2"});
    EXPECT_EQ(trace(k & k), V{"Ide4"});
    EXPECT_EQ(trace(gf(k ^ r0, r1)), V{"Sid1"});
    EXPECT_EQ(trace(gf(r1, k ^ r0)), V{"Sid1"});
    EXPECT_EQ(trace(gf(r0, k ^ r0 ^ r1)), (V{"Com", "Sid1"}));
    EXPECT_EQ(trace(gf(gf(k ^ r0, r1), p)), V{"Sid2"});
    EXPECT_EQ(trace(k & r0), V{"Sdd"});
    EXPECT_EQ(trace(r0 & k), (V{"Com", "Sdd"}));
    EXPECT_EQ(trace(gf(k ^ r0, r0)), V{"Ukd"});
}

TEST(TypeInference, Types) {
    EXPECT_EQ(infer(k & r0).type, DistType::SDD);
    EXPECT_EQ(infer(k | k).type, DistType::SDD);
    EXPECT_EQ(infer(p ^ r0).type, DistType::RUD);
    EXPECT_EQ(infer(k | r0).type, DistType::SDD);
    EXPECT_EQ(infer(p & k).type, DistType::UKD);
    EXPECT_EQ(infer((k ^ r0) + (k1 ^ r1)).type, DistType::RUD);
    EXPECT_TRUE(subtype(DistType::RUD, DistType::SID));
    EXPECT_FALSE(subtype(DistType::SID, DistType::RUD));
}

TEST(TypeInference, StoreIsConsultedBeforeUkd) {
    const Expr leaky = gf(k ^ r0, r0);
    ExprMap<DistType> store;
    TypeInference ti([&](Expr e) -> std::optional<DistType> {
        auto it = store.find(e);
        if (it == store.end()) return std::nullopt;
        return it->second;
    });
    EXPECT_EQ(ti.type_of(leaky), DistType::UKD);
    store[leaky] = DistType::SDD;
    EXPECT_EQ(ti.type_of(leaky), DistType::UKD); // memoized
    ti.forget_unknown();
    const Judgement& j = ti.infer(leaky);
    EXPECT_EQ(j.type, DistType::SDD);
    EXPECT_EQ(j.rule_trace, std::vector<std::string>{"Store"});
    EXPECT_FALSE(j.structural);
    // A counted leak must not be combined with Sdd: (k | 1) @ r is uniform
    // for every k although k | 1 depends on k.
    const Expr odd = k | c(1);
    store[odd] = DistType::SDD;
    EXPECT_NE(ti.type_of(gf(odd, r1)), DistType::SDD);
}

TEST(TypeInference, SoundOnRandomPrograms) {
    testgen::ProgramGen gen(2024);
    int checked = 0;
    for (int i = 0; i < 250; ++i) {
        const unsigned n = 1 + i % 2;
        const Program prog = parse_program(gen.program({n, 2, 3, 1, 2, 5}));
        const auto d = make_domain(n);
        const oracle::Field f{n, d.poly()};
        TypeInference ti;
        for (const auto& x : prog.internals()) {
            const Expr e = prog.expr_of(x);
            switch (ti.type_of(e)) {
            case DistType::RUD: EXPECT_TRUE(oracle::uniform(e, f)) << to_string(e); break;
            case DistType::SID: EXPECT_TRUE(oracle::independent(e, f)) << to_string(e); break;
            case DistType::SDD: EXPECT_FALSE(oracle::independent(e, f)) << to_string(e); break;
            case DistType::UKD: break;
            }
            ++checked;
        }
    }
    EXPECT_GT(checked, 500);
}
