#pragma once

/// @file program.hpp
/// Masked straight-line programs: parsing, SSA validation and expansion of
/// each internal variable into its computation over the program inputs.
///
/// Surface syntax:
///
///     fn Cube(k: secret, r0: random, r1: random) {
///       x = k ^ r0;
///       x0 = x @ x;
///       ...
///       return x7, x9;
///     }
///
/// Operators from loosest to tightest: `<< >>`, `& |`, `^`, `+ -`, `* @`,
/// unary `~`. All binary operators are left-associative. Shift amounts must
/// be literals. Constants are decimal or `0x` hex. `//` and `#` start line
/// comments.

#include "qmask/domain.hpp"
#include "qmask/expr.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qmask {

class ParseError : public std::runtime_error {
public:
    enum class Kind { Syntax, NotSSA, UseBeforeDef, UnknownClass, NonConstShift, Duplicate };

    ParseError(Kind kind, std::string detail, int line = 0, int col = 0)
        : std::runtime_error(format(kind, detail, line, col)), kind_(kind), detail_(std::move(detail)), line_(line),
          col_(col) {}

    Kind kind() const noexcept { return kind_; }
    /// Offending identifier, or the syntax message.
    const std::string& detail() const noexcept { return detail_; }
    int line() const noexcept { return line_; }
    int col() const noexcept { return col_; }

private:
    static std::string format(Kind kind, const std::string& detail, int line, int col) {
        static const char* names[] = {"syntax error", "not in SSA form", "use before definition",
                                      "unknown variable class", "shift amount must be a constant",
                                      "duplicate declaration"};
        std::string s = names[static_cast<int>(kind)];
        if (line > 0) s += " at " + std::to_string(line) + ":" + std::to_string(col);
        return s + ": " + detail;
    }

    Kind kind_;
    std::string detail_;
    int line_;
    int col_;
};

class UnknownVariable : public std::runtime_error {
public:
    explicit UnknownVariable(const std::string& name)
        : std::runtime_error("not an internal variable: " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

struct Declaration {
    std::string name;
    VarClass cls;
    friend bool operator==(const Declaration&, const Declaration&) = default;
};

/// One SSA assignment. `rhs` has at most one operator; operands are inputs,
/// constants or previously assigned variables (class Internal).
struct Statement {
    std::string target;
    Expr rhs;
};

class Program {
public:
    Program(std::string name, std::vector<Declaration> inputs, std::vector<Statement> statements,
            std::vector<std::string> returns)
        : name_(std::move(name)), inputs_(std::move(inputs)), statements_(std::move(statements)),
          returns_(std::move(returns)) {
        validate_and_expand();
    }

    const std::string& name() const noexcept { return name_; }
    const std::vector<Declaration>& inputs() const noexcept { return inputs_; }
    const std::vector<Statement>& statements() const noexcept { return statements_; }
    const std::vector<std::string>& returns() const noexcept { return returns_; }

    std::set<std::string> inputs_of(VarClass cls) const {
        std::set<std::string> out;
        for (const auto& d : inputs_)
            if (d.cls == cls) out.insert(d.name);
        return out;
    }
    std::set<std::string> publics() const { return inputs_of(VarClass::Public); }
    std::set<std::string> secrets() const { return inputs_of(VarClass::Secret); }
    std::set<std::string> randoms() const { return inputs_of(VarClass::Random); }

    /// Internal variables in SSA order.
    std::vector<std::string> internals() const {
        std::vector<std::string> out;
        for (const auto& s : statements_) out.push_back(s.target);
        return out;
    }

    bool is_internal(const std::string& x) const { return expanded_.count(x) != 0; }

    /// The computation of `x` over public, secret and random inputs.
    Expr expr_of(const std::string& x) const {
        auto it = expanded_.find(x);
        if (it == expanded_.end()) throw UnknownVariable(x);
        return it->second;
    }

    /// Checks constants and shift amounts against a concrete bit-width.
    void check_domain(const DomainConfig& d) const {
        for (const auto& s : statements_) {
            for (Expr n : subexpressions(s.rhs)) {
                if (n.is_const() && !d.contains(n.value())) {
                    throw DomainError(DomainError::Kind::ValueOutOfRange,
                                      "constant " + std::to_string(n.value()) + " in definition of " + s.target +
                                          " does not fit in " + std::to_string(d.bits()) + " bits");
                }
                if (n.is_binary() && is_shift(n.op()) && n.rhs().value() >= d.bits()) {
                    throw DomainError(DomainError::Kind::ShiftOutOfRange,
                                      "shift by " + std::to_string(n.rhs().value()) + " in definition of " + s.target);
                }
            }
        }
    }

private:
    void validate_and_expand() {
        std::set<std::string> declared;
        ExprMap<Expr> env; // internal Var node -> expansion
        for (const auto& d : inputs_) {
            if (!declared.insert(d.name).second) throw ParseError(ParseError::Kind::Duplicate, d.name);
        }
        for (const auto& s : statements_) {
            for (Expr v : s.rhs.vars()) {
                if (v.var_class() == VarClass::Internal) {
                    if (!expanded_.count(v.name())) throw ParseError(ParseError::Kind::UseBeforeDef, v.name());
                } else if (!declared.count(v.name())) {
                    throw ParseError(ParseError::Kind::UseBeforeDef, v.name());
                }
            }
            for (Expr n : subexpressions(s.rhs)) {
                if (n.is_binary() && is_shift(n.op()) && !n.rhs().is_const())
                    throw ParseError(ParseError::Kind::NonConstShift, s.target);
            }
            if (declared.count(s.target) || expanded_.count(s.target))
                throw ParseError(ParseError::Kind::NotSSA, s.target);
            Expr full = substitute(s.rhs, env);
            expanded_.emplace(s.target, full);
            env.emplace(Expr::var(s.target, VarClass::Internal), full);
        }
        for (const auto& r : returns_) {
            if (!expanded_.count(r) && !declared.count(r)) throw ParseError(ParseError::Kind::UseBeforeDef, r);
        }
    }

    std::string name_;
    std::vector<Declaration> inputs_;
    std::vector<Statement> statements_;
    std::vector<std::string> returns_;
    std::map<std::string, Expr> expanded_;
};

namespace detail {

enum class Tok { Ident, Number, Symbol, End };

struct Token {
    Tok kind;
    std::string text;
    std::uint64_t number = 0;
    int line = 1;
    int col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            Token t{Tok::End, {}, 0, line_, col_};
            if (pos_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '?') {
                t.kind = Tok::Ident;
                t.text += take();
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text += take();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                t.kind = Tok::Number;
                int base = 10;
                if (c == '0' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
                    base = 16;
                    t.text += take();
                    t.text += take();
                }
                std::string digits;
                while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) {
                    if (base == 10 && !std::isdigit(static_cast<unsigned char>(src_[pos_]))) break;
                    digits += take();
                }
                if (digits.empty() || digits.size() > 9)
                    throw ParseError(ParseError::Kind::Syntax, "bad numeric literal", t.line, t.col);
                t.text += digits;
                t.number = std::stoull(digits, nullptr, base);
            } else {
                t.kind = Tok::Symbol;
                if ((c == '<' || c == '>') && pos_ + 1 < src_.size() && src_[pos_ + 1] == c) {
                    t.text += take();
                    t.text += take();
                } else if (std::string_view("(){}:;,=^&|~+-*@").find(c) != std::string_view::npos) {
                    t.text += take();
                } else {
                    throw ParseError(ParseError::Kind::Syntax, std::string("unexpected character '") + c + "'",
                                     t.line, t.col);
                }
            }
            out.push_back(std::move(t));
        }
    }

private:
    char take() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                take();
            } else if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n') take();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

inline std::optional<Op> binary_op(const std::string& s) {
    static const std::map<std::string, Op> table = {
        {"^", Op::Xor}, {"&", Op::And}, {"|", Op::Or},   {"@", Op::GfMul}, {"+", Op::Add},
        {"-", Op::Sub}, {"*", Op::Mul}, {"<<", Op::Shl}, {">>", Op::Shr},
    };
    if (auto it = table.find(s); it != table.end()) return it->second;
    return std::nullopt;
}

using Resolver = std::function<Expr(const Token&)>;

class ExprParser {
public:
    ExprParser(const std::vector<Token>& toks, std::size_t& pos, Resolver resolve)
        : toks_(toks), pos_(pos), resolve_(std::move(resolve)) {}

    Expr parse(int min_prec = 1) {
        Expr lhs = primary();
        for (;;) {
            const Token& t = toks_[pos_];
            if (t.kind != Tok::Symbol) break;
            auto op = binary_op(t.text);
            if (!op || precedence(*op) < min_prec) break;
            ++pos_;
            Expr rhs = parse(precedence(*op) + 1);
            if (is_shift(*op) && !rhs.is_const()) {
                throw ParseError(ParseError::Kind::NonConstShift, "shift amount must be a literal", t.line, t.col);
            }
            lhs = Expr::binary(*op, lhs, rhs);
        }
        return lhs;
    }

private:
    Expr primary() {
        const Token& t = toks_[pos_];
        if (t.kind == Tok::Symbol && t.text == "~") {
            ++pos_;
            return Expr::unary(Op::Not, primary());
        }
        if (t.kind == Tok::Symbol && t.text == "(") {
            ++pos_;
            Expr e = parse(1);
            expect(")");
            return e;
        }
        if (t.kind == Tok::Number) {
            ++pos_;
            if (t.number > 0xFFFFFFFFull) throw ParseError(ParseError::Kind::Syntax, "constant too large", t.line, t.col);
            return Expr::constant(static_cast<Value>(t.number));
        }
        if (t.kind == Tok::Ident) {
            ++pos_;
            return resolve_(t);
        }
        throw ParseError(ParseError::Kind::Syntax, "expected expression, found '" + t.text + "'", t.line, t.col);
    }

    void expect(const char* s) {
        const Token& t = toks_[pos_];
        if (t.kind != Tok::Symbol || t.text != s)
            throw ParseError(ParseError::Kind::Syntax, std::string("expected '") + s + "'", t.line, t.col);
        ++pos_;
    }

    const std::vector<Token>& toks_;
    std::size_t& pos_;
    Resolver resolve_;
};

/// Splits a compound right-hand side into single-operator statements,
/// introducing fresh temporaries.
class Splitter {
public:
    Splitter(std::vector<Statement>& out, const std::set<std::string>& reserved) : out_(out), reserved_(reserved) {}

    void emit(const std::string& target, Expr rhs) {
        ExprMap<Expr> memo;
        out_.push_back({target, flatten_top(rhs, memo)});
    }

private:
    // Keeps the top operator, turning compound operands into temporaries.
    Expr flatten_top(Expr e, ExprMap<Expr>& memo) {
        if (e.is_unary()) return Expr::unary(e.op(), atom(e.operand(), memo));
        if (e.is_binary()) {
            Expr a = atom(e.lhs(), memo);
            Expr b = atom(e.rhs(), memo);
            return Expr::binary(e.op(), a, b);
        }
        return e;
    }

    Expr atom(Expr e, ExprMap<Expr>& memo) {
        if (e.is_const() || e.is_var()) return e;
        if (auto it = memo.find(e); it != memo.end()) return it->second;
        Expr rhs = flatten_top(e, memo);
        std::string name = fresh();
        out_.push_back({name, rhs});
        Expr v = Expr::var(name, VarClass::Internal);
        memo.emplace(e, v);
        return v;
    }

    std::string fresh() {
        for (;;) {
            std::string n = "_t" + std::to_string(counter_++);
            if (!reserved_.count(n)) return n;
        }
    }

    std::vector<Statement>& out_;
    const std::set<std::string>& reserved_;
    unsigned counter_ = 0;
};

} // namespace detail

/// Parses a standalone expression. `resolve` maps identifiers to leaves.
inline Expr parse_expression(std::string_view text, const std::function<Expr(const std::string&)>& resolve) {
    detail::Lexer lexer(text);
    auto toks = lexer.run();
    std::size_t pos = 0;
    detail::ExprParser parser(toks, pos, [&](const detail::Token& t) { return resolve(t.text); });
    Expr e = parser.parse();
    if (toks[pos].kind != detail::Tok::End)
        throw ParseError(ParseError::Kind::Syntax, "trailing input '" + toks[pos].text + "'", toks[pos].line,
                         toks[pos].col);
    return e;
}

/// Parses a program, splitting compound right-hand sides into temporaries
/// named `_tN`.
inline Program parse_program(std::string_view text) {
    using detail::Tok;
    detail::Lexer lexer(text);
    const auto toks = lexer.run();
    std::size_t pos = 0;

    auto fail = [&](const std::string& msg) -> ParseError {
        const auto& t = toks[pos];
        return ParseError(ParseError::Kind::Syntax, msg + (t.kind == Tok::End ? " at end of input" : ", found '" + t.text + "'"),
                          t.line, t.col);
    };
    auto is_sym = [&](const char* s) { return toks[pos].kind == Tok::Symbol && toks[pos].text == s; };
    auto expect_sym = [&](const char* s) {
        if (!is_sym(s)) throw fail(std::string("expected '") + s + "'");
        ++pos;
    };
    auto expect_ident = [&]() -> const detail::Token& {
        if (toks[pos].kind != Tok::Ident || toks[pos].text.front() == '?') throw fail("expected identifier");
        return toks[pos++];
    };

    if (toks[pos].kind != Tok::Ident || toks[pos].text != "fn") throw fail("expected 'fn'");
    ++pos;
    const std::string name = expect_ident().text;
    expect_sym("(");
    std::vector<Declaration> inputs;
    std::map<std::string, VarClass> classes;
    if (!is_sym(")")) {
        for (;;) {
            const auto& id = expect_ident();
            expect_sym(":");
            const auto& cls_tok = toks[pos];
            if (cls_tok.kind != Tok::Ident) throw fail("expected variable class");
            ++pos;
            VarClass cls;
            if (cls_tok.text == "public") cls = VarClass::Public;
            else if (cls_tok.text == "secret") cls = VarClass::Secret;
            else if (cls_tok.text == "random") cls = VarClass::Random;
            else throw ParseError(ParseError::Kind::UnknownClass, cls_tok.text, cls_tok.line, cls_tok.col);
            if (!classes.emplace(id.text, cls).second)
                throw ParseError(ParseError::Kind::Duplicate, id.text, id.line, id.col);
            inputs.push_back({id.text, cls});
            if (is_sym(",")) {
                ++pos;
                continue;
            }
            break;
        }
    }
    expect_sym(")");
    expect_sym("{");

    // Collect raw statements first so temporaries avoid every user name.
    struct Raw {
        std::string target;
        Expr rhs;
    };
    std::vector<Raw> raw;
    std::set<std::string> assigned;
    std::vector<std::string> returns;
    auto resolve = [&](const detail::Token& t) -> Expr {
        if (t.text.front() == '?') throw ParseError(ParseError::Kind::Syntax, "unexpected metavariable", t.line, t.col);
        if (auto it = classes.find(t.text); it != classes.end()) return Expr::var(t.text, it->second);
        if (assigned.count(t.text)) return Expr::var(t.text, VarClass::Internal);
        throw ParseError(ParseError::Kind::UseBeforeDef, t.text, t.line, t.col);
    };
    for (;;) {
        if (toks[pos].kind == Tok::Ident && toks[pos].text == "return") {
            ++pos;
            const bool paren = is_sym("(");
            if (paren) ++pos;
            for (;;) {
                const auto& id = expect_ident();
                if (!classes.count(id.text) && !assigned.count(id.text))
                    throw ParseError(ParseError::Kind::UseBeforeDef, id.text, id.line, id.col);
                returns.push_back(id.text);
                if (is_sym(",")) {
                    ++pos;
                    continue;
                }
                break;
            }
            if (paren) expect_sym(")");
            expect_sym(";");
            break;
        }
        const auto& target = expect_ident();
        expect_sym("=");
        detail::ExprParser ep(toks, pos, resolve);
        Expr rhs = ep.parse();
        expect_sym(";");
        if (classes.count(target.text) || assigned.count(target.text))
            throw ParseError(ParseError::Kind::NotSSA, target.text, target.line, target.col);
        assigned.insert(target.text);
        raw.push_back({target.text, rhs});
    }
    expect_sym("}");
    if (toks[pos].kind != Tok::End) throw fail("trailing input");

    std::set<std::string> reserved = assigned;
    for (const auto& [n, c] : classes) reserved.insert(n);
    std::vector<Statement> stmts;
    detail::Splitter splitter(stmts, reserved);
    for (const auto& r : raw) splitter.emit(r.target, r.rhs);
    return Program(name, std::move(inputs), std::move(stmts), std::move(returns));
}

/// Renders a program in the surface syntax (one operator per statement).
inline std::string to_string(const Program& p) {
    std::ostringstream os;
    os << "fn " << p.name() << "(";
    for (std::size_t i = 0; i < p.inputs().size(); ++i) {
        if (i) os << ", ";
        os << p.inputs()[i].name << ": " << class_name(p.inputs()[i].cls);
    }
    os << ") {\n";
    for (const auto& s : p.statements()) os << "  " << s.target << " = " << to_string(s.rhs) << ";\n";
    os << "  return ";
    for (std::size_t i = 0; i < p.returns().size(); ++i) os << (i ? ", " : "") << p.returns()[i];
    os << ";\n}\n";
    return os.str();
}

inline std::set<std::string> vars(Expr e) {
    auto v = var_names(e);
    return {v.begin(), v.end()};
}

inline std::set<std::string> rvars(Expr e) {
    auto v = rvar_names(e);
    return {v.begin(), v.end()};
}

} // namespace qmask
