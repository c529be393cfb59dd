#pragma once

/// @file smt.hpp
/// SMT-LIB2 encoding of "QMS(e) < q", an external solver driver and the
/// binary search computing QMS exactly with at most m + 1 solver calls.
///
/// For m = n * |RVar(e)| the query holds one copy c_f = e[f] per random
/// assignment f, and a primed copy c_f' over primed secrets. Public inputs
/// are shared. Indicators I_f = (c = c_f ? 1 : 0) are summed and the script
/// asserts sum(I) - sum(I') > delta with delta = ceil((1 - q) * 2^m). The
/// script is satisfiable iff QMS(e) < q.

#include "qmask/counting.hpp"
#include "qmask/domain.hpp"
#include "qmask/expr.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace qmask {

inline constexpr unsigned kMaxCopyBits = 16;

/// How indicator sums are encoded: as (m+2)-bit vectors in QF_BV, or as
/// integers for solvers accepting mixed theories.
enum class SolverProfile { BitVector, Integer };

struct SmtQuery {
    std::string text;
    std::uint64_t q_num = 1;
    std::uint64_t q_den = 1;
    unsigned m = 0;
    std::uint64_t delta = 0;
    std::size_t copies = 1;
};

class TooManyCopies : public std::runtime_error {
public:
    explicit TooManyCopies(unsigned m)
        : std::runtime_error("query needs 2^" + std::to_string(m) + " copies per side (limit 2^16)") {}
};

class SolverSpawnFailure : public std::runtime_error {
public:
    explicit SolverSpawnFailure(const std::string& what) : std::runtime_error(what) {}
};

class InconclusiveSolver : public std::runtime_error {
public:
    explicit InconclusiveSolver(const std::string& what) : std::runtime_error(what) {}
};

struct SolverVerdict {
    enum class Kind { Sat, Unsat, Unknown } kind = Kind::Unknown;
    std::string reason;
    std::chrono::steady_clock::duration elapsed{};
    /// Solver output following the verdict line.
    std::string model;
};

inline const char* verdict_name(SolverVerdict::Kind k) {
    switch (k) {
    case SolverVerdict::Kind::Sat: return "sat";
    case SolverVerdict::Kind::Unsat: return "unsat";
    case SolverVerdict::Kind::Unknown: return "unknown";
    }
    return "?";
}

/// ceil((1 - num/den) * 2^m).
inline std::uint64_t psi_delta(std::uint64_t num, std::uint64_t den, unsigned m) {
    if (den == 0 || num > den) throw std::invalid_argument("q must lie in [0, 1]");
    const unsigned __int128 scaled = static_cast<unsigned __int128>(den - num) << m;
    return static_cast<std::uint64_t>((scaled + den - 1) / den);
}

namespace detail {

inline std::string bv(std::uint64_t v, unsigned w) {
    return "(_ bv" + std::to_string(v) + " " + std::to_string(w) + ")";
}

inline std::string gfmul_definition(const DomainConfig& d) {
    const unsigned n = d.bits();
    const std::string ty = "(_ BitVec " + std::to_string(n) + ")";
    const std::string zero = bv(0, n);
    const std::string low = bv(d.poly() & d.mask(), n);
    auto bit = [&](const std::string& x, unsigned i) {
        return "(= ((_ extract " + std::to_string(i) + " " + std::to_string(i) + ") " + x + ") #b1)";
    };
    auto xtime = [&](const std::string& x) {
        return "(bvxor (bvshl " + x + " " + bv(1, n) + ") (ite " + bit(x, n - 1) + " " + low + " " + zero + "))";
    };
    // Horner over the bits of b, most significant first.
    std::string body = "(ite " + bit("b", n - 1) + " a " + zero + ")";
    std::string lets;
    std::string close;
    std::string prev = "$m" + std::to_string(n - 1);
    lets += "(let ((" + prev + " " + body + ")) ";
    close += ")";
    for (unsigned i = n - 1; i-- > 0;) {
        const std::string cur = "$m" + std::to_string(i);
        lets += "(let ((" + cur + " (bvxor " + xtime(prev) + " (ite " + bit("b", i) + " a " + zero + ")))) ";
        close += ")";
        prev = cur;
    }
    return "(define-fun $gfmul ((a " + ty + ") (b " + ty + ")) " + ty + " " + lets + prev + close + ")\n";
}

inline const char* smt_op(Op op) {
    switch (op) {
    case Op::Xor: return "bvxor";
    case Op::And: return "bvand";
    case Op::Or: return "bvor";
    case Op::GfMul: return "$gfmul";
    case Op::Add: return "bvadd";
    case Op::Sub: return "bvsub";
    case Op::Mul: return "bvmul";
    case Op::Shl: return "bvshl";
    case Op::Shr: return "bvlshr";
    case Op::Not: return "bvnot";
    }
    return "?";
}

inline std::string quote(const std::string& s) { return "|" + s + "|"; }

/// Term for e with leaves rendered by `leaf`; inner nodes become lets.
template <typename Leaf>
std::string smt_term(Expr e, unsigned n, Leaf&& leaf) {
    ExprMap<std::string> ref;
    std::string lets;
    std::string close;
    std::size_t next = 0;
    for (Expr s : subexpressions(e)) {
        if (s.is_const()) {
            ref.emplace(s, bv(s.value(), n));
        } else if (s.is_var()) {
            ref.emplace(s, leaf(s));
        } else {
            std::string body = "(" + std::string(smt_op(s.op())) + " ";
            if (s.is_unary()) body += ref.at(s.operand());
            else body += ref.at(s.lhs()) + " " + ref.at(s.rhs());
            body += ")";
            const std::string name = "$t" + std::to_string(next++);
            lets += "(let ((" + name + " " + body + ")) ";
            close += ")";
            ref.emplace(s, name);
        }
    }
    return lets + ref.at(e) + close;
}

inline bool uses_gfmul(Expr e) {
    for (Expr s : subexpressions(e))
        if (s.is_binary() && s.op() == Op::GfMul) return true;
    return false;
}

} // namespace detail

/// Builds the script deciding QMS(e) < q_num / q_den. Deterministic.
inline SmtQuery encode_psi(Expr e, std::uint64_t q_num, std::uint64_t q_den, const DomainConfig& d,
                           SolverProfile profile = SolverProfile::BitVector) {
    using detail::bv;
    using detail::quote;
    const unsigned n = d.bits();
    const auto rnd = e.rvars();
    const unsigned m = n * static_cast<unsigned>(rnd.size());
    if (m > kMaxCopyBits) throw TooManyCopies(m);

    SmtQuery q;
    q.q_num = q_num;
    q.q_den = q_den;
    q.m = m;
    q.delta = psi_delta(q_num, q_den, m);
    q.copies = std::size_t{1} << m;

    const std::string ty = "(_ BitVec " + std::to_string(n) + ")";
    const unsigned w = m + 2;
    const bool ints = profile == SolverProfile::Integer;
    const std::string ity = ints ? "Int" : "(_ BitVec " + std::to_string(w) + ")";
    const std::string one = ints ? "1" : bv(1, w);
    const std::string zero = ints ? "0" : bv(0, w);

    std::ostringstream os;
    os << "; QMS < " << q_num << "/" << q_den << " for " << to_string(e) << "\n";
    os << "; m = " << m << ", delta = " << q.delta << "\n";
    os << "(set-logic " << (ints ? "ALL" : "QF_BV") << ")\n";
    os << "(set-option :produce-models true)\n";
    if (detail::uses_gfmul(e)) os << detail::gfmul_definition(d);

    const auto pubs = e.vars_of_class(VarClass::Public);
    const auto secs = e.vars_of_class(VarClass::Secret);
    for (Expr v : pubs) os << "(declare-fun " << quote(v.name()) << " () " << ty << ")\n";
    for (Expr v : secs) os << "(declare-fun " << quote(v.name()) << " () " << ty << ")\n";
    for (Expr v : secs) os << "(declare-fun " << quote(v.name() + "'") << " () " << ty << ")\n";
    os << "(declare-fun |$c| () " << ty << ")\n";

    std::vector<Value> f(rnd.size(), 0);
    for (std::size_t idx = 0; idx < q.copies; ++idx) {
        for (int primed = 0; primed < 2; ++primed) {
            const std::string suffix = primed ? "'" : "";
            const std::string c = quote("$c_" + std::to_string(idx) + suffix);
            const std::string ind = quote("$I_" + std::to_string(idx) + suffix);
            auto leaf = [&](Expr v) -> std::string {
                if (v.is_random()) {
                    for (std::size_t i = 0; i < rnd.size(); ++i)
                        if (rnd[i] == v) return bv(f[i], n);
                }
                if (v.var_class() == VarClass::Secret) return quote(v.name() + suffix);
                return quote(v.name());
            };
            os << "(declare-fun " << c << " () " << ty << ")\n";
            os << "(assert (= " << c << " " << detail::smt_term(e, n, leaf) << "))\n";
            os << "(declare-fun " << ind << " () " << ity << ")\n";
            os << "(assert (= " << ind << " (ite (= |$c| " << c << ") " << one << " " << zero << ")))\n";
        }
        next_assignment(f, d.mask());
    }

    auto sum = [&](const std::string& suffix) {
        if (q.copies == 1) return quote("$I_0" + suffix);
        std::string s = ints ? "(+" : "(bvadd";
        for (std::size_t idx = 0; idx < q.copies; ++idx) s += " " + quote("$I_" + std::to_string(idx) + suffix);
        return s + ")";
    };
    if (ints) {
        os << "(assert (> (- " << sum("") << " " << sum("'") << ") " << q.delta << "))\n";
    } else {
        os << "(assert (bvugt " << sum("") << " (bvadd " << sum("'") << " " << bv(q.delta, w) << ")))\n";
    }
    os << "(check-sat)\n";
    os << "(get-value (";
    bool first = true;
    for (Expr v : pubs) {
        os << (first ? "" : " ") << quote(v.name());
        first = false;
    }
    for (Expr v : secs) {
        os << (first ? "" : " ") << quote(v.name()) << " " << quote(v.name() + "'");
        first = false;
    }
    os << (first ? "" : " ") << "|$c|))\n";
    os << "(exit)\n";
    q.text = os.str();
    return q;
}

namespace detail {

inline std::vector<std::string> split_command(const std::string& cmd) {
    std::istringstream in(cmd);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

/// Runs argv, returning merged stdout/stderr, or nullopt on timeout.
inline std::optional<std::string> run_process(const std::vector<std::string>& argv,
                                              std::chrono::milliseconds timeout) {
    int out_pipe[2];
    int err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0)
        throw SolverSpawnFailure(std::string("pipe: ") + std::strerror(errno));
    const pid_t pid = fork();
    if (pid < 0) throw SolverSpawnFailure(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        setpgid(0, 0);
        close(out_pipe[0]);
        close(err_pipe[0]);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(out_pipe[1], STDERR_FILENO);
        const int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        const int code = errno;
        [[maybe_unused]] auto ignored = write(err_pipe[1], &code, sizeof code);
        _exit(127);
    }
    close(out_pipe[1]);
    close(err_pipe[1]);
    int exec_errno = 0;
    const bool exec_failed = read(err_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno;
    close(err_pipe[0]);
    if (exec_failed) {
        close(out_pipe[0]);
        waitpid(pid, nullptr, 0);
        throw SolverSpawnFailure("cannot execute '" + argv[0] + "': " + std::strerror(exec_errno));
    }

    std::string output;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    bool timed_out = false;
    char buf[4096];
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        const int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (rc < 0 && errno == EINTR) continue;
        if (rc == 0) continue;
        const ssize_t got = read(out_pipe[0], buf, sizeof buf);
        if (got <= 0) break;
        output.append(buf, static_cast<std::size_t>(got));
    }
    close(out_pipe[0]);
    // The solver may be a wrapper script; take down its whole group.
    if (timed_out) kill(-pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    if (timed_out) return std::nullopt;
    return output;
}

} // namespace detail

/// Runs `solver_cmd <script>` once. The command is split on whitespace; the
/// script path is appended as the final argument.
inline SolverVerdict check_sat(const std::string& script, const std::string& solver_cmd,
                               std::chrono::milliseconds timeout) {
    auto argv = detail::split_command(solver_cmd);
    if (argv.empty()) throw SolverSpawnFailure("empty solver command");
    std::string path = (std::filesystem::temp_directory_path() / "qmask-XXXXXX.smt2").string();
    const int fd = mkstemps(path.data(), 5);
    if (fd < 0) throw SolverSpawnFailure("cannot create temporary script file");
    {
        std::size_t off = 0;
        while (off < script.size()) {
            const ssize_t w = write(fd, script.data() + off, script.size() - off);
            if (w <= 0) break;
            off += static_cast<std::size_t>(w);
        }
        close(fd);
    }
    argv.push_back(path);

    SolverVerdict v;
    const auto start = std::chrono::steady_clock::now();
    std::optional<std::string> out;
    try {
        out = detail::run_process(argv, timeout);
    } catch (...) {
        std::filesystem::remove(path);
        throw;
    }
    std::filesystem::remove(path);
    v.elapsed = std::chrono::steady_clock::now() - start;
    if (!out) {
        v.reason = "timeout";
        return v;
    }
    std::istringstream in(*out);
    std::string line;
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
        break;
    }
    if (line == "sat") v.kind = SolverVerdict::Kind::Sat;
    else if (line == "unsat") v.kind = SolverVerdict::Kind::Unsat;
    else v.reason = out->empty() ? "no output" : out->substr(0, 400);
    std::ostringstream rest;
    rest << in.rdbuf();
    v.model = rest.str();
    return v;
}

inline SolverVerdict check_sat(const SmtQuery& q, const std::string& solver_cmd, std::chrono::milliseconds timeout) {
    return check_sat(q.text, solver_cmd, timeout);
}

namespace detail {

/// Reads `((sym value) ...)` as printed by get-value.
inline std::optional<std::map<std::string, std::uint64_t>> parse_values(const std::string& text) {
    std::map<std::string, std::uint64_t> out;
    std::size_t i = 0;
    auto skip = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto symbol = [&]() -> std::optional<std::string> {
        skip();
        if (i < text.size() && text[i] == '|') {
            const auto end = text.find('|', i + 1);
            if (end == std::string::npos) return std::nullopt;
            std::string s = text.substr(i + 1, end - i - 1);
            i = end + 1;
            return s;
        }
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '(' && text[i] != ')')
            ++i;
        if (i == start) return std::nullopt;
        return text.substr(start, i - start);
    };
    auto value = [&]() -> std::optional<std::uint64_t> {
        skip();
        if (text.compare(i, 2, "#x") == 0 || text.compare(i, 2, "#b") == 0) {
            const int base = text[i + 1] == 'x' ? 16 : 2;
            i += 2;
            const auto start = i;
            while (i < text.size() && std::isxdigit(static_cast<unsigned char>(text[i]))) ++i;
            return std::stoull(text.substr(start, i - start), nullptr, base);
        }
        if (text.compare(i, 4, "(_ b") == 0) {
            i += 5; // "(_ bv"
            const auto start = i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            const auto v = std::stoull(text.substr(start, i - start));
            i = text.find(')', i);
            if (i == std::string::npos) return std::nullopt;
            ++i;
            return v;
        }
        return std::nullopt;
    };
    skip();
    if (i >= text.size() || text[i] != '(') return std::nullopt;
    ++i;
    for (;;) {
        skip();
        if (i >= text.size()) return std::nullopt;
        if (text[i] == ')') break;
        if (text[i] != '(') return std::nullopt;
        ++i;
        auto s = symbol();
        auto v = value();
        if (!s || !v) return std::nullopt;
        skip();
        if (i >= text.size() || text[i] != ')') return std::nullopt;
        ++i;
        out[*s] = *v;
    }
    return out;
}

} // namespace detail

struct SmtOptions {
    std::string solver_cmd = "z3";
    std::chrono::milliseconds timeout{60000};
    SolverProfile profile = SolverProfile::BitVector;
    /// When set, every script is written to `<dir>/<label>_q<num>_<den>.smt2`.
    std::optional<std::filesystem::path> emit_dir;
    std::string label = "expr";
};

struct SmtQmsResult {
    Qms qms;
    unsigned solver_calls = 0;
};

inline void emit_script(const SmtOptions& opts, const SmtQuery& q) {
    if (!opts.emit_dir) return;
    std::filesystem::create_directories(*opts.emit_dir);
    const auto path =
        *opts.emit_dir / (opts.label + "_q" + std::to_string(q.q_num) + "_" + std::to_string(q.q_den) + ".smt2");
    std::ofstream(path) << q.text;
}

/// Decides x-SI with the q = 1 query: true when the script is unsatisfiable.
inline bool smt_independent(Expr e, const DomainConfig& d, const SmtOptions& opts) {
    const SmtQuery q = encode_psi(e, 1, 1, d, opts.profile);
    emit_script(opts, q);
    const SolverVerdict v = check_sat(q, opts.solver_cmd, opts.timeout);
    if (v.kind == SolverVerdict::Kind::Unknown) throw InconclusiveSolver(opts.label + ": " + v.reason);
    return v.kind == SolverVerdict::Kind::Unsat;
}

/// Binary search over low / 2^m: SAT at q = mid / 2^m means QMS < q.
inline SmtQmsResult qms_smt(Expr e, const DomainConfig& d, const SmtOptions& opts) {
    const unsigned m = d.bits() * static_cast<unsigned>(e.rvars().size());
    if (m > kMaxCopyBits) throw TooManyCopies(m);
    const std::uint64_t den = std::uint64_t{1} << m;
    std::uint64_t low = 0;
    std::uint64_t high = den;
    SmtQmsResult res;
    std::optional<std::string> witness_model;
    while (low < high) {
        const std::uint64_t mid = (low + high + 1) / 2;
        const SmtQuery q = encode_psi(e, mid, den, d, opts.profile);
        emit_script(opts, q);
        const SolverVerdict v = check_sat(q, opts.solver_cmd, opts.timeout);
        ++res.solver_calls;
        if (v.kind == SolverVerdict::Kind::Unknown)
            throw InconclusiveSolver(opts.label + " at q = " + std::to_string(mid) + "/" + std::to_string(den) + ": " +
                                     v.reason);
        if (v.kind == SolverVerdict::Kind::Sat) {
            high = mid - 1;
            // The model at mid = low + 1 attains the maximal gap.
            if (mid == high + 1) witness_model = v.model;
        } else {
            low = mid;
        }
    }
    res.qms.num = low;
    res.qms.den = den;
    if (low < den && witness_model) {
        if (auto values = detail::parse_values(*witness_model)) {
            QmsWitness w;
            for (Expr v : e.vars_of_class(VarClass::Public)) {
                const auto val = static_cast<Value>(values->count(v.name()) ? values->at(v.name()) : 0);
                w.sigma1.emplace_back(v.name(), val);
                w.sigma2.emplace_back(v.name(), val);
            }
            for (Expr v : e.vars_of_class(VarClass::Secret)) {
                w.sigma1.emplace_back(v.name(), static_cast<Value>(values->count(v.name()) ? values->at(v.name()) : 0));
                const std::string primed = v.name() + "'";
                w.sigma2.emplace_back(v.name(), static_cast<Value>(values->count(primed) ? values->at(primed) : 0));
            }
            w.c = static_cast<Value>(values->count("$c") ? values->at("$c") : 0);
            res.qms.witness = std::move(w);
        }
    }
    return res;
}

} // namespace qmask
