#pragma once

/// @file verifier.hpp
/// Perfect-masking check and QMS computation over a whole program: type
/// inference first, reductions second, model counting last. Resolved types
/// are recorded against the expression so later variables can reuse them.

#include "qmask/counting.hpp"
#include "qmask/domain.hpp"
#include "qmask/expr.hpp"
#include "qmask/program.hpp"
#include "qmask/reduce.hpp"
#include "qmask/smt.hpp"
#include "qmask/type_infer.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qmask {

enum class EngineKind { TypeOnly, BruteForce, Smt };

inline const char* engine_name(EngineKind k) {
    switch (k) {
    case EngineKind::TypeOnly: return "type-only";
    case EngineKind::BruteForce: return "bruteforce";
    case EngineKind::Smt: return "smt";
    }
    return "?";
}

inline std::optional<EngineKind> parse_engine(const std::string& s) {
    if (s == "type-only") return EngineKind::TypeOnly;
    if (s == "bruteforce") return EngineKind::BruteForce;
    if (s == "smt") return EngineKind::Smt;
    return std::nullopt;
}

enum class Method { TypeRule, ReducedTypeRule, Oracle, CountingSmt, CountingBruteforce, None };

inline const char* method_name(Method m) {
    switch (m) {
    case Method::TypeRule: return "type-rule";
    case Method::ReducedTypeRule: return "reduced-type-rule";
    case Method::Oracle: return "oracle";
    case Method::CountingSmt: return "counting-smt";
    case Method::CountingBruteforce: return "counting-bruteforce";
    case Method::None: return "none";
    }
    return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
    for (Method m : {Method::TypeRule, Method::ReducedTypeRule, Method::Oracle, Method::CountingSmt,
                     Method::CountingBruteforce, Method::None})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

struct EngineConfig {
    EngineKind engine = EngineKind::BruteForce;
    DomainConfig domain = make_domain(8);
    bool qms = false;
    std::uint64_t budget = std::uint64_t{1} << 28;
    unsigned jobs = 1;
    /// Per-variable limit for counting and for each solver call.
    std::chrono::milliseconds timeout{60000};
    std::string solver_cmd = "z3";
    SolverProfile profile = SolverProfile::BitVector;
    std::optional<std::filesystem::path> emit_smt;
    std::shared_ptr<const OracleRegistry> oracles;
    std::shared_ptr<const std::vector<MetaTheorem>> meta_theorems;
    /// Analyze variables concurrently against an empty propagation store.
    bool concurrent_variables = false;
    /// Processing order (a permutation of the internals); SSA order if empty.
    std::vector<std::string> order;
};

struct VariableVerdict {
    std::string name;
    DistType type = DistType::UKD;
    Method method = Method::None;
    std::vector<std::string> rule_trace;
    /// Simplified expression, when simplification was needed.
    std::optional<std::string> reduced;
    std::optional<Qms> qms;
    /// Valuations agreeing on public inputs with different distributions.
    std::optional<std::pair<Valuation, Valuation>> leak_witness;
    bool inconclusive = false;
    std::string note;
    std::chrono::nanoseconds elapsed{0};

    friend bool operator==(const VariableVerdict&, const VariableVerdict&) = default;
};

struct Totals {
    std::size_t internal = 0, rud = 0, sid = 0, sdd = 0, ukd = 0, counted = 0, inconclusive = 0;
    friend bool operator==(const Totals&, const Totals&) = default;
};

struct Report {
    std::string program;
    unsigned bits = 8;
    std::uint32_t poly = 0;
    std::string engine;
    std::vector<VariableVerdict> variables;
    std::optional<Qms> program_qms;
    Totals totals;
    std::chrono::nanoseconds elapsed{0};

    bool has_sdd() const { return totals.sdd != 0; }
    bool complete() const { return totals.ukd == 0 && totals.inconclusive == 0; }
    /// Perfectly masked: no SDD verdict; unknown while a variable is unresolved.
    std::optional<bool> perfectly_masked() const {
        if (has_sdd()) return false;
        if (!complete()) return std::nullopt;
        return true;
    }

    friend bool operator==(const Report&, const Report&) = default;
};

/// 0: perfectly masked, 1: leaky, 3: unresolved variables remain.
inline int exit_code(const Report& r) {
    if (r.has_sdd()) return 1;
    if (!r.complete()) return 3;
    return 0;
}

namespace detail {

inline Totals tally(const std::vector<VariableVerdict>& vs) {
    Totals t;
    t.internal = vs.size();
    for (const auto& v : vs) {
        switch (v.type) {
        case DistType::RUD: ++t.rud; break;
        case DistType::SID: ++t.sid; break;
        case DistType::SDD: ++t.sdd; break;
        case DistType::UKD: ++t.ukd; break;
        }
        if (v.method == Method::CountingBruteforce || v.method == Method::CountingSmt) ++t.counted;
        if (v.inconclusive) ++t.inconclusive;
    }
    return t;
}

inline std::uint64_t full_den(Expr e, unsigned bits) {
    const unsigned m = bits * static_cast<unsigned>(e.rvars().size());
    return m <= 62 ? std::uint64_t{1} << m : 1;
}

/// State shared by the variables of one run.
class Analysis {
public:
    Analysis(const Program& p, const EngineConfig& cfg)
        : p_(p), cfg_(cfg), counter_(cfg.domain, CountingOptions{cfg.jobs, cfg.budget, std::nullopt}),
          ti_([this](Expr e) -> std::optional<DistType> {
              if (auto it = store_.find(e); it != store_.end()) return it->second;
              return std::nullopt;
          }) {
        simplify_opts_.meta_theorems = cfg.meta_theorems.get();
    }

    VariableVerdict analyze(const std::string& x) {
        const auto start = std::chrono::steady_clock::now();
        VariableVerdict v;
        v.name = x;
        const Expr e = p_.expr_of(x);
        const Judgement j = ti_.infer(e);
        v.type = j.type;
        v.rule_trace = j.rule_trace;
        if (j.type != DistType::UKD) v.method = Method::TypeRule;

        std::optional<Expr> reduced;
        auto reduce = [&]() -> Expr {
            if (!reduced) reduced = simplify(e, cfg_.domain, simplify_opts_);
            return *reduced;
        };

        if (v.type == DistType::UKD && cfg_.engine != EngineKind::TypeOnly) resolve(v, e, reduce());
        if (cfg_.qms) fill_qms(v, e, reduce);
        v.elapsed = std::chrono::steady_clock::now() - start;
        return v;
    }

private:
    void record(Expr e, Expr reduced, DistType t) {
        store_[e] = t;
        store_[reduced] = t;
        ti_.forget_unknown();
    }

    void resolve(VariableVerdict& v, Expr e, Expr reduced) {
        if (reduced != e) v.reduced = to_string(reduced);
        const Judgement jr = ti_.infer(reduced);
        if (jr.type != DistType::UKD) {
            v.type = jr.type;
            v.method = Method::ReducedTypeRule;
            v.rule_trace = jr.rule_trace;
            record(e, reduced, v.type);
            return;
        }
        if (cfg_.oracles && !cfg_.oracles->empty()) {
            if (auto o = cfg_.oracles->apply(reduced, cfg_.domain)) {
                const Judgement jo = ti_.infer(*o);
                if (jo.type != DistType::UKD) {
                    v.type = jo.type;
                    v.method = Method::Oracle;
                    v.rule_trace = jo.rule_trace;
                    record(e, reduced, v.type);
                    return;
                }
            }
        }
        v.rule_trace = {"Ukd"};
        if (cfg_.engine == EngineKind::Smt) {
            try {
                const bool si = smt_independent(reduced, cfg_.domain, smt_options(v.name));
                v.type = si ? DistType::SID : DistType::SDD;
                v.method = Method::CountingSmt;
                record(e, reduced, v.type);
                return;
            } catch (const std::exception& ex) {
                v.note = std::string("solver: ") + ex.what() + "; counted by brute force";
            }
        }
        try {
            counter_.set_deadline(std::chrono::steady_clock::now() + cfg_.timeout);
            const SiResult si = counter_.check_si(reduced);
            counter_.set_deadline(std::nullopt);
            v.type = si.independent ? DistType::SID : DistType::SDD;
            v.method = Method::CountingBruteforce;
            if (!si.independent) v.leak_witness = si.witness;
            record(e, reduced, v.type);
        } catch (const BudgetExceeded& ex) {
            inconclusive(v, ex.what());
        } catch (const CountingTimeout& ex) {
            inconclusive(v, ex.what());
        }
    }

    void inconclusive(VariableVerdict& v, const std::string& why) {
        counter_.set_deadline(std::nullopt);
        v.type = DistType::UKD;
        v.method = Method::None;
        v.inconclusive = true;
        v.note = v.note.empty() ? why : v.note + "; " + why;
    }

    SmtOptions smt_options(const std::string& label) const {
        SmtOptions o;
        o.solver_cmd = cfg_.solver_cmd;
        o.timeout = cfg_.timeout;
        o.profile = cfg_.profile;
        o.emit_dir = cfg_.emit_smt;
        o.label = label;
        return o;
    }

    template <typename Reduce>
    void fill_qms(VariableVerdict& v, Expr e, Reduce&& reduce) {
        if (v.type == DistType::UKD) return;
        const Expr r = reduce();
        if (v.type != DistType::SDD) {
            const std::uint64_t den = full_den(r, cfg_.domain.bits());
            v.qms = Qms{den, den, std::nullopt};
            return;
        }
        if (r.rvars().empty()) {
            // No randomness left: the leak is total.
            Qms q{0, 1, std::nullopt};
            try {
                q = counter_.qms_exact(r);
            } catch (const std::exception&) {
            }
            v.qms = q;
            return;
        }
        if (cfg_.engine == EngineKind::Smt) {
            try {
                v.qms = qms_smt(r, cfg_.domain, smt_options(v.name)).qms;
                return;
            } catch (const std::exception& ex) {
                v.note = v.note.empty() ? "" : v.note + "; ";
                v.note += std::string("solver: ") + ex.what() + "; QMS by brute force";
            }
        }
        try {
            counter_.set_deadline(std::chrono::steady_clock::now() + cfg_.timeout);
            v.qms = counter_.qms_exact(r);
            counter_.set_deadline(std::nullopt);
        } catch (const BudgetExceeded& ex) {
            inconclusive_qms(v, ex.what());
        } catch (const CountingTimeout& ex) {
            inconclusive_qms(v, ex.what());
        }
        (void)e;
    }

    void inconclusive_qms(VariableVerdict& v, const std::string& why) {
        counter_.set_deadline(std::nullopt);
        v.inconclusive = true;
        v.note = v.note.empty() ? why : v.note + "; " + why;
    }

    const Program& p_;
    const EngineConfig& cfg_;
    CountingEngine counter_;
    ExprMap<DistType> store_;
    TypeInference ti_;
    SimplifyOptions simplify_opts_;
};

inline std::vector<std::string> processing_order(const Program& p, const EngineConfig& cfg) {
    auto ssa = p.internals();
    if (cfg.order.empty()) return ssa;
    auto a = cfg.order;
    auto b = ssa;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw std::invalid_argument("processing order is not a permutation of the internal variables");
    return cfg.order;
}

inline Report run(const Program& p, const EngineConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    p.check_domain(cfg.domain);
    Report r;
    r.program = p.name();
    r.bits = cfg.domain.bits();
    r.poly = cfg.domain.poly();
    r.engine = engine_name(cfg.engine);

    const auto order = processing_order(p, cfg);
    std::map<std::string, VariableVerdict> done;
    if (cfg.concurrent_variables && cfg.jobs > 1 && order.size() > 1) {
        // Each worker sees only its own propagation store; the rules make
        // that a matter of speed, not of outcome.
        EngineConfig inner = cfg;
        inner.jobs = 1;
        std::vector<VariableVerdict> out(order.size());
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(cfg.jobs);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < cfg.jobs; ++w) {
            pool.emplace_back([&, w] {
                try {
                    Analysis a(p, inner);
                    for (std::size_t i; (i = next.fetch_add(1)) < order.size();) out[i] = a.analyze(order[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (auto& v : out) done.emplace(v.name, std::move(v));
    } else {
        Analysis a(p, cfg);
        for (const auto& x : order) done.emplace(x, a.analyze(x));
    }
    for (const auto& x : p.internals()) r.variables.push_back(std::move(done.at(x)));

    r.totals = tally(r.variables);
    if (cfg.qms) {
        bool all = true;
        for (const auto& v : r.variables) {
            if (!v.qms) {
                all = false;
                continue;
            }
            if (!r.program_qms || v.qms->less_than(*r.program_qms)) r.program_qms = v.qms;
        }
        if (!all) r.program_qms.reset();
    }
    r.elapsed = std::chrono::steady_clock::now() - start;
    return r;
}

} // namespace detail

/// Assigns every internal variable RUD, SID or SDD (UKD in type-only mode or
/// when a budget or deadline is hit).
inline Report pm_check(const Program& p, EngineConfig cfg) {
    cfg.qms = false;
    return detail::run(p, cfg);
}

/// pm_check plus the quantitative masking strength of every variable and the
/// program minimum.
inline Report qms_compute(const Program& p, EngineConfig cfg) {
    cfg.qms = true;
    return detail::run(p, cfg);
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kReportVersion = 1;

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson valuation_json(const Valuation& v) {
    ojson o = ojson::object();
    for (const auto& [k, x] : v) o[k] = x;
    return o;
}

inline Valuation valuation_from(const ojson& o) {
    Valuation v;
    for (auto it = o.begin(); it != o.end(); ++it) v.emplace_back(it.key(), it.value().get<Value>());
    return v;
}

inline ojson qms_json(const Qms& q) {
    ojson o;
    o["num"] = q.num;
    o["den"] = q.den;
    if (q.witness) {
        o["witness"] = {{"sigma1", valuation_json(q.witness->sigma1)},
                        {"sigma2", valuation_json(q.witness->sigma2)},
                        {"c", q.witness->c}};
    }
    return o;
}

inline Qms qms_from(const ojson& o) {
    Qms q{o.at("num").get<std::uint64_t>(), o.at("den").get<std::uint64_t>(), std::nullopt};
    if (o.contains("witness")) {
        const auto& w = o.at("witness");
        q.witness = QmsWitness{valuation_from(w.at("sigma1")), valuation_from(w.at("sigma2")), w.at("c").get<Value>()};
    }
    return q;
}

inline std::string hex(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

} // namespace detail

/// Versioned JSON document. Timings are included only on request so that
/// reports of identical runs compare byte for byte.
inline std::string to_json(const Report& r, bool timings = false, int indent = 2) {
    using detail::ojson;
    ojson doc;
    doc["version"] = kReportVersion;
    doc["program"] = r.program;
    doc["bits"] = r.bits;
    doc["poly"] = detail::hex(r.poly);
    doc["engine"] = r.engine;
    ojson vars = ojson::array();
    for (const auto& v : r.variables) {
        ojson o;
        o["name"] = v.name;
        o["type"] = type_name(v.type);
        o["method"] = method_name(v.method);
        o["rule_trace"] = v.rule_trace;
        o["reduced"] = v.reduced ? ojson(*v.reduced) : ojson(nullptr);
        o["qms"] = v.qms ? detail::qms_json(*v.qms) : ojson(nullptr);
        if (v.leak_witness)
            o["witness"] = {{"sigma1", detail::valuation_json(v.leak_witness->first)},
                            {"sigma2", detail::valuation_json(v.leak_witness->second)}};
        else
            o["witness"] = nullptr;
        o["inconclusive"] = v.inconclusive;
        o["note"] = v.note;
        if (timings) o["elapsed_ns"] = v.elapsed.count();
        vars.push_back(std::move(o));
    }
    doc["variables"] = std::move(vars);
    doc["program_qms"] = r.program_qms ? detail::qms_json(*r.program_qms) : ojson(nullptr);
    const auto pm = r.perfectly_masked();
    doc["perfectly_masked"] = pm ? ojson(*pm) : ojson(nullptr);
    doc["totals"] = {{"internal", r.totals.internal}, {"rud", r.totals.rud},         {"sid", r.totals.sid},
                     {"sdd", r.totals.sdd},           {"ukd", r.totals.ukd},         {"counted", r.totals.counted},
                     {"inconclusive", r.totals.inconclusive}};
    if (timings) doc["timings"] = {{"total_ns", r.elapsed.count()}};
    return doc.dump(indent) + "\n";
}

class ReportFormatError : public std::runtime_error {
public:
    explicit ReportFormatError(const std::string& what) : std::runtime_error(what) {}
};

inline Report report_from_json(const std::string& text) {
    using detail::ojson;
    try {
        const ojson doc = ojson::parse(text);
        if (doc.at("version").get<int>() != kReportVersion)
            throw ReportFormatError("unsupported report version " + doc.at("version").dump());
        Report r;
        r.program = doc.at("program").get<std::string>();
        r.bits = doc.at("bits").get<unsigned>();
        r.poly = static_cast<std::uint32_t>(std::stoul(doc.at("poly").get<std::string>(), nullptr, 16));
        r.engine = doc.at("engine").get<std::string>();
        for (const auto& o : doc.at("variables")) {
            VariableVerdict v;
            v.name = o.at("name").get<std::string>();
            const auto t = parse_type(o.at("type").get<std::string>());
            const auto m = parse_method(o.at("method").get<std::string>());
            if (!t || !m) throw ReportFormatError("bad type or method for " + v.name);
            v.type = *t;
            v.method = *m;
            v.rule_trace = o.at("rule_trace").get<std::vector<std::string>>();
            if (!o.at("reduced").is_null()) v.reduced = o.at("reduced").get<std::string>();
            if (!o.at("qms").is_null()) v.qms = detail::qms_from(o.at("qms"));
            if (!o.at("witness").is_null())
                v.leak_witness = std::make_pair(detail::valuation_from(o.at("witness").at("sigma1")),
                                                detail::valuation_from(o.at("witness").at("sigma2")));
            v.inconclusive = o.at("inconclusive").get<bool>();
            v.note = o.at("note").get<std::string>();
            if (o.contains("elapsed_ns")) v.elapsed = std::chrono::nanoseconds(o.at("elapsed_ns").get<std::int64_t>());
            r.variables.push_back(std::move(v));
        }
        if (!doc.at("program_qms").is_null()) r.program_qms = detail::qms_from(doc.at("program_qms"));
        r.totals = detail::tally(r.variables);
        if (doc.contains("timings")) r.elapsed = std::chrono::nanoseconds(doc.at("timings").at("total_ns").get<std::int64_t>());
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw ReportFormatError(ex.what());
    }
}

namespace detail {

inline std::string qms_text(const Qms& q) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << q.value() << " (" << q.num << "/" << q.den << ")";
    return os.str();
}

inline std::string valuation_text(const Valuation& v) {
    std::string s;
    for (const auto& [k, x] : v) s += (s.empty() ? "" : " ") + k + "=" + std::to_string(x);
    return "{" + s + "}";
}

} // namespace detail

inline std::string to_text(const Report& r, bool timings = false) {
    std::ostringstream os;
    os << "program " << r.program << "  n=" << r.bits << " poly=" << detail::hex(r.poly) << " engine=" << r.engine
       << "\n";
    std::size_t w = 4;
    for (const auto& v : r.variables) w = std::max(w, v.name.size() + 1);
    os << std::left << std::setw(static_cast<int>(w)) << "var" << std::setw(5) << "type" << std::setw(21) << "method"
;
    const bool any_qms = std::any_of(r.variables.begin(), r.variables.end(), [](const auto& v) { return v.qms.has_value(); });
    if (any_qms) os << std::setw(10) << "rules" << "  qms";
    else os << "rules";
    os << "\n";
    for (const auto& v : r.variables) {
        std::string rules;
        for (const auto& s : v.rule_trace) rules += (rules.empty() ? "" : ",") + s;
        os << std::left << std::setw(static_cast<int>(w)) << v.name << std::setw(5) << type_name(v.type)
           << std::setw(21) << method_name(v.method);
        if (v.qms || timings) os << std::setw(10) << rules;
        else os << rules;
        if (v.qms) os << "  " << detail::qms_text(*v.qms);
        if (timings) os << "  " << std::chrono::duration<double, std::milli>(v.elapsed).count() << " ms";
        os << "\n";
        if (v.reduced) os << "    reduced: " << *v.reduced << "\n";
        if (v.qms && v.qms->witness)
            os << "    witness: " << detail::valuation_text(v.qms->witness->sigma1) << " vs "
               << detail::valuation_text(v.qms->witness->sigma2) << " at c=" << v.qms->witness->c << "\n";
        else if (v.leak_witness)
            os << "    witness: " << detail::valuation_text(v.leak_witness->first) << " vs "
               << detail::valuation_text(v.leak_witness->second) << "\n";
        if (!v.note.empty()) os << "    note: " << v.note << "\n";
    }
    os << "|X_i|=" << r.totals.internal << " #SDD=" << r.totals.sdd << " #Count=" << r.totals.counted;
    if (r.totals.ukd) os << " #UKD=" << r.totals.ukd;
    const auto pm = r.perfectly_masked();
    os << "  perfectly masked: " << (pm ? (*pm ? "yes" : "no") : "unknown");
    if (r.program_qms) os << "  QMS: " << detail::qms_text(*r.program_qms);
    if (timings) os << "  time: " << std::chrono::duration<double, std::milli>(r.elapsed).count() << " ms";
    os << "\n";
    return os.str();
}

} // namespace qmask
