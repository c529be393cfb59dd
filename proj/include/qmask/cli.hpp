#pragma once

/// @file cli.hpp
/// Command-line front-end: `check FILE` and `corpus DIR`.

#include "qmask/verifier.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace qmask::cli {

inline constexpr int kExitPerfect = 0;
inline constexpr int kExitLeaky = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInconclusive = 3;

struct Options {
    unsigned bits = 8;
    std::string poly;
    std::string engine = "bruteforce";
    bool qms = false;
    std::string solver = "z3";
    std::string profile = "bv";
    std::string emit_smt;
    unsigned jobs = 1;
    std::uint64_t budget = std::uint64_t{1} << 28;
    double timeout = 60;
    std::string format = "text";
    bool timings = false;
    std::string meta;
    bool concurrent_vars = false;
};

class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

inline EngineConfig make_config(const Options& o) {
    EngineConfig cfg;
    const auto kind = parse_engine(o.engine);
    if (!kind) throw UsageError("unknown engine '" + o.engine + "'");
    cfg.engine = *kind;
    std::optional<std::uint32_t> poly;
    if (!o.poly.empty()) {
        try {
            std::size_t used = 0;
            poly = static_cast<std::uint32_t>(std::stoul(o.poly, &used, 16));
            if (used != o.poly.size()) throw std::invalid_argument(o.poly);
        } catch (const std::logic_error&) {
            throw UsageError("--poly expects a hexadecimal polynomial, got '" + o.poly + "'");
        }
    }
    cfg.domain = make_domain(o.bits, poly);
    cfg.qms = o.qms;
    cfg.budget = o.budget;
    cfg.jobs = std::max(1u, o.jobs);
    cfg.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(o.timeout * 1000));
    cfg.solver_cmd = o.solver;
    if (o.profile == "bv") cfg.profile = SolverProfile::BitVector;
    else if (o.profile == "int") cfg.profile = SolverProfile::Integer;
    else throw UsageError("unknown solver profile '" + o.profile + "'");
    if (!o.emit_smt.empty()) cfg.emit_smt = std::filesystem::path(o.emit_smt);
    if (!o.meta.empty()) cfg.meta_theorems = std::make_shared<std::vector<MetaTheorem>>(load_meta_theorems(o.meta));
    cfg.concurrent_variables = o.concurrent_vars;
    return cfg;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Report check_file(const std::filesystem::path& path, const EngineConfig& cfg) {
    const Program p = parse_program(read_file(path));
    return cfg.qms ? qms_compute(p, cfg) : pm_check(p, cfg);
}

inline int check_command(const std::string& file, const Options& o, std::ostream& out, std::ostream& err) {
    try {
        const EngineConfig cfg = make_config(o);
        const Report r = check_file(file, cfg);
        out << (o.format == "json" ? to_json(r, o.timings) : to_text(r, o.timings));
        return exit_code(r);
    } catch (const ParseError& e) {
        err << file << ": " << e.what() << "\n";
    } catch (const DomainError& e) {
        err << file << ": " << e.what() << "\n";
    } catch (const UsageError& e) {
        err << e.what() << "\n";
    } catch (const MetaTheoremError& e) {
        err << e.what() << "\n";
    }
    return kExitUsage;
}

struct CorpusRow {
    std::string file;
    std::optional<Report> report;
    std::string error;
};

/// Runs every .mv file of `dir`, in name order. A failing file yields an
/// error row and does not stop the sweep.
inline std::vector<CorpusRow> run_corpus(const std::filesystem::path& dir, const EngineConfig& cfg) {
    std::vector<std::filesystem::path> files;
    for (const auto& ent : std::filesystem::directory_iterator(dir))
        if (ent.is_regular_file() && ent.path().extension() == ".mv") files.push_back(ent.path());
    std::sort(files.begin(), files.end());

    std::vector<CorpusRow> rows(files.size());
    // Files run in parallel; each keeps the counting engine serial.
    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(files.size())));
    EngineConfig inner = cfg;
    if (workers > 1) inner.jobs = 1;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < files.size();) {
            rows[i].file = files[i].filename().string();
            try {
                rows[i].report = check_file(files[i], inner);
            } catch (const std::exception& e) {
                rows[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

inline std::string corpus_text(const std::vector<CorpusRow>& rows, bool timings) {
    std::ostringstream os;
    os << std::left << std::setw(22) << "file" << std::setw(16) << "program" << std::setw(7) << "|X_i|" << std::setw(6)
       << "#SDD" << std::setw(8) << "#Count" << std::setw(22) << "QMS" << "status";
    if (timings) os << "  time";
    os << "\n";
    for (const auto& row : rows) {
        os << std::left << std::setw(22) << row.file;
        if (!row.report) {
            os << "ERROR  " << row.error << "\n";
            continue;
        }
        const Report& r = *row.report;
        std::string q = "-";
        if (r.program_qms) q = detail::qms_text(*r.program_qms);
        const auto pm = r.perfectly_masked();
        os << std::setw(16) << r.program << std::setw(7) << r.totals.internal << std::setw(6) << r.totals.sdd
           << std::setw(8) << r.totals.counted << std::setw(22) << q
           << (pm ? (*pm ? "masked" : "leaky") : "inconclusive");
        if (timings) os << "  " << std::chrono::duration<double, std::milli>(r.elapsed).count() << " ms";
        os << "\n";
    }
    return os.str();
}

inline std::string corpus_json(const std::vector<CorpusRow>& rows, bool timings) {
    using detail::ojson;
    ojson arr = ojson::array();
    for (const auto& row : rows) {
        ojson o;
        o["file"] = row.file;
        if (row.report) o["report"] = ojson::parse(to_json(*row.report, timings));
        else o["error"] = row.error;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

/// Worst exit code over the rows; errors count as usage failures.
inline int corpus_exit(const std::vector<CorpusRow>& rows) {
    int code = kExitPerfect;
    auto rank = [](int c) { return c == kExitUsage ? 3 : c == kExitLeaky ? 2 : c == kExitInconclusive ? 1 : 0; };
    for (const auto& row : rows) {
        const int c = row.report ? exit_code(*row.report) : kExitUsage;
        if (rank(c) > rank(code)) code = c;
    }
    return code;
}

inline int corpus_command(const std::string& dir, const Options& o, std::ostream& out, std::ostream& err) {
    try {
        const EngineConfig cfg = make_config(o);
        if (!std::filesystem::is_directory(dir)) throw UsageError(dir + " is not a directory");
        const auto rows = run_corpus(dir, cfg);
        out << (o.format == "json" ? corpus_json(rows, o.timings) : corpus_text(rows, o.timings));
        for (const auto& row : rows)
            if (!row.report) err << row.file << ": " << row.error << "\n";
        return corpus_exit(rows);
    } catch (const DomainError& e) {
        err << e.what() << "\n";
    } catch (const UsageError& e) {
        err << e.what() << "\n";
    } catch (const MetaTheoremError& e) {
        err << e.what() << "\n";
    }
    return kExitUsage;
}

inline void add_common(CLI::App& app, Options& o) {
    app.add_option("--bits", o.bits, "Word width n (1..16)")->capture_default_str();
    app.add_option("--poly", o.poly, "Irreducible polynomial for @, hexadecimal");
    app.add_option("--engine", o.engine, "type-only | bruteforce | smt")
        ->check(CLI::IsMember({"type-only", "bruteforce", "smt"}))
        ->capture_default_str();
    app.add_flag("--qms", o.qms, "Compute the quantitative masking strength");
    app.add_option("--solver", o.solver, "Solver command; the script path is appended")->capture_default_str();
    app.add_option("--profile", o.profile, "Solver encoding: bv | int")
        ->check(CLI::IsMember({"bv", "int"}))
        ->capture_default_str();
    app.add_option("--emit-smt", o.emit_smt, "Write every solver script to this directory");
    app.add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();
    app.add_option("--budget", o.budget, "Evaluation budget per expression")->capture_default_str();
    app.add_option("--timeout", o.timeout, "Per-variable timeout in seconds")->capture_default_str();
    app.add_option("--format", o.format, "text | json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();
    app.add_flag("--timings", o.timings, "Include timings in the output");
    app.add_option("--meta", o.meta, "Meta-theorem file replacing the built-in table");
    app.add_flag("--concurrent-vars", o.concurrent_vars, "Analyze variables concurrently");
}

/// Entry point; returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Masking verifier for straight-line arithmetic programs", "qmask"};
    app.require_subcommand(1);
    Options o;
    std::string file;
    std::string dir;
    auto* check = app.add_subcommand("check", "Verify one program");
    check->add_option("file", file, "Program file")->required();
    add_common(*check, o);
    auto* corpus = app.add_subcommand("corpus", "Verify every .mv file in a directory");
    corpus->add_option("dir", dir, "Corpus directory")->required();
    add_common(*corpus, o);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        if (const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) err << sub->help();
        return kExitUsage;
    }
    if (check->parsed()) return check_command(file, o, out, err);
    return corpus_command(dir, o, out, err);
}

} // namespace qmask::cli
