#pragma once

/// @file counting.hpp
/// Exact model counting by enumeration: per-valuation output distributions,
/// uniformity and independence checks, and the quantitative masking strength
///
///     QMS(e) = 1 - max over (s1, s2) agreeing on public inputs and c in B of
///              P[e(s1) = c] - P[e(s2) = c]
///
/// kept as an exact fraction over 2^(n * |RVar(e)|).
///
/// Valuations are enumerated in a fixed order: public inputs (by name) then
/// secret inputs (by name), the first variable most significant. The order
/// defines witness tie-breaking, so results do not depend on the number of
/// worker threads.

#include "qmask/domain.hpp"
#include "qmask/eval.hpp"
#include "qmask/expr.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

namespace qmask {

/// Assignment to public and secret inputs, in enumeration order.
using Valuation = std::vector<std::pair<std::string, Value>>;

struct CountVector {
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    friend bool operator==(const CountVector&, const CountVector&) = default;
};

struct QmsWitness {
    Valuation sigma1;
    Valuation sigma2;
    Value c = 0;
    friend bool operator==(const QmsWitness&, const QmsWitness&) = default;
};

/// num / den with den = 2^(n * |RVar|); not reduced.
struct Qms {
    std::uint64_t num = 1;
    std::uint64_t den = 1;
    std::optional<QmsWitness> witness;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool is_one() const { return num == den; }

    /// Compares the rational values only.
    bool same_value(const Qms& o) const {
        return static_cast<unsigned __int128>(num) * o.den == static_cast<unsigned __int128>(o.num) * den;
    }
    bool less_than(const Qms& o) const {
        return static_cast<unsigned __int128>(num) * o.den < static_cast<unsigned __int128>(o.num) * den;
    }

    friend bool operator==(const Qms&, const Qms&) = default;
};

struct SiResult {
    bool independent = true;
    std::optional<std::pair<Valuation, Valuation>> witness;
};

class BudgetExceeded : public std::runtime_error {
public:
    explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

class CountingTimeout : public std::runtime_error {
public:
    CountingTimeout() : std::runtime_error("counting deadline reached") {}
};

class UncoveredVariable : public std::runtime_error {
public:
    explicit UncoveredVariable(const std::string& name)
        : std::runtime_error("valuation does not assign " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

struct CountingOptions {
    unsigned jobs = 1;
    /// Maximum number of expression evaluations per query.
    std::uint64_t budget = std::uint64_t{1} << 28;
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

namespace detail {

/// Variable order for enumeration: publics, secrets, then randoms.
struct Layout {
    std::vector<Expr> pub, sec, rnd;
    unsigned bits = 0;

    Layout(Expr e, unsigned n) : bits(n) {
        pub = e.vars_of_class(VarClass::Public);
        sec = e.vars_of_class(VarClass::Secret);
        rnd = e.vars_of_class(VarClass::Random);
        for (Expr v : e.vars_of_class(VarClass::Internal))
            throw std::invalid_argument("expression refers to internal variable " + v.name());
    }

    std::vector<Expr> slots() const {
        std::vector<Expr> s = pub;
        s.insert(s.end(), sec.begin(), sec.end());
        s.insert(s.end(), rnd.begin(), rnd.end());
        return s;
    }
    std::size_t nonrandom() const { return pub.size() + sec.size(); }
    unsigned sigma_bits() const { return bits * static_cast<unsigned>(nonrandom()); }
    unsigned random_bits() const { return bits * static_cast<unsigned>(rnd.size()); }
    unsigned secret_bits() const { return bits * static_cast<unsigned>(sec.size()); }

    Valuation decode(std::uint64_t sigma) const {
        std::vector<Value> digits(nonrandom());
        decode_assignment(sigma, bits, digits);
        Valuation out;
        for (std::size_t i = 0; i < pub.size(); ++i) out.emplace_back(pub[i].name(), digits[i]);
        for (std::size_t i = 0; i < sec.size(); ++i) out.emplace_back(sec[i].name(), digits[pub.size() + i]);
        return out;
    }
};

inline std::uint64_t checked_pow2(unsigned e, const char* what) {
    if (e > 62) throw BudgetExceeded(std::string(what) + " space of 2^" + std::to_string(e) + " is too large");
    return std::uint64_t{1} << e;
}

/// Per-value extremes of the counts seen within one public group.
struct GroupStats {
    std::vector<std::uint64_t> max, min, argmax, argmin;
    bool empty = true;

    explicit GroupStats(std::size_t values) : max(values), min(values), argmax(values), argmin(values) {}

    void add(std::uint64_t sigma, const std::vector<std::uint64_t>& counts) {
        if (empty) {
            max = counts;
            min = counts;
            std::fill(argmax.begin(), argmax.end(), sigma);
            std::fill(argmin.begin(), argmin.end(), sigma);
            empty = false;
            return;
        }
        // Enumeration is ascending, so strict comparisons keep the first index.
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] > max[c]) {
                max[c] = counts[c];
                argmax[c] = sigma;
            }
            if (counts[c] < min[c]) {
                min[c] = counts[c];
                argmin[c] = sigma;
            }
        }
    }

    void merge(const GroupStats& o) {
        if (o.empty) return;
        if (empty) {
            *this = o;
            return;
        }
        for (std::size_t c = 0; c < max.size(); ++c) {
            if (o.max[c] > max[c] || (o.max[c] == max[c] && o.argmax[c] < argmax[c])) {
                max[c] = o.max[c];
                argmax[c] = o.argmax[c];
            }
            if (o.min[c] < min[c] || (o.min[c] == min[c] && o.argmin[c] < argmin[c])) {
                min[c] = o.min[c];
                argmin[c] = o.argmin[c];
            }
        }
    }
};

/// Largest count gap in a group and its lexicographically smallest witness.
struct GroupBest {
    std::uint64_t diff = 0;
    std::uint64_t s1 = 0, s2 = 0, c = 0;

    static GroupBest of(const GroupStats& st) {
        GroupBest b;
        bool found = false;
        for (std::uint64_t c = 0; c < st.max.size(); ++c) {
            const std::uint64_t d = st.max[c] - st.min[c];
            if (d == 0) continue;
            const auto cand = std::make_tuple(st.argmax[c], st.argmin[c], c);
            if (!found || d > b.diff || (d == b.diff && cand < std::make_tuple(b.s1, b.s2, b.c))) {
                b = GroupBest{d, st.argmax[c], st.argmin[c], c};
                found = true;
            }
        }
        return b;
    }

    /// Keeps the larger gap; ties go to the smaller witness.
    static GroupBest better(const GroupBest& a, const GroupBest& b) {
        if (a.diff != b.diff) return a.diff > b.diff ? a : b;
        return std::make_tuple(a.s1, a.s2, a.c) <= std::make_tuple(b.s1, b.s2, b.c) ? a : b;
    }
};

struct SliceResult {
    GroupBest best;
    std::vector<std::pair<std::uint64_t, GroupStats>> partial;
};

} // namespace detail

/// Brute-force counting over all valuations and random assignments.
class CountingEngine {
public:
    explicit CountingEngine(DomainConfig d, CountingOptions opts = {}) : domain_(std::move(d)), opts_(opts) {
        if (opts_.jobs == 0) opts_.jobs = 1;
    }

    const DomainConfig& domain() const noexcept { return domain_; }
    const CountingOptions& options() const noexcept { return opts_; }
    void set_deadline(std::optional<std::chrono::steady_clock::time_point> t) { opts_.deadline = t; }

    /// counts[v] = number of random assignments f with e(sigma, f) = v.
    CountVector distribution(Expr e, const std::map<std::string, Value>& sigma) const {
        const detail::Layout lay(e, domain_.bits());
        const auto slots = lay.slots();
        const CompiledExpr code(e, domain_, slots);
        std::vector<Value> regs(code.registers(), 0);
        for (std::size_t i = 0; i < lay.nonrandom(); ++i) {
            auto it = sigma.find(slots[i].name());
            if (it == sigma.end()) throw UncoveredVariable(slots[i].name());
            if (!domain_.contains(it->second))
                throw DomainError(DomainError::Kind::ValueOutOfRange, "value of " + it->first + " exceeds the domain");
            regs[i] = it->second;
        }
        const std::uint64_t f_count = detail::checked_pow2(lay.random_bits(), "random");
        check_budget(f_count);
        CountVector cv{std::vector<std::uint64_t>(domain_.size(), 0), f_count};
        count_randoms(code, regs, lay.nonrandom(), lay.rnd.size(), cv.counts);
        return cv;
    }

    /// True iff the distribution is flat for every valuation.
    bool check_uniform(Expr e) const {
        const detail::Layout lay(e, domain_.bits());
        const std::uint64_t s_count = detail::checked_pow2(lay.sigma_bits(), "valuation");
        const std::uint64_t f_count = detail::checked_pow2(lay.random_bits(), "random");
        check_budget(s_count, f_count);
        if (f_count % domain_.size() != 0) return false;
        const std::uint64_t expect = f_count / domain_.size();
        const CompiledExpr code(e, domain_, lay.slots());
        std::atomic<bool> uniform{true};
        parallel_slices(s_count, f_count, [&](std::uint64_t lo, std::uint64_t hi) {
            std::vector<Value> regs(code.registers(), 0);
            std::vector<std::uint64_t> counts(domain_.size());
            for (std::uint64_t s = lo; s < hi && uniform.load(std::memory_order_relaxed); ++s) {
                tick(s);
                decode_assignment(s, domain_.bits(), std::span<Value>(regs.data(), lay.nonrandom()));
                std::fill(counts.begin(), counts.end(), 0);
                count_randoms(code, regs, lay.nonrandom(), lay.rnd.size(), counts);
                if (std::any_of(counts.begin(), counts.end(), [&](std::uint64_t c) { return c != expect; }))
                    uniform.store(false, std::memory_order_relaxed);
            }
        });
        return uniform.load();
    }

    /// Exact QMS with the lexicographically smallest witness (s1, s2, c).
    Qms qms_exact(Expr e) const {
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            if (auto it = cache_->qms.find(e); it != cache_->qms.end()) return it->second;
        }
        Qms q = compute_qms(e);
        std::lock_guard<std::mutex> lock(cache_->mutex);
        cache_->qms.emplace(e, q);
        return q;
    }

    SiResult check_si(Expr e) const {
        const Qms q = qms_exact(e);
        SiResult r;
        r.independent = q.is_one();
        if (q.witness) r.witness = std::make_pair(q.witness->sigma1, q.witness->sigma2);
        return r;
    }

private:
    void check_budget(std::uint64_t evaluations) const {
        if (evaluations > opts_.budget)
            throw BudgetExceeded("needs " + std::to_string(evaluations) + " evaluations, budget is " +
                                 std::to_string(opts_.budget));
    }
    void check_budget(std::uint64_t s_count, std::uint64_t f_count) const {
        if (f_count != 0 && s_count > opts_.budget / f_count)
            throw BudgetExceeded("needs 2^" + std::to_string(std::bit_width(s_count) - 1 + std::bit_width(f_count) - 1) +
                                 " evaluations, budget is " + std::to_string(opts_.budget));
    }

    void tick(std::uint64_t s) const {
        if (opts_.deadline && (s & 63) == 0 && std::chrono::steady_clock::now() > *opts_.deadline)
            throw CountingTimeout();
    }

    void count_randoms(const CompiledExpr& code, std::vector<Value>& regs, std::size_t first, std::size_t n_rnd,
                       std::vector<std::uint64_t>& counts) const {
        std::span<Value> rnd(regs.data() + first, n_rnd);
        std::fill(rnd.begin(), rnd.end(), 0);
        do {
            ++counts[code.run(regs)];
        } while (next_assignment(rnd, domain_.mask()));
    }

    /// Runs fn over contiguous slices of [0, total); serial for small work.
    template <typename Fn>
    void parallel_slices(std::uint64_t total, std::uint64_t work_per_item, Fn&& fn) const {
        const unsigned jobs = static_cast<unsigned>(std::min<std::uint64_t>(opts_.jobs, total));
        if (jobs <= 1 || total * work_per_item < (1u << 14)) {
            fn(std::uint64_t{0}, total);
            return;
        }
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) {
            const std::uint64_t lo = total * j / jobs;
            const std::uint64_t hi = total * (j + 1) / jobs;
            pool.emplace_back([&, j, lo, hi] {
                try {
                    fn(lo, hi);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    Qms compute_qms(Expr e) const {
        const detail::Layout lay(e, domain_.bits());
        const std::uint64_t s_count = detail::checked_pow2(lay.sigma_bits(), "valuation");
        const std::uint64_t f_count = detail::checked_pow2(lay.random_bits(), "random");
        check_budget(s_count, f_count);
        const std::uint64_t group = std::uint64_t{1} << lay.secret_bits();
        const std::size_t values = domain_.size();
        const CompiledExpr code(e, domain_, lay.slots());

        const unsigned jobs = static_cast<unsigned>(std::min<std::uint64_t>(opts_.jobs, s_count));
        std::vector<detail::SliceResult> slices(std::max(1u, jobs));
        std::mutex slot_mutex;
        std::size_t next_slot = 0;

        parallel_slices(s_count, f_count, [&](std::uint64_t lo, std::uint64_t hi) {
            detail::SliceResult out;
            std::vector<Value> regs(code.registers(), 0);
            std::vector<std::uint64_t> counts(values);
            detail::GroupStats stats(values);
            std::uint64_t g = lo / group;
            auto close = [&](std::uint64_t gi) {
                const bool whole = gi * group >= lo && (gi + 1) * group <= hi;
                if (whole) out.best = detail::GroupBest::better(out.best, detail::GroupBest::of(stats));
                else out.partial.emplace_back(gi, stats);
                stats = detail::GroupStats(values);
            };
            for (std::uint64_t s = lo; s < hi; ++s) {
                tick(s);
                if (s / group != g) {
                    close(g);
                    g = s / group;
                }
                decode_assignment(s, domain_.bits(), std::span<Value>(regs.data(), lay.nonrandom()));
                std::fill(counts.begin(), counts.end(), 0);
                count_randoms(code, regs, lay.nonrandom(), lay.rnd.size(), counts);
                stats.add(s, counts);
            }
            if (lo < hi) close(g);
            std::lock_guard<std::mutex> lock(slot_mutex);
            slices[next_slot++] = std::move(out);
        });

        // The reduction below is order-insensitive: ties resolve by index.
        detail::GroupBest best;
        std::map<std::uint64_t, detail::GroupStats> partial;
        for (std::size_t i = 0; i < next_slot; ++i) {
            best = detail::GroupBest::better(best, slices[i].best);
            for (auto& [gi, st] : slices[i].partial) {
                auto [it, fresh] = partial.try_emplace(gi, values);
                it->second.merge(st);
            }
        }
        for (const auto& [gi, st] : partial) best = detail::GroupBest::better(best, detail::GroupBest::of(st));

        Qms q;
        q.den = f_count;
        q.num = f_count - best.diff;
        if (best.diff > 0) q.witness = QmsWitness{lay.decode(best.s1), lay.decode(best.s2), static_cast<Value>(best.c)};
        return q;
    }

    struct Cache {
        std::mutex mutex;
        ExprMap<Qms> qms;
    };

    DomainConfig domain_;
    CountingOptions opts_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

} // namespace qmask
